#include "dyname/safety.hpp"

#include "dyname/error.hpp"

#include <algorithm>
#include <cmath>

namespace dyname {

void SafetyParams::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) fail(Errc::ConfigError, "alpha must lie in (0, 1)");
    if (!(delta > 0.0) || !std::isfinite(delta)) fail(Errc::ConfigError, "delta must be positive");
    if (!(beta >= 0.0 && beta <= 1.0)) fail(Errc::ConfigError, "beta must lie in [0, 1]");
}

SafetyState update_ewma(SafetyState state, double mse) {
    if (!std::isfinite(mse) || mse < 0.0) fail(Errc::NonFiniteInput, "realized MSE must be finite and >= 0");
    if (!state.initialized) {
        state.mse_ewma = mse;
        state.initialized = true;
    } else {
        state.mse_ewma = (1.0 - state.params.alpha) * mse + state.params.alpha * state.mse_ewma;
    }
    return state;
}

double danger_signal(const SafetyState& state, double mse) {
    double deviation = mse - state.mse_ewma;
    if (state.params.asymmetric) deviation = std::max(deviation, 0.0);
    return std::clamp(1.0 - std::exp(-state.params.delta * deviation * deviation), 0.0, 1.0);
}

SafetyState observe(SafetyState state, double mse) {
    state = update_ewma(state, mse);
    state.danger = danger_signal(state, mse);
    return state;
}

double blend_factor(double danger, double beta) {
    // Same as beta + d (1 - beta), written so that d = 1 gives exactly 1.
    return 1.0 - (1.0 - danger) * (1.0 - beta);
}

Vector blend_weights(const Vector& gate_weights, double danger, double beta) {
    const double gamma = blend_factor(danger, beta);
    Vector out = (1.0 - gamma) * gate_weights;
    out(0) += gamma;
    return out;
}

} // namespace dyname
