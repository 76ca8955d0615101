#pragma once

#include "dyname/series.hpp"

namespace dyname {

struct SafetyParams {
    double alpha = 0.95; // EWMA smoothing
    double delta = 0.01; // danger sensitivity
    double beta = 0.2;   // minimum reliance on the general expert
    /// Only count errors above the running mean as danger.
    bool asymmetric = false;

    void validate() const;
};

/// Running error statistics behind the fallback blend. d starts at 0 and
/// the EWMA is seeded by the first realized MSE.
struct SafetyState {
    SafetyParams params;
    double mse_ewma = 0.0;
    double danger = 0.0;
    bool initialized = false;
};

/// mu <- (1 - alpha) mse + alpha mu_prev; the first call sets mu = mse.
SafetyState update_ewma(SafetyState state, double mse);

/// 1 - exp(-delta (mse - mu)^2), with mu already updated for this step.
double danger_signal(const SafetyState& state, double mse);

/// update_ewma followed by danger_signal, stored into the state.
SafetyState observe(SafetyState state, double mse);

/// gamma = beta + d (1 - beta)
double blend_factor(double danger, double beta);

/// (1 - gamma) w + gamma e_0
Vector blend_weights(const Vector& gate_weights, double danger, double beta);

} // namespace dyname
