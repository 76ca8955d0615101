#pragma once

#include "dyname/backbone.hpp"
#include "dyname/ridge.hpp"
#include "support.hpp"

#include <algorithm>
#include <vector>

namespace testing_support {

/// One random blended-loss instance: a lookback, fixed or refitted experts,
/// a mask, a blend factor and a target.
struct GradInstance {
    dyname::ModelState state;
    dyname::Matrix x;     // L x C
    dyname::Matrix truth; // H x C
    std::vector<bool> active;
    std::vector<dyname::Matrix> fixed_experts; // used when the experts are constants
    std::vector<std::optional<dyname::ExpertBatch>> batches;
    double gamma = 0.0;
    double lambda = 1e-2;
};

inline GradInstance random_instance(Gen& g, dyname::GateVariant gate, bool with_batches, Index lookback = 8,
                                    Index features = 6, Index horizon = 3, Index channels = 2, int experts = 2) {
    using namespace dyname;
    ModelDims dims{lookback, horizon, features, experts, gate};
    GradInstance inst;
    inst.state = ModelState::initialize(dims, 1e-2, static_cast<std::uint64_t>(g.integer(0, 1 << 30)));
    auto& p = inst.state.params;
    // Non-trivial gate parameters so every path carries gradient.
    p.gate_out_w = g.matrix(p.gate_out_w.rows(), p.gate_out_w.cols());
    p.gate_out_b = g.vector(p.gate_out_b.size());
    p.gate_logits = g.vector(p.gate_logits.size());
    p.gate_in_w = g.matrix(p.gate_in_w.rows(), p.gate_in_w.cols()) * 0.5;
    inst.x = g.matrix(lookback, channels);
    inst.truth = g.matrix(horizon, channels);
    inst.gamma = g.uniform(0.0, 0.9);
    inst.active.assign(static_cast<std::size_t>(experts + 1), true);
    if (experts > 0 && g.integer(0, 3) == 0) inst.active[static_cast<std::size_t>(g.integer(1, experts))] = false;
    inst.fixed_experts.push_back(Matrix()); // slot 0 is the general expert
    inst.batches.emplace_back();
    for (int i = 1; i <= experts; ++i) {
        inst.fixed_experts.push_back(g.matrix(horizon, channels));
        if (with_batches) {
            ExpertBatch b;
            const Index n = g.integer(1, 4);
            b.period = 24;
            for (Index j = 0; j < n; ++j) b.anchors.push_back(100 - 24 * (j + 1));
            for (Index c = 0; c < channels; ++c) {
                b.inputs.push_back(g.matrix(n, lookback));
                b.targets.push_back(g.matrix(n, horizon));
            }
            inst.batches.emplace_back(std::move(b));
        } else {
            inst.batches.emplace_back();
        }
    }
    return inst;
}

/// The forward pass written out from the layer functions, returning its cache.
inline dyname::ForwardCache forward(const GradInstance& inst, const dyname::ModelState& state, bool refit) {
    using namespace dyname;
    ForwardCache cache;
    cache.x = inst.x;
    cache.z = extract_features(inst.x, state);
    cache.active = inst.active;
    cache.lambda = inst.lambda;
    cache.batches = inst.batches;
    cache.predictions.push_back(general_expert(cache.z, state));
    for (std::size_t i = 1; i < inst.fixed_experts.size(); ++i) {
        if (!inst.active[i]) {
            cache.predictions.push_back(Matrix::Zero(inst.truth.rows(), inst.truth.cols()));
        } else if (refit) {
            const FeatureMap phi = [&state](const Matrix& rows) { return features_of_rows(rows, state); };
            cache.predictions.push_back(
                predict_expert(*inst.batches[i], phi, cache.z, inst.lambda, static_cast<int>(i)).y_hat);
        } else {
            cache.predictions.push_back(inst.fixed_experts[i]);
        }
    }
    cache.gate = gate_forward(cache.z, inst.x, state, inst.active);
    return cache;
}

inline double loss(const GradInstance& inst, const dyname::ModelState& state, bool refit) {
    using namespace dyname;
    const ForwardCache cache = forward(inst, state, refit);
    return mse(combine(cache.predictions, blend_rows(cache.gate.weights, inst.gamma)), inst.truth);
}

struct NamedTensor {
    const char* name;
    double* (*data)(dyname::Parameters&);
    Index (*size)(const dyname::Parameters&);
};

inline std::vector<NamedTensor> tensors() {
    using P = dyname::Parameters;
    return {
        {"phi_w", [](P& p) { return p.phi_w.data(); }, [](const P& p) { return p.phi_w.size(); }},
        {"phi_b", [](P& p) { return p.phi_b.data(); }, [](const P& p) { return p.phi_b.size(); }},
        {"head_w", [](P& p) { return p.head_w.data(); }, [](const P& p) { return p.head_w.size(); }},
        {"head_b", [](P& p) { return p.head_b.data(); }, [](const P& p) { return p.head_b.size(); }},
        {"gate_in_w", [](P& p) { return p.gate_in_w.data(); }, [](const P& p) { return p.gate_in_w.size(); }},
        {"gate_in_b", [](P& p) { return p.gate_in_b.data(); }, [](const P& p) { return p.gate_in_b.size(); }},
        {"gate_out_w", [](P& p) { return p.gate_out_w.data(); }, [](const P& p) { return p.gate_out_w.size(); }},
        {"gate_out_b", [](P& p) { return p.gate_out_b.data(); }, [](const P& p) { return p.gate_out_b.size(); }},
        {"gate_logits", [](P& p) { return p.gate_logits.data(); }, [](const P& p) { return p.gate_logits.size(); }},
    };
}

struct GradReport {
    double worst_relative = 0.0;
    std::string worst_tensor;
};

/// Central differences (step eps) of the blended loss against compute_gradients,
/// compared tensor by tensor as ||analytic - numeric|| / max(||numeric||, ||analytic||).
inline GradReport check_gradients(const GradInstance& inst, bool refit, double eps = 1e-5) {
    using namespace dyname;
    const ForwardCache cache = forward(inst, inst.state, refit);
    const Matrix y_hat = combine(cache.predictions, blend_rows(cache.gate.weights, inst.gamma));
    Parameters analytic = compute_gradients(cache, inst.gamma, mse_gradient(y_hat, inst.truth), inst.state, !refit);
    GradReport report;
    for (const auto& t : tensors()) {
        const Index n = t.size(inst.state.params);
        std::vector<double> numeric(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) {
            ModelState plus = inst.state, minus = inst.state;
            t.data(plus.params)[i] += eps;
            t.data(minus.params)[i] -= eps;
            numeric[static_cast<std::size_t>(i)] = (loss(inst, plus, refit) - loss(inst, minus, refit)) / (2 * eps);
        }
        double diff = 0.0, norm_n = 0.0, norm_a = 0.0;
        const double* a = t.data(analytic);
        for (Index i = 0; i < n; ++i) {
            const double nv = numeric[static_cast<std::size_t>(i)];
            diff += (a[i] - nv) * (a[i] - nv);
            norm_n += nv * nv;
            norm_a += a[i] * a[i];
        }
        const double scale = std::max(std::sqrt(norm_n), std::sqrt(norm_a));
        const double rel = scale < 1e-9 ? std::sqrt(diff) : std::sqrt(diff) / scale;
        if (rel > report.worst_relative) {
            report.worst_relative = rel;
            report.worst_tensor = t.name;
        }
    }
    return report;
}

} // namespace testing_support
