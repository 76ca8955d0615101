#pragma once

#include "dyname/periods.hpp"
#include "dyname/series.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

namespace dyname {

/// How the expert weights are produced.
///  dynamic        : softmax(MLP(z)) on the backbone features
///  simple_average : uniform over the available experts
///  learnable      : softmax of a free, input-independent logit vector
///  detached       : the same MLP, but reading the raw lookback instead of z
enum class GateVariant { dynamic, simple_average, learnable, detached };

std::string_view to_string(GateVariant v) noexcept;
GateVariant parse_gate_variant(std::string_view name);

struct ModelDims {
    Index lookback = 96;
    Index horizon = 24;
    Index features = 64;
    int experts = 3; // specialised slots; the gate emits experts + 1 weights
    GateVariant gate = GateVariant::dynamic;

    [[nodiscard]] Index hidden() const noexcept { return features / 2; }
    [[nodiscard]] Index slots() const noexcept { return experts + 1; }
    [[nodiscard]] Index gate_input() const noexcept {
        return gate == GateVariant::detached ? lookback : features;
    }
    void validate() const;
};

/// Trainable tensors. Gradients use the same layout.
struct Parameters {
    Matrix phi_w;       // D x L, shared across channels
    Vector phi_b;       // D
    Matrix head_w;      // H x D
    Vector head_b;      // H
    Matrix gate_in_w;   // D_h x gate_input
    Vector gate_in_b;   // D_h
    Matrix gate_out_w;  // (k+1) x D_h
    Vector gate_out_b;  // k+1
    Vector gate_logits; // k+1, learnable variant

    static Parameters zeros(const ModelDims& dims);

    [[nodiscard]] bool all_finite() const;
    [[nodiscard]] double squared_norm() const;
};

struct ModelState {
    ModelDims dims;
    Parameters params;
    double learning_rate = 3e-3;

    /// phi and head uniform in +-1/sqrt(fan_in), drawn first and in that
    /// order so a backbone-only model with the same seed starts identical;
    /// the gate output layer starts at zero (uniform initial weights).
    static ModelState initialize(const ModelDims& dims, double learning_rate, std::uint64_t seed);
};

double gelu(double u) noexcept;
double gelu_derivative(double u) noexcept;

/// z_c = W x_c + b for every channel. x is L x C, result C x D.
Matrix extract_features(const Matrix& x, const ModelState& state);

/// Feature rows for stacked single-channel lookbacks (n x L -> n x D).
Matrix features_of_rows(const Matrix& rows, const ModelState& state);

/// Per-channel linear head. z is C x D, result H x C.
Matrix general_expert(const Matrix& z, const ModelState& state);

struct GateOutput {
    Matrix weights; // C x (k+1), rows on the simplex
    Matrix pre;     // C x D_h, MLP_in output (dynamic/detached)
    Matrix hidden;  // C x D_h, GELU(pre)
};

/// `active[i]` false masks slot i before the softmax. Slot 0 (the general
/// expert) must stay active.
GateOutput gate_forward(const Matrix& z, const Matrix& x, const ModelState& state,
                        const std::vector<bool>& active);

/// Everything the backward pass reads.
struct ForwardCache {
    Matrix x;                       // L x C
    Matrix z;                       // C x D
    GateOutput gate;
    std::vector<bool> active;       // k+1
    std::vector<Matrix> predictions; // k+1 entries of H x C; [0] is the general expert
    std::vector<std::optional<ExpertBatch>> batches; // k+1, [0] unused
    double lambda = 1e-4;
};

/// omega = (1-gamma) omega_tilde + gamma e_0, row by row.
Matrix blend_rows(const Matrix& gate_weights, double gamma);

/// sum_i omega[c,i] * predictions[i][:,c].
Matrix combine(const std::vector<Matrix>& predictions, const Matrix& weights);

double mse(const Matrix& prediction, const Matrix& truth);

/// dMSE/dprediction.
Matrix mse_gradient(const Matrix& prediction, const Matrix& truth);

/// Head and backbone gradients from dL/dy0 alone (the general-expert path).
void accumulate_head_gradients(const Matrix& x, const Matrix& z, const Matrix& head_grad,
                               const ModelState& state, Parameters& grads);

/// Gradients of the blended loss with gamma held constant. With
/// `stop_specialized` the ridge experts are treated as constants; otherwise
/// the gradient also flows through the dual solve into phi.
Parameters compute_gradients(const ForwardCache& cache, double gamma, const Matrix& loss_grad,
                             const ModelState& state, bool stop_specialized = true);

/// One SGD step. Throws NonFiniteGradient and leaves state untouched if the
/// gradient is not finite.
void apply_sgd(ModelState& state, const Parameters& grads);

ModelState backward_and_update(const Matrix& loss_grad, const ForwardCache& cache, double gamma,
                               ModelState state, bool stop_specialized = true);

void save_checkpoint(const std::filesystem::path& path, const ModelState& state);
ModelState load_checkpoint(const std::filesystem::path& path);

} // namespace dyname
