#include "dyname/backbone.hpp"

#include "dyname/error.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

namespace dyname {

namespace {

constexpr int kCheckpointVersion = 1;

template <class F>
void for_each_tensor(Parameters& a, const Parameters& b, F&& f) {
    f(a.phi_w, b.phi_w);
    f(a.phi_b, b.phi_b);
    f(a.head_w, b.head_w);
    f(a.head_b, b.head_b);
    f(a.gate_in_w, b.gate_in_w);
    f(a.gate_in_b, b.gate_in_b);
    f(a.gate_out_w, b.gate_out_w);
    f(a.gate_out_b, b.gate_out_b);
    f(a.gate_logits, b.gate_logits);
}

template <class F>
void for_each_named(const Parameters& p, F&& f) {
    f("phi_w", p.phi_w);
    f("phi_b", p.phi_b);
    f("head_w", p.head_w);
    f("head_b", p.head_b);
    f("gate_in_w", p.gate_in_w);
    f("gate_in_b", p.gate_in_b);
    f("gate_out_w", p.gate_out_w);
    f("gate_out_b", p.gate_out_b);
    f("gate_logits", p.gate_logits);
}

template <class Derived>
void fill_uniform(Eigen::PlainObjectBase<Derived>& m, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index j = 0; j < m.cols(); ++j) {
        for (Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
    }
}

// Softmax over the active entries of each row; masked entries are exactly 0.
Matrix masked_softmax(const Matrix& logits, const std::vector<bool>& active) {
    Matrix out = Matrix::Zero(logits.rows(), logits.cols());
    for (Index c = 0; c < logits.rows(); ++c) {
        double peak = -std::numeric_limits<double>::infinity();
        for (Index i = 0; i < logits.cols(); ++i) {
            if (active[static_cast<std::size_t>(i)]) peak = std::max(peak, logits(c, i));
        }
        double total = 0.0;
        for (Index i = 0; i < logits.cols(); ++i) {
            if (!active[static_cast<std::size_t>(i)]) continue;
            out(c, i) = std::exp(logits(c, i) - peak);
            total += out(c, i);
        }
        out.row(c) /= total;
    }
    return out;
}

} // namespace

std::string_view to_string(GateVariant v) noexcept {
    switch (v) {
    case GateVariant::dynamic: return "dynamic";
    case GateVariant::simple_average: return "simple_average";
    case GateVariant::learnable: return "learnable";
    case GateVariant::detached: return "detached";
    }
    return "dynamic";
}

GateVariant parse_gate_variant(std::string_view name) {
    for (auto v : {GateVariant::dynamic, GateVariant::simple_average, GateVariant::learnable,
                   GateVariant::detached}) {
        if (name == to_string(v)) return v;
    }
    fail(Errc::ConfigError, "unknown gate variant '" + std::string(name) + "'");
}

void ModelDims::validate() const {
    if (lookback < 1 || horizon < 1) fail(Errc::ConfigError, "lookback and horizon must be positive");
    if (features < 2) fail(Errc::ConfigError, "feature dimension must be at least 2");
    if (experts < 0) fail(Errc::ConfigError, "expert count must be non-negative");
}

Parameters Parameters::zeros(const ModelDims& dims) {
    Parameters p;
    p.phi_w = Matrix::Zero(dims.features, dims.lookback);
    p.phi_b = Vector::Zero(dims.features);
    p.head_w = Matrix::Zero(dims.horizon, dims.features);
    p.head_b = Vector::Zero(dims.horizon);
    p.gate_in_w = Matrix::Zero(dims.hidden(), dims.gate_input());
    p.gate_in_b = Vector::Zero(dims.hidden());
    p.gate_out_w = Matrix::Zero(dims.slots(), dims.hidden());
    p.gate_out_b = Vector::Zero(dims.slots());
    p.gate_logits = Vector::Zero(dims.slots());
    return p;
}

bool Parameters::all_finite() const {
    bool ok = true;
    for_each_named(*this, [&](const char*, const auto& t) { ok = ok && t.allFinite(); });
    return ok;
}

double Parameters::squared_norm() const {
    double total = 0.0;
    for_each_named(*this, [&](const char*, const auto& t) { total += t.squaredNorm(); });
    return total;
}

ModelState ModelState::initialize(const ModelDims& dims, double learning_rate, std::uint64_t seed) {
    dims.validate();
    if (!(learning_rate > 0.0)) fail(Errc::ConfigError, "learning rate must be positive");
    ModelState s{dims, Parameters::zeros(dims), learning_rate};
    std::mt19937_64 rng(seed);
    const double phi_bound = 1.0 / std::sqrt(static_cast<double>(dims.lookback));
    const double head_bound = 1.0 / std::sqrt(static_cast<double>(dims.features));
    const double gate_bound = 1.0 / std::sqrt(static_cast<double>(dims.gate_input()));
    fill_uniform(s.params.phi_w, phi_bound, rng);
    fill_uniform(s.params.phi_b, phi_bound, rng);
    fill_uniform(s.params.head_w, head_bound, rng);
    fill_uniform(s.params.head_b, head_bound, rng);
    fill_uniform(s.params.gate_in_w, gate_bound, rng);
    fill_uniform(s.params.gate_in_b, gate_bound, rng);
    return s;
}

double gelu(double u) noexcept {
    return 0.5 * u * (1.0 + std::erf(u / std::numbers::sqrt2));
}

double gelu_derivative(double u) noexcept {
    const double cdf = 0.5 * (1.0 + std::erf(u / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + u * pdf;
}

Matrix extract_features(const Matrix& x, const ModelState& state) {
    if (x.rows() != state.dims.lookback) fail(Errc::OutOfRange, "lookback length mismatch");
    Matrix z = x.transpose() * state.params.phi_w.transpose();
    z.rowwise() += state.params.phi_b.transpose();
    return z;
}

Matrix features_of_rows(const Matrix& rows, const ModelState& state) {
    if (rows.cols() != state.dims.lookback) fail(Errc::OutOfRange, "lookback length mismatch");
    Matrix z = rows * state.params.phi_w.transpose();
    z.rowwise() += state.params.phi_b.transpose();
    return z;
}

Matrix general_expert(const Matrix& z, const ModelState& state) {
    if (z.cols() != state.dims.features) fail(Errc::OutOfRange, "feature dimension mismatch");
    Matrix y = state.params.head_w * z.transpose();
    y.colwise() += state.params.head_b;
    return y;
}

GateOutput gate_forward(const Matrix& z, const Matrix& x, const ModelState& state,
                        const std::vector<bool>& active) {
    const auto& dims = state.dims;
    const auto& p = state.params;
    if (static_cast<Index>(active.size()) != dims.slots() || !active.front()) {
        fail(Errc::OutOfRange, "gate mask must cover every slot and keep slot 0 active");
    }
    const Index channels = z.rows();
    GateOutput out;
    Matrix logits = Matrix::Zero(channels, dims.slots());
    switch (dims.gate) {
    case GateVariant::dynamic:
    case GateVariant::detached: {
        const Matrix input = dims.gate == GateVariant::dynamic ? z : Matrix(x.transpose());
        out.pre = input * p.gate_in_w.transpose();
        out.pre.rowwise() += p.gate_in_b.transpose();
        out.hidden = out.pre.unaryExpr([](double u) { return gelu(u); });
        logits = out.hidden * p.gate_out_w.transpose();
        logits.rowwise() += p.gate_out_b.transpose();
        break;
    }
    case GateVariant::learnable:
        logits.rowwise() = p.gate_logits.transpose();
        break;
    case GateVariant::simple_average:
        break;
    }
    out.weights = masked_softmax(logits, active);
    return out;
}

Matrix blend_rows(const Matrix& gate_weights, double gamma) {
    Matrix out = (1.0 - gamma) * gate_weights;
    out.col(0).array() += gamma;
    return out;
}

Matrix combine(const std::vector<Matrix>& predictions, const Matrix& weights) {
    const Matrix& first = predictions.front();
    Matrix out = Matrix::Zero(first.rows(), first.cols());
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto slot = static_cast<Index>(i);
        for (Index c = 0; c < first.cols(); ++c) {
            const double w = weights(c, slot);
            if (w == 0.0) continue;
            out.col(c) += w * predictions[i].col(c);
        }
    }
    return out;
}

double mse(const Matrix& prediction, const Matrix& truth) {
    return (prediction - truth).array().square().mean();
}

Matrix mse_gradient(const Matrix& prediction, const Matrix& truth) {
    return (2.0 / static_cast<double>(prediction.size())) * (prediction - truth);
}

void accumulate_head_gradients(const Matrix& x, const Matrix& z, const Matrix& head_grad,
                               const ModelState& state, Parameters& grads) {
    // head_grad: H x C; z: C x D; x: L x C.
    grads.head_w.noalias() += head_grad * z;
    grads.head_b += head_grad.rowwise().sum();
    const Matrix dz = state.params.head_w.transpose() * head_grad; // D x C
    grads.phi_w.noalias() += dz * x.transpose();
    grads.phi_b += dz.rowwise().sum();
}

Parameters compute_gradients(const ForwardCache& cache, double gamma, const Matrix& loss_grad,
                             const ModelState& state, bool stop_specialized) {
    const auto& dims = state.dims;
    const auto& p = state.params;
    const Index channels = cache.z.rows();
    const Index slots = dims.slots();
    Parameters grads = Parameters::zeros(dims);
    const Matrix weights = blend_rows(cache.gate.weights, gamma);

    // General expert path: dL/dy0 = omega_0 * dL/dy.
    Matrix head_grad(loss_grad.rows(), channels);
    for (Index c = 0; c < channels; ++c) head_grad.col(c) = weights(c, 0) * loss_grad.col(c);
    accumulate_head_gradients(cache.x, cache.z, head_grad, state, grads);

    // Gate path: dL/domega_tilde = (1-gamma) dL/domega, then the softmax Jacobian.
    Matrix dlogits = Matrix::Zero(channels, slots);
    for (Index c = 0; c < channels; ++c) {
        Vector dw(slots);
        for (Index i = 0; i < slots; ++i) {
            dw(i) = cache.active[static_cast<std::size_t>(i)]
                        ? (1.0 - gamma) * loss_grad.col(c).dot(cache.predictions[static_cast<std::size_t>(i)].col(c))
                        : 0.0;
        }
        const Vector w = cache.gate.weights.row(c).transpose();
        dlogits.row(c) = (w.array() * (dw.array() - w.dot(dw))).matrix().transpose();
    }

    Matrix dz_gate = Matrix::Zero(channels, dims.features);
    switch (dims.gate) {
    case GateVariant::dynamic:
    case GateVariant::detached: {
        grads.gate_out_w.noalias() += dlogits.transpose() * cache.gate.hidden;
        grads.gate_out_b += dlogits.colwise().sum().transpose();
        const Matrix dhidden = dlogits * p.gate_out_w; // C x D_h
        const Matrix dpre = dhidden.cwiseProduct(cache.gate.pre.unaryExpr([](double u) { return gelu_derivative(u); }));
        grads.gate_in_b += dpre.colwise().sum().transpose();
        if (dims.gate == GateVariant::dynamic) {
            grads.gate_in_w.noalias() += dpre.transpose() * cache.z;
            dz_gate = dpre * p.gate_in_w;
        } else {
            grads.gate_in_w.noalias() += dpre.transpose() * cache.x.transpose();
        }
        break;
    }
    case GateVariant::learnable:
        grads.gate_logits += dlogits.colwise().sum().transpose();
        break;
    case GateVariant::simple_average:
        break;
    }
    grads.phi_w.noalias() += dz_gate.transpose() * cache.x.transpose();
    grads.phi_b += dz_gate.colwise().sum().transpose();

    if (!stop_specialized) {
        // Through y_i = Y^T A^-1 Z z with A = Z Z^T + lambda I and Z = X W^T + 1 b^T.
        for (Index i = 1; i < slots; ++i) {
            const auto si = static_cast<std::size_t>(i);
            if (!cache.active[si] || !cache.batches[si]) continue;
            const auto& batch = *cache.batches[si];
            for (Index c = 0; c < channels; ++c) {
                const auto ci = static_cast<std::size_t>(c);
                const Matrix& xb = batch.inputs[ci];
                const Matrix zb = features_of_rows(xb, state);
                Matrix gram = zb * zb.transpose();
                gram.diagonal().array() += cache.lambda;
                Eigen::LDLT<Matrix> ldlt(gram);
                const Vector query = cache.z.row(c).transpose();
                const Vector g = weights(c, i) * loss_grad.col(c);
                const Vector v = ldlt.solve(batch.targets[ci] * g);
                const Vector w = ldlt.solve(zb * query);
                const Matrix dzb = v * query.transpose() - v * (zb.transpose() * w).transpose() -
                                   w * (zb.transpose() * v).transpose();
                const Vector dquery = zb.transpose() * v;
                grads.phi_w.noalias() += dzb.transpose() * xb + dquery * cache.x.col(c).transpose();
                grads.phi_b += dzb.colwise().sum().transpose() + dquery;
            }
        }
    }
    return grads;
}

void apply_sgd(ModelState& state, const Parameters& grads) {
    if (!grads.all_finite()) fail(Errc::NonFiniteGradient, "gradient contains NaN or Inf");
    const double lr = state.learning_rate;
    for_each_tensor(state.params, grads, [lr](auto& param, const auto& grad) { param.noalias() -= lr * grad; });
    if (!state.params.all_finite()) fail(Errc::NonFiniteGradient, "parameters diverged after update");
}

ModelState backward_and_update(const Matrix& loss_grad, const ForwardCache& cache, double gamma, ModelState state,
                               bool stop_specialized) {
    apply_sgd(state, compute_gradients(cache, gamma, loss_grad, state, stop_specialized));
    return state;
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& state) {
    nlohmann::json j;
    j["version"] = kCheckpointVersion;
    j["dims"] = {{"lookback", state.dims.lookback},
                 {"horizon", state.dims.horizon},
                 {"features", state.dims.features},
                 {"experts", state.dims.experts},
                 {"gate", to_string(state.dims.gate)}};
    j["learning_rate"] = state.learning_rate;
    auto& params = j["parameters"];
    for_each_named(state.params, [&](const char* name, const auto& t) {
        params[name] = {{"rows", t.rows()},
                        {"cols", t.cols()},
                        {"data", std::vector<double>(t.data(), t.data() + t.size())}};
    });
    std::ofstream out(path);
    if (!out) fail(Errc::IoError, "cannot write " + path.string());
    out << j.dump(1) << '\n';
}

ModelState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::IoError, "cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        if (j.at("version").get<int>() != kCheckpointVersion) {
            fail(Errc::ConfigError, "unsupported checkpoint version");
        }
        ModelDims dims;
        const auto& d = j.at("dims");
        dims.lookback = d.at("lookback").get<Index>();
        dims.horizon = d.at("horizon").get<Index>();
        dims.features = d.at("features").get<Index>();
        dims.experts = d.at("experts").get<int>();
        dims.gate = parse_gate_variant(d.at("gate").get<std::string>());
        dims.validate();
        ModelState s{dims, Parameters::zeros(dims), j.at("learning_rate").get<double>()};
        const auto& params = j.at("parameters");
        auto read = [&](const char* name, auto& t) {
            const auto& e = params.at(name);
            const auto data = e.at("data").get<std::vector<double>>();
            if (e.at("rows").get<Index>() != t.rows() || e.at("cols").get<Index>() != t.cols() ||
                static_cast<Index>(data.size()) != t.size()) {
                fail(Errc::ConfigError, std::string("checkpoint tensor '") + name + "' has the wrong shape");
            }
            std::copy(data.begin(), data.end(), t.data());
        };
        read("phi_w", s.params.phi_w);
        read("phi_b", s.params.phi_b);
        read("head_w", s.params.head_w);
        read("head_b", s.params.head_b);
        read("gate_in_w", s.params.gate_in_w);
        read("gate_in_b", s.params.gate_in_b);
        read("gate_out_w", s.params.gate_out_w);
        read("gate_out_b", s.params.gate_out_b);
        read("gate_logits", s.params.gate_logits);
        return s;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::ConfigError, std::string("malformed checkpoint: ") + e.what());
    }
}

} // namespace dyname
