#include "dyname/baselines.hpp"

#include "dyname/error.hpp"

#include <chrono>

namespace dyname {

Matrix gd_forecast(const StreamView& view, Index t, const ModelState& state) {
    return general_expert(extract_features(view.lookback(t, state.dims.lookback), state), state);
}

void gd_update(const StreamView& view, Index anchor, ModelState& state) {
    const Matrix x = view.lookback(anchor, state.dims.lookback);
    const Matrix z = extract_features(x, state);
    const Matrix y_hat = general_expert(z, state);
    const Matrix truth = view.horizon(anchor, state.dims.horizon);
    Parameters grads = Parameters::zeros(state.dims);
    accumulate_head_gradients(x, z, mse_gradient(y_hat, truth), state, grads);
    apply_sgd(state, grads);
}

RunResult run_gd(const SeriesStore& normalized, const EngineConfig& cfg, const ModelState& pretrained,
                 const OnlineRange& range, bool update) {
    const auto start = std::chrono::steady_clock::now();
    ModelState state = pretrained;
    StreamView view(normalized, range.first);
    RunResult out;
    const Index h = cfg.horizon;
    for (Index t = range.first; t <= range.last; ++t) {
        view.advance_to(t);
        const Index done = t - h;
        if (done >= range.first) {
            if (update) gd_update(view, done, state);
            auto& rec = out.records[static_cast<std::size_t>(done - range.first)];
            const Matrix truth = view.horizon(done, h);
            rec.realized_mse = mse(rec.y_hat, truth);
            rec.realized_mae = (rec.y_hat - truth).cwiseAbs().mean();
        }
        StepRecord rec;
        rec.t = t;
        rec.y_hat = gd_forecast(view, t, state);
        rec.gate_weights = Vector::Ones(1);
        rec.weights = Vector::Ones(1);
        rec.gamma = 1.0;
        out.records.push_back(std::move(rec));
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    InvariantAudit audit;
    audit.steps = out.records.size();
    audit.causality_violations = view.audit().violations;
    audit.reads = view.audit().reads;
    out.summary = summarize(out.records, update ? "gd" : "frozen", h, seconds, audit);
    out.final_model = std::move(state);
    return out;
}

Matrix strided_lr_predict(const StreamView& view, Index t, const std::vector<Index>& anchors, Index lookback,
                          Index horizon, double lambda) {
    if (anchors.empty()) fail(Errc::InsufficientHistory, "no fitting windows available");
    const Index channels = view.channels();
    const auto n = static_cast<Index>(anchors.size());
    std::vector<Matrix> xs(static_cast<std::size_t>(channels), Matrix(n, lookback));
    std::vector<Matrix> ys(static_cast<std::size_t>(channels), Matrix(n, horizon));
    for (Index s = 0; s < n; ++s) {
        const auto pair = view.window(anchors[static_cast<std::size_t>(s)], lookback, horizon);
        for (Index c = 0; c < channels; ++c) {
            xs[static_cast<std::size_t>(c)].row(s) = pair.x.col(c).transpose();
            ys[static_cast<std::size_t>(c)].row(s) = pair.y.col(c).transpose();
        }
    }
    const Matrix query = view.lookback(t, lookback);
    Matrix out(horizon, channels);
    for (Index c = 0; c < channels; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        out.col(c) = solve_dual(RidgeProblem{xs[ci], ys[ci], lambda, query.col(c)});
    }
    return out;
}

Matrix weekly_lr_predict(const StreamView& view, Index t, Index lookback, Index horizon, Index period,
                         Index samples, double lambda) {
    if (period < horizon) fail(Errc::ConfigError, "period shorter than the horizon would leak targets");
    if (t - samples * period - lookback + 1 < 0) {
        fail(Errc::InsufficientHistory, "weekly regression at t=" + std::to_string(t) + " needs " +
                                            std::to_string(samples * period + lookback) + " rows of history");
    }
    std::vector<Index> anchors;
    for (Index j = 1; j <= samples; ++j) anchors.push_back(t - j * period);
    return strided_lr_predict(view, t, anchors, lookback, horizon, lambda);
}

Matrix recency_lr_predict(const StreamView& view, Index t, Index lookback, Index horizon, Index samples,
                          double lambda) {
    if (t - samples * horizon - lookback + 1 < 0) {
        fail(Errc::InsufficientHistory, "recency regression at t=" + std::to_string(t) + " lacks history");
    }
    std::vector<Index> anchors;
    for (Index j = 1; j <= samples; ++j) anchors.push_back(t - j * horizon);
    return strided_lr_predict(view, t, anchors, lookback, horizon, lambda);
}

RunResult run_lr_baseline(const SeriesStore& normalized, const EngineConfig& cfg, const OnlineRange& range,
                          Method method) {
    constexpr Index kPeriod = 168;
    constexpr Index kSamples = 4;
    const auto start = std::chrono::steady_clock::now();
    StreamView view(normalized, range.first);
    RunResult out;
    const Index h = cfg.horizon;
    for (Index t = range.first; t <= range.last; ++t) {
        view.advance_to(t);
        const Index done = t - h;
        if (done >= range.first) {
            auto& rec = out.records[static_cast<std::size_t>(done - range.first)];
            const Matrix truth = view.horizon(done, h);
            rec.realized_mse = mse(rec.y_hat, truth);
            rec.realized_mae = (rec.y_hat - truth).cwiseAbs().mean();
        }
        StepRecord rec;
        rec.t = t;
        if (method == Method::weekly_lr) {
            // Early in a short series use however many weekly samples exist.
            const Index available = std::min(kSamples, (t - cfg.lookback + 1) / kPeriod);
            rec.y_hat = weekly_lr_predict(view, t, cfg.lookback, h, kPeriod, std::max<Index>(available, 1), cfg.lambda);
        } else {
            rec.y_hat = recency_lr_predict(view, t, cfg.lookback, h, kSamples, cfg.lambda);
        }
        out.records.push_back(std::move(rec));
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    InvariantAudit audit;
    audit.steps = out.records.size();
    audit.causality_violations = view.audit().violations;
    audit.reads = view.audit().reads;
    out.summary = summarize(out.records, std::string(to_string(method)), h, seconds, audit);
    return out;
}

RunResult run_ablation(const SeriesStore& raw, const EngineConfig& cfg, const AblationSpec& spec) {
    return run_online(raw, cfg, Method::dyname, spec);
}

} // namespace dyname
