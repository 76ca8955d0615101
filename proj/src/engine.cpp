#include "dyname/engine.hpp"

#include "dyname/baselines.hpp"
#include "dyname/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace dyname {

namespace {

constexpr double kSimplexTolerance = 1e-9;

bool is_head_only(Method m) {
    return m == Method::gd || m == Method::frozen;
}

bool on_simplex(const Matrix& weights) {
    for (Index c = 0; c < weights.rows(); ++c) {
        if ((weights.row(c).array() < -kSimplexTolerance).any()) return false;
        if (std::abs(weights.row(c).sum() - 1.0) > kSimplexTolerance) return false;
    }
    return true;
}

bool within_hull(const std::vector<Matrix>& predictions, const std::vector<bool>& active, const Matrix& blended) {
    for (Index c = 0; c < blended.cols(); ++c) {
        for (Index j = 0; j < blended.rows(); ++j) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (std::size_t i = 0; i < predictions.size(); ++i) {
                if (!active[i]) continue;
                lo = std::min(lo, predictions[i](j, c));
                hi = std::max(hi, predictions[i](j, c));
            }
            const double tol = 1e-9 * (1.0 + std::max(std::abs(lo), std::abs(hi)));
            if (blended(j, c) < lo - tol || blended(j, c) > hi + tol) return false;
        }
    }
    return true;
}

std::vector<Index> candidate_periods(const StreamView& view, Index t, const EngineConfig& cfg,
                                     const AblationSpec& spec) {
    std::vector<Index> periods;
    if (spec.period_mode == PeriodMode::fixed) {
        periods = spec.fixed_periods;
        std::sort(periods.begin(), periods.end(), std::greater<>());
        periods.erase(std::unique(periods.begin(), periods.end()), periods.end());
        return periods;
    }
    if (t - cfg.buffer + 1 < 0) return periods;
    try {
        periods = top_k_periods(view.history(t, cfg.buffer), cfg.experts).periods;
    } catch (const Error& e) {
        if (e.code() != Errc::DegenerateSpectrum) throw;
    }
    return periods;
}

} // namespace

std::string AblationSpec::label() const {
    std::ostringstream out;
    out << "gate=" << to_string(gate) << ";danger=" << (use_danger ? "on" : "off");
    if (!use_danger) out << (keep_beta_without_danger ? "(beta)" : "(zero)");
    out << ";periods=";
    if (period_mode == PeriodMode::dynamic_fft) {
        out << "dynamic";
    } else {
        out << "fixed{";
        for (std::size_t i = 0; i < fixed_periods.size(); ++i) out << (i ? "," : "") << fixed_periods[i];
        out << '}';
    }
    return out.str();
}

void EngineConfig::validate() const {
    if (lookback < 1 || horizon < 1) fail(Errc::ConfigError, "lookback and horizon must be positive");
    if (buffer < lookback + horizon + 1) fail(Errc::ConfigError, "buffer M must be at least L + H + 1");
    if (experts < 1) fail(Errc::ConfigError, "at least one specialised expert (k >= 1) is required");
    if (samples < 1) fail(Errc::ConfigError, "samples per expert must be at least 1");
    if (features < 2) fail(Errc::ConfigError, "feature dimension must be at least 2");
    if (!(lambda >= 0.0)) fail(Errc::ConfigError, "lambda must be non-negative");
    if (!(learning_rate > 0.0)) fail(Errc::ConfigError, "learning rate must be positive");
    if (pretrain_epochs < 0 || patience < 1) fail(Errc::ConfigError, "invalid pretraining schedule");
    safety.validate();
}

ModelDims EngineConfig::dims(GateVariant gate) const {
    return ModelDims{lookback, horizon, features, experts, gate};
}

std::string_view to_string(Method m) noexcept {
    switch (m) {
    case Method::dyname: return "dyname";
    case Method::gd: return "gd";
    case Method::frozen: return "frozen";
    case Method::weekly_lr: return "weekly_lr";
    case Method::recency_lr: return "recency_lr";
    }
    return "dyname";
}

Method parse_method(std::string_view name) {
    for (auto m : {Method::dyname, Method::gd, Method::frozen, Method::weekly_lr, Method::recency_lr}) {
        if (name == to_string(m)) return m;
    }
    fail(Errc::ConfigError, "unknown method '" + std::string(name) + "'");
}

ForwardResult forward_pass(const StreamView& view, Index t, const ModelState& state, const EngineConfig& cfg,
                           const AblationSpec& spec) {
    const Index slots = static_cast<Index>(cfg.experts) + 1;
    const Index channels = view.channels();
    ForwardResult out;
    auto& cache = out.cache;
    cache.lambda = cfg.lambda;
    cache.x = view.lookback(t, cfg.lookback);
    cache.z = extract_features(cache.x, state);
    cache.active.assign(static_cast<std::size_t>(slots), false);
    cache.active[0] = true;
    cache.predictions.assign(static_cast<std::size_t>(slots), Matrix::Zero(cfg.horizon, channels));
    cache.predictions[0] = general_expert(cache.z, state);
    cache.batches.assign(static_cast<std::size_t>(slots), std::nullopt);
    out.slot_periods.assign(static_cast<std::size_t>(slots), 0);

    const auto periods = candidate_periods(view, t, cfg, spec);
    const FeatureMap phi = [&state](const Matrix& rows) { return features_of_rows(rows, state); };
    const auto used = std::min<Index>(static_cast<Index>(periods.size()), cfg.experts);
    for (Index i = 1; i <= used; ++i) {
        const auto si = static_cast<std::size_t>(i);
        const Index period = periods[si - 1];
        try {
            auto batch = build_expert_batch(view, t, period, cfg.lookback, cfg.horizon, cfg.samples);
            auto pred = predict_expert(batch, phi, cache.z, cfg.lambda, static_cast<int>(i), cfg.ridge_form);
            cache.predictions[si] = std::move(pred.y_hat);
            cache.batches[si] = std::move(batch);
            cache.active[si] = true;
            out.slot_periods[si] = period;
        } catch (const Error& e) {
            if (e.code() != Errc::NoValidSamples && e.code() != Errc::SingularSystem) throw;
        }
    }
    const bool any_expert = std::any_of(cache.active.begin() + 1, cache.active.end(), [](bool b) { return b; });
    if (!any_expert && !cfg.allow_fallback) {
        fail(Errc::NoValidSamples, "no specialised expert survived at t=" + std::to_string(t));
    }
    cache.gate = gate_forward(cache.z, cache.x, state, cache.active);
    return out;
}

OnlineEngine::OnlineEngine(const SeriesStore& normalized, EngineConfig cfg, AblationSpec spec, ModelState state,
                           Index online_start)
    : store_(&normalized),
      cfg_(std::move(cfg)),
      spec_(std::move(spec)),
      state_(std::move(state)),
      safety_{cfg_.safety},
      view_(normalized, online_start),
      online_start_(online_start) {
    cfg_.validate();
    if (state_.dims.experts != cfg_.experts || state_.dims.lookback != cfg_.lookback ||
        state_.dims.horizon != cfg_.horizon || state_.dims.gate != spec_.gate) {
        fail(Errc::ConfigError, "model dimensions do not match the engine configuration");
    }
}

double OnlineEngine::gamma_for(double danger) const {
    if (cfg_.force_gamma_one) return 1.0;
    if (!spec_.use_danger) return spec_.keep_beta_without_danger ? blend_factor(0.0, cfg_.safety.beta) : 0.0;
    return blend_factor(danger, cfg_.safety.beta);
}

void OnlineEngine::check_forward(const ForwardResult& fr, Index t) {
    for (const auto& batch : fr.cache.batches) {
        if (!batch) continue;
        for (const Index anchor : batch->anchors) {
            if (anchor + cfg_.horizon > t) ++audit_.leakage_violations;
        }
    }
    if (!on_simplex(fr.cache.gate.weights)) ++audit_.simplex_violations;
}

void OnlineEngine::adapt_step(Index t) {
    const Index anchor = t - cfg_.horizon;
    if (anchor < online_start_) return;
    view_.advance_to(t);
    const auto fr = forward_pass(view_, anchor, state_, cfg_, spec_);
    check_forward(fr, anchor);
    const double gamma = gamma_for(safety_.danger); // d_{t-1}
    const Matrix weights = blend_rows(fr.cache.gate.weights, gamma);
    const Matrix y_hat = combine(fr.cache.predictions, weights);
    const Matrix truth = view_.horizon(anchor, cfg_.horizon);
    const double loss = mse(y_hat, truth);
    state_ = backward_and_update(mse_gradient(y_hat, truth), fr.cache, gamma, std::move(state_),
                                 cfg_.stop_specialized);
    safety_ = observe(safety_, loss);
    last_adapt_mse_ = loss;
}

StepRecord OnlineEngine::predict_step(Index t) {
    view_.advance_to(t);
    auto fr = forward_pass(view_, t, state_, cfg_, spec_);
    check_forward(fr, t);
    const double gamma = gamma_for(safety_.danger); // d_t
    const Matrix weights = blend_rows(fr.cache.gate.weights, gamma);
    StepRecord rec;
    rec.t = t;
    rec.y_hat = combine(fr.cache.predictions, weights);
    rec.periods = fr.slot_periods;
    rec.gate_weights = fr.cache.gate.weights.colwise().mean().transpose();
    rec.weights = weights.colwise().mean().transpose();
    rec.danger = safety_.danger;
    rec.gamma = gamma;
    rec.mse_ewma = safety_.mse_ewma;
    rec.adapt_mse = last_adapt_mse_;
    if (cfg_.record_experts) {
        for (std::size_t i = 0; i < fr.cache.predictions.size(); ++i) {
            if (fr.cache.active[i]) rec.per_expert.push_back({fr.cache.predictions[i], static_cast<int>(i)});
        }
    }
    ++audit_.steps;
    if (!on_simplex(weights)) ++audit_.simplex_violations;
    if (!within_hull(fr.cache.predictions, fr.cache.active, rec.y_hat)) ++audit_.convexity_violations;
    return rec;
}

const StepRecord& OnlineEngine::step(Index t) {
    last_adapt_mse_.reset();
    adapt_step(t);
    const Index done = t - cfg_.horizon;
    if (done >= online_start_) {
        auto& rec = records_.at(static_cast<std::size_t>(done - online_start_));
        const Matrix truth = view_.horizon(done, cfg_.horizon);
        rec.realized_mse = mse(rec.y_hat, truth);
        rec.realized_mae = (rec.y_hat - truth).cwiseAbs().mean();
    }
    records_.push_back(predict_step(t));
    return records_.back();
}

InvariantAudit OnlineEngine::audit() const {
    InvariantAudit a = audit_;
    a.causality_violations = view_.audit().violations;
    a.reads = view_.audit().reads;
    return a;
}

OnlineRange online_range(const SeriesStore& store, const EngineConfig& cfg) {
    const auto& split = store.split();
    OnlineRange r{split.val_end, store.length() - 1 - cfg.horizon};
    if (split.pretrain_end >= split.val_end || r.first < cfg.lookback - 1 || r.last < r.first) {
        fail(Errc::ConfigError, "series of length " + std::to_string(store.length()) +
                                    " is too short for the pretrain/online protocol with L=" +
                                    std::to_string(cfg.lookback) + ", H=" + std::to_string(cfg.horizon));
    }
    return r;
}

ModelState pretrain(const SeriesStore& normalized, const EngineConfig& cfg, const AblationSpec& spec, Method method,
                    PretrainReport* report) {
    cfg.validate();
    ModelState state = ModelState::initialize(cfg.dims(spec.gate), cfg.learning_rate, cfg.seed);
    if (method == Method::weekly_lr || method == Method::recency_lr) return state;

    const auto& split = normalized.split();
    const Index h = cfg.horizon;
    const Index first_train = cfg.lookback - 1;
    const Index last_train = split.pretrain_end - 1 - h;
    const Index first_val = std::max(split.pretrain_end - 1, cfg.lookback - 1);
    const Index last_val = split.val_end - 1 - h;
    const bool head_only = is_head_only(method);
    StreamView view(normalized, 0);

    auto gamma_for = [&](double danger) {
        if (cfg.force_gamma_one) return 1.0;
        if (!spec.use_danger) return spec.keep_beta_without_danger ? blend_factor(0.0, cfg.safety.beta) : 0.0;
        return blend_factor(danger, cfg.safety.beta);
    };

    auto validate = [&](const ModelState& s) {
        double total = 0.0;
        Index count = 0;
        for (Index a = first_val; a <= last_val; ++a) {
            view.advance_to(a + h);
            const Matrix truth = view.horizon(a, h);
            Matrix y_hat;
            if (head_only) {
                y_hat = gd_forecast(view, a, s);
            } else {
                const auto fr = forward_pass(view, a, s, cfg, spec);
                y_hat = combine(fr.cache.predictions, blend_rows(fr.cache.gate.weights, gamma_for(0.0)));
            }
            total += mse(y_hat, truth);
            ++count;
        }
        return count > 0 ? total / static_cast<double>(count) : 0.0;
    };

    PretrainReport rep;
    const bool early_stop = last_val >= first_val;
    ModelState best = state;
    double best_val = early_stop ? validate(state) : 0.0;
    rep.validation_curve.push_back(best_val);
    int stale = 0;
    for (int epoch = 1; epoch <= cfg.pretrain_epochs && last_train >= first_train; ++epoch) {
        SafetyState safety{cfg.safety};
        for (Index a = first_train; a <= last_train; ++a) {
            view.advance_to(a + h);
            if (head_only) {
                gd_update(view, a, state);
                continue;
            }
            const auto fr = forward_pass(view, a, state, cfg, spec);
            const double gamma = gamma_for(safety.danger);
            const Matrix y_hat = combine(fr.cache.predictions, blend_rows(fr.cache.gate.weights, gamma));
            const Matrix truth = view.horizon(a, h);
            const double loss = mse(y_hat, truth);
            state = backward_and_update(mse_gradient(y_hat, truth), fr.cache, gamma, std::move(state),
                                        cfg.stop_specialized);
            safety = observe(safety, loss);
        }
        rep.epochs_run = epoch;
        if (!early_stop) {
            best = state;
            continue;
        }
        const double val = validate(state);
        rep.validation_curve.push_back(val);
        if (val < best_val) {
            best_val = val;
            best = state;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    rep.best_validation_mse = best_val;
    if (report) *report = std::move(rep);
    return best;
}

RunSummary summarize(const std::vector<StepRecord>& records, std::string method, Index horizon, double seconds,
                     const InvariantAudit& audit) {
    RunSummary s;
    s.method = std::move(method);
    s.horizon = horizon;
    s.steps = static_cast<Index>(records.size());
    s.audit = audit;
    double total = 0.0;
    double abs_total = 0.0;
    for (const auto& r : records) {
        if (!r.realized_mse) continue;
        total += *r.realized_mse;
        abs_total += r.realized_mae.value_or(0.0);
        ++s.evaluated;
    }
    s.mse = s.evaluated > 0 ? total / static_cast<double>(s.evaluated) : 0.0;
    s.mae = s.evaluated > 0 ? abs_total / static_cast<double>(s.evaluated) : 0.0;
    s.seconds_per_step = s.steps > 0 ? seconds / static_cast<double>(s.steps) : 0.0;
    return s;
}

RunResult replay_online(const SeriesStore& normalized, const EngineConfig& cfg, Method method,
                        const AblationSpec& spec, const ModelState& pretrained) {
    cfg.validate();
    const auto range = online_range(normalized, cfg);
    switch (method) {
    case Method::gd:
    case Method::frozen:
        return run_gd(normalized, cfg, pretrained, range, method == Method::gd);
    case Method::weekly_lr:
    case Method::recency_lr:
        return run_lr_baseline(normalized, cfg, range, method);
    case Method::dyname:
        break;
    }
    const auto start = std::chrono::steady_clock::now();
    OnlineEngine engine(normalized, cfg, spec, pretrained, range.first);
    for (Index t = range.first; t <= range.last; ++t) engine.step(t);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    RunResult out;
    out.records = engine.records();
    out.summary = summarize(out.records, std::string(to_string(method)), cfg.horizon, seconds, engine.audit());
    out.final_model = engine.model();
    return out;
}

RunResult run_online(const SeriesStore& raw, const EngineConfig& cfg, Method method, const AblationSpec& spec) {
    cfg.validate();
    online_range(raw, cfg);
    const auto normalized = Normalizer::fit(raw).apply(raw);
    const auto model = pretrain(normalized, cfg, spec, method);
    return replay_online(normalized, cfg, method, spec, model);
}

} // namespace dyname
