#pragma once

#include "dyname/backbone.hpp"
#include "dyname/periods.hpp"
#include "dyname/ridge.hpp"
#include "dyname/safety.hpp"
#include "dyname/series.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dyname {

enum class PeriodMode { dynamic_fft, fixed };

/// One value per ablation axis; the default is the full model.
struct AblationSpec {
    GateVariant gate = GateVariant::dynamic;
    bool use_danger = true;
    /// With use_danger off, keep the static beta blend (gamma = beta) rather than gamma = 0.
    bool keep_beta_without_danger = true;
    PeriodMode period_mode = PeriodMode::dynamic_fft;
    std::vector<Index> fixed_periods{168, 24};

    [[nodiscard]] std::string label() const;
};

struct EngineConfig {
    Index lookback = 96;
    Index horizon = 24;
    Index buffer = 336;
    int experts = 3;
    Index samples = 8;
    Index features = 64;
    double lambda = 1e-4;
    SafetyParams safety;
    double learning_rate = 3e-3;
    std::uint64_t seed = 0;
    int pretrain_epochs = 5;
    int patience = 2;
    /// gamma = 1 at every step: the blend collapses onto the general expert.
    bool force_gamma_one = false;
    bool stop_specialized = true;
    RidgeForm ridge_form = RidgeForm::dual;
    /// When every specialised expert drops out, continue with f_0 alone.
    bool allow_fallback = true;
    bool record_experts = false;

    void validate() const;
    [[nodiscard]] ModelDims dims(GateVariant gate) const;
};

enum class Method { dyname, gd, frozen, weekly_lr, recency_lr };

std::string_view to_string(Method m) noexcept;
Method parse_method(std::string_view name);

struct ForwardResult {
    ForwardCache cache;
    std::vector<Index> slot_periods; // k+1, 0 where the slot is empty
};

/// Period identification, batch construction, features, general and
/// specialised forecasts and gate weights at anchor t. Reads only rows <= t.
ForwardResult forward_pass(const StreamView& view, Index t, const ModelState& state, const EngineConfig& cfg,
                           const AblationSpec& spec);

struct StepRecord {
    Index t = 0;
    Matrix y_hat;                          // H x C
    std::vector<ExpertPrediction> per_expert; // filled when cfg.record_experts
    std::vector<Index> periods;            // per slot
    Vector gate_weights;                   // channel mean of omega_tilde
    Vector weights;                        // channel mean of omega
    double danger = 0.0;
    double gamma = 0.0;
    double mse_ewma = 0.0;
    std::optional<double> adapt_mse;       // MSE_t of the adaptation step at t
    std::optional<double> realized_mse;    // MSE of y_hat, known at t + H
    std::optional<double> realized_mae;
};

struct InvariantAudit {
    std::size_t steps = 0;
    std::size_t simplex_violations = 0;
    std::size_t convexity_violations = 0;
    std::size_t leakage_violations = 0;   // batch anchor + H > t
    std::size_t causality_violations = 0; // reads beyond the clock
    std::size_t reads = 0;

    [[nodiscard]] bool clean() const noexcept {
        return simplex_violations == 0 && convexity_violations == 0 && leakage_violations == 0 &&
               causality_violations == 0;
    }
};

struct RunSummary {
    std::string method;
    Index horizon = 0;
    double mse = 0.0;
    double mae = 0.0;
    Index steps = 0;
    Index evaluated = 0;
    double seconds_per_step = 0.0;
    InvariantAudit audit;
};

struct RunResult {
    std::vector<StepRecord> records;
    RunSummary summary;
    std::optional<ModelState> final_model; // absent for the regression baselines
};

/// Online adaptation and prediction over a normalized store. Each call to
/// step(t) adapts on the prediction made at t-H (whose target has just
/// completed) and then forecasts from t.
class OnlineEngine {
public:
    OnlineEngine(const SeriesStore& normalized, EngineConfig cfg, AblationSpec spec, ModelState state,
                 Index online_start);

    /// No-op during the first H online steps.
    void adapt_step(Index t);
    StepRecord predict_step(Index t);

    /// adapt_step, completion of the record made at t-H, predict_step.
    const StepRecord& step(Index t);

    [[nodiscard]] const ModelState& model() const noexcept { return state_; }
    [[nodiscard]] const SafetyState& safety() const noexcept { return safety_; }
    [[nodiscard]] const std::vector<StepRecord>& records() const noexcept { return records_; }
    [[nodiscard]] InvariantAudit audit() const;
    [[nodiscard]] StreamView& view() noexcept { return view_; }

private:
    double gamma_for(double danger) const;
    void check_forward(const ForwardResult& fr, Index t);

    const SeriesStore* store_;
    EngineConfig cfg_;
    AblationSpec spec_;
    ModelState state_;
    SafetyState safety_;
    StreamView view_;
    Index online_start_;
    std::vector<StepRecord> records_;
    InvariantAudit audit_;
    std::optional<double> last_adapt_mse_;
};

/// Online index range [first, last] for a store.
struct OnlineRange {
    Index first = 0;
    Index last = 0;
};
OnlineRange online_range(const SeriesStore& store, const EngineConfig& cfg);

struct PretrainReport {
    int epochs_run = 0;
    double best_validation_mse = 0.0;
    std::vector<double> validation_curve; // entry 0 is before any training
};

/// Sequential replay over the pretrain rows, early-stopped on validation MSE.
ModelState pretrain(const SeriesStore& normalized, const EngineConfig& cfg, const AblationSpec& spec, Method method,
                    PretrainReport* report = nullptr);

/// Replay the online split of a normalized store from a given model.
RunResult replay_online(const SeriesStore& normalized, const EngineConfig& cfg, Method method,
                        const AblationSpec& spec, const ModelState& pretrained);

/// Normalize on the pretrain rows, pretrain, then replay online. Summary
/// errors are in normalized units.
RunResult run_online(const SeriesStore& raw, const EngineConfig& cfg, Method method,
                     const AblationSpec& spec = {});

/// Fill in summary statistics from completed records.
RunSummary summarize(const std::vector<StepRecord>& records, std::string method, Index horizon,
                     double seconds, const InvariantAudit& audit);

} // namespace dyname
