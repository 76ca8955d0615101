#include "dyname/baselines.hpp"
#include "dyname/config.hpp"
#include "dyname/error.hpp"
#include "dyname/periods.hpp"
#include "dyname/report.hpp"
#include "dyname/synth.hpp"

#include "CLI11.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

namespace fs = std::filesystem;
using namespace dyname;

namespace {

struct EngineFlags {
    std::optional<std::string> config;
    std::optional<std::string> data;
    std::optional<std::string> method;
    std::optional<std::string> out;
    std::optional<Index> horizon, lookback, samples, buffer, features;
    std::optional<int> experts, epochs;
    std::optional<double> beta, alpha, delta, lr, lambda;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> gate;
    bool no_danger = false;
    bool zero_beta = false;
    std::vector<Index> fixed_periods;
    bool primal = false;
    bool gamma_one = false;
};

void add_engine_flags(CLI::App* app, EngineFlags& f) {
    app->add_option("--config", f.config, "TOML run file");
    app->add_option("--data", f.data, "CSV file (or directory for compare)");
    app->add_option("--out", f.out, "output directory");
    app->add_option("--horizon", f.horizon, "forecast horizon H");
    app->add_option("--lookback", f.lookback, "lookback L");
    app->add_option("--experts,-k", f.experts, "specialised experts k");
    app->add_option("--samples,-n", f.samples, "samples per expert n");
    app->add_option("--buffer,-M", f.buffer, "history buffer M");
    app->add_option("--features", f.features, "backbone width D");
    app->add_option("--beta", f.beta, "minimum blend beta");
    app->add_option("--alpha", f.alpha, "EWMA smoothing alpha");
    app->add_option("--delta", f.delta, "danger sensitivity delta");
    app->add_option("--lr", f.lr, "learning rate");
    app->add_option("--lambda", f.lambda, "ridge lambda");
    app->add_option("--epochs", f.epochs, "pretraining epochs");
    app->add_option("--seed", f.seed, "random seed");
    app->add_option("--gate", f.gate, "dynamic | simple_average | learnable | detached");
    app->add_flag("--no-danger", f.no_danger, "disable the danger signal");
    app->add_flag("--zero-beta", f.zero_beta, "with --no-danger, drop the static blend too");
    app->add_option("--fixed-periods", f.fixed_periods, "use these periods instead of FFT selection");
    app->add_flag("--primal", f.primal, "solve ridge in primal form");
    app->add_flag("--gamma-one", f.gamma_one, "force gamma = 1 at every step");
}

/// Defaults, then the TOML file, then explicit flags.
FileConfig resolve(const EngineFlags& f) {
    FileConfig fc = f.config ? load_config(*f.config) : FileConfig{};
    EngineConfig& c = fc.engine;
    if (f.horizon) c.horizon = *f.horizon;
    if (f.lookback) c.lookback = *f.lookback;
    if (f.experts) c.experts = *f.experts;
    if (f.samples) c.samples = *f.samples;
    if (f.buffer) c.buffer = *f.buffer;
    if (f.features) c.features = *f.features;
    if (f.beta) c.safety.beta = *f.beta;
    if (f.alpha) c.safety.alpha = *f.alpha;
    if (f.delta) c.safety.delta = *f.delta;
    if (f.lr) c.learning_rate = *f.lr;
    if (f.lambda) c.lambda = *f.lambda;
    if (f.epochs) c.pretrain_epochs = *f.epochs;
    if (f.seed) c.seed = *f.seed;
    if (f.primal) c.ridge_form = RidgeForm::primal;
    if (f.gamma_one) c.force_gamma_one = true;
    AblationSpec& a = fc.ablation;
    if (f.gate) a.gate = parse_gate_variant(*f.gate);
    if (f.no_danger) a.use_danger = false;
    if (f.zero_beta) a.keep_beta_without_danger = false;
    if (!f.fixed_periods.empty()) {
        a.period_mode = PeriodMode::fixed;
        a.fixed_periods = f.fixed_periods;
    }
    if (f.data) fc.data = *f.data;
    if (f.method) fc.method = *f.method;
    if (f.out) fc.out = *f.out;
    return fc;
}

std::string require_data(const FileConfig& fc) {
    if (!fc.data) throw Error(Errc::ConfigError, "--data is required");
    return *fc.data;
}

unsigned worker_count(std::size_t jobs) {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("DYNAME_THREADS")) {
        try {
            const long cap = std::stol(env);
            if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
        } catch (const std::exception&) {
            throw Error(Errc::ConfigError, "DYNAME_THREADS must be a positive integer");
        }
    }
    return std::max(1u, std::min<unsigned>(n, static_cast<unsigned>(jobs)));
}

/// Runs jobs on a small pool; each job owns its slot of the result vector.
template <typename Job>
void run_parallel(std::size_t count, Job job) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                job(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const unsigned n = worker_count(count);
    for (unsigned i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

void write_run_outputs(const fs::path& dir, const RunResult& res, const RunManifest& manifest) {
    fs::create_directories(dir);
    write_json(dir / "summary.json", summary_json(res.summary, manifest));
    write_json(dir / "timing.json", timing_json(res.summary));
    write_steps_csv(dir / "steps.csv", res.records);
    if (res.final_model) save_checkpoint(dir / "model.json", *res.final_model);
}

int cmd_run(const EngineFlags& flags) {
    const FileConfig fc = resolve(flags);
    const std::string data = require_data(fc);
    const Method method = parse_method(fc.method.value_or("dyname"));
    const SeriesStore raw = load_csv(data);
    const RunResult res = run_online(raw, fc.engine, method, fc.ablation);
    RunManifest manifest{data, method, fc.ablation, fc.engine, fc.out.value_or("runs")};
    const fs::path dir = manifest.output_dir / (std::string(to_string(method)) + "-" + manifest.config_hash());
    write_run_outputs(dir, res, manifest);
    std::cout << summary_json(res.summary, manifest).dump(2) << '\n' << "outputs: " << dir.string() << '\n';
    return res.summary.audit.clean() ? 0 : 1;
}

std::vector<fs::path> data_files(const std::string& data) {
    std::vector<fs::path> files;
    if (fs::is_directory(data)) {
        for (const auto& e : fs::directory_iterator(data)) {
            if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw Error(Errc::ConfigError, "no CSV files in " + data);
    } else {
        files.emplace_back(data);
    }
    return files;
}

int cmd_compare(const EngineFlags& flags, std::vector<std::string> methods, std::vector<Index> horizons) {
    const FileConfig fc = resolve(flags);
    const auto files = data_files(require_data(fc));
    if (methods.empty()) methods = fc.methods;
    if (methods.empty()) methods = {"dyname", "gd", "frozen"};
    if (horizons.empty()) horizons = fc.horizons;
    if (horizons.empty()) horizons = {fc.engine.horizon};
    for (const auto& m : methods) parse_method(m);

    struct Job {
        fs::path file;
        Method method;
        Index horizon;
        RunSummary summary;
    };
    std::vector<Job> jobs;
    for (const auto& f : files)
        for (Index h : horizons)
            for (const auto& m : methods) jobs.push_back({f, parse_method(m), h, {}});

    run_parallel(jobs.size(), [&](std::size_t i) {
        Job& job = jobs[i];
        EngineConfig cfg = fc.engine;
        cfg.horizon = job.horizon;
        job.summary = run_online(load_csv(job.file), cfg, job.method, fc.ablation).summary;
    });

    const fs::path out_dir = fc.out.value_or("runs");
    fs::create_directories(out_dir);
    std::ofstream csv(out_dir / "compare.csv");
    csv << std::setprecision(10) << "dataset,method,horizon,mse,mae,steps\n";
    for (const auto& j : jobs) {
        csv << j.file.stem().string() << ',' << j.summary.method << ',' << j.horizon << ',' << j.summary.mse << ','
            << j.summary.mae << ',' << j.summary.steps << '\n';
        std::cout << j.file.stem().string() << "  " << j.summary.method << "  H=" << j.horizon
                  << "  mse=" << j.summary.mse << "  mae=" << j.summary.mae << '\n';
    }
    std::cout << "wrote " << (out_dir / "compare.csv").string() << '\n';
    return 0;
}

int cmd_ablate(const EngineFlags& flags) {
    const FileConfig fc = resolve(flags);
    const std::string data = require_data(fc);
    const SeriesStore raw = load_csv(data);

    struct Job {
        std::string table;
        AblationSpec spec;
        RunSummary summary;
    };
    std::vector<Job> jobs;
    for (GateVariant g : {GateVariant::dynamic, GateVariant::simple_average, GateVariant::learnable,
                          GateVariant::detached}) {
        AblationSpec s;
        s.gate = g;
        jobs.push_back({"gate", s, {}});
    }
    {
        AblationSpec s;
        s.use_danger = false;
        s.keep_beta_without_danger = fc.ablation.keep_beta_without_danger;
        jobs.push_back({"danger", s, {}});
    }
    {
        AblationSpec s;
        s.period_mode = PeriodMode::fixed;
        s.fixed_periods = fc.ablation.period_mode == PeriodMode::fixed ? fc.ablation.fixed_periods
                                                                       : std::vector<Index>{168, 24};
        jobs.push_back({"periods", s, {}});
    }
    run_parallel(jobs.size(), [&](std::size_t i) { jobs[i].summary = run_ablation(raw, fc.engine, jobs[i].spec).summary; });

    const fs::path out_dir = fc.out.value_or("runs");
    fs::create_directories(out_dir);
    std::ofstream csv(out_dir / "ablation.csv");
    csv << std::setprecision(10) << "axis,variant,mse,mae\n";
    for (const auto& j : jobs) {
        // the full model (first job) is the reference row of every axis
        csv << j.table << ",\"" << j.spec.label() << "\"," << j.summary.mse << ',' << j.summary.mae << '\n';
        std::cout << j.spec.label() << "  mse=" << j.summary.mse << "  mae=" << j.summary.mae << '\n';
    }
    std::cout << "wrote " << (out_dir / "ablation.csv").string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online forecasting with dynamic mixtures of periodic experts"};
    app.require_subcommand(1);

    EngineFlags run_flags, compare_flags, ablate_flags;
    auto* run = app.add_subcommand("run", "run one method over a CSV");
    add_engine_flags(run, run_flags);
    run->add_option("--method", run_flags.method, "dyname | gd | frozen | weekly_lr | recency_lr");

    auto* compare = app.add_subcommand("compare", "method x horizon grid");
    add_engine_flags(compare, compare_flags);
    std::vector<std::string> methods;
    std::vector<Index> horizons;
    compare->add_option("--methods", methods, "methods to compare");
    compare->add_option("--horizons", horizons, "horizons to sweep");

    auto* ablate = app.add_subcommand("ablate", "gate, danger and period ablations");
    add_engine_flags(ablate, ablate_flags);

    auto* bench = app.add_subcommand("bench", "primal versus dual ridge timing");
    Index bn = 8, bd = 512, bh = 24;
    int trials = 100, warmup = 10;
    std::optional<std::string> bench_out;
    bench->add_option("--n", bn, "samples");
    bench->add_option("--d", bd, "feature width");
    bench->add_option("--horizon", bh, "targets per sample");
    bench->add_option("--trials", trials, "timed trials (>= 100)");
    bench->add_option("--warmup", warmup, "discarded warmup trials");
    bench->add_option("--out", bench_out, "JSON output file");

    auto* acf_cmd = app.add_subcommand("acf", "autocorrelation export");
    std::string acf_data, acf_out = "acf.csv";
    Index channel = 0, max_lag = 400, window = 0, stride = 24;
    acf_cmd->add_option("--data", acf_data, "CSV file")->required();
    acf_cmd->add_option("--channel", channel, "channel index");
    acf_cmd->add_option("--max-lag", max_lag, "largest lag");
    acf_cmd->add_option("--window", window, "rolling window (0 = whole series)");
    acf_cmd->add_option("--stride", stride, "rolling stride");
    acf_cmd->add_option("--out", acf_out, "output CSV");

    auto* synth = app.add_subcommand("synth", "generate a synthetic drift stream");
    std::string preset = "two-period", synth_out = "synthetic.csv";
    std::optional<std::string> synth_config;
    std::optional<Index> synth_length;
    std::uint64_t synth_seed = 0;
    synth->add_option("--preset", preset, "preset name");
    synth->add_option("--config", synth_config, "TOML scenario file");
    synth->add_option("--length", synth_length, "stream length");
    synth->add_option("--seed", synth_seed, "seed");
    synth->add_option("--out", synth_out, "output CSV");

    auto* plot = app.add_subcommand("plot", "SVG plots from step CSVs");
    std::vector<std::string> step_args;
    std::string plot_acf, plot_out = "plots";
    plot->add_option("--steps", step_args, "label=steps.csv (repeatable)");
    plot->add_option("--acf", plot_acf, "ACF CSV");
    plot->add_option("--out", plot_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*run) return cmd_run(run_flags);
        if (*compare) return cmd_compare(compare_flags, methods, horizons);
        if (*ablate) return cmd_ablate(ablate_flags);
        if (*bench) {
            const BenchResult b = bench_ridge(bn, bd, bh, trials, warmup);
            const auto j = to_json(b);
            std::cout << j.dump(2) << '\n';
            if (bench_out) write_json(*bench_out, j);
            return 0;
        }
        if (*acf_cmd) {
            const SeriesStore store = load_csv(acf_data);
            if (channel < 0 || channel >= store.channels()) throw Error(Errc::ConfigError, "channel out of range");
            std::vector<double> series(store.values().col(channel).data(),
                                       store.values().col(channel).data() + store.length());
            std::vector<Index> lags;
            for (Index l = 1; l <= max_lag; ++l) lags.push_back(l);
            if (window > 0) {
                write_rolling_acf_csv(acf_out, lags, rolling_acf(series, lags, window, stride));
            } else {
                write_acf_csv(acf_out, lags, acf(series, lags));
            }
            std::cout << "wrote " << acf_out << '\n';
            return 0;
        }
        if (*synth) {
            SynthSpec spec;
            if (synth_config) {
                std::ifstream in(*synth_config);
                if (!in) throw Error(Errc::ConfigError, "cannot open " + *synth_config);
                std::stringstream buf;
                buf << in.rdbuf();
                spec = parse_synth_spec(buf.str());
            } else {
                spec = synth_preset(preset, synth_seed);
            }
            if (synth_length) spec.length = *synth_length;
            const SynthStream stream = synth_stream(spec);
            const auto sidecar = write_synth(synth_out, stream, spec);
            std::cout << "wrote " << synth_out << " and " << sidecar.string() << '\n';
            return 0;
        }
        if (*plot) {
            std::vector<std::pair<std::string, fs::path>> inputs;
            for (const auto& arg : step_args) {
                const auto eq = arg.find('=');
                if (eq == std::string::npos) {
                    inputs.emplace_back(fs::path(arg).parent_path().filename().string(), arg);
                } else {
                    inputs.emplace_back(arg.substr(0, eq), arg.substr(eq + 1));
                }
            }
            for (const auto& p : emit_plots(inputs, plot_out, plot_acf)) std::cout << "wrote " << p.string() << '\n';
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
        return e.code() == Errc::ConfigError ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
