#pragma once

#include "dyname/config.hpp"
#include "dyname/engine.hpp"

#include "json.hpp"

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

namespace dyname {

inline constexpr int kSummarySchemaVersion = 1;

/// Columns: t, mse, mae, d, gamma, mu, w0..wk (blank where unknown).
void write_steps_csv(const std::filesystem::path& path, const std::vector<StepRecord>& records);

/// Deterministic given the manifest; wall-clock goes to timing_json instead.
nlohmann::json summary_json(const RunSummary& summary, const RunManifest& manifest);
nlohmann::json timing_json(const RunSummary& summary);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// A step CSV read back by column name.
struct StepTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> values; // per column, NaN where blank

    [[nodiscard]] const std::vector<double>& column(const std::string& name) const;
    [[nodiscard]] bool has(const std::string& name) const;
};
StepTable read_step_table(const std::filesystem::path& path);

struct Series2D {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotBox {
    double width = 800.0;
    double height = 300.0;
    double margin = 40.0;
};

/// Screen coordinates for one series under shared axis ranges (y grows downward).
std::vector<std::pair<double, double>> polyline_coordinates(const Series2D& s, double x_min, double x_max,
                                                            double y_min, double y_max, const PlotBox& box = {});
std::string svg_line_chart(const std::string& title, const std::vector<Series2D>& series, const PlotBox& box = {});
std::string svg_bar_chart(const std::string& title, const std::vector<double>& labels, const std::vector<double>& values,
                          const PlotBox& box = {});

/// Labelled step CSVs to mse.svg, danger.svg and omega0.svg; an optional ACF CSV to acf.svg.
std::vector<std::filesystem::path> emit_plots(const std::vector<std::pair<std::string, std::filesystem::path>>& step_csvs,
                                              const std::filesystem::path& out_dir,
                                              const std::filesystem::path& acf_csv = {});

struct BenchResult {
    Index n = 0;
    Index d = 0;
    Index h = 0;
    int trials = 0;
    int warmup = 0;
    double primal_median = 0.0; // seconds per solve
    double dual_median = 0.0;
    double primal_mean = 0.0;
    double dual_mean = 0.0;
    double primal_normal_median = 0.0; // Cholesky variant of the primal
    double primal_normal_mean = 0.0;
    /// Against the faster of the two primal routes.
    [[nodiscard]] double ratio() const { return std::min(primal_median, primal_normal_median) / dual_median; }
};

/// Times solve_primal, solve_primal_normal and solve_dual on the same random instances.
BenchResult bench_ridge(Index n, Index d, Index h, int trials, int warmup = 10, double lambda = 1e-4,
                        std::uint64_t seed = 0);
nlohmann::json to_json(const BenchResult& b);

} // namespace dyname
