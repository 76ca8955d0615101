#include "dyname/report.hpp"

#include "dyname/error.hpp"
#include "dyname/ridge.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace dyname {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) fail(Errc::IoError, "cannot write " + path.string());
    out << std::setprecision(17);
    return out;
}

void put_optional(std::ostream& out, const std::optional<double>& v) {
    out << ',';
    if (v) out << *v;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

void write_steps_csv(const std::filesystem::path& path, const std::vector<StepRecord>& records) {
    Index slots = 0;
    for (const auto& r : records) slots = std::max(slots, r.weights.size());
    auto out = open_out(path);
    out << "t,mse,mae,d,gamma,mu";
    for (Index i = 0; i < slots; ++i) out << ",w" << i;
    out << '\n';
    for (const auto& r : records) {
        out << r.t;
        put_optional(out, r.realized_mse);
        put_optional(out, r.realized_mae);
        out << ',' << r.danger << ',' << r.gamma << ',' << r.mse_ewma;
        for (Index i = 0; i < slots; ++i) {
            out << ',';
            if (i < r.weights.size()) out << r.weights(i);
        }
        out << '\n';
    }
}

nlohmann::json summary_json(const RunSummary& summary, const RunManifest& manifest) {
    const auto& a = summary.audit;
    return nlohmann::json{
        {"schema_version", kSummarySchemaVersion},
        {"config_hash", manifest.config_hash()},
        {"dataset", manifest.dataset},
        {"manifest", manifest.identity()},
        {"method", summary.method},
        {"horizon", summary.horizon},
        {"mse", summary.mse},
        {"mae", summary.mae},
        {"steps", summary.steps},
        {"evaluated", summary.evaluated},
        {"audit",
         {{"steps", a.steps},
          {"simplex_violations", a.simplex_violations},
          {"convexity_violations", a.convexity_violations},
          {"leakage_violations", a.leakage_violations},
          {"causality_violations", a.causality_violations},
          {"reads", a.reads}}},
    };
}

nlohmann::json timing_json(const RunSummary& summary) {
    return nlohmann::json{{"method", summary.method}, {"steps", summary.steps},
                          {"wall_clock_per_step", summary.seconds_per_step}};
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

bool StepTable::has(const std::string& name) const {
    return std::find(columns.begin(), columns.end(), name) != columns.end();
}

const std::vector<double>& StepTable::column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) fail(Errc::MissingColumn, "column '" + name + "' not present");
    return values[static_cast<std::size_t>(it - columns.begin())];
}

StepTable read_step_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::IoError, "cannot open " + path.string());
    StepTable table;
    std::string line;
    if (!std::getline(in, line) || line.empty()) fail(Errc::MissingColumn, path.string() + " has no header row");
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) table.columns.push_back(cell);
    }
    table.values.assign(table.columns.size(), {});
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const auto pos = line.find(',', start);
            cells.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        if (cells.size() != table.columns.size()) {
            fail(Errc::MalformedRow, path.string() + " row " + std::to_string(row) + " has the wrong cell count");
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            double v = std::numeric_limits<double>::quiet_NaN();
            if (!cells[c].empty()) {
                try {
                    v = std::stod(cells[c]);
                } catch (const std::exception&) {
                    fail(Errc::MalformedRow, path.string() + " row " + std::to_string(row) + " is not numeric");
                }
            }
            table.values[c].push_back(v);
        }
    }
    return table;
}

std::vector<std::pair<double, double>> polyline_coordinates(const Series2D& s, double x_min, double x_max,
                                                            double y_min, double y_max, const PlotBox& box) {
    const double xr = x_max > x_min ? x_max - x_min : 1.0;
    const double yr = y_max > y_min ? y_max - y_min : 1.0;
    const double w = box.width - 2 * box.margin;
    const double h = box.height - 2 * box.margin;
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        pts.emplace_back(box.margin + (s.x[i] - x_min) / xr * w, box.height - box.margin - (s.y[i] - y_min) / yr * h);
    }
    return pts;
}

std::string svg_line_chart(const std::string& title, const std::vector<Series2D>& series, const PlotBox& box) {
    double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
    double y_min = x_min, y_max = -x_min;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x_min = std::min(x_min, s.x[i]);
            x_max = std::max(x_max, s.x[i]);
            y_min = std::min(y_min, s.y[i]);
            y_max = std::max(y_max, s.y[i]);
        }
    }
    if (!std::isfinite(x_min)) x_min = x_max = y_min = y_max = 0.0;

    std::ostringstream svg;
    svg << std::setprecision(6);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << box.width << "\" height=\"" << box.height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << box.margin << "\" y=\"" << box.margin / 2 << "\" font-size=\"14\">" << escape_xml(title)
        << "</text>\n";
    svg << "<rect x=\"" << box.margin << "\" y=\"" << box.margin << "\" width=\"" << box.width - 2 * box.margin
        << "\" height=\"" << box.height - 2 * box.margin << "\" fill=\"none\" stroke=\"#999\"/>\n";
    svg << "<text x=\"2\" y=\"" << box.margin + 10 << "\" font-size=\"10\">" << y_max << "</text>\n";
    svg << "<text x=\"2\" y=\"" << box.height - box.margin << "\" font-size=\"10\">" << y_min << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* color = kPalette[k % std::size(kPalette)];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"";
        for (const auto& [px, py] : polyline_coordinates(series[k], x_min, x_max, y_min, y_max, box)) {
            svg << px << ',' << py << ' ';
        }
        svg << "\"/>\n";
        svg << "<text x=\"" << box.width - box.margin - 150 << "\" y=\"" << box.margin + 14 * (k + 1)
            << "\" font-size=\"11\" fill=\"" << color << "\">" << escape_xml(series[k].label) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::string svg_bar_chart(const std::string& title, const std::vector<double>& labels, const std::vector<double>& values,
                          const PlotBox& box) {
    double y_min = 0.0, y_max = 0.0;
    for (double v : values) {
        y_min = std::min(y_min, v);
        y_max = std::max(y_max, v);
    }
    const double yr = y_max > y_min ? y_max - y_min : 1.0;
    const double w = box.width - 2 * box.margin;
    const double h = box.height - 2 * box.margin;
    const double bar = values.empty() ? 0.0 : w / static_cast<double>(values.size());
    const double zero_y = box.height - box.margin - (0.0 - y_min) / yr * h;

    std::ostringstream svg;
    svg << std::setprecision(6);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << box.width << "\" height=\"" << box.height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << box.margin << "\" y=\"" << box.margin / 2 << "\" font-size=\"14\">" << escape_xml(title)
        << "</text>\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double top = box.height - box.margin - (values[i] - y_min) / yr * h;
        svg << "<rect x=\"" << box.margin + bar * static_cast<double>(i) << "\" y=\"" << std::min(top, zero_y)
            << "\" width=\"" << std::max(bar * 0.8, 0.5) << "\" height=\"" << std::abs(zero_y - top)
            << "\" fill=\"#1f77b4\"><title>lag " << (i < labels.size() ? labels[i] : 0.0) << ": " << values[i]
            << "</title></rect>\n";
    }
    svg << "<line x1=\"" << box.margin << "\" y1=\"" << zero_y << "\" x2=\"" << box.width - box.margin << "\" y2=\""
        << zero_y << "\" stroke=\"#333\"/>\n";
    svg << "</svg>\n";
    return svg.str();
}

std::vector<std::filesystem::path> emit_plots(const std::vector<std::pair<std::string, std::filesystem::path>>& step_csvs,
                                              const std::filesystem::path& out_dir,
                                              const std::filesystem::path& acf_csv) {
    std::filesystem::create_directories(out_dir);
    std::vector<Series2D> mse_lines, danger_lines, omega_lines;
    for (const auto& [label, path] : step_csvs) {
        const StepTable table = read_step_table(path);
        const auto& t = table.column("t");
        mse_lines.push_back({label, t, table.column("mse")});
        danger_lines.push_back({label, t, table.column("d")});
        if (table.has("w0")) omega_lines.push_back({label, t, table.column("w0")});
    }
    std::vector<std::filesystem::path> written;
    auto emit = [&](const std::string& name, const std::string& svg) {
        const auto path = out_dir / name;
        std::ofstream out(path);
        if (!out) fail(Errc::IoError, "cannot write " + path.string());
        out << svg;
        written.push_back(path);
    };
    if (!step_csvs.empty()) {
        emit("mse.svg", svg_line_chart("per-step MSE", mse_lines));
        emit("danger.svg", svg_line_chart("danger signal d_t", danger_lines));
        if (!omega_lines.empty()) emit("omega0.svg", svg_line_chart("general expert weight w0", omega_lines));
    }
    if (!acf_csv.empty()) {
        const StepTable table = read_step_table(acf_csv);
        emit("acf.svg", svg_bar_chart("autocorrelation", table.column("lag"), table.column("value")));
    }
    return written;
}

BenchResult bench_ridge(Index n, Index d, Index h, int trials, int warmup, double lambda, std::uint64_t seed) {
    if (trials < 100) fail(Errc::ConfigError, "bench needs at least 100 trials");
    if (warmup < 0 || n < 1 || d < 1 || h < 1) fail(Errc::ConfigError, "bench sizes must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    auto random_matrix = [&](Index r, Index c) {
        Matrix m(r, c);
        for (Index j = 0; j < c; ++j)
            for (Index i = 0; i < r; ++i) m(i, j) = normal(rng);
        return m;
    };
    BenchResult res{n, d, h, trials, warmup};
    std::vector<double> primal, primal_normal, dual;
    double sink = 0.0;
    for (int i = 0; i < warmup + trials; ++i) {
        const RidgeProblem prob{random_matrix(n, d), random_matrix(n, h), lambda, random_matrix(d, 1).col(0)};
        auto t0 = std::chrono::steady_clock::now();
        sink += solve_primal(prob).sum();
        auto t1 = std::chrono::steady_clock::now();
        sink += solve_dual(prob).sum();
        auto t2 = std::chrono::steady_clock::now();
        sink += solve_primal_normal(prob).sum();
        auto t3 = std::chrono::steady_clock::now();
        if (i >= warmup) {
            primal.push_back(std::chrono::duration<double>(t1 - t0).count());
            dual.push_back(std::chrono::duration<double>(t2 - t1).count());
            primal_normal.push_back(std::chrono::duration<double>(t3 - t2).count());
        }
    }
    if (!std::isfinite(sink)) fail(Errc::NonFiniteInput, "benchmark produced non-finite output");
    res.primal_median = median(primal);
    res.dual_median = median(dual);
    for (double v : primal) res.primal_mean += v / static_cast<double>(trials);
    for (double v : dual) res.dual_mean += v / static_cast<double>(trials);
    res.primal_normal_median = median(primal_normal);
    for (double v : primal_normal) res.primal_normal_mean += v / static_cast<double>(trials);
    return res;
}

nlohmann::json to_json(const BenchResult& b) {
    return nlohmann::json{{"n", b.n},
                          {"d", b.d},
                          {"h", b.h},
                          {"trials", b.trials},
                          {"warmup", b.warmup},
                          {"primal_median_seconds", b.primal_median},
                          {"dual_median_seconds", b.dual_median},
                          {"primal_mean_seconds", b.primal_mean},
                          {"dual_mean_seconds", b.dual_mean},
                          {"primal_normal_median_seconds", b.primal_normal_median},
                          {"primal_normal_mean_seconds", b.primal_normal_mean},
                          {"ratio", b.ratio()}};
}

} // namespace dyname
