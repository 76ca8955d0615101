#include "dyname/periods.hpp"

#include "dyname/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <memory>

namespace dyname {

namespace {

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

struct PlanDeleter {
    void operator()(fftw_plan_s* p) const noexcept { fftw_destroy_plan(p); }
};

// Ties within this relative band go to the lower frequency index.
constexpr double kTieTolerance = 1e-9;

} // namespace

Vector mean_amplitude_spectrum(const Matrix& history) {
    const Index m = history.rows();
    const Index channels = history.cols();
    if (m < 2 || channels < 1) fail(Errc::OutOfRange, "spectrum needs at least two observations");
    const Index bins = m / 2 + 1;

    std::unique_ptr<double, FftwFree> in(static_cast<double*>(fftw_malloc(sizeof(double) * m * channels)));
    std::unique_ptr<fftw_complex, FftwFree> out(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins * channels)));
    const int n = static_cast<int>(m);
    std::unique_ptr<fftw_plan_s, PlanDeleter> plan(fftw_plan_many_dft_r2c(
        1, &n, static_cast<int>(channels), in.get(), nullptr, 1, static_cast<int>(m), out.get(), nullptr, 1,
        static_cast<int>(bins), FFTW_ESTIMATE));
    // Column-major storage already lays each channel out contiguously.
    std::copy_n(history.data(), m * channels, in.get());
    fftw_execute(plan.get());

    Vector amp = Vector::Zero(bins);
    for (Index c = 0; c < channels; ++c) {
        for (Index i = 0; i < bins; ++i) {
            const auto& v = out.get()[c * bins + i];
            amp(i) += std::hypot(v[0], v[1]);
        }
    }
    return amp / static_cast<double>(channels);
}

PeriodSet top_k_periods(const Matrix& history, int k) {
    const Index m = history.rows();
    if (m < 4) fail(Errc::OutOfRange, "period analysis needs M >= 4");
    if (k < 1) fail(Errc::ConfigError, "k must be at least 1");

    const Vector amp = mean_amplitude_spectrum(history);
    const Index last = m / 2;
    const double scale = history.cwiseAbs().colwise().sum().mean();
    const double peak = amp.segment(1, last).maxCoeff();
    if (!(peak > 1e-10 * scale) || !std::isfinite(peak)) {
        fail(Errc::DegenerateSpectrum, "history buffer has no non-constant component");
    }

    PeriodSet out;
    std::vector<bool> taken(static_cast<std::size_t>(last + 1), false);
    const auto picks = std::min<Index>(k, last);
    for (Index pick = 0; pick < picks; ++pick) {
        Index best = -1;
        for (Index i = 1; i <= last; ++i) {
            if (taken[static_cast<std::size_t>(i)]) continue;
            if (best < 0 || amp(i) > amp(best) * (1.0 + kTieTolerance) + 1e-300) best = i;
        }
        taken[static_cast<std::size_t>(best)] = true;
        out.frequencies.push_back(best);
        out.periods.push_back(m / best);
    }
    std::sort(out.periods.begin(), out.periods.end(), std::greater<>());
    out.periods.erase(std::unique(out.periods.begin(), out.periods.end()), out.periods.end());
    return out;
}

PeriodSet top_k_periods(const HistoryBuffer& history, int k) {
    return top_k_periods(history.chronological(), k);
}

ExpertBatch build_expert_batch(const StreamView& view, Index t, Index period, Index lookback,
                               Index horizon, Index max_samples) {
    if (period < 1 || lookback < 1 || horizon < 1 || max_samples < 1) {
        fail(Errc::ConfigError, "expert batch parameters must be positive");
    }
    std::vector<Index> anchors;
    for (Index j = 1; static_cast<Index>(anchors.size()) < max_samples; ++j) {
        const Index anchor = t - j * period;
        if (anchor - lookback + 1 < 0 || anchor + horizon > t) break;
        anchors.push_back(anchor);
    }
    if (anchors.empty()) {
        fail(Errc::NoValidSamples, "period " + std::to_string(period) + " yields no leak-free window before t=" +
                                       std::to_string(t));
    }

    const Index channels = view.channels();
    const auto n = static_cast<Index>(anchors.size());
    ExpertBatch batch;
    batch.period = period;
    batch.anchors = anchors;
    batch.inputs.assign(static_cast<std::size_t>(channels), Matrix(n, lookback));
    batch.targets.assign(static_cast<std::size_t>(channels), Matrix(n, horizon));
    for (Index s = 0; s < n; ++s) {
        const auto pair = view.window(anchors[static_cast<std::size_t>(s)], lookback, horizon);
        for (Index c = 0; c < channels; ++c) {
            batch.inputs[static_cast<std::size_t>(c)].row(s) = pair.x.col(c).transpose();
            batch.targets[static_cast<std::size_t>(c)].row(s) = pair.y.col(c).transpose();
        }
    }
    return batch;
}

ExpertBatch build_expert_batch(const SeriesStore& store, Index t, Index period, Index lookback,
                               Index horizon, Index max_samples) {
    return build_expert_batch(StreamView(store, t), t, period, lookback, horizon, max_samples);
}

std::vector<double> acf(std::span<const double> series, std::span<const Index> lags) {
    const auto n = static_cast<Index>(series.size());
    std::vector<double> out;
    out.reserve(lags.size());
    for (const Index lag : lags) {
        if (lag < 0 || n <= lag + 2) {
            fail(Errc::OutOfRange, "series of length " + std::to_string(n) + " is too short for lag " +
                                       std::to_string(lag));
        }
        const Index len = n - lag;
        Eigen::Map<const Vector> head(series.data(), len);
        Eigen::Map<const Vector> tail(series.data() + lag, len);
        const Vector a = head.array() - head.mean();
        const Vector b = tail.array() - tail.mean();
        const double denom = std::sqrt(a.squaredNorm() * b.squaredNorm());
        if (!(denom > 0.0)) fail(Errc::ZeroVariance, "lag " + std::to_string(lag) + " slice is constant");
        out.push_back(std::clamp(a.dot(b) / denom, -1.0, 1.0));
    }
    return out;
}

std::vector<RollingAcfRow> rolling_acf(std::span<const double> series, std::span<const Index> lags,
                                       Index window, Index stride) {
    if (window < 1 || stride < 1) fail(Errc::ConfigError, "window and stride must be positive");
    std::vector<RollingAcfRow> rows;
    for (Index end = window - 1; end < static_cast<Index>(series.size()); end += stride) {
        rows.push_back({end, acf(series.subspan(static_cast<std::size_t>(end - window + 1),
                                                static_cast<std::size_t>(window)),
                                 lags)});
    }
    return rows;
}

void write_acf_csv(const std::filesystem::path& path, std::span<const Index> lags,
                   std::span<const double> values) {
    std::ofstream out(path);
    if (!out) fail(Errc::IoError, "cannot write " + path.string());
    out << "lag,value\n" << std::setprecision(12);
    for (std::size_t i = 0; i < lags.size(); ++i) out << lags[i] << ',' << values[i] << '\n';
}

void write_rolling_acf_csv(const std::filesystem::path& path, std::span<const Index> lags,
                           const std::vector<RollingAcfRow>& rows) {
    std::ofstream out(path);
    if (!out) fail(Errc::IoError, "cannot write " + path.string());
    out << "t";
    for (const auto lag : lags) out << ",lag_" << lag;
    out << '\n' << std::setprecision(12);
    for (const auto& row : rows) {
        out << row.end;
        for (const double v : row.values) out << ',' << v;
        out << '\n';
    }
}

} // namespace dyname
