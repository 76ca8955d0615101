#pragma once

#include "dyname/series.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace dyname {

/// Dominant frequencies of a history buffer and the periods they imply.
/// `periods` is sorted longest first and free of duplicates, so it may be
/// shorter than `frequencies`.
struct PeriodSet {
    std::vector<Index> frequencies;
    std::vector<Index> periods;
};

/// Channel-averaged amplitude |FFT(h_c)[i]| for i = 0 .. floor(M/2).
Vector mean_amplitude_spectrum(const Matrix& history);

/// Top-k non-DC frequencies of the channel-averaged spectrum; period = floor(M / i).
/// Near-equal amplitudes resolve to the lower frequency index.
PeriodSet top_k_periods(const Matrix& history, int k);
PeriodSet top_k_periods(const HistoryBuffer& history, int k);

/// Period-strided fitting pairs for one expert. Per-channel stacks so each
/// channel's regression can read its rows directly.
struct ExpertBatch {
    Index period = 0;
    std::vector<Index> anchors;          // t - j*p, nearest first
    std::vector<Matrix> inputs;          // per channel: n x L
    std::vector<Matrix> targets;         // per channel: n x H

    [[nodiscard]] Index size() const noexcept { return static_cast<Index>(anchors.size()); }
};

/// Anchors t-p, t-2p, ... up to n_max, stopping at the first stride whose
/// window would leak past t or run off the start of the series.
ExpertBatch build_expert_batch(const StreamView& view, Index t, Index period, Index lookback,
                               Index horizon, Index max_samples);
ExpertBatch build_expert_batch(const SeriesStore& store, Index t, Index period, Index lookback,
                               Index horizon, Index max_samples);

/// Pearson correlation between series[0 .. n-lag) and series[lag .. n).
std::vector<double> acf(std::span<const double> series, std::span<const Index> lags);

struct RollingAcfRow {
    Index end = 0; // last index of the window
    std::vector<double> values;
};

/// ACF recomputed over sliding windows; used for lag-dominance traces.
std::vector<RollingAcfRow> rolling_acf(std::span<const double> series, std::span<const Index> lags,
                                       Index window, Index stride);

void write_acf_csv(const std::filesystem::path& path, std::span<const Index> lags,
                   std::span<const double> values);
void write_rolling_acf_csv(const std::filesystem::path& path, std::span<const Index> lags,
                           const std::vector<RollingAcfRow>& rows);

} // namespace dyname
