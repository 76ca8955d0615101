#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace dyname {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Boundaries of the offline/online protocol: rows [0, pretrain_end) train,
/// [pretrain_end, val_end) validate, [val_end, T) are replayed online.
struct Split {
    Index pretrain_end = 0;
    Index val_end = 0;
};

/// floor(0.20 T) and floor(0.25 T).
Split split_for_length(Index total) noexcept;

/// Immutable multichannel series. Rows are time steps, columns channels.
class SeriesStore {
public:
    SeriesStore() = default;
    SeriesStore(Matrix values, std::vector<std::string> channel_names);

    [[nodiscard]] const Matrix& values() const noexcept { return values_; }
    [[nodiscard]] Index length() const noexcept { return values_.rows(); }
    [[nodiscard]] Index channels() const noexcept { return values_.cols(); }
    [[nodiscard]] const Split& split() const noexcept { return split_; }
    [[nodiscard]] const std::vector<std::string>& channel_names() const noexcept {
        return channel_names_;
    }

    /// Same names and split, new values (used for normalized copies).
    [[nodiscard]] SeriesStore with_values(Matrix values) const;

private:
    Matrix values_;
    std::vector<std::string> channel_names_;
    Split split_;
};

enum class MissingPolicy { reject, forward_fill };
enum class Presence { detect, yes, no };

struct CsvSchema {
    Presence header = Presence::detect;
    Presence timestamp_column = Presence::detect;
    MissingPolicy missing = MissingPolicy::reject;
};

SeriesStore load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
SeriesStore parse_csv(std::istream& in, const CsvSchema& schema = {});
void write_csv(const std::filesystem::path& path, const SeriesStore& store);

/// x covers [anchor-L+1, anchor], y covers [anchor+1, anchor+H].
struct WindowPair {
    Matrix x; // L x C
    Matrix y; // H x C
    Index anchor = 0;
};

WindowPair make_window(const SeriesStore& store, Index anchor, Index lookback, Index horizon);

/// Fixed-capacity ring of the most recent observations.
class HistoryBuffer {
public:
    HistoryBuffer(Index capacity, Index channels);

    void push(const Eigen::Ref<const Eigen::RowVectorXd>& observation);

    [[nodiscard]] bool full() const noexcept { return size_ == capacity_; }
    [[nodiscard]] Index size() const noexcept { return size_; }
    [[nodiscard]] Index capacity() const noexcept { return capacity_; }
    [[nodiscard]] Index channels() const noexcept { return ring_.cols(); }

    /// Oldest row first.
    [[nodiscard]] Matrix chronological() const;

private:
    Matrix ring_;
    Index capacity_;
    Index head_ = 0; // next write slot
    Index size_ = 0;
};

/// Buffer holding values[t-M+1 .. t].
HistoryBuffer history_at(const SeriesStore& store, Index t, Index buffer_length);

/// Per-channel z-score fitted on the pretrain rows only.
class Normalizer {
public:
    static Normalizer fit(const SeriesStore& store);
    static Normalizer from_moments(Vector mean, Vector stddev);

    [[nodiscard]] Matrix normalize(const Matrix& values) const;
    [[nodiscard]] Matrix denormalize(const Matrix& values) const;
    [[nodiscard]] SeriesStore apply(const SeriesStore& store) const;

    [[nodiscard]] const Vector& mean() const noexcept { return mean_; }
    [[nodiscard]] const Vector& stddev() const noexcept { return stddev_; }

private:
    Vector mean_;
    Vector stddev_;
};

/// Tallies of every read made through a StreamView.
struct AccessAudit {
    std::size_t reads = 0;
    std::size_t violations = 0; // reads of rows beyond the current clock
    Index max_row_read = -1;
};

/// Clocked read-only view over a store. Every accessor checks the rows it
/// touches against the current time and records reads from the future.
class StreamView {
public:
    StreamView(const SeriesStore& store, Index now);

    void advance_to(Index now);
    [[nodiscard]] Index now() const noexcept { return now_; }
    [[nodiscard]] const SeriesStore& store() const noexcept { return *store_; }
    [[nodiscard]] Index channels() const noexcept { return store_->channels(); }

    /// Rows [first, last] inclusive.
    [[nodiscard]] Matrix rows(Index first, Index last) const;
    [[nodiscard]] Matrix lookback(Index anchor, Index lookback) const;
    [[nodiscard]] Matrix horizon(Index anchor, Index horizon) const;
    [[nodiscard]] WindowPair window(Index anchor, Index lookback, Index horizon) const;
    [[nodiscard]] Matrix history(Index t, Index buffer_length) const;

    [[nodiscard]] const AccessAudit& audit() const noexcept { return audit_; }

private:
    void touch(Index first, Index last) const;

    const SeriesStore* store_;
    Index now_;
    mutable AccessAudit audit_;
};

} // namespace dyname
