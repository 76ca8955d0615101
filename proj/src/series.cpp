#include "dyname/series.hpp"

#include "dyname/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string_view>

namespace dyname {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

enum class CellKind { number, missing, text };

struct Cell {
    CellKind kind;
    double value;
};

Cell classify(std::string_view s) {
    if (s.empty() || s == "NA" || s == "na" || s == "null") return {CellKind::missing, 0.0};
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return {CellKind::text, 0.0};
    if (!std::isfinite(v)) return {CellKind::missing, 0.0};
    return {CellKind::number, v};
}

bool all_numeric(const std::vector<std::string_view>& fields, std::size_t from) {
    for (std::size_t i = from; i < fields.size(); ++i) {
        if (classify(fields[i]).kind == CellKind::text) return false;
    }
    return true;
}

} // namespace

Split split_for_length(Index total) noexcept {
    // Integer arithmetic keeps the floor exact for every length.
    return Split{(total * 20) / 100, (total * 25) / 100};
}

SeriesStore::SeriesStore(Matrix values, std::vector<std::string> channel_names)
    : values_(std::move(values)), channel_names_(std::move(channel_names)) {
    if (values_.rows() == 0 || values_.cols() == 0) {
        fail(Errc::EmptySeries, "series has no observations");
    }
    if (!values_.allFinite()) fail(Errc::NonFiniteInput, "series contains NaN or Inf");
    if (channel_names_.empty()) {
        for (Index c = 0; c < values_.cols(); ++c) channel_names_.push_back("ch" + std::to_string(c));
    }
    if (static_cast<Index>(channel_names_.size()) != values_.cols()) {
        fail(Errc::MalformedRow, "channel name count does not match column count");
    }
    split_ = split_for_length(values_.rows());
}

SeriesStore SeriesStore::with_values(Matrix values) const {
    if (values.rows() != values_.rows() || values.cols() != values_.cols()) {
        fail(Errc::OutOfRange, "replacement values change the series shape");
    }
    return SeriesStore(std::move(values), channel_names_);
}

SeriesStore parse_csv(std::istream& in, const CsvSchema& schema) {
    std::vector<std::vector<std::string_view>> rows;
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (trim(line).empty()) continue;
        lines.push_back(std::move(line));
    }
    if (lines.empty()) fail(Errc::EmptySeries, "CSV input is empty");
    rows.reserve(lines.size());
    for (const auto& l : lines) rows.push_back(split_fields(l));

    bool has_header = schema.header == Presence::yes;
    if (schema.header == Presence::detect) {
        // A header row has a non-numeric cell past a possible timestamp column.
        has_header = !all_numeric(rows.front(), 1);
    }
    const std::size_t first_data = has_header ? 1 : 0;
    if (first_data >= rows.size()) fail(Errc::EmptySeries, "CSV has a header but no data rows");

    bool has_timestamp = schema.timestamp_column == Presence::yes;
    if (schema.timestamp_column == Presence::detect) {
        has_timestamp = classify(rows[first_data].front()).kind == CellKind::text;
    }
    const std::size_t skip = has_timestamp ? 1 : 0;
    const std::size_t width = rows[first_data].size();
    if (width <= skip) fail(Errc::MalformedRow, "CSV has no numeric channel columns");
    const auto channels = static_cast<Index>(width - skip);

    std::vector<std::string> names;
    if (has_header) {
        if (rows.front().size() != width) fail(Errc::MalformedRow, "header width differs from data width");
        for (std::size_t i = skip; i < width; ++i) names.emplace_back(rows.front()[i]);
    }

    const auto count = static_cast<Index>(rows.size() - first_data);
    Matrix values(count, channels);
    for (Index r = 0; r < count; ++r) {
        const auto& fields = rows[first_data + static_cast<std::size_t>(r)];
        const auto line_no = first_data + static_cast<std::size_t>(r) + 1;
        if (fields.size() != width) {
            fail(Errc::MalformedRow, "line " + std::to_string(line_no) + " has " +
                                         std::to_string(fields.size()) + " fields, expected " +
                                         std::to_string(width));
        }
        for (Index c = 0; c < channels; ++c) {
            const auto cell = classify(fields[skip + static_cast<std::size_t>(c)]);
            switch (cell.kind) {
            case CellKind::number:
                values(r, c) = cell.value;
                break;
            case CellKind::missing:
                if (schema.missing == MissingPolicy::forward_fill && r > 0) {
                    values(r, c) = values(r - 1, c);
                    break;
                }
                fail(Errc::MalformedRow, "line " + std::to_string(line_no) + " column " +
                                             std::to_string(c + static_cast<Index>(skip)) +
                                             " is missing");
            case CellKind::text:
                fail(Errc::MalformedRow, "line " + std::to_string(line_no) + " has non-numeric cell '" +
                                             std::string(fields[skip + static_cast<std::size_t>(c)]) + "'");
            }
        }
    }
    return SeriesStore(std::move(values), std::move(names));
}

SeriesStore load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) fail(Errc::IoError, "cannot open " + path.string());
    return parse_csv(in, schema);
}

void write_csv(const std::filesystem::path& path, const SeriesStore& store) {
    std::ofstream out(path);
    if (!out) fail(Errc::IoError, "cannot write " + path.string());
    const auto& names = store.channel_names();
    for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
    out << '\n' << std::setprecision(17);
    const auto& v = store.values();
    for (Index r = 0; r < v.rows(); ++r) {
        for (Index c = 0; c < v.cols(); ++c) out << (c ? "," : "") << v(r, c);
        out << '\n';
    }
}

WindowPair make_window(const SeriesStore& store, Index anchor, Index lookback, Index horizon) {
    if (lookback < 1 || horizon < 1) fail(Errc::OutOfRange, "window lengths must be positive");
    if (anchor - lookback + 1 < 0 || anchor + horizon > store.length() - 1) {
        fail(Errc::OutOfRange, "window at anchor " + std::to_string(anchor) + " with L=" +
                                   std::to_string(lookback) + ", H=" + std::to_string(horizon) +
                                   " exceeds series of length " + std::to_string(store.length()));
    }
    const auto& v = store.values();
    return WindowPair{v.middleRows(anchor - lookback + 1, lookback), v.middleRows(anchor + 1, horizon), anchor};
}

HistoryBuffer::HistoryBuffer(Index capacity, Index channels)
    : ring_(capacity, channels), capacity_(capacity) {
    if (capacity < 1 || channels < 1) fail(Errc::OutOfRange, "history buffer needs positive dimensions");
}

void HistoryBuffer::push(const Eigen::Ref<const Eigen::RowVectorXd>& observation) {
    if (observation.size() != ring_.cols()) fail(Errc::OutOfRange, "observation width mismatch");
    ring_.row(head_) = observation;
    head_ = (head_ + 1) % capacity_;
    if (size_ < capacity_) ++size_;
}

Matrix HistoryBuffer::chronological() const {
    Matrix out(size_, ring_.cols());
    const Index start = size_ < capacity_ ? 0 : head_;
    for (Index i = 0; i < size_; ++i) out.row(i) = ring_.row((start + i) % capacity_);
    return out;
}

HistoryBuffer history_at(const SeriesStore& store, Index t, Index buffer_length) {
    if (buffer_length < 1 || t - buffer_length + 1 < 0 || t >= store.length()) {
        fail(Errc::OutOfRange, "history of length " + std::to_string(buffer_length) + " ending at " +
                                   std::to_string(t) + " is unavailable");
    }
    HistoryBuffer buf(buffer_length, store.channels());
    for (Index r = t - buffer_length + 1; r <= t; ++r) buf.push(store.values().row(r));
    return buf;
}

Normalizer Normalizer::fit(const SeriesStore& store) {
    const Index rows = store.split().pretrain_end;
    if (rows < 1) fail(Errc::EmptySeries, "pretrain split is empty");
    const auto block = store.values().topRows(rows);
    Vector mean = block.colwise().mean().transpose();
    Vector sd(store.channels());
    for (Index c = 0; c < store.channels(); ++c) {
        const double var = (block.col(c).array() - mean(c)).square().mean();
        sd(c) = std::sqrt(var);
        if (!(sd(c) > 1e-12 * std::max(1.0, std::abs(mean(c))))) {
            fail(Errc::ConstantChannel, "channel '" + store.channel_names()[static_cast<std::size_t>(c)] +
                                            "' is constant over the pretrain split");
        }
    }
    return from_moments(std::move(mean), std::move(sd));
}

Normalizer Normalizer::from_moments(Vector mean, Vector stddev) {
    if (mean.size() != stddev.size()) fail(Errc::OutOfRange, "moment vectors differ in length");
    for (Index c = 0; c < stddev.size(); ++c) {
        if (!(stddev(c) > 0.0)) fail(Errc::ConstantChannel, "standard deviation must be positive");
    }
    Normalizer n;
    n.mean_ = std::move(mean);
    n.stddev_ = std::move(stddev);
    return n;
}

Matrix Normalizer::normalize(const Matrix& values) const {
    if (values.cols() != mean_.size()) fail(Errc::OutOfRange, "channel count mismatch");
    return (values.rowwise() - mean_.transpose()).array().rowwise() / stddev_.transpose().array();
}

Matrix Normalizer::denormalize(const Matrix& values) const {
    if (values.cols() != mean_.size()) fail(Errc::OutOfRange, "channel count mismatch");
    Matrix out = values.array().rowwise() * stddev_.transpose().array();
    return out.rowwise() + mean_.transpose();
}

SeriesStore Normalizer::apply(const SeriesStore& store) const {
    return store.with_values(normalize(store.values()));
}

StreamView::StreamView(const SeriesStore& store, Index now) : store_(&store), now_(now) {}

void StreamView::advance_to(Index now) {
    now_ = now;
}

void StreamView::touch(Index first, Index last) const {
    if (first < 0 || last >= store_->length() || first > last) {
        fail(Errc::OutOfRange, "rows [" + std::to_string(first) + ", " + std::to_string(last) +
                                   "] outside series of length " + std::to_string(store_->length()));
    }
    ++audit_.reads;
    audit_.max_row_read = std::max(audit_.max_row_read, last);
    if (last > now_) ++audit_.violations;
}

Matrix StreamView::rows(Index first, Index last) const {
    touch(first, last);
    return store_->values().middleRows(first, last - first + 1);
}

Matrix StreamView::lookback(Index anchor, Index lookback) const {
    return rows(anchor - lookback + 1, anchor);
}

Matrix StreamView::horizon(Index anchor, Index horizon) const {
    return rows(anchor + 1, anchor + horizon);
}

WindowPair StreamView::window(Index anchor, Index lookback, Index horizon) const {
    return WindowPair{this->lookback(anchor, lookback), this->horizon(anchor, horizon), anchor};
}

Matrix StreamView::history(Index t, Index buffer_length) const {
    return rows(t - buffer_length + 1, t);
}

} // namespace dyname
