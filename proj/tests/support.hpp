#pragma once

#include "dyname/series.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

namespace testing_support {

using dyname::Index;
using dyname::Matrix;
using dyname::Vector;

/// Seeded generator for property tests.
struct Gen {
    std::mt19937_64 rng;

    explicit Gen(std::uint64_t seed) : rng(seed) {}

    Index integer(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    double normal() { return std::normal_distribution<double>()(rng); }

    Matrix matrix(Index rows, Index cols) {
        Matrix m(rows, cols);
        for (Index j = 0; j < cols; ++j)
            for (Index i = 0; i < rows; ++i) m(i, j) = normal();
        return m;
    }
    Vector vector(Index n) { return matrix(n, 1).col(0); }
};

/// Sum of sines, one column per channel with a per-channel phase.
inline Matrix sines(Index length, Index channels, std::initializer_list<std::pair<Index, double>> terms,
                    double channel_phase = 0.3) {
    Matrix m = Matrix::Zero(length, channels);
    for (Index t = 0; t < length; ++t)
        for (Index c = 0; c < channels; ++c)
            for (const auto& [p, a] : terms)
                m(t, c) += a * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(p) +
                                        channel_phase * static_cast<double>(c));
    return m;
}

inline std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "dyname_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

inline double rel_diff(const Matrix& a, const Matrix& b) { return (a - b).norm() / (b.norm() + 1e-12); }

} // namespace testing_support
