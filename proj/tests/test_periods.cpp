#include "doctest.h"

#include "dft_oracle.hpp"
#include "dyname/error.hpp"
#include "dyname/periods.hpp"
#include "support.hpp"

#include <algorithm>
#include <fstream>

using namespace dyname;
using testing_support::Gen;

namespace {

Errc code_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::IoError;
}

} // namespace

TEST_CASE("pure sine of period 24 over M=336") {
    const Matrix h = testing_support::sines(336, 1, {{24, 1.0}});
    const PeriodSet ps = top_k_periods(h, 1);
    REQUIRE(ps.frequencies.size() == 1);
    CHECK(ps.frequencies[0] == 14);
    CHECK(ps.periods == std::vector<Index>{24});
    CHECK(testing_support::naive_top_k(h, 1) == std::vector<long>{14});
}

TEST_CASE("two equal sines give both periods, longest first") {
    const Matrix h = testing_support::sines(336, 3, {{24, 1.0}, {168, 1.0}});
    const PeriodSet ps = top_k_periods(h, 2);
    CHECK(ps.periods == std::vector<Index>{168, 24});
    auto freqs = ps.frequencies;
    std::sort(freqs.begin(), freqs.end());
    CHECK(freqs == std::vector<Index>{2, 14});
}

TEST_CASE("degenerate and invalid buffers") {
    CHECK(code_of([] { top_k_periods(Matrix::Constant(64, 2, 3.5), 2); }) == Errc::DegenerateSpectrum);
    CHECK(code_of([] { top_k_periods(Matrix::Zero(64, 1), 1); }) == Errc::DegenerateSpectrum);
    CHECK(code_of([] { top_k_periods(Matrix::Ones(3, 1), 1); }) == Errc::OutOfRange);
    CHECK(code_of([] { top_k_periods(testing_support::sines(64, 1, {{8, 1.0}}), 0); }) == Errc::ConfigError);
}

TEST_CASE("history buffer overload reads in chronological order") {
    const Matrix h = testing_support::sines(100, 2, {{10, 1.0}, {25, 0.5}});
    HistoryBuffer buf(64, 2);
    for (Index t = 0; t < 100; ++t) buf.push(h.row(t));
    const PeriodSet a = top_k_periods(buf, 2);
    const PeriodSet b = top_k_periods(Matrix(h.bottomRows(64)), 2);
    CHECK(a.frequencies == b.frequencies);
}

TEST_CASE("property: FFT selection matches the naive DFT scan") {
    Gen g(2024);
    for (int trial = 0; trial < 150; ++trial) {
        const Index m = g.integer(4, 200);
        const Index c = g.integer(1, 3);
        const int k = static_cast<int>(g.integer(1, 5));
        const Matrix h = g.matrix(m, c);
        const PeriodSet ps = top_k_periods(h, k);
        const auto expected = testing_support::naive_top_k(h, k);
        REQUIRE(ps.frequencies.size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) REQUIRE(ps.frequencies[i] == expected[i]);
    }
}

TEST_CASE("property: period set invariants") {
    Gen g(77);
    for (int trial = 0; trial < 200; ++trial) {
        const Index m = g.integer(4, 300);
        const int k = static_cast<int>(g.integer(1, 8));
        const Matrix h = g.matrix(m, 2);
        const PeriodSet ps = top_k_periods(h, k);
        REQUIRE(static_cast<int>(ps.periods.size()) <= k);
        REQUIRE(!ps.periods.empty());
        for (Index f : ps.frequencies) REQUIRE((f >= 1 && f <= m / 2));
        for (std::size_t i = 1; i < ps.periods.size(); ++i) REQUIRE(ps.periods[i - 1] > ps.periods[i]);
        for (Index p : ps.periods) REQUIRE(p > 0);
        const PeriodSet again = top_k_periods(h, k);
        REQUIRE(again.frequencies == ps.frequencies);
        REQUIRE(again.periods == ps.periods);
    }
}

TEST_CASE("duplicate periods after floor division are merged") {
    // frequencies 22 and 23 of M=50 both floor to period 2
    Matrix h(50, 1);
    for (Index t = 0; t < 50; ++t) {
        h(t, 0) = std::cos(2.0 * std::numbers::pi * 22.0 * static_cast<double>(t) / 50.0) +
                  std::cos(2.0 * std::numbers::pi * 23.0 * static_cast<double>(t) / 50.0);
    }
    const PeriodSet ps = top_k_periods(h, 2);
    CHECK(ps.frequencies.size() == 2);
    CHECK(ps.periods == std::vector<Index>{2});
}

TEST_CASE("expert batch stride arithmetic") {
    Matrix v(1200, 2);
    for (Index t = 0; t < 1200; ++t) v.row(t) << static_cast<double>(t), 0.5 * static_cast<double>(t);
    const SeriesStore s(v, {});
    const ExpertBatch b = build_expert_batch(s, 1000, 168, 96, 24, 4);
    CHECK(b.anchors == std::vector<Index>{832, 664, 496, 328});
    CHECK(b.size() == 4);
    CHECK(b.inputs[0](0, 95) == 832.0);
    CHECK(b.targets[1](3, 0) == doctest::Approx(0.5 * 329.0));

    const ExpertBatch one = build_expert_batch(s, 300, 168, 96, 24, 4);
    CHECK(one.anchors == std::vector<Index>{132});
    CHECK(code_of([&] { build_expert_batch(s, 1000, 12, 96, 24, 4); }) == Errc::NoValidSamples);
    CHECK(code_of([&] { build_expert_batch(s, 100, 168, 96, 24, 4); }) == Errc::NoValidSamples);
}

TEST_CASE("property: batches never leak and read nothing past t") {
    Gen g(5);
    const SeriesStore s(g.matrix(800, 2), {});
    int built = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const Index t = g.integer(0, 799);
        const Index p = g.integer(1, 400);
        const Index l = g.integer(1, 120);
        const Index h = g.integer(1, 60);
        const Index n = g.integer(1, 16);
        StreamView view(s, t);
        try {
            const ExpertBatch b = build_expert_batch(view, t, p, l, h, n);
            ++built;
            REQUIRE(b.size() >= 1);
            REQUIRE(b.size() <= n);
            for (std::size_t j = 0; j < b.anchors.size(); ++j) {
                REQUIRE(b.anchors[j] == t - static_cast<Index>(j + 1) * p);
                REQUIRE(b.anchors[j] + h <= t);
                REQUIRE(b.anchors[j] - l + 1 >= 0);
            }
        } catch (const Error& e) {
            REQUIRE(e.code() == Errc::NoValidSamples);
            REQUIRE((p < h || t - p - l + 1 < 0));
        }
        REQUIRE(view.audit().violations == 0);
    }
    CHECK(built > 50);
}

TEST_CASE("acf of sines and noise") {
    const Matrix h = testing_support::sines(2400, 1, {{24, 1.0}});
    const std::vector<double> series(h.data(), h.data() + h.size());
    const std::vector<Index> lags{24, 12};
    const auto r = acf(series, lags);
    CHECK(r[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r[1] == doctest::Approx(-1.0).epsilon(1e-6));

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Gen g(seed);
        std::vector<double> noise(10000);
        for (auto& x : noise) x = g.normal();
        const std::vector<Index> lag24{24};
        CHECK(std::abs(acf(noise, lag24)[0]) < 0.05);
    }
}

TEST_CASE("acf errors and export") {
    const std::vector<double> flat(50, 2.0);
    const std::vector<Index> lag{3};
    CHECK(code_of([&] { acf(flat, lag); }) == Errc::ZeroVariance);
    const std::vector<double> shorty{1.0, 2.0, 3.0, 4.0};
    const std::vector<Index> lag2{2};
    CHECK(code_of([&] { acf(shorty, lag2); }) == Errc::OutOfRange);

    const Matrix h = testing_support::sines(500, 1, {{24, 1.0}, {7, 0.3}});
    const std::vector<double> series(h.data(), h.data() + h.size());
    const std::vector<Index> lags{1, 24, 48};
    const auto path = testing_support::temp_path("acf.csv");
    write_acf_csv(path, lags, acf(series, lags));
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "lag,value");
    const auto rows = rolling_acf(series, lags, 200, 100);
    CHECK(rows.size() == 4);
    CHECK(rows.front().end == 199);
}
