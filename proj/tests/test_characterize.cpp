#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "tdcsim/characterize.hpp"
#include "tdcsim/presets.hpp"

using namespace tdcsim;

namespace {

DelayLine make_line(std::vector<double> taps, double period) {
    DelayLine line;
    line.tap_delays = std::move(taps);
    line.clock_period = period;
    line.label = "test";
    return line;
}

CodeHistogram make_hist(std::vector<std::uint64_t> counts, double period,
                        PhaseMode mode = PhaseMode::Uniform) {
    CodeHistogram h;
    h.total_hits = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    h.counts = std::move(counts);
    h.clock_period = period;
    h.phase_mode = mode;
    return h;
}

}  // namespace

TEST_CASE("estimate_bin_widths is proportional occupancy") {
    const auto even = estimate_bin_widths(make_hist({1, 1, 1, 1}, 40.0));
    for (double w : even) CHECK(w == doctest::Approx(10.0));

    const auto mixed = estimate_bin_widths(make_hist({1, 0, 1, 2}, 40.0));
    CHECK(mixed == std::vector<double>{10.0, 0.0, 10.0, 20.0});

    CHECK_THROWS_AS(
        estimate_bin_widths(make_hist({1, 1}, 40.0, PhaseMode::PhaseLocked)),
        std::invalid_argument);
}

TEST_CASE("compute_nonlinearity hand-checked prefix sums") {
    const auto uniform = compute_nonlinearity({10.0, 10.0, 10.0, 10.0}, 40.0);
    for (double d : uniform.dnl) CHECK(d == doctest::Approx(0.0));
    for (double i : uniform.inl) CHECK(i == doctest::Approx(0.0));
    CHECK(uniform.w_inl_pp == doctest::Approx(0.0));

    const auto rep = compute_nonlinearity({10.0, 15.0, 10.0, 5.0}, 40.0);
    CHECK(rep.lsb_ideal == doctest::Approx(10.0));
    CHECK(rep.dnl[0] == doctest::Approx(0.0));
    CHECK(rep.dnl[1] == doctest::Approx(5.0));
    CHECK(rep.dnl[2] == doctest::Approx(0.0));
    CHECK(rep.dnl[3] == doctest::Approx(-5.0));
    CHECK(rep.inl[0] == doctest::Approx(0.0));
    CHECK(rep.inl[1] == doctest::Approx(5.0));
    CHECK(rep.inl[2] == doctest::Approx(5.0));
    CHECK(rep.inl[3] == doctest::Approx(0.0));
    CHECK(rep.w_inl_pp == doctest::Approx(5.0));
    CHECK(rep.residual == doctest::Approx(0.0));

    CHECK_THROWS_AS(compute_nonlinearity({}, 40.0), std::invalid_argument);
}

TEST_CASE("estimate_sigma is the occupancy-weighted quantization rms") {
    // Uniform width w: w / sqrt(12).
    const double w = 10000.0 / 996.0;
    CHECK(estimate_sigma(std::vector<double>(996, w), 10000.0) ==
          doctest::Approx(w / std::sqrt(12.0)).epsilon(1e-12));
    CHECK(estimate_sigma(std::vector<double>(996, w), 10000.0) ==
          doctest::Approx(2.90).epsilon(2e-3));

    // sqrt((1000 + 3375 + 1000 + 125) / (12 * 40)) = 3.385
    CHECK(estimate_sigma({10.0, 15.0, 10.0, 5.0}, 40.0) ==
          doctest::Approx(std::sqrt(5500.0 / 480.0)).epsilon(1e-12));
    CHECK(estimate_sigma({10.0, 15.0, 10.0, 5.0}, 40.0) ==
          doctest::Approx(3.39).epsilon(2e-3));

    CHECK_THROWS_AS(estimate_sigma({0.0, 0.0}, 40.0), std::invalid_argument);
    CHECK_THROWS_AS(estimate_sigma({1.0, -1.0}, 40.0), std::invalid_argument);
}

TEST_CASE("run_code_density: uniform occupancy matches bin measure") {
    const auto ideal = build_ideal(4, 40.0);
    const auto h = run_code_density(ideal, 4000000, PhaseMode::Uniform, 7);
    // 4 sigma Poisson around one million per bin.
    for (auto c : h.counts)
        CHECK(std::llabs(static_cast<long long>(c) - 1000000) < 4000);

    const auto gap = make_line({10.0, 0.0, 10.0, 20.0}, 40.0);
    const auto hg = run_code_density(gap, 100000, PhaseMode::Uniform, 7);
    CHECK(hg.counts[1] == 0);  // zero-measure bin is never hit

    // Span 45 truncated at the 40 ps period: effective widths 10,15,10,5.
    const auto wide = make_line({10.0, 15.0, 10.0, 10.0}, 40.0);
    const auto hw = run_code_density(wide, 1000000, PhaseMode::Uniform, 7);
    const double n = static_cast<double>(hw.total_hits);
    CHECK(static_cast<double>(hw.counts[0]) / n == doctest::Approx(10.0 / 40.0).epsilon(2e-3));
    CHECK(static_cast<double>(hw.counts[1]) / n == doctest::Approx(15.0 / 40.0).epsilon(2e-3));
    CHECK(static_cast<double>(hw.counts[2]) / n == doctest::Approx(10.0 / 40.0).epsilon(2e-3));
    CHECK(static_cast<double>(hw.counts[3]) / n == doctest::Approx(5.0 / 40.0).epsilon(2e-3));

    CHECK_THROWS_AS(run_code_density(ideal, 0, PhaseMode::Uniform, 7),
                    std::invalid_argument);

    // Deterministic for a fixed seed.
    const auto again = run_code_density(wide, 1000000, PhaseMode::Uniform, 7);
    CHECK(again.counts == hw.counts);
    const auto other_seed = run_code_density(wide, 1000000, PhaseMode::PhaseLocked, 8);
    CHECK(other_seed.counts != hw.counts);
}

TEST_CASE("phase-locked arrivals probe only a narrow code band") {
    const auto line = build_ideal(996, 10000.0);
    const auto h = run_code_density(line, 500000, PhaseMode::PhaseLocked, 11);
    // Default lock model: gaussian with std = 5 LSB. At least 99% of hits
    // must land inside ceil(10 sigma / LSB) + 1 = 51 bins.
    std::vector<std::uint64_t> counts = h.counts;
    std::sort(counts.rbegin(), counts.rend());
    std::uint64_t top = 0;
    for (std::size_t i = 0; i < 51 && i < counts.size(); ++i) top += counts[i];
    CHECK(static_cast<double>(top) >= 0.99 * static_cast<double>(h.total_hits));
}

TEST_CASE("estimated widths sum to the period and inl telescopes to the residual") {
    const auto line = build_preset(PresetName::Tdc2Raw, 5);
    const auto h = run_code_density(line, 2000000, PhaseMode::Uniform, 5);
    const auto widths = estimate_bin_widths(h);
    const double sum = std::accumulate(widths.begin(), widths.end(), 0.0);
    CHECK(sum == doctest::Approx(line.clock_period).epsilon(1e-12));

    const auto rep = compute_nonlinearity(widths, line.clock_period);
    CHECK(rep.inl.back() == doctest::Approx(rep.residual).epsilon(1e-9));
    CHECK(rep.inl.back() == doctest::Approx(0.0).scale(line.clock_period).epsilon(1e-12));
}

TEST_CASE("compute_nonlinearity scales linearly with the time unit") {
    const std::vector<double> w{10.0, 0.0, 12.5, 20.0};
    const double k = 7.25;
    std::vector<double> wk;
    for (double x : w) wk.push_back(x * k);
    const auto a = compute_nonlinearity(w, 42.0);
    const auto b = compute_nonlinearity(wk, 42.0 * k);
    CHECK(b.w_inl_pp == doctest::Approx(a.w_inl_pp * k).epsilon(1e-12));
    CHECK(b.sigma_tdc == doctest::Approx(a.sigma_tdc * k).epsilon(1e-12));
    CHECK(b.dnl_range.first == doctest::Approx(a.dnl_range.first * k).epsilon(1e-12));
    CHECK(b.inl_range.second == doctest::Approx(a.inl_range.second * k).epsilon(1e-12));
    for (std::size_t i = 0; i < w.size(); ++i)
        CHECK(b.inl[i] == doctest::Approx(a.inl[i] * k).epsilon(1e-12));
}

TEST_CASE("sampled characterization converges to exact widths") {
    const auto line = build_preset(PresetName::Tdc2Raw, 3);
    const auto exact = effective_widths(line);
    double prev_err = 1e9;
    for (std::uint64_t hits : {100000ull, 1000000ull, 10000000ull}) {
        const auto h = run_code_density(line, hits, PhaseMode::Uniform, 3);
        const auto est = estimate_bin_widths(h);
        double err = 0.0;
        for (std::size_t i = 0; i < est.size(); ++i)
            err = std::max(err, std::abs(est[i] - exact[i]));
        CHECK(err < prev_err);
        prev_err = err;
    }
    CHECK(prev_err < 0.01 * line.lsb_ideal());
}

TEST_CASE("histogram csv round trip and schema errors") {
    const auto line = make_line({10.0, 0.0, 10.0, 20.0}, 40.0);
    const auto h = run_code_density(line, 250000, PhaseMode::Uniform, 9);
    const auto dir = std::filesystem::temp_directory_path();
    const std::string path = dir / "tdcsim_hist.csv";
    export_histogram(h, path);
    const auto back = import_histogram(path);
    CHECK(back.counts == h.counts);
    CHECK(back.total_hits == h.total_hits);
    CHECK(back.clock_period == h.clock_period);
    CHECK(back.phase_mode == h.phase_mode);
    std::filesystem::remove(path);

    const std::string bad = dir / "tdcsim_hist_bad.csv";
    {
        std::ofstream out(bad);
        out << "# clock_period_ps=40 phase_mode=uniform\n0,100\n1,-3\n";
    }
    CHECK_THROWS(import_histogram(bad));
    {
        std::ofstream out(bad);
        out << "0,100\n";
    }
    CHECK_THROWS(import_histogram(bad));
    std::filesystem::remove(bad);
    CHECK_THROWS(import_histogram(dir / "tdcsim_does_not_exist.csv"));
}

TEST_CASE("characterize_exact folds the chain jitter into sigma") {
    auto line = make_line({10.0, 10.0, 10.0, 10.0}, 40.0);
    line.rms_jitter_ps = 4.0;
    const auto rep = characterize_exact(line);
    const double quant = 10.0 / std::sqrt(12.0);
    CHECK(rep.sigma_quant == doctest::Approx(quant));
    CHECK(rep.sigma_jitter == doctest::Approx(4.0));
    CHECK(rep.sigma_tdc == doctest::Approx(std::hypot(quant, 4.0)));
}
