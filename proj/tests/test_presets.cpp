#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tdcsim/characterize.hpp"
#include "tdcsim/presets.hpp"

using namespace tdcsim;

namespace {

// Reference characterization targets for the two modeled boards.
struct Targets {
    double dnl_min, dnl_max, inl_min, inl_max, sigma;
};

constexpr Targets kTdc1Raw{-11.0, 64.3, -20.0, 280.2, 14.7};
constexpr Targets kTdc1Opt{-9.3, 20.2, -20.1, 215.7, 10.9};
constexpr Targets kTdc2Raw{-8.1, 25.3, -35.3, 35.5, 13.2};
constexpr Targets kTdc2Opt{-8.0, 20.1, -29.3, 30.3, 11.1};

bool within(double got, double want, double rel) {
    return std::abs(got - want) <= rel * std::abs(want);
}

}  // namespace

TEST_CASE("preset name round trip") {
    for (const auto* s : {"tdc1-raw", "tdc1-opt", "tdc2-raw", "tdc2-opt"})
        CHECK(to_string(preset_from_string(s)) == s);
    CHECK_THROWS_AS(preset_from_string("tdc3"), std::invalid_argument);
}

TEST_CASE("preset structure: bin count, period, span") {
    const auto t1 = build_preset(PresetName::Tdc1Raw, 7);
    CHECK(t1.n_bins() == 996);
    CHECK(t1.clock_period == doctest::Approx(10000.0));
    CHECK(t1.span() >= t1.clock_period);
    CHECK(t1.label == "TDC1-raw");

    const auto t2 = build_preset(PresetName::Tdc2Raw, 7);
    CHECK(t2.n_bins() == 96);
    CHECK(t2.clock_period == doctest::Approx(1e12 / 260e6));
    CHECK(t2.span() >= t2.clock_period);
}

TEST_CASE("preset calibration reproduces the reference rows (seed 7)") {
    const auto check = [](PresetName name, const Targets& t, bool dnl_min_floor) {
        const auto rep = characterize_exact(build_preset(name, 7));
        INFO(to_string(name));
        if (dnl_min_floor) {
            // A zero-width bin reports dnl = -lsb; with 996 bins over 10 ns
            // that floor (-10.04 ps) is the closest any nonnegative-width
            // profile can get to the reference -11.0 ps.
            CHECK(rep.dnl_range.first == doctest::Approx(-rep.lsb_ideal));
        } else {
            CHECK(within(rep.dnl_range.first, t.dnl_min, 0.05));
        }
        CHECK(within(rep.dnl_range.second, t.dnl_max, 0.05));
        CHECK(within(rep.inl_range.first, t.inl_min, 0.05));
        CHECK(within(rep.inl_range.second, t.inl_max, 0.05));
        CHECK(within(rep.sigma_tdc, t.sigma, 0.05));
    };
    check(PresetName::Tdc1Raw, kTdc1Raw, true);
    check(PresetName::Tdc1Opt, kTdc1Opt, false);
    check(PresetName::Tdc2Raw, kTdc2Raw, false);
    check(PresetName::Tdc2Opt, kTdc2Opt, false);
}

TEST_CASE("preset pair reductions match the reference percentage rows") {
    const auto reduction = [](PresetName raw, PresetName opt) {
        const auto a = characterize_exact(build_preset(raw, 7));
        const auto b = characterize_exact(build_preset(opt, 7));
        const double dnl_a = a.dnl_range.second - a.dnl_range.first;
        const double dnl_b = b.dnl_range.second - b.dnl_range.first;
        return std::array<double, 3>{100.0 * (1.0 - dnl_b / dnl_a),
                                     100.0 * (1.0 - b.w_inl_pp / a.w_inl_pp),
                                     100.0 * (1.0 - b.sigma_tdc / a.sigma_tdc)};
    };
    const auto t1 = reduction(PresetName::Tdc1Raw, PresetName::Tdc1Opt);
    CHECK(std::abs(t1[0] - 60.0) <= 3.0);
    CHECK(std::abs(t1[1] - 21.0) <= 3.0);
    CHECK(std::abs(t1[2] - 25.0) <= 3.0);
    const auto t2 = reduction(PresetName::Tdc2Raw, PresetName::Tdc2Opt);
    CHECK(std::abs(t2[0] - 16.0) <= 3.0);
    CHECK(std::abs(t2[1] - 14.0) <= 3.0);
    CHECK(std::abs(t2[2] - 16.0) <= 3.0);
}

TEST_CASE("calibration survives the seed texture") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 42ull, 123456789ull}) {
        const auto rep = characterize_exact(build_preset(PresetName::Tdc2Opt, seed));
        CHECK(within(rep.dnl_range.first, kTdc2Opt.dnl_min, 0.05));
        CHECK(within(rep.dnl_range.second, kTdc2Opt.dnl_max, 0.05));
        CHECK(within(rep.inl_range.first, kTdc2Opt.inl_min, 0.05));
        CHECK(within(rep.inl_range.second, kTdc2Opt.inl_max, 0.05));
        CHECK(within(rep.sigma_tdc, kTdc2Opt.sigma, 0.05));

        const auto raw = characterize_exact(build_preset(PresetName::Tdc1Raw, seed));
        CHECK(within(raw.dnl_range.second, kTdc1Raw.dnl_max, 0.05));
        CHECK(within(raw.inl_range.second, kTdc1Raw.inl_max, 0.05));
        CHECK(within(raw.sigma_tdc, kTdc1Raw.sigma, 0.05));
    }
}

TEST_CASE("same seed gives identical taps, different seeds differ") {
    const auto a = build_preset(PresetName::Tdc1Raw, 7);
    const auto b = build_preset(PresetName::Tdc1Raw, 7);
    CHECK(a.tap_delays == b.tap_delays);
    CHECK(a.rms_jitter_ps == b.rms_jitter_ps);
    const auto c = build_preset(PresetName::Tdc1Raw, 8);
    CHECK(a.tap_delays != c.tap_delays);
}

TEST_CASE("zero bins in the raw long-chain preset are unobservable") {
    const auto line = build_preset(PresetName::Tdc1Raw, 7);
    int zero_bins = 0;
    for (double t : line.tap_delays)
        if (t == 0.0) ++zero_bins;
    CHECK(zero_bins > 10);
    const auto hist = run_code_density(line, 200000, PhaseMode::Uniform, 7);
    for (std::size_t i = 0; i < line.tap_delays.size(); ++i)
        if (line.tap_delays[i] == 0.0) CHECK(hist.counts[i] == 0);
}

TEST_CASE("mitigating the raw presets lands on the optimized rows") {
    const auto apply = [](PresetName raw, std::array<double, 3> want) {
        const auto before = build_preset(raw, 7);
        const auto after = apply_mitigation(before, preset_plan(raw));
        const auto a = characterize_exact(before);
        const auto b = characterize_exact(after);
        const double dnl_a = a.dnl_range.second - a.dnl_range.first;
        const double dnl_b = b.dnl_range.second - b.dnl_range.first;
        INFO(to_string(raw));
        CHECK(std::abs(100.0 * (1.0 - dnl_b / dnl_a) - want[0]) <= 3.0);
        CHECK(std::abs(100.0 * (1.0 - b.w_inl_pp / a.w_inl_pp) - want[1]) <= 3.0);
        CHECK(std::abs(100.0 * (1.0 - b.sigma_tdc / a.sigma_tdc) - want[2]) <= 3.0);
    };
    apply(PresetName::Tdc1Raw, {60.0, 21.0, 25.0});
    apply(PresetName::Tdc2Raw, {16.0, 14.0, 16.0});
}

TEST_CASE("identity plan changes nothing") {
    const auto line = build_preset(PresetName::Tdc2Opt, 7);
    MitigationPlan plan;
    plan.widen_zero_bins_to = 0.0;
    plan.clip_wide_bins_at = 1e9;
    plan.crc_step_attenuation = 0.0;
    const auto out = apply_mitigation(line, plan);
    const auto a = characterize_exact(line);
    const auto b = characterize_exact(out);
    CHECK(a.w_inl_pp == doctest::Approx(b.w_inl_pp));
    CHECK(a.sigma_tdc == doctest::Approx(b.sigma_tdc));
}

TEST_CASE("mitigation never increases peak-to-peak dnl on any preset") {
    for (auto name : {PresetName::Tdc1Raw, PresetName::Tdc1Opt, PresetName::Tdc2Raw,
                      PresetName::Tdc2Opt}) {
        for (std::uint64_t seed : {1ull, 7ull, 99ull}) {
            const auto line = build_preset(name, seed);
            const auto rep = characterize_exact(line);
            const auto mit = apply_mitigation(line, preset_plan(name));
            const auto rep2 = characterize_exact(mit);
            const double pp = rep.dnl_range.second - rep.dnl_range.first;
            const double pp2 = rep2.dnl_range.second - rep2.dnl_range.first;
            CHECK(pp2 <= pp + 1e-9);
        }
    }
}

TEST_CASE("generator constants match the shipped config file") {
    const std::string path = std::string(TDCSIM_CONFIG_DIR) + "/presets.json";
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    const auto shipped = nlohmann::json::parse(ss.str());
    const auto code = nlohmann::json::parse(preset_generator_config_json());
    CHECK(shipped == code);
}
