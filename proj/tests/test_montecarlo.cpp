#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tdcsim/montecarlo.hpp"
#include "tdcsim/presets.hpp"

using namespace tdcsim;
using namespace tdcsim::mc;

namespace {

MCConfig base_cfg() {
    MCConfig cfg;
    cfg.duration_s = 1.0;
    cfg.pair_rate_cps = 1e4;
    cfg.transmission_a = 1.0;
    cfg.transmission_b = 1.0;
    cfg.window_ps = 1000.0;
    cfg.seed = 7;
    return cfg;
}

}  // namespace

TEST_CASE("dark counts follow the configured poisson means") {
    MCConfig cfg = base_cfg();
    cfg.pair_rate_cps = 0.0;
    cfg.dark_a_cps = 1000.0;
    cfg.dark_b_cps = 400.0;
    cfg.duration_s = 10.0;
    const auto [a, b] = generate_events(cfg);
    // 4 sigma around the means 1e4 and 4e3.
    CHECK(std::abs(static_cast<double>(a.size()) - 1e4) < 4.0 * 100.0);
    CHECK(std::abs(static_cast<double>(b.size()) - 4e3) < 4.0 * std::sqrt(4000.0));
    for (const auto& t : a) {
        CHECK(t.truth == Truth::Dark);
        CHECK(t.pair_id == -1);
    }
}

TEST_CASE("noiseless unit-transmission streams are identical pairwise") {
    MCConfig cfg = base_cfg();
    const auto [a, b] = generate_events(cfg);
    REQUIRE(a.size() == b.size());
    CHECK(a.size() > 9000);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].timestamp == b[i].timestamp);
        CHECK(a[i].pair_id == b[i].pair_id);
        CHECK(a[i].bit == b[i].bit);  // bit_error_prob = 0
    }
}

TEST_CASE("survivor counts scale with the transmission product") {
    MCConfig cfg = base_cfg();
    cfg.pair_rate_cps = 1e5;
    cfg.transmission_a = 0.5;
    cfg.transmission_b = 0.4;
    const auto [a, b] = generate_events(cfg);
    const auto m = match_coincidences(a, b, 10.0, cfg.duration_s);
    // E[pairs on both sides] = 1e5 * 0.5 * 0.4 = 2e4
    CHECK(std::abs(static_cast<double>(m.pairs_available) - 2e4) < 4.0 * 180.0);
}

TEST_CASE("streams are sorted and deterministic for a fixed seed") {
    MCConfig cfg = base_cfg();
    cfg.pair_rate_cps = 2e5;
    cfg.sigma_spd_a_ps = 300.0;
    cfg.sigma_spd_b_ps = 150.0;
    cfg.dark_a_cps = 500.0;
    cfg.dark_b_cps = 500.0;
    cfg.bit_error_prob = 0.03;
    const auto [a1, b1] = generate_events(cfg);
    const auto [a2, b2] = generate_events(cfg);
    REQUIRE(a1.size() == a2.size());
    for (std::size_t i = 0; i < a1.size(); ++i) {
        CHECK(a1[i].timestamp == a2[i].timestamp);
        CHECK(a1[i].pair_id == a2[i].pair_id);
        CHECK(a1[i].bit == a2[i].bit);
    }
    for (std::size_t i = 1; i < a1.size(); ++i)
        REQUIRE(a1[i].timestamp >= a1[i - 1].timestamp);
    for (std::size_t i = 1; i < b1.size(); ++i)
        REQUIRE(b1[i].timestamp >= b1[i - 1].timestamp);

    cfg.seed = 8;
    const auto [a3, b3] = generate_events(cfg);
    bool same = a3.size() == a1.size();
    if (same)
        for (std::size_t i = 0; i < a1.size() && same; ++i)
            same = a1[i].timestamp == a3[i].timestamp;
    CHECK(!same);
}

TEST_CASE("apply_tdc keeps readouts within half a bin of the arrival") {
    const auto ideal = build_ideal(100, 1000.0);  // 10 ps lsb
    MCConfig cfg = base_cfg();
    cfg.pair_rate_cps = 5e4;
    const auto [a, b] = generate_events(cfg);
    (void)b;
    const auto out = apply_tdc(a, ideal, PhaseMode::Uniform);
    REQUIRE(out.size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(std::abs(out[i].timestamp - a[i].timestamp) <= 5 + 1);

    CHECK(apply_tdc({}, ideal, PhaseMode::Uniform).empty());
}

TEST_CASE("a wide bin produces readout errors up to half its width") {
    // One 64.3 ps-wide bin in a 10 ps chain: a tag near its edge reads out
    // with an error of at least half the widened bin.
    auto line = build_ideal(996, 10000.0);
    line = inject_defects(line, {{DefectKind::UltraWideBin, 480, 64.3}});
    double left = 0.0;
    for (int i = 0; i < 480; ++i) left += line.tap_delays[static_cast<std::size_t>(i)];
    std::vector<TimeTag> tags;
    tags.push_back({static_cast<std::int64_t>(left + 1.0), 0, Channel::A, Truth::Signal, 0});
    const auto out = apply_tdc(tags, line, PhaseMode::Uniform);
    const double err = std::abs(static_cast<double>(out[0].timestamp) -
                                static_cast<double>(tags[0].timestamp));
    CHECK(err >= 32.0);
}

TEST_CASE("phase-locked offset does not bias the readout") {
    const auto ideal = build_ideal(100, 1000.0);
    MCConfig cfg = base_cfg();
    cfg.pair_rate_cps = 2e4;
    const auto [a, b] = generate_events(cfg);
    (void)b;
    const auto out = apply_tdc(a, ideal, PhaseMode::PhaseLocked, 3.7);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(std::abs(out[i].timestamp - a[i].timestamp) <= 6 + 1);
}

TEST_CASE("matcher: identical streams match fully with no accidentals") {
    MCConfig cfg = base_cfg();
    const auto [a, b] = generate_events(cfg);
    const auto m = match_coincidences(a, b, 100.0, cfg.duration_s);
    CHECK(m.detected_pairs == a.size());
    CHECK(m.accidental_coincidences == 0);
    CHECK(m.eta_hat == doctest::Approx(1.0));
    CHECK(m.qber_hat == doctest::Approx(0.0));

    // window = 0 still matches exactly-equal timestamps.
    const auto m0 = match_coincidences(a, b, 0.0, cfg.duration_s);
    CHECK(m0.detected_pairs == a.size());
}

TEST_CASE("matcher rejects unsorted input") {
    std::vector<TimeTag> bad{{100, 0, Channel::A, Truth::Signal, 0},
                             {50, 1, Channel::A, Truth::Signal, 0}};
    CHECK_THROWS_AS(match_coincidences(bad, {}, 10.0), std::invalid_argument);
}

TEST_CASE("matcher is symmetric under stream exchange") {
    MCConfig cfg = base_cfg();
    cfg.pair_rate_cps = 5e4;
    cfg.sigma_spd_a_ps = 200.0;
    cfg.sigma_spd_b_ps = 100.0;
    cfg.dark_a_cps = 2000.0;
    cfg.dark_b_cps = 3000.0;
    cfg.transmission_a = 0.9;
    cfg.transmission_b = 0.7;
    cfg.bit_error_prob = 0.02;
    const auto [a, b] = generate_events(cfg);
    const auto ab = match_coincidences(a, b, 500.0, cfg.duration_s);
    const auto ba = match_coincidences(b, a, 500.0, cfg.duration_s);
    CHECK(ab.detected_pairs == ba.detected_pairs);
    CHECK(ab.true_coincidences_captured == ba.true_coincidences_captured);
    CHECK(ab.accidental_coincidences == ba.accidental_coincidences);
    CHECK(ab.bit_errors == ba.bit_errors);
    CHECK(ab.pairs_available == ba.pairs_available);
}

TEST_CASE("accidental rate of independent streams matches the matcher closed form") {
    // Two independent poisson streams; sparse regime so greedy consumption
    // corrections are far below statistical resolution. The matcher accepts
    // |tA - tB| <= w, a full window of 2w: expected rate Sa * Sb * 2w.
    MCConfig cfg = base_cfg();
    cfg.pair_rate_cps = 0.0;
    cfg.dark_a_cps = 5e4;
    cfg.dark_b_cps = 5e4;
    cfg.duration_s = 20.0;
    const double w = 5000.0;
    const auto [a, b] = generate_events(cfg);
    const auto m = match_coincidences(a, b, w, cfg.duration_s);
    const double expected = 5e4 * 5e4 * (2.0 * w) / 1e12;  // 25 cps
    const double se = std::sqrt(expected * cfg.duration_s) / cfg.duration_s;
    CHECK(m.accidental_coincidences == m.detected_pairs);
    CHECK(std::abs(m.c_acc_hat_cps - expected) <= 3.0 * se);
    // Within 15% of the analytical accidental formula fed the full width.
    CHECK(std::abs(m.c_acc_hat_cps - expected) <= 0.15 * expected);
    // Accidental bits are fair coins.
    CHECK(std::abs(m.qber_hat - 0.5) <= 4.0 * m.qber_stderr);
}

TEST_CASE("empirical accidental rate grows linearly in the window") {
    MCConfig cfg = base_cfg();
    cfg.pair_rate_cps = 0.0;
    cfg.dark_a_cps = 1e5;
    cfg.dark_b_cps = 1e5;
    cfg.duration_s = 10.0;
    const auto [a, b] = generate_events(cfg);
    // S * w <= 1e-3 over the whole range.
    std::vector<double> windows{1000.0, 2000.0, 4000.0, 8000.0};
    std::vector<double> rates;
    for (double w : windows)
        rates.push_back(match_coincidences(a, b, w, cfg.duration_s).c_acc_hat_cps);
    // Least-squares slope through the origin vs the 2 Sa Sb prediction.
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        num += windows[i] * rates[i];
        den += windows[i] * windows[i];
    }
    const double slope = num / den;
    const double predicted = 2.0 * 1e5 * 1e5 / 1e12;  // cps per ps of half-width
    CHECK(std::abs(slope - predicted) <= 0.10 * predicted);
}

TEST_CASE("no tag is double counted") {
    MCConfig cfg = base_cfg();
    cfg.pair_rate_cps = 3e4;
    cfg.dark_a_cps = 5e3;
    cfg.dark_b_cps = 5e3;
    cfg.sigma_spd_a_ps = 100.0;
    cfg.sigma_spd_b_ps = 100.0;
    const auto [a, b] = generate_events(cfg);
    const auto m = match_coincidences(a, b, 400.0, cfg.duration_s);
    CHECK(m.detected_pairs <= std::min(a.size(), b.size()));
    CHECK(m.true_coincidences_captured + m.accidental_coincidences == m.detected_pairs);
    CHECK(m.true_coincidences_captured <= m.pairs_available);
}

TEST_CASE("validation: gaussian jitter only, eta matches the capture integral") {
    // Model window = 2 x matcher threshold = 6 sigma_sys, so the expected
    // capture is erf(6 / (2 sqrt 2)) = erf(2.1213) = 0.99730. Sparse rates:
    // competitor tags inside the window would otherwise steal true partners.
    MCConfig cfg = base_cfg();
    cfg.pair_rate_cps = 5e4;
    cfg.duration_s = 20.0;
    cfg.sigma_spd_a_ps = 247.4873734;  // sigma_diff = 350
    cfg.sigma_spd_b_ps = 247.4873734;
    cfg.window_ps = 3.0 * 350.0;
    const auto report = validate_against_model(cfg);
    REQUIRE(report.rows.size() == 2);
    const auto& full = report.rows[0];
    CHECK(full.convention == "full_width");
    CHECK(full.eta_model == doctest::Approx(0.99730).epsilon(1e-4));
    CHECK(std::abs(full.z_eta) < 3.0);
    CHECK(std::abs(report.empirical.eta_hat - 0.99730) < 5e-4);
    // The one-sided reading underestimates the matcher's acceptance.
    const auto& one = report.rows[1];
    CHECK(one.eta_model < full.eta_model);
}

TEST_CASE("validation: degenerate noiseless config gives eta 1 and zero z-scores") {
    MCConfig cfg = base_cfg();
    cfg.pair_rate_cps = 2e4;
    cfg.window_ps = 50.0;
    const auto report = validate_against_model(cfg);
    CHECK(report.empirical.eta_hat == doctest::Approx(1.0));
    CHECK(report.empirical.accidental_coincidences == 0);
    const auto& full = report.rows[0];
    CHECK(full.z_eta == doctest::Approx(0.0));
    CHECK(full.z_c_acc == doctest::Approx(0.0).scale(1.0));
    CHECK(full.qber_conservative);
}

TEST_CASE("validation: zero darks, zero error, wide window gives zero qber") {
    MCConfig cfg = base_cfg();
    cfg.pair_rate_cps = 5e4;
    cfg.sigma_spd_a_ps = 50.0;
    cfg.sigma_spd_b_ps = 50.0;
    cfg.window_ps = 2000.0;
    const auto report = validate_against_model(cfg);
    CHECK(report.empirical.qber_hat == doctest::Approx(0.0));
    CHECK(report.empirical.eta_hat > 0.999);
}

TEST_CASE("time tag csv round trips exactly") {
    MCConfig cfg = base_cfg();
    cfg.pair_rate_cps = 2e4;
    cfg.dark_a_cps = 1e3;
    cfg.dark_b_cps = 1e3;
    cfg.sigma_spd_a_ps = 120.0;
    cfg.sigma_spd_b_ps = 120.0;
    cfg.bit_error_prob = 0.05;
    const auto [a, b] = generate_events(cfg);
    const std::string path =
        std::filesystem::temp_directory_path() / "tdcsim_tags.csv";
    export_time_tags(a, b, cfg, path);
    const auto [a2, b2] = import_time_tags(path);
    REQUIRE(a2.size() == a.size());
    REQUIRE(b2.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a2[i].timestamp == a[i].timestamp);
        CHECK(a2[i].pair_id == a[i].pair_id);
        CHECK(a2[i].truth == a[i].truth);
        CHECK(a2[i].bit == a[i].bit);
    }
    const auto m1 = match_coincidences(a, b, 500.0, cfg.duration_s);
    const auto m2 = match_coincidences(a2, b2, 500.0, cfg.duration_s);
    CHECK(m1.detected_pairs == m2.detected_pairs);
    CHECK(m1.bit_errors == m2.bit_errors);
    std::filesystem::remove(path);
}

TEST_CASE("derive_params mirrors the configuration") {
    MCConfig cfg = base_cfg();
    cfg.pair_rate_cps = 1e6;
    cfg.transmission_a = 0.5;
    cfg.transmission_b = 0.25;
    cfg.dark_a_cps = 100.0;
    cfg.dark_b_cps = 200.0;
    cfg.sigma_spd_a_ps = 30.0;
    cfg.sigma_spd_b_ps = 40.0;
    cfg.bit_error_prob = 0.0123;
    cfg.window_ps = 321.0;
    cfg.tdc_b = build_preset(PresetName::Tdc1Raw, 7);
    const auto p = derive_params(cfg);
    CHECK(p.delta_t0 == doctest::Approx(642.0));
    CHECK(p.sigma_spd == doctest::Approx(50.0));
    CHECK(p.s_a_sig == doctest::Approx(5e5));
    CHECK(p.s_b_sig == doctest::Approx(2.5e5));
    CHECK(p.c_true == doctest::Approx(1.25e5));
    CHECK(p.e_base == doctest::Approx(0.0123));
    const auto rep = characterize_exact(*cfg.tdc_b);
    CHECK(p.w_inl_pp == doctest::Approx(rep.w_inl_pp));
    CHECK(p.sigma_tdc == doctest::Approx(rep.sigma_tdc));
}
