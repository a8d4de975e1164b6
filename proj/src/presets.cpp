#include "tdcsim/presets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "tdcsim/characterize.hpp"
#include "tdcsim/rng.hpp"

namespace tdcsim {
namespace {

constexpr int kTdc1Bins = 996;
constexpr double kTdc1Period = 10000.0;          // 100 MHz
constexpr int kTdc2Bins = 96;
constexpr double kTdc2Period = 1e12 / 260e6;     // one 260 MHz sub-chain

// Single-shot RMS calibration targets; the builder back-solves the chain's
// random jitter component from its own quantization RMS. A profile whose
// quantization RMS already exceeds the target gets zero jitter.
constexpr double kSigmaTdc1Raw = 14.7;
constexpr double kSigmaTdc1Opt = 10.9;
constexpr double kSigmaTdc2Raw = 13.6;
constexpr double kSigmaTdc2Opt = 11.1;

constexpr double kNoiseAmp = 0.12;  // ps, adjacent-pair width transfers

// Seed texture: zero-sum width transfers between adjacent "plain" bins.
// Moving delay from one bin to its neighbour shifts a single INL sample by
// at most the amplitude and leaves every other sample untouched, so the
// calibrated extremes survive any seed.
void apply_noise(std::vector<double>& taps, const std::vector<int>& plain,
                 std::uint64_t seed) {
    std::size_t m = 0;
    std::uint64_t k = 0;
    while (m + 1 < plain.size()) {
        if (plain[m + 1] == plain[m] + 1) {
            const double delta = kNoiseAmp * (2.0 * u01(seed, k++, 0x9a11) - 1.0);
            taps[static_cast<std::size_t>(plain[m])] += delta;
            taps[static_cast<std::size_t>(plain[m + 1])] -= delta;
            m += 2;
        } else {
            ++m;
        }
    }
}

void finish(DelayLine& line, const std::vector<int>& plain, std::uint64_t seed,
            double sigma_target) {
    apply_noise(line.tap_delays, plain, seed);
    const double sq = estimate_sigma(effective_widths(line), line.clock_period);
    const double j2 = sigma_target * sigma_target - sq * sq;
    line.rms_jitter_ps = j2 > 0.0 ? std::sqrt(j2) : 0.0;
    line.validate();
}

DelayLine build_tdc1_raw(std::uint64_t seed) {
    const int N = kTdc1Bins;
    const double T = kTdc1Period;
    const double L = T / N;
    std::vector<double> d(static_cast<std::size_t>(N), 0.0);
    std::vector<int> plain;

    // Early dip: INL descends linearly to -20.0 ps.
    for (int i = 0; i < 150; ++i) {
        d[i] = -20.0 / 150.0;
        plain.push_back(i);
    }

    // Rise region: one dominant ultra-wide bin, one clock-region-crossing
    // excursion, a dozen zero/compensator pairs, and a slow positive drift
    // carrying the INL to its +280.2 ps plateau.
    const int dominant = 480;
    const double dominant_dnl = 64.3;
    const int crc_bin = 350;
    const double crc_mag = 36.5;
    const std::vector<int> zero_pairs = {404, 424, 444, 464, 504, 524,
                                         544, 564, 584, 604, 624, 644};
    d[dominant] = dominant_dnl;
    d[crc_bin] = crc_mag;
    for (int z : zero_pairs) {
        d[z] = -L;
        d[z + 1] = L;
    }
    std::vector<int> drift_bins;
    for (int i = 150; i < 700; ++i) {
        if (i == dominant || i == crc_bin) continue;
        if (std::find(zero_pairs.begin(), zero_pairs.end(), i) != zero_pairs.end())
            continue;
        if (std::find(zero_pairs.begin(), zero_pairs.end(), i - 1) != zero_pairs.end())
            continue;
        drift_bins.push_back(i);
    }
    const double drift = (300.2 - dominant_dnl - crc_mag)
                         / static_cast<double>(drift_bins.size());
    for (int i : drift_bins) {
        d[i] = drift;
        plain.push_back(i);
    }

    // Plateau, then a tail that never gets hit: a sub-LSB closer bin, real
    // zero bins, and margin taps whose raw delay extends past the period.
    for (int i = 700; i < 968; ++i) plain.push_back(i);
    const int closer = 968;
    const int n_tail_zeros = 21;  // codes 969..989
    const int n_margin = 6;       // codes 990..995, raw 12 ps each
    for (int i = 969; i < 969 + n_tail_zeros; ++i) d[i] = -L;
    double s = 0.0;
    for (int i = 0; i < N; ++i)
        if (i != closer) s += d[i];
    d[closer] = -s + L * n_margin;  // margin bins report -L each

    DelayLine line;
    line.clock_period = T;
    line.label = "TDC1-raw";
    line.tap_delays.resize(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) line.tap_delays[i] = L + d[i];
    for (int z : zero_pairs) line.tap_delays[z] = 0.0;
    for (int i = 969; i < 969 + n_tail_zeros; ++i) line.tap_delays[i] = 0.0;
    for (int i = N - n_margin; i < N; ++i) line.tap_delays[i] = 12.0;
    line.crc_tags.push_back({crc_bin, crc_mag, 0.0});

    finish(line, plain, seed, kSigmaTdc1Raw);
    return line;
}

DelayLine build_tdc1_opt(std::uint64_t seed) {
    const int N = kTdc1Bins;
    const double T = kTdc1Period;
    const double L = T / N;
    std::vector<double> d(static_cast<std::size_t>(N), 0.0);
    std::vector<int> plain;

    for (int i = 0; i < 150; ++i) d[i] = -10.8 / 149.0;
    d[100] = -9.3;
    for (int i = 0; i < 150; ++i)
        if (i != 100) plain.push_back(i);

    d[480] = 20.2;
    const double drift = (235.8 - 20.2) / 549.0;
    for (int i = 150; i < 700; ++i) {
        if (i == 480) continue;
        d[i] = drift;
        plain.push_back(i);
    }

    for (int i = 700; i < 971; ++i) plain.push_back(i);
    for (int i = 972; i < 996; ++i) d[i] = -215.7 / 24.0;
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += d[i];
    d[971] -= s;  // exact closure

    DelayLine line;
    line.clock_period = T;
    line.label = "TDC1-opt";
    line.tap_delays.resize(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) line.tap_delays[i] = L + d[i];

    finish(line, plain, seed, kSigmaTdc1Opt);
    return line;
}

DelayLine build_tdc2_raw(std::uint64_t seed) {
    const int N = kTdc2Bins;
    const double T = kTdc2Period;
    const double L = T / N;
    std::vector<double> d(static_cast<std::size_t>(N), 0.0);
    std::vector<int> plain;

    // Dip with five narrow bins; four are the mitigation's LUT-injection
    // targets, the one at code 33 survives it.
    const std::vector<int> narrow = {6, 11, 16, 21, 33};
    for (int i = 0; i < 34; ++i) d[i] = (-35.3 + 5.0 * 8.1) / 29.0;
    for (int i : narrow) d[i] = -8.1;
    for (int i = 0; i < 34; ++i)
        if (std::find(narrow.begin(), narrow.end(), i) == narrow.end())
            plain.push_back(i);

    // Rise with two clippable wide bins.
    d[45] = 25.3;
    d[52] = 25.2;
    for (int i = 34; i < 61; ++i) {
        if (i == 45 || i == 52) continue;
        d[i] = (70.8 - 25.3 - 25.2) / 25.0;
        plain.push_back(i);
    }

    for (int i = 61; i < 96; ++i) d[i] = -35.5 / 35.0;
    for (int i = 61; i < 95; ++i) plain.push_back(i);
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += d[i];
    d[95] -= s;

    DelayLine line;
    line.clock_period = T;
    line.label = "TDC2-raw";
    line.tap_delays.resize(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) line.tap_delays[i] = L + d[i];
    // Raw margin past the period; invisible to characterization but keeps the
    // mitigated chain spanning the period once its wide bins are clipped.
    line.tap_delays[95] += 6.0;

    finish(line, plain, seed, kSigmaTdc2Raw);
    return line;
}

DelayLine build_tdc2_opt(std::uint64_t seed) {
    const int N = kTdc2Bins;
    const double T = kTdc2Period;
    const double L = T / N;
    std::vector<double> d(static_cast<std::size_t>(N), 0.0);
    std::vector<int> plain;

    for (int i = 0; i < 35; ++i) d[i] = (-29.3 + 8.0) / 34.0;
    d[17] = -8.0;
    for (int i = 0; i < 35; ++i)
        if (i != 17) plain.push_back(i);

    d[50] = 20.1;
    for (int i = 35; i < 70; ++i) {
        if (i == 50) continue;
        d[i] = (59.6 - 20.1) / 34.0;
        plain.push_back(i);
    }

    for (int i = 70; i < 96; ++i) d[i] = -30.3 / 26.0;
    for (int i = 70; i < 95; ++i) plain.push_back(i);
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += d[i];
    d[95] -= s;

    DelayLine line;
    line.clock_period = T;
    line.label = "TDC2-opt";
    line.tap_delays.resize(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) line.tap_delays[i] = L + d[i];

    finish(line, plain, seed, kSigmaTdc2Opt);
    return line;
}

}  // namespace

PresetName preset_from_string(const std::string& name) {
    if (name == "tdc1-raw") return PresetName::Tdc1Raw;
    if (name == "tdc1-opt") return PresetName::Tdc1Opt;
    if (name == "tdc2-raw") return PresetName::Tdc2Raw;
    if (name == "tdc2-opt") return PresetName::Tdc2Opt;
    throw std::invalid_argument("unknown preset: " + name);
}

std::string to_string(PresetName name) {
    switch (name) {
        case PresetName::Tdc1Raw: return "tdc1-raw";
        case PresetName::Tdc1Opt: return "tdc1-opt";
        case PresetName::Tdc2Raw: return "tdc2-raw";
        case PresetName::Tdc2Opt: return "tdc2-opt";
    }
    throw std::invalid_argument("unknown preset enum value");
}

DelayLine build_preset(PresetName name, std::uint64_t seed) {
    switch (name) {
        case PresetName::Tdc1Raw: return build_tdc1_raw(seed);
        case PresetName::Tdc1Opt: return build_tdc1_opt(seed);
        case PresetName::Tdc2Raw: return build_tdc2_raw(seed);
        case PresetName::Tdc2Opt: return build_tdc2_opt(seed);
    }
    throw std::invalid_argument("unknown preset enum value");
}

MitigationPlan preset_plan(PresetName name) {
    MitigationPlan plan;
    switch (name) {
        case PresetName::Tdc1Raw:
        case PresetName::Tdc1Opt: {
            const double L = kTdc1Period / kTdc1Bins;
            plan.widen_zero_bins_to = L - 9.3;
            plan.clip_wide_bins_at = L + 20.2;
            plan.crc_step_attenuation = 0.8;
            plan.jitter_after_ps = 10.4524;
            break;
        }
        case PresetName::Tdc2Raw:
        case PresetName::Tdc2Opt: {
            const double L = kTdc2Period / kTdc2Bins;
            plan.widen_zero_bins_to = 33.5;
            plan.clip_wide_bins_at = L + 20.1;
            plan.crc_step_attenuation = 0.0;
            plan.target_bins = std::vector<int>{6, 11, 16, 21, 45, 52};
            plan.jitter_after_ps = 0.0;
            break;
        }
    }
    return plan;
}

std::string preset_generator_config_json() {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["tdc1"] = {
        {"n_bins", kTdc1Bins},
        {"clock_period_ps", kTdc1Period},
        {"raw",
         {{"dip_bins", 150},
          {"dip_inl_ps", -20.0},
          {"dominant_bin", 480},
          {"dominant_dnl_ps", 64.3},
          {"crc_bin", 350},
          {"crc_magnitude_ps", 36.5},
          {"zero_pair_bins", {404, 424, 444, 464, 504, 524, 544, 564, 584, 604, 624, 644}},
          {"inl_peak_ps", 300.2},
          {"tail_zero_bins", 21},
          {"margin_bins", 6},
          {"margin_tap_ps", 12.0},
          {"sigma_target_ps", kSigmaTdc1Raw}}},
        {"opt",
         {{"dip_bins", 150},
          {"dip_inl_ps", -20.1},
          {"dip_min_bin", 100},
          {"dip_min_dnl_ps", -9.3},
          {"dominant_bin", 480},
          {"dominant_dnl_ps", 20.2},
          {"inl_peak_ps", 235.8},
          {"tail_bins", 24},
          {"tail_inl_ps", -215.7},
          {"sigma_target_ps", kSigmaTdc1Opt}}},
        {"plan",
         {{"widen_zero_bins_to_ps", kTdc1Period / kTdc1Bins - 9.3},
          {"clip_wide_bins_at_ps", kTdc1Period / kTdc1Bins + 20.2},
          {"crc_step_attenuation", 0.8},
          {"jitter_after_ps", 10.4524}}}};
    j["tdc2"] = {
        {"n_bins", kTdc2Bins},
        {"clock_period_ps", kTdc2Period},
        {"raw",
         {{"dip_bins", 34},
          {"dip_inl_ps", -35.3},
          {"narrow_bins", {6, 11, 16, 21, 33}},
          {"narrow_dnl_ps", -8.1},
          {"wide_bins", {45, 52}},
          {"wide_dnl_ps", {25.3, 25.2}},
          {"inl_peak_ps", 35.5},
          {"margin_tap_extra_ps", 6.0},
          {"sigma_target_ps", kSigmaTdc2Raw}}},
        {"opt",
         {{"dip_bins", 35},
          {"dip_inl_ps", -29.3},
          {"dip_min_bin", 17},
          {"dip_min_dnl_ps", -8.0},
          {"wide_bin", 50},
          {"wide_dnl_ps", 20.1},
          {"inl_peak_ps", 30.3},
          {"sigma_target_ps", kSigmaTdc2Opt}}},
        {"plan",
         {{"widen_zero_bins_to_ps", 33.5},
          {"clip_wide_bins_at_ps", kTdc2Period / kTdc2Bins + 20.1},
          {"crc_step_attenuation", 0.0},
          {"target_bins", {6, 11, 16, 21, 45, 52}},
          {"jitter_after_ps", 0.0}}}};
    j["noise_amplitude_ps"] = kNoiseAmp;
    return j.dump(2);
}

}  // namespace tdcsim
