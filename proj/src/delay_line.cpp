#include "tdcsim/delay_line.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace tdcsim {

double DelayLine::span() const {
    return std::accumulate(tap_delays.begin(), tap_delays.end(), 0.0);
}

void DelayLine::validate() const {
    if (tap_delays.size() < 2)
        throw std::invalid_argument("delay line needs at least 2 taps");
    if (!(clock_period > 0.0))
        throw std::invalid_argument("clock_period must be positive");
    for (double t : tap_delays)
        if (t < 0.0 || !std::isfinite(t))
            throw std::invalid_argument("tap delays must be finite and >= 0");
    if (span() < clock_period * (1.0 - 1e-9))
        throw std::invalid_argument("delay chain does not span one clock period");
    if (rms_jitter_ps < 0.0)
        throw std::invalid_argument("rms_jitter_ps must be >= 0");
    for (const auto& tag : crc_tags)
        if (tag.bin_index < 0 || tag.bin_index >= n_bins())
            throw std::invalid_argument("crc tag index out of range");
}

DelayLine build_ideal(int n_bins, double clock_period_ps) {
    if (n_bins < 2) throw std::invalid_argument("n_bins must be >= 2");
    if (!(clock_period_ps > 0.0)) throw std::invalid_argument("clock_period must be > 0");
    DelayLine line;
    line.clock_period = clock_period_ps;
    line.tap_delays.assign(static_cast<std::size_t>(n_bins),
                           clock_period_ps / static_cast<double>(n_bins));
    line.label = "ideal";
    return line;
}

DelayLine inject_defects(const DelayLine& line, const std::vector<Defect>& defects) {
    DelayLine out = line;
    for (const auto& d : defects) {
        if (d.bin_index < 0 || d.bin_index >= out.n_bins())
            throw std::out_of_range("defect bin index out of range");
        if (d.magnitude_ps < 0.0)
            throw std::invalid_argument("defect magnitude must be >= 0");
        switch (d.kind) {
            case DefectKind::UltraWideBin:
                out.tap_delays[static_cast<std::size_t>(d.bin_index)] += d.magnitude_ps;
                break;
            case DefectKind::ZeroBin:
                out.tap_delays[static_cast<std::size_t>(d.bin_index)] = 0.0;
                break;
            case DefectKind::CrcStep:
                // One oversized tap: the cumulative transfer function turns it
                // into a step offset from this code onward.
                out.tap_delays[static_cast<std::size_t>(d.bin_index)] += d.magnitude_ps;
                out.crc_tags.push_back({d.bin_index, d.magnitude_ps, 0.0});
                break;
        }
    }
    return out;
}

void MitigationPlan::validate() const {
    if (widen_zero_bins_to < 0.0)
        throw std::invalid_argument("widen_zero_bins_to must be >= 0");
    if (!(clip_wide_bins_at > widen_zero_bins_to))
        throw std::invalid_argument("clip_wide_bins_at must exceed widen_zero_bins_to");
    if (crc_step_attenuation < 0.0 || crc_step_attenuation > 1.0)
        throw std::invalid_argument("crc_step_attenuation must be in [0,1]");
    if (jitter_after_ps && *jitter_after_ps < 0.0)
        throw std::invalid_argument("jitter_after_ps must be >= 0");
}

DelayLine apply_mitigation(const DelayLine& line, const MitigationPlan& plan) {
    plan.validate();
    DelayLine out = line;

    // CRC regularization first: remove the not-yet-attenuated share of each
    // tagged excess, up to the plan's attenuation level.
    for (auto& tag : out.crc_tags) {
        const double target = std::max(tag.attenuation_applied, plan.crc_step_attenuation);
        const double remove = (target - tag.attenuation_applied) * tag.magnitude_ps;
        auto& tap = out.tap_delays[static_cast<std::size_t>(tag.bin_index)];
        tap = std::max(0.0, tap - remove);
        tag.attenuation_applied = target;
    }

    auto in_scope = [&](int idx) {
        if (!plan.target_bins) return true;
        const auto& t = *plan.target_bins;
        return std::find(t.begin(), t.end(), idx) != t.end();
    };
    if (plan.target_bins)
        for (int idx : *plan.target_bins)
            if (idx < 0 || idx >= out.n_bins())
                throw std::out_of_range("mitigation target bin out of range");

    for (int i = 0; i < out.n_bins(); ++i) {
        if (!in_scope(i)) continue;
        auto& tap = out.tap_delays[static_cast<std::size_t>(i)];
        if (tap < plan.widen_zero_bins_to) tap = plan.widen_zero_bins_to;
        if (tap > plan.clip_wide_bins_at) tap = plan.clip_wide_bins_at;
    }

    if (plan.jitter_after_ps)
        out.rms_jitter_ps = std::min(out.rms_jitter_ps, *plan.jitter_after_ps);

    if (out.span() < out.clock_period * (1.0 - 1e-9))
        throw std::runtime_error("mitigated chain no longer spans the clock period");
    return out;
}

LineQuantizer::LineQuantizer(const DelayLine& line) : period_(line.clock_period) {
    prefix_.resize(line.tap_delays.size() + 1);
    prefix_[0] = 0.0;
    for (std::size_t i = 0; i < line.tap_delays.size(); ++i)
        prefix_[i + 1] = prefix_[i] + line.tap_delays[i];
}

int LineQuantizer::code_for(double phase_ps) const {
    if (phase_ps < 0.0 || phase_ps >= period_)
        throw std::out_of_range("arrival phase outside [0, clock_period)");
    // First prefix strictly above the phase; zero-width bins can never satisfy
    // the strict inequality, so they are skipped.
    auto it = std::upper_bound(prefix_.begin() + 1, prefix_.end(), phase_ps);
    if (it == prefix_.end()) --it;  // guard against fp round-off at the far edge
    return static_cast<int>(it - prefix_.begin()) - 1;
}

double LineQuantizer::center_of(int code) const {
    const auto c = static_cast<std::size_t>(code);
    return prefix_[c] + 0.5 * (prefix_[c + 1] - prefix_[c]);
}

int quantize(const DelayLine& line, double arrival_phase_ps) {
    return LineQuantizer(line).code_for(arrival_phase_ps);
}

double code_to_time(const DelayLine& line, int code) {
    if (code < 0 || code >= line.n_bins())
        throw std::out_of_range("code out of range");
    double prefix = 0.0;
    for (int i = 0; i < code; ++i) prefix += line.tap_delays[static_cast<std::size_t>(i)];
    return prefix + 0.5 * line.tap_delays[static_cast<std::size_t>(code)];
}

std::string delay_line_to_json(const DelayLine& line) {
    nlohmann::json j;
    j["label"] = line.label;
    j["clock_period_ps"] = line.clock_period;
    j["tap_delays_ps"] = line.tap_delays;
    if (line.rms_jitter_ps > 0.0) j["rms_jitter_ps"] = line.rms_jitter_ps;
    if (!line.crc_tags.empty()) {
        auto arr = nlohmann::json::array();
        for (const auto& t : line.crc_tags)
            arr.push_back({{"bin_index", t.bin_index},
                           {"magnitude_ps", t.magnitude_ps},
                           {"attenuation_applied", t.attenuation_applied}});
        j["crc_tags"] = arr;
    }
    return j.dump(2);
}

DelayLine delay_line_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    DelayLine line;
    line.label = j.at("label").get<std::string>();
    line.clock_period = j.at("clock_period_ps").get<double>();
    line.tap_delays = j.at("tap_delays_ps").get<std::vector<double>>();
    line.rms_jitter_ps = j.value("rms_jitter_ps", 0.0);
    if (j.contains("crc_tags"))
        for (const auto& t : j["crc_tags"])
            line.crc_tags.push_back({t.at("bin_index").get<int>(),
                                     t.at("magnitude_ps").get<double>(),
                                     t.value("attenuation_applied", 0.0)});
    line.validate();
    return line;
}

void save_delay_line(const DelayLine& line, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << delay_line_to_json(line) << "\n";
}

DelayLine load_delay_line(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open delay-line file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return delay_line_from_json(ss.str());
}

}  // namespace tdcsim
