#include "tdcsim/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "tdcsim/rng.hpp"

namespace tdcsim::mc {
namespace {

constexpr double kChunkSeconds = 1.0 / 16.0;
constexpr double kJitterClampSigmas = 8.0;

// rng salts
constexpr std::uint64_t kSaltPairCount = 0x01;
constexpr std::uint64_t kSaltPairPos = 0x02;
constexpr std::uint64_t kSaltSurviveA = 0x03;
constexpr std::uint64_t kSaltSurviveB = 0x04;
constexpr std::uint64_t kSaltJitterA = 0x05;
constexpr std::uint64_t kSaltJitterB = 0x06;
constexpr std::uint64_t kSaltBit = 0x07;
constexpr std::uint64_t kSaltBitErr = 0x08;
constexpr std::uint64_t kSaltDarkCountA = 0x09;
constexpr std::uint64_t kSaltDarkCountB = 0x0a;
constexpr std::uint64_t kSaltDarkPosA = 0x0b;
constexpr std::uint64_t kSaltDarkPosB = 0x0c;
constexpr std::uint64_t kSaltDarkBitA = 0x0d;
constexpr std::uint64_t kSaltDarkBitB = 0x0e;
constexpr std::uint64_t kSaltTdcJitter = 0x0f;

bool tag_less(const TimeTag& x, const TimeTag& y) {
    if (x.timestamp != y.timestamp) return x.timestamp < y.timestamp;
    if (x.truth != y.truth) return x.truth < y.truth;
    return x.pair_id < y.pair_id;
}

std::int64_t round_clamp(double t) {
    if (t < 0.0) return 0;
    return static_cast<std::int64_t>(std::llround(t));
}

double clamped_gauss(std::uint64_t seed, std::uint64_t ctr, std::uint64_t salt) {
    // Unbounded tails could leak events past the chunk merge guard; the
    // truncation bias is invisible at the statistics we test.
    return std::clamp(gauss01(seed, ctr, salt), -kJitterClampSigmas, kJitterClampSigmas);
}

}  // namespace

void MCConfig::validate() const {
    if (!(duration_s > 0.0)) throw std::invalid_argument("duration must be positive");
    if (pair_rate_cps < 0.0) throw std::invalid_argument("pair_rate must be >= 0");
    for (double p : {transmission_a, transmission_b})
        if (p < 0.0 || p > 1.0) throw std::invalid_argument("transmissions must be in [0,1]");
    for (double v : {sigma_spd_a_ps, sigma_spd_b_ps, dark_a_cps, dark_b_cps, window_ps,
                     phase_offset_ps})
        if (v < 0.0) throw std::invalid_argument("mc config values must be >= 0");
    if (bit_error_prob < 0.0 || bit_error_prob > 1.0)
        throw std::invalid_argument("bit_error_prob must be in [0,1]");
    if (tdc_a) tdc_a->validate();
    if (tdc_b) tdc_b->validate();
}

std::pair<std::vector<TimeTag>, std::vector<TimeTag>> generate_events(const MCConfig& cfg) {
    cfg.validate();
    const double chunk_ps = kChunkSeconds * 1e12;
    const auto n_chunks = static_cast<std::uint64_t>(
        std::ceil(cfg.duration_s / kChunkSeconds - 1e-12));
    const double end_ps = cfg.duration_s * 1e12;
    const double guard = kJitterClampSigmas * std::max(cfg.sigma_spd_a_ps, cfg.sigma_spd_b_ps)
                         + 1.0;

    // Pass 1: pair counts per chunk fix the global pair-id layout.
    std::vector<std::uint64_t> pair_count(n_chunks), pair_base(n_chunks);
    std::uint64_t total_pairs = 0;
    for (std::uint64_t k = 0; k < n_chunks; ++k) {
        const double lo = k * kChunkSeconds;
        const double hi = std::min(cfg.duration_s, lo + kChunkSeconds);
        pair_count[k] = poisson(cfg.pair_rate_cps * (hi - lo), cfg.seed, k, kSaltPairCount);
        pair_base[k] = total_pairs;
        total_pairs += pair_count[k];
    }

    std::vector<TimeTag> out_a, out_b;
    out_a.reserve(static_cast<std::size_t>(total_pairs * cfg.transmission_a
                                           + cfg.dark_a_cps * cfg.duration_s + 64));
    out_b.reserve(static_cast<std::size_t>(total_pairs * cfg.transmission_b
                                           + cfg.dark_b_cps * cfg.duration_s + 64));
    std::vector<TimeTag> carry_a, carry_b, chunk_a, chunk_b;
    std::vector<double> positions;

    auto emit = [&](std::vector<TimeTag>& out, std::vector<TimeTag>& carry,
                    std::vector<TimeTag>& chunk, double safe_before) {
        chunk.insert(chunk.end(), carry.begin(), carry.end());
        carry.clear();
        std::sort(chunk.begin(), chunk.end(), tag_less);
        for (const auto& tag : chunk) {
            if (static_cast<double>(tag.timestamp) < safe_before)
                out.push_back(tag);
            else
                carry.push_back(tag);
        }
        chunk.clear();
    };

    for (std::uint64_t k = 0; k < n_chunks; ++k) {
        const double chunk_start = k * chunk_ps;
        const double chunk_len = std::min(end_ps - chunk_start, chunk_ps);

        positions.resize(pair_count[k]);
        for (std::uint64_t i = 0; i < pair_count[k]; ++i)
            positions[i] = chunk_start
                           + chunk_len * u01(cfg.seed, (k << 32) ^ i, kSaltPairPos);
        std::sort(positions.begin(), positions.end());

        for (std::uint64_t i = 0; i < pair_count[k]; ++i) {
            const std::uint64_t id = pair_base[k] + i;
            const double t_emit = positions[i];
            const bool bit_a = u01(cfg.seed, id, kSaltBit) < 0.5;
            const bool flip = u01(cfg.seed, id, kSaltBitErr) < cfg.bit_error_prob;
            if (u01(cfg.seed, id, kSaltSurviveA) < cfg.transmission_a) {
                const double t = t_emit + cfg.sigma_spd_a_ps
                                              * clamped_gauss(cfg.seed, id, kSaltJitterA);
                chunk_a.push_back({round_clamp(t), static_cast<std::int64_t>(id),
                                   Channel::A, Truth::Signal, bit_a ? std::uint8_t{1}
                                                                    : std::uint8_t{0}});
            }
            if (u01(cfg.seed, id, kSaltSurviveB) < cfg.transmission_b) {
                const double t = t_emit + cfg.sigma_spd_b_ps
                                              * clamped_gauss(cfg.seed, id, kSaltJitterB);
                const bool bit_b = bit_a != flip;
                chunk_b.push_back({round_clamp(t), static_cast<std::int64_t>(id),
                                   Channel::B, Truth::Signal, bit_b ? std::uint8_t{1}
                                                                    : std::uint8_t{0}});
            }
        }

        const std::uint64_t darks_a =
            poisson(cfg.dark_a_cps * chunk_len * 1e-12, cfg.seed, k, kSaltDarkCountA);
        for (std::uint64_t i = 0; i < darks_a; ++i) {
            const double t = chunk_start + chunk_len * u01(cfg.seed, (k << 32) ^ i, kSaltDarkPosA);
            const bool bit = u01(cfg.seed, (k << 32) ^ i, kSaltDarkBitA) < 0.5;
            chunk_a.push_back({round_clamp(t), -1, Channel::A, Truth::Dark,
                               bit ? std::uint8_t{1} : std::uint8_t{0}});
        }
        const std::uint64_t darks_b =
            poisson(cfg.dark_b_cps * chunk_len * 1e-12, cfg.seed, k, kSaltDarkCountB);
        for (std::uint64_t i = 0; i < darks_b; ++i) {
            const double t = chunk_start + chunk_len * u01(cfg.seed, (k << 32) ^ i, kSaltDarkPosB);
            const bool bit = u01(cfg.seed, (k << 32) ^ i, kSaltDarkBitB) < 0.5;
            chunk_b.push_back({round_clamp(t), -1, Channel::B, Truth::Dark,
                               bit ? std::uint8_t{1} : std::uint8_t{0}});
        }

        // Events jittered past (chunk end - guard) can still be preceded by
        // next-chunk events, so they wait in the carry buffer.
        const double safe = chunk_start + chunk_len - guard;
        emit(out_a, carry_a, chunk_a, safe);
        emit(out_b, carry_b, chunk_b, safe);
    }
    const double flush = end_ps + guard + chunk_ps;
    emit(out_a, carry_a, chunk_a, flush);
    emit(out_b, carry_b, chunk_b, flush);
    return {std::move(out_a), std::move(out_b)};
}

std::vector<TimeTag> apply_tdc(const std::vector<TimeTag>& stream, const DelayLine& line,
                               PhaseMode mode, double phase_offset_ps, std::uint64_t seed) {
    line.validate();
    for (std::size_t i = 1; i < stream.size(); ++i)
        if (stream[i - 1].timestamp > stream[i].timestamp)
            throw std::invalid_argument("apply_tdc requires a time-sorted stream");

    const double period = line.clock_period;
    const double offset = mode == PhaseMode::PhaseLocked ? phase_offset_ps : 0.0;
    const LineQuantizer q(line);
    std::vector<TimeTag> out;
    out.reserve(stream.size());
    std::uint64_t idx = 0;
    for (const auto& tag : stream) {
        double t = static_cast<double>(tag.timestamp);
        if (line.rms_jitter_ps > 0.0)
            t += line.rms_jitter_ps * clamped_gauss(seed, idx, kSaltTdcJitter);
        ++idx;
        const double shifted = t + offset;
        double epoch = std::floor(shifted / period);
        double phase = shifted - epoch * period;
        if (phase < 0.0) {  // fp guard at epoch boundaries
            phase += period;
            epoch -= 1.0;
        }
        if (phase >= period) {
            phase -= period;
            epoch += 1.0;
        }
        const int code = q.code_for(phase);
        const double readout = epoch * period + q.center_of(code) - offset;
        TimeTag copy = tag;
        copy.timestamp = round_clamp(readout);
        out.push_back(copy);
    }
    if (line.rms_jitter_ps > 0.0) std::sort(out.begin(), out.end(), tag_less);
    return out;
}

EmpiricalMetrics match_coincidences(const std::vector<TimeTag>& a,
                                    const std::vector<TimeTag>& b, double window_ps,
                                    double duration_s) {
    if (window_ps < 0.0) throw std::invalid_argument("window must be >= 0");
    for (const auto* s : {&a, &b})
        for (std::size_t i = 1; i < s->size(); ++i)
            if ((*s)[i - 1].timestamp > (*s)[i].timestamp)
                throw std::invalid_argument("match_coincidences requires sorted streams");

    const auto window = static_cast<std::int64_t>(std::llround(window_ps));
    EmpiricalMetrics m;
    m.n_a = a.size();
    m.n_b = b.size();

    std::vector<char> consumed(b.size(), 0);
    std::size_t lo = 0;
    for (const auto& ta : a) {
        while (lo < b.size() &&
               (consumed[lo] || b[lo].timestamp < ta.timestamp - window))
            ++lo;
        std::size_t best = b.size();
        std::int64_t best_dist = window + 1;
        for (std::size_t j = lo; j < b.size() && b[j].timestamp <= ta.timestamp + window;
             ++j) {
            if (consumed[j]) continue;
            const std::int64_t dist = std::llabs(b[j].timestamp - ta.timestamp);
            if (dist < best_dist) {  // strict: ties keep the earlier B
                best_dist = dist;
                best = j;
            }
        }
        if (best == b.size()) continue;
        consumed[best] = 1;
        ++m.detected_pairs;
        const auto& tb = b[best];
        const bool true_pair = ta.truth == Truth::Signal && tb.truth == Truth::Signal &&
                               ta.pair_id == tb.pair_id;
        if (true_pair)
            ++m.true_coincidences_captured;
        else
            ++m.accidental_coincidences;
        if (ta.bit != tb.bit) ++m.bit_errors;
    }

    // Ground-truth denominator for the capture fraction: pairs whose photons
    // are present on both sides.
    std::vector<std::int64_t> ids_a, ids_b;
    ids_a.reserve(a.size());
    ids_b.reserve(b.size());
    for (const auto& t : a)
        if (t.pair_id >= 0) ids_a.push_back(t.pair_id);
    for (const auto& t : b)
        if (t.pair_id >= 0) ids_b.push_back(t.pair_id);
    std::sort(ids_a.begin(), ids_a.end());
    std::sort(ids_b.begin(), ids_b.end());
    std::vector<std::int64_t> both;
    std::set_intersection(ids_a.begin(), ids_a.end(), ids_b.begin(), ids_b.end(),
                          std::back_inserter(both));
    m.pairs_available = both.size();

    if (duration_s <= 0.0) {
        std::int64_t tmin = 0, tmax = 0;
        bool any = false;
        for (const auto* s : {&a, &b}) {
            if (s->empty()) continue;
            if (!any) {
                tmin = s->front().timestamp;
                tmax = s->back().timestamp;
                any = true;
            } else {
                tmin = std::min(tmin, s->front().timestamp);
                tmax = std::max(tmax, s->back().timestamp);
            }
        }
        duration_s = any ? static_cast<double>(tmax - tmin) * 1e-12 : 0.0;
    }
    m.duration_s = duration_s;

    if (m.pairs_available > 0) {
        m.eta_hat = static_cast<double>(m.true_coincidences_captured) /
                    static_cast<double>(m.pairs_available);
        m.eta_stderr = std::sqrt(std::max(m.eta_hat * (1.0 - m.eta_hat), 0.0) /
                                 static_cast<double>(m.pairs_available));
    }
    if (duration_s > 0.0) {
        m.c_acc_hat_cps = static_cast<double>(m.accidental_coincidences) / duration_s;
        m.c_acc_stderr_cps =
            std::sqrt(static_cast<double>(m.accidental_coincidences)) / duration_s;
    }
    if (m.detected_pairs > 0) {
        m.qber_hat = static_cast<double>(m.bit_errors) /
                     static_cast<double>(m.detected_pairs);
        m.qber_stderr = std::sqrt(std::max(m.qber_hat * (1.0 - m.qber_hat), 0.0) /
                                  static_cast<double>(m.detected_pairs));
    }
    return m;
}

qkd::QkdParams derive_params(const MCConfig& cfg) {
    qkd::QkdParams p;
    // Coincidence-spread convention: sigma_spd is the width of the A-B time
    // difference, and the model window is the matcher's full width.
    p.delta_t0 = 2.0 * cfg.window_ps;
    p.sigma_spd = std::hypot(cfg.sigma_spd_a_ps, cfg.sigma_spd_b_ps);
    p.sigma_other = 0.0;
    double var_tdc = 0.0, w_pp = 0.0;
    for (const auto& line : {cfg.tdc_a, cfg.tdc_b}) {
        if (!line) continue;
        const auto rep = characterize_exact(*line);
        var_tdc += rep.sigma_tdc * rep.sigma_tdc;
        w_pp += rep.w_inl_pp;
    }
    p.sigma_tdc = std::sqrt(var_tdc);
    p.w_inl_pp = w_pp;
    p.s_a_sig = cfg.pair_rate_cps * cfg.transmission_a;
    p.s_b_sig = cfg.pair_rate_cps * cfg.transmission_b;
    p.d_a = cfg.dark_a_cps;
    p.d_b = cfg.dark_b_cps;
    p.c_true = cfg.pair_rate_cps * cfg.transmission_a * cfg.transmission_b;
    p.e_base = cfg.bit_error_prob;
    return p;
}

namespace {

BridgeRow bridge_row(const char* name, qkd::QkdParams params, double delta_t0,
                     const EmpiricalMetrics& m) {
    params.delta_t0 = delta_t0;
    const auto point = qkd::evaluate(params);
    BridgeRow row;
    row.convention = name;
    row.delta_t0_ps = delta_t0;
    row.eta_model = point.eta_coin;
    row.z_eta = m.eta_stderr > 0.0 ? (m.eta_hat - point.eta_coin) / m.eta_stderr : 0.0;
    row.c_acc_model_cps = point.c_acc;
    row.z_c_acc = m.c_acc_stderr_cps > 0.0
                      ? (m.c_acc_hat_cps - point.c_acc) / m.c_acc_stderr_cps
                      : 0.0;
    row.qber_model = point.qber;
    row.qber_conservative = point.qber >= m.qber_hat - 3.0 * m.qber_stderr;
    return row;
}

}  // namespace

ValidationReport validate_against_model(const MCConfig& cfg) {
    return validate_against_model(cfg, derive_params(cfg));
}

ValidationReport validate_against_model(const MCConfig& cfg, const qkd::QkdParams& params) {
    auto [a, b] = generate_events(cfg);
    if (cfg.tdc_a)
        a = apply_tdc(a, *cfg.tdc_a, cfg.phase_mode, cfg.phase_offset_ps, cfg.seed ^ 0xA);
    if (cfg.tdc_b)
        b = apply_tdc(b, *cfg.tdc_b, cfg.phase_mode, cfg.phase_offset_ps, cfg.seed ^ 0xB);

    ValidationReport report;
    report.empirical = match_coincidences(a, b, cfg.window_ps, cfg.duration_s);
    report.params = params;
    // Both readings of the window symbol are reported side by side; the
    // full-width row is the convention the matcher actually implements.
    report.rows.push_back(
        bridge_row("full_width", params, 2.0 * cfg.window_ps, report.empirical));
    report.rows.push_back(
        bridge_row("one_sided", params, cfg.window_ps, report.empirical));
    return report;
}

std::string validation_to_json(const ValidationReport& report) {
    nlohmann::json j;
    const auto& m = report.empirical;
    j["empirical"] = {{"n_a", m.n_a},
                      {"n_b", m.n_b},
                      {"pairs_available", m.pairs_available},
                      {"detected_pairs", m.detected_pairs},
                      {"true_coincidences_captured", m.true_coincidences_captured},
                      {"accidental_coincidences", m.accidental_coincidences},
                      {"duration_s", m.duration_s},
                      {"eta_hat", m.eta_hat},
                      {"eta_stderr", m.eta_stderr},
                      {"c_acc_hat_cps", m.c_acc_hat_cps},
                      {"c_acc_stderr_cps", m.c_acc_stderr_cps},
                      {"qber_hat", m.qber_hat},
                      {"qber_stderr", m.qber_stderr}};
    auto rows = nlohmann::json::array();
    for (const auto& r : report.rows)
        rows.push_back({{"convention", r.convention},
                        {"delta_t0_ps", r.delta_t0_ps},
                        {"eta_model", r.eta_model},
                        {"z_eta", r.z_eta},
                        {"c_acc_model_cps", r.c_acc_model_cps},
                        {"z_c_acc", r.z_c_acc},
                        {"qber_model", r.qber_model},
                        {"qber_conservative", r.qber_conservative}});
    j["bridges"] = std::move(rows);
    return j.dump(2);
}

std::string validation_to_text(const ValidationReport& report) {
    std::ostringstream out;
    const auto& m = report.empirical;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "empirical: eta=%.6f+-%.6f c_acc=%.4f+-%.4f cps qber=%.6f+-%.6f\n",
                  m.eta_hat, m.eta_stderr, m.c_acc_hat_cps, m.c_acc_stderr_cps, m.qber_hat,
                  m.qber_stderr);
    out << buf;
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf,
                      "%-10s dt0=%.1f ps eta_model=%.6f (z=%+.2f) c_acc_model=%.4f cps "
                      "(z=%+.2f) qber_model=%.6f conservative=%s\n",
                      r.convention.c_str(), r.delta_t0_ps, r.eta_model, r.z_eta,
                      r.c_acc_model_cps, r.z_c_acc, r.qber_model,
                      r.qber_conservative ? "yes" : "no");
        out << buf;
    }
    return out.str();
}

void export_time_tags(const std::vector<TimeTag>& a, const std::vector<TimeTag>& b,
                      const MCConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    nlohmann::json echo{{"duration_s", cfg.duration_s},
                        {"pair_rate_cps", cfg.pair_rate_cps},
                        {"window_ps", cfg.window_ps},
                        {"seed", cfg.seed}};
    out << "# mc " << echo.dump() << "\n";
    out << "# channel,timestamp_ps,truth,pair_id,bit\n";
    auto dump = [&](const std::vector<TimeTag>& s, char ch) {
        for (const auto& t : s)
            out << ch << "," << t.timestamp << ","
                << (t.truth == Truth::Signal ? "signal" : "dark") << "," << t.pair_id
                << "," << static_cast<int>(t.bit) << "\n";
    };
    dump(a, 'A');
    dump(b, 'B');
}

std::pair<std::vector<TimeTag>, std::vector<TimeTag>> import_time_tags(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open time-tag file: " + path);
    std::vector<TimeTag> a, b;
    std::string row;
    while (std::getline(in, row)) {
        if (row.empty() || row[0] == '#') continue;
        std::istringstream rs(row);
        std::string ch, ts, truth, pid, bit;
        if (!std::getline(rs, ch, ',') || !std::getline(rs, ts, ',') ||
            !std::getline(rs, truth, ',') || !std::getline(rs, pid, ',') ||
            !std::getline(rs, bit))
            throw std::runtime_error("malformed time-tag row: " + row);
        TimeTag tag;
        tag.timestamp = std::stoll(ts);
        tag.pair_id = std::stoll(pid);
        tag.bit = static_cast<std::uint8_t>(std::stoi(bit));
        if (truth == "signal") tag.truth = Truth::Signal;
        else if (truth == "dark") tag.truth = Truth::Dark;
        else throw std::runtime_error("unknown truth value: " + truth);
        if (tag.truth == Truth::Dark && tag.pair_id >= 0)
            throw std::runtime_error("dark tag with pair id: " + row);
        if (tag.truth == Truth::Signal && tag.pair_id < 0)
            throw std::runtime_error("signal tag without pair id: " + row);
        if (ch == "A") {
            tag.channel = Channel::A;
            a.push_back(tag);
        } else if (ch == "B") {
            tag.channel = Channel::B;
            b.push_back(tag);
        } else {
            throw std::runtime_error("unknown channel: " + ch);
        }
    }
    return {std::move(a), std::move(b)};
}

std::string metrics_to_json(const EmpiricalMetrics& m) {
    nlohmann::json j{{"n_a", m.n_a},
                     {"n_b", m.n_b},
                     {"pairs_available", m.pairs_available},
                     {"detected_pairs", m.detected_pairs},
                     {"true_coincidences_captured", m.true_coincidences_captured},
                     {"accidental_coincidences", m.accidental_coincidences},
                     {"bit_errors", m.bit_errors},
                     {"duration_s", m.duration_s},
                     {"eta_hat", m.eta_hat},
                     {"eta_stderr", m.eta_stderr},
                     {"c_acc_hat_cps", m.c_acc_hat_cps},
                     {"c_acc_stderr_cps", m.c_acc_stderr_cps},
                     {"qber_hat", m.qber_hat},
                     {"qber_stderr", m.qber_stderr}};
    return j.dump(2);
}

}  // namespace tdcsim::mc
