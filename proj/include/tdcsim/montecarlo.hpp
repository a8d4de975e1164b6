#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tdcsim/characterize.hpp"
#include "tdcsim/delay_line.hpp"
#include "tdcsim/qkd.hpp"

namespace tdcsim::mc {

enum class Channel : std::uint8_t { A, B };
enum class Truth : std::uint8_t { Signal, Dark };

/// One detection event. Timestamps are 64-bit integer picoseconds. Signal
/// tags carry the ground-truth pair id; dark tags carry -1. Every tag carries
/// the key bit it would contribute after sifting: signal pairs hold
/// correlated bits (flipped with the configured error probability), dark
/// tags hold independent fair bits.
struct TimeTag {
    std::int64_t timestamp = 0;  // ps
    std::int64_t pair_id = -1;   // -1 for Dark
    Channel channel = Channel::A;
    Truth truth = Truth::Signal;
    std::uint8_t bit = 0;
};

struct MCConfig {
    double duration_s = 0.0;
    double pair_rate_cps = 0.0;
    double transmission_a = 1.0;
    double transmission_b = 1.0;
    double sigma_spd_a_ps = 0.0;
    double sigma_spd_b_ps = 0.0;
    double dark_a_cps = 0.0;
    double dark_b_cps = 0.0;
    double bit_error_prob = 0.0;
    std::optional<DelayLine> tdc_a;
    std::optional<DelayLine> tdc_b;
    PhaseMode phase_mode = PhaseMode::Uniform;
    double phase_offset_ps = 0.0;  // PhaseLocked source-vs-TDC clock offset
    double window_ps = 0.0;        // matcher half-width threshold |tA - tB| <= window
    std::uint64_t seed = 0;

    void validate() const;
};

struct EmpiricalMetrics {
    std::uint64_t n_a = 0;
    std::uint64_t n_b = 0;
    std::uint64_t pairs_available = 0;  // pair ids present in both streams
    std::uint64_t detected_pairs = 0;   // all matched coincidences
    std::uint64_t true_coincidences_captured = 0;
    std::uint64_t accidental_coincidences = 0;
    std::uint64_t bit_errors = 0;
    double duration_s = 0.0;
    double eta_hat = 0.0;
    double eta_stderr = 0.0;
    double c_acc_hat_cps = 0.0;
    double c_acc_stderr_cps = 0.0;
    double qber_hat = 0.0;
    double qber_stderr = 0.0;
};

/// Poisson pair emissions with per-arm survival, Gaussian detector jitter
/// (truncated at 8 sigma) and independent per-arm dark processes. Streams
/// come back time-sorted; identical (cfg, seed) reproduce byte-identical
/// streams.
std::pair<std::vector<TimeTag>, std::vector<TimeTag>> generate_events(const MCConfig& cfg);

/// Quantizes each timestamp through the delay line: coarse epoch plus
/// bin-center readout of the arrival phase. The line's rms jitter is added to
/// the arrival before quantization. PhaseLocked mode shifts the probed phase
/// by a fixed offset without biasing the readout.
std::vector<TimeTag> apply_tdc(const std::vector<TimeTag>& stream, const DelayLine& line,
                               PhaseMode mode, double phase_offset_ps = 0.0,
                               std::uint64_t seed = 0);

/// Greedy nearest-neighbour matching in time order: each A tag takes the
/// closest unconsumed B tag within the window (ties to the earlier B); every
/// tag participates in at most one coincidence.
EmpiricalMetrics match_coincidences(const std::vector<TimeTag>& a,
                                    const std::vector<TimeTag>& b, double window_ps,
                                    double duration_s = 0.0);

/// Analytical-model parameters implied by an MC configuration under the
/// full-width window convention (model window = 2 x matcher threshold).
qkd::QkdParams derive_params(const MCConfig& cfg);

struct BridgeRow {
    std::string convention;  // "full_width" or "one_sided"
    double delta_t0_ps = 0.0;
    double eta_model = 0.0;
    double z_eta = 0.0;
    double c_acc_model_cps = 0.0;
    double z_c_acc = 0.0;
    double qber_model = 0.0;
    bool qber_conservative = false;  // qber_model >= qber_hat - 3 stderr
};

struct ValidationReport {
    EmpiricalMetrics empirical;
    qkd::QkdParams params;  // full-width convention
    std::vector<BridgeRow> rows;
};

/// Runs the event-level simulation and compares measured eta, accidental rate
/// and QBER against the analytical chain under both window conventions.
ValidationReport validate_against_model(const MCConfig& cfg);
ValidationReport validate_against_model(const MCConfig& cfg, const qkd::QkdParams& params);

std::string validation_to_json(const ValidationReport& report);
std::string validation_to_text(const ValidationReport& report);

// Time-tag CSV: header comment with config echo and seed, then
// "channel,timestamp_ps,truth,pair_id,bit" rows. Round-trips exactly.
void export_time_tags(const std::vector<TimeTag>& a, const std::vector<TimeTag>& b,
                      const MCConfig& cfg, const std::string& path);
std::pair<std::vector<TimeTag>, std::vector<TimeTag>> import_time_tags(
    const std::string& path);

std::string metrics_to_json(const EmpiricalMetrics& m);

}  // namespace tdcsim::mc
