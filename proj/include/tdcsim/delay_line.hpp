#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tdcsim {

/// Clock-region-crossing annotation: one oversized tap whose excess delay can
/// later be attenuated by placement-style mitigation. `attenuation_applied`
/// tracks how much of the original excess has already been removed, which
/// keeps repeated mitigation idempotent.
struct CrcTag {
    int bin_index = 0;
    double magnitude_ps = 0.0;
    double attenuation_applied = 0.0;
};

/// A tapped-delay-line TDC model: per-tap propagation delays in picoseconds.
/// The chain must span at least one clock period so every arrival phase lands
/// in some bin. Zero-width taps are legal and model unobservable bins.
///
/// `rms_jitter_ps` is the chain's random single-shot timing component
/// (clock skew, electronics noise). It does not move code boundaries; it only
/// enters the reported single-shot precision and event-level timestamping.
struct DelayLine {
    std::vector<double> tap_delays;  // ps
    double clock_period = 0.0;       // ps
    std::string label;
    double rms_jitter_ps = 0.0;      // ps
    std::vector<CrcTag> crc_tags;

    int n_bins() const { return static_cast<int>(tap_delays.size()); }
    double span() const;
    double lsb_ideal() const { return clock_period / static_cast<double>(tap_delays.size()); }

    /// Throws std::invalid_argument if any invariant is broken.
    void validate() const;
};

enum class DefectKind { UltraWideBin, ZeroBin, CrcStep };

struct Defect {
    DefectKind kind = DefectKind::UltraWideBin;
    int bin_index = 0;
    double magnitude_ps = 0.0;  // ignored for ZeroBin
};

/// Delay-profile transform abstracting LUT-based delay injection (floor for
/// near-zero bins), bin clipping, and clock-region regularization (fractional
/// removal of tagged CRC excess). When `target_bins` is set, floor and cap
/// apply only to those bins.
struct MitigationPlan {
    double widen_zero_bins_to = 0.0;  // ps floor
    double clip_wide_bins_at = 0.0;   // ps cap
    double crc_step_attenuation = 0.0;
    std::optional<std::vector<int>> target_bins;
    /// Optional cap on the chain's random jitter component; min() semantics
    /// keep the transform idempotent.
    std::optional<double> jitter_after_ps;

    void validate() const;
};

DelayLine build_ideal(int n_bins, double clock_period_ps);
DelayLine inject_defects(const DelayLine& line, const std::vector<Defect>& defects);
DelayLine apply_mitigation(const DelayLine& line, const MitigationPlan& plan);

/// Time-to-code transfer: smallest code c with prefix_sum(c+1) > phase.
/// Zero-width bins are never returned. Phase must lie in [0, clock_period).
int quantize(const DelayLine& line, double arrival_phase_ps);

/// Bin-center readout of a code: prefix_sum(code) + tap[code]/2.
double code_to_time(const DelayLine& line, int code);

/// Precomputed prefix sums for hot quantization loops.
class LineQuantizer {
  public:
    explicit LineQuantizer(const DelayLine& line);
    int code_for(double phase_ps) const;
    double center_of(int code) const;
    double clock_period() const { return period_; }

  private:
    std::vector<double> prefix_;  // prefix_[k] = sum of first k taps
    double period_;
};

// JSON serialization: {label, clock_period_ps, tap_delays_ps, ...}
std::string delay_line_to_json(const DelayLine& line);
DelayLine delay_line_from_json(const std::string& text);
void save_delay_line(const DelayLine& line, const std::string& path);
DelayLine load_delay_line(const std::string& path);

}  // namespace tdcsim
