#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tdcsim/delay_line.hpp"

namespace tdcsim {

enum class PhaseMode { Uniform, PhaseLocked };

/// Narrow arrival-phase distribution for clock-locked sources. A non-positive
/// std selects the default of 5 ideal LSB.
struct PhaseLockParams {
    double mean_ps = -1.0;  // < 0: clock_period / 2
    double std_ps = -1.0;   // <= 0: 5 * lsb_ideal
};

struct CodeHistogram {
    std::vector<std::uint64_t> counts;
    std::uint64_t total_hits = 0;
    double clock_period = 0.0;  // ps
    PhaseMode phase_mode = PhaseMode::Uniform;
};

struct NonlinearityReport {
    std::vector<double> bin_widths;  // ps
    std::vector<double> dnl;         // w_i - lsb_ideal, ps
    std::vector<double> inl;         // inclusive prefix sum of dnl, ps
    std::pair<double, double> dnl_range{0.0, 0.0};
    std::pair<double, double> inl_range{0.0, 0.0};
    double w_inl_pp = 0.0;    // inl max - inl min
    double sigma_tdc = 0.0;   // single-shot RMS, ps
    double lsb_ideal = 0.0;   // clock_period / N
    double residual = 0.0;    // sum(widths) - clock_period
    // Components of sigma_tdc when characterizing a DelayLine:
    double sigma_quant = 0.0;
    double sigma_jitter = 0.0;
};

/// Code-density measurement of a delay line. Uniform mode samples the uniform
/// arrival distribution with one jittered-stratified phase per hit (hit j's
/// phase depends only on seed, j and n_hits), which keeps the estimator
/// unbiased while removing most multinomial noise. PhaseLocked mode draws
/// from the narrow Gaussian model and wraps modulo the period.
CodeHistogram run_code_density(const DelayLine& line, std::uint64_t n_hits,
                               PhaseMode mode, std::uint64_t seed,
                               const PhaseLockParams& lock = {});

/// Analytic ground truth: measure of each bin inside [0, clock_period).
std::vector<double> effective_widths(const DelayLine& line);

/// w_i = counts[i] / total * clock_period. Rejects PhaseLocked histograms:
/// occupancy is not proportional to width when arrivals are phase-locked.
std::vector<double> estimate_bin_widths(const CodeHistogram& hist);

/// Occupancy-weighted RMS quantization error of bin-center readout under
/// uniform arrivals: sqrt(sum w^3 / (12 sum w)).
double estimate_sigma(const std::vector<double>& widths, double clock_period);

NonlinearityReport compute_nonlinearity(const std::vector<double>& widths,
                                        double clock_period);

/// Full characterization of a line. sigma_tdc combines the width-profile
/// quantization RMS with the chain's random jitter component in quadrature.
NonlinearityReport characterize_exact(const DelayLine& line);
NonlinearityReport characterize_sampled(const DelayLine& line, std::uint64_t n_hits,
                                        PhaseMode mode, std::uint64_t seed,
                                        const PhaseLockParams& lock = {});

// Histogram CSV: "# clock_period_ps=<float> phase_mode=<uniform|locked>"
// then "code,count" lines.
void export_histogram(const CodeHistogram& hist, const std::string& path);
CodeHistogram import_histogram(const std::string& path);

std::string report_to_json(const NonlinearityReport& rep);

}  // namespace tdcsim
