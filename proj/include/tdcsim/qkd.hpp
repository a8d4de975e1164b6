#pragma once

#include <optional>
#include <string>
#include <vector>

namespace tdcsim::qkd {

/// One operating point of the analytical coincidence/QBER model.
/// Rates are counts per second; times are picoseconds.
struct QkdParams {
    double delta_t0 = 0.0;      // nominal coincidence window, ps
    double w_inl_pp = 0.0;      // peak-to-peak INL budget, ps
    double sigma_spd = 0.0;     // detector jitter, ps
    double sigma_other = 0.0;   // residual broadening, ps
    double sigma_tdc = 0.0;     // TDC single-shot uncertainty, ps
    double s_a_sig = 0.0;       // signal singles, Alice
    double s_b_sig = 0.0;       // signal singles, Bob
    double d_a = 0.0;           // dark counts, Alice
    double d_b = 0.0;           // dark counts, Bob
    double c_true = 0.0;        // true coincidence rate before truncation
    double e_base = 0.0;        // baseline error, in [0, 0.5]

    void validate() const;
};

struct QkdPoint {
    double delta_t_eff = 0.0;  // ps
    double sigma_sys = 0.0;    // ps
    double eta_coin = 0.0;
    double s_a = 0.0;
    double s_b = 0.0;
    double c_acc = 0.0;
    double c_det = 0.0;
    double qber = 0.0;
    double delta_qber_tdc = 0.0;
    double secret_fraction = 0.0;
    // Single-channel attributions (diagnostics beyond the combined figure):
    // qber with only the jitter term zeroed, resp. only the window term.
    double delta_qber_sigma_only = 0.0;
    double delta_qber_window_only = 0.0;
};

double effective_window(double delta_t0_ps, double w_inl_pp_ps);
double system_jitter(double sigma_spd_ps, double sigma_other_ps, double sigma_tdc_ps);
double capture_fraction(double delta_t_eff_ps, double sigma_sys_ps);
double singles(double s_sig_cps, double dark_cps);
double accidental_rate(double s_a_cps, double s_b_cps, double delta_t_eff_ps);
double binary_entropy(double q);
double secret_fraction(double q);

/// Composes the window, jitter, capture, singles, accidental and QBER chain
/// and fills every field, including the incremental QBER against the same
/// point with sigma_tdc = 0 and w_inl_pp = 0. Throws std::domain_error when
/// no coincidences are detected (unusable operating point).
QkdPoint evaluate(const QkdParams& params);
double delta_qber_tdc(const QkdParams& params);

struct SweepVariant {
    std::string label;
    double sigma_tdc = 0.0;  // ps
    double w_inl_pp = 0.0;   // ps
};

/// How the true-coincidence rate varies along the singles grid: either the
/// fixed c_true of the base parameters, or pair-efficiency scaling
/// c_true = eta_pair * min(s_a_sig, s_b_sig).
struct CTrueMode {
    bool scaled = false;
    double eta_pair = 0.0;

    static CTrueMode fixed() { return {false, 0.0}; }
    static CTrueMode pair_scaled(double eta) { return {true, eta}; }
};

struct SweepRow {
    double singles_sig = 0.0;  // cps, applied to both arms
    std::string variant;
    std::optional<QkdPoint> point;  // empty on unusable operating points
    std::string error;
};

struct VariantPeak {
    std::string variant;
    double singles_sig = 0.0;
    double delta_qber = 0.0;
};

struct PairPeak {
    std::string variant_a;
    std::string variant_b;
    double singles_sig = 0.0;   // grid point of maximum difference
    double max_difference = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;           // grid-major, variant-minor order
    std::vector<VariantPeak> peaks;       // max delta_qber_tdc per variant
    std::vector<PairPeak> pair_peaks;     // max |difference| per variant pair
    CTrueMode c_true_mode;
};

SweepResult sweep(const QkdParams& base, const std::vector<double>& singles_grid,
                  const std::vector<SweepVariant>& variants,
                  const CTrueMode& mode = CTrueMode::fixed());

/// CSV columns: singles_sig_cps,variant_label,delta_t_eff_ps,sigma_sys_ps,
/// eta_coin,c_acc_cps,c_det_cps,qber,delta_qber_tdc,secret_fraction
void write_sweep_csv(const SweepResult& result, const std::string& path);
std::string sweep_to_json(const SweepResult& result, const std::string& config_echo);

}  // namespace tdcsim::qkd
