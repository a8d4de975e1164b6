#include "tdcsim/qkd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace tdcsim::qkd {
namespace {

void require_nonneg(double v, const char* what) {
    if (v < 0.0 || !std::isfinite(v))
        throw std::invalid_argument(std::string(what) + " must be finite and >= 0");
}

}  // namespace

void QkdParams::validate() const {
    require_nonneg(delta_t0, "delta_t0");
    require_nonneg(w_inl_pp, "w_inl_pp");
    require_nonneg(sigma_spd, "sigma_spd");
    require_nonneg(sigma_other, "sigma_other");
    require_nonneg(sigma_tdc, "sigma_tdc");
    require_nonneg(s_a_sig, "s_a_sig");
    require_nonneg(s_b_sig, "s_b_sig");
    require_nonneg(d_a, "d_a");
    require_nonneg(d_b, "d_b");
    require_nonneg(c_true, "c_true");
    if (e_base < 0.0 || e_base > 0.5)
        throw std::invalid_argument("e_base must lie in [0, 0.5]");
}

double effective_window(double delta_t0_ps, double w_inl_pp_ps) {
    require_nonneg(delta_t0_ps, "delta_t0");
    require_nonneg(w_inl_pp_ps, "w_inl_pp");
    // Upper-bound window: the full peak-to-peak deterministic distortion is
    // assumed to be tolerated by the coincidence logic.
    return delta_t0_ps + w_inl_pp_ps;
}

double system_jitter(double sigma_spd_ps, double sigma_other_ps, double sigma_tdc_ps) {
    require_nonneg(sigma_spd_ps, "sigma_spd");
    require_nonneg(sigma_other_ps, "sigma_other");
    require_nonneg(sigma_tdc_ps, "sigma_tdc");
    return std::sqrt(sigma_spd_ps * sigma_spd_ps + sigma_other_ps * sigma_other_ps +
                     sigma_tdc_ps * sigma_tdc_ps);
}

double capture_fraction(double delta_t_eff_ps, double sigma_sys_ps) {
    require_nonneg(delta_t_eff_ps, "delta_t_eff");
    require_nonneg(sigma_sys_ps, "sigma_sys");
    if (sigma_sys_ps == 0.0) return delta_t_eff_ps > 0.0 ? 1.0 : 0.0;
    return std::erf(delta_t_eff_ps / (2.0 * std::sqrt(2.0) * sigma_sys_ps));
}

double singles(double s_sig_cps, double dark_cps) {
    require_nonneg(s_sig_cps, "s_sig");
    require_nonneg(dark_cps, "dark");
    return s_sig_cps + dark_cps;
}

double accidental_rate(double s_a_cps, double s_b_cps, double delta_t_eff_ps) {
    require_nonneg(s_a_cps, "s_a");
    require_nonneg(s_b_cps, "s_b");
    require_nonneg(delta_t_eff_ps, "delta_t_eff");
    // Division keeps rate x time products exact for decimal inputs.
    return s_a_cps * s_b_cps * delta_t_eff_ps / 1e12;
}

double binary_entropy(double q) {
    if (q < 0.0 || q > 1.0) throw std::invalid_argument("entropy argument outside [0,1]");
    if (q == 0.0 || q == 1.0) return 0.0;
    return -q * std::log2(q) - (1.0 - q) * std::log2(1.0 - q);
}

double secret_fraction(double q) {
    return 1.0 - 2.0 * binary_entropy(q);
}

namespace {

struct CorePoint {
    double delta_t_eff, sigma_sys, eta, s_a, s_b, c_acc, c_det, qber;
};

CorePoint core_evaluate(const QkdParams& p, double sigma_tdc, double w_inl_pp) {
    CorePoint c{};
    c.delta_t_eff = effective_window(p.delta_t0, w_inl_pp);
    c.sigma_sys = system_jitter(p.sigma_spd, p.sigma_other, sigma_tdc);
    c.eta = capture_fraction(c.delta_t_eff, c.sigma_sys);
    c.s_a = singles(p.s_a_sig, p.d_a);
    c.s_b = singles(p.s_b_sig, p.d_b);
    c.c_acc = accidental_rate(c.s_a, c.s_b, c.delta_t_eff);
    const double captured = c.eta * p.c_true;
    c.c_det = captured + c.c_acc;
    if (!(c.c_det > 0.0))
        throw std::domain_error("no detected coincidences: unusable operating point");
    c.qber = (captured * p.e_base + 0.5 * c.c_acc) / c.c_det;
    return c;
}

}  // namespace

QkdPoint evaluate(const QkdParams& params) {
    params.validate();
    const CorePoint with = core_evaluate(params, params.sigma_tdc, params.w_inl_pp);
    QkdPoint point;
    point.delta_t_eff = with.delta_t_eff;
    point.sigma_sys = with.sigma_sys;
    point.eta_coin = with.eta;
    point.s_a = with.s_a;
    point.s_b = with.s_b;
    point.c_acc = with.c_acc;
    point.c_det = with.c_det;
    point.qber = with.qber;
    point.delta_qber_tdc = with.qber - core_evaluate(params, 0.0, 0.0).qber;
    point.delta_qber_sigma_only =
        with.qber - core_evaluate(params, 0.0, params.w_inl_pp).qber;
    point.delta_qber_window_only =
        with.qber - core_evaluate(params, params.sigma_tdc, 0.0).qber;
    point.secret_fraction = secret_fraction(with.qber);
    return point;
}

double delta_qber_tdc(const QkdParams& params) {
    return evaluate(params).delta_qber_tdc;
}

SweepResult sweep(const QkdParams& base, const std::vector<double>& singles_grid,
                  const std::vector<SweepVariant>& variants, const CTrueMode& mode) {
    if (singles_grid.empty()) throw std::invalid_argument("empty singles grid");
    if (variants.empty()) throw std::invalid_argument("no sweep variants");
    for (double s : singles_grid)
        if (s < 0.0 || !std::isfinite(s))
            throw std::invalid_argument("grid singles rates must be finite and >= 0");

    SweepResult result;
    result.c_true_mode = mode;
    result.rows.reserve(singles_grid.size() * variants.size());

    for (double s : singles_grid) {
        QkdParams p = base;
        p.s_a_sig = s;
        p.s_b_sig = s;
        if (mode.scaled) p.c_true = mode.eta_pair * std::min(p.s_a_sig, p.s_b_sig);
        for (const auto& v : variants) {
            p.sigma_tdc = v.sigma_tdc;
            p.w_inl_pp = v.w_inl_pp;
            SweepRow row;
            row.singles_sig = s;
            row.variant = v.label;
            try {
                row.point = evaluate(p);
            } catch (const std::domain_error& e) {
                row.error = e.what();
            }
            result.rows.push_back(std::move(row));
        }
    }

    for (const auto& v : variants) {
        VariantPeak peak{v.label, 0.0, -1.0};
        for (const auto& row : result.rows) {
            if (row.variant != v.label || !row.point) continue;
            if (row.point->delta_qber_tdc > peak.delta_qber) {
                peak.delta_qber = row.point->delta_qber_tdc;
                peak.singles_sig = row.singles_sig;
            }
        }
        if (peak.delta_qber >= 0.0) result.peaks.push_back(peak);
    }

    const std::size_t nv = variants.size();
    for (std::size_t i = 0; i < nv; ++i) {
        for (std::size_t j = i + 1; j < nv; ++j) {
            PairPeak pp{variants[i].label, variants[j].label, 0.0, -1.0};
            for (std::size_t g = 0; g < singles_grid.size(); ++g) {
                const auto& ri = result.rows[g * nv + i];
                const auto& rj = result.rows[g * nv + j];
                if (!ri.point || !rj.point) continue;
                const double diff =
                    std::abs(ri.point->delta_qber_tdc - rj.point->delta_qber_tdc);
                if (diff > pp.max_difference) {
                    pp.max_difference = diff;
                    pp.singles_sig = singles_grid[g];
                }
            }
            if (pp.max_difference >= 0.0) result.pair_peaks.push_back(pp);
        }
    }
    return result;
}

void write_sweep_csv(const SweepResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "singles_sig_cps,variant_label,delta_t_eff_ps,sigma_sys_ps,eta_coin,"
           "c_acc_cps,c_det_cps,qber,delta_qber_tdc,secret_fraction\n";
    char buf[512];
    for (const auto& row : result.rows) {
        if (!row.point) {
            std::snprintf(buf, sizeof buf, "%.9g,%s,,,,,,,,\n", row.singles_sig,
                          row.variant.c_str());
            out << buf;
            continue;
        }
        const auto& p = *row.point;
        std::snprintf(buf, sizeof buf,
                      "%.9g,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                      row.singles_sig, row.variant.c_str(), p.delta_t_eff, p.sigma_sys,
                      p.eta_coin, p.c_acc, p.c_det, p.qber, p.delta_qber_tdc,
                      p.secret_fraction);
        out << buf;
    }
}

std::string sweep_to_json(const SweepResult& result, const std::string& config_echo) {
    nlohmann::json j;
    j["c_true_mode"] = result.c_true_mode.scaled
                           ? nlohmann::json{{"mode", "pair_scaled"},
                                            {"eta_pair", result.c_true_mode.eta_pair}}
                           : nlohmann::json{{"mode", "fixed"}};
    if (!config_echo.empty()) j["config_echo"] = nlohmann::json::parse(config_echo);
    auto rows = nlohmann::json::array();
    for (const auto& row : result.rows) {
        nlohmann::json r{{"singles_sig_cps", row.singles_sig}, {"variant", row.variant}};
        if (row.point) {
            const auto& p = *row.point;
            r["delta_t_eff_ps"] = p.delta_t_eff;
            r["sigma_sys_ps"] = p.sigma_sys;
            r["eta_coin"] = p.eta_coin;
            r["c_acc_cps"] = p.c_acc;
            r["c_det_cps"] = p.c_det;
            r["qber"] = p.qber;
            r["delta_qber_tdc"] = p.delta_qber_tdc;
            r["delta_qber_sigma_only"] = p.delta_qber_sigma_only;
            r["delta_qber_window_only"] = p.delta_qber_window_only;
            r["secret_fraction"] = p.secret_fraction;
        } else {
            r["error"] = row.error;
        }
        rows.push_back(std::move(r));
    }
    j["rows"] = std::move(rows);
    auto peaks = nlohmann::json::array();
    for (const auto& p : result.peaks)
        peaks.push_back({{"variant", p.variant},
                         {"singles_sig_cps", p.singles_sig},
                         {"peak_delta_qber_tdc", p.delta_qber}});
    j["peaks"] = std::move(peaks);
    auto pairs = nlohmann::json::array();
    for (const auto& p : result.pair_peaks)
        pairs.push_back({{"variant_a", p.variant_a},
                         {"variant_b", p.variant_b},
                         {"singles_sig_cps", p.singles_sig},
                         {"max_delta_qber_difference", p.max_difference}});
    j["pair_peaks"] = std::move(pairs);
    return j.dump(2);
}

}  // namespace tdcsim::qkd
