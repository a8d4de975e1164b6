#include "tdcsim/characterize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "tdcsim/rng.hpp"

namespace tdcsim {

CodeHistogram run_code_density(const DelayLine& line, std::uint64_t n_hits,
                               PhaseMode mode, std::uint64_t seed,
                               const PhaseLockParams& lock) {
    line.validate();
    if (n_hits == 0) throw std::invalid_argument("n_hits must be positive");
    const auto n_bins = static_cast<std::uint64_t>(line.n_bins());
    if (n_hits < 100 * n_bins)
        std::fprintf(stderr,
                     "warning: code-density run with %llu hits over %llu bins; "
                     "width estimates will be coarse\n",
                     static_cast<unsigned long long>(n_hits),
                     static_cast<unsigned long long>(n_bins));

    const double period = line.clock_period;
    const LineQuantizer q(line);
    CodeHistogram hist;
    hist.counts.assign(line.tap_delays.size(), 0);
    hist.total_hits = n_hits;
    hist.clock_period = period;
    hist.phase_mode = mode;

    if (mode == PhaseMode::Uniform) {
        // Stratified phases are generated in increasing order, so the code
        // lookup reduces to a forward-walking prefix pointer.
        const double inv_n = 1.0 / static_cast<double>(n_hits);
        std::vector<double> prefix(line.tap_delays.size() + 1);
        prefix[0] = 0.0;
        for (std::size_t i = 0; i < line.tap_delays.size(); ++i)
            prefix[i + 1] = prefix[i] + line.tap_delays[i];
        std::size_t code = 0;
        const std::size_t last = line.tap_delays.size() - 1;
        for (std::uint64_t j = 0; j < n_hits; ++j) {
            const double u = u01(seed, j, 0x51);
            double phase = period * (static_cast<double>(j) + u) * inv_n;
            if (phase >= period) phase = std::nextafter(period, 0.0);
            while (code < last && prefix[code + 1] <= phase) ++code;
            ++hist.counts[code];
        }
    } else {
        const double mean = lock.mean_ps >= 0.0 ? lock.mean_ps : 0.5 * period;
        const double std_ps = lock.std_ps > 0.0 ? lock.std_ps : 5.0 * line.lsb_ideal();
        for (std::uint64_t j = 0; j < n_hits; ++j) {
            double phase = std::fmod(mean + std_ps * gauss01(seed, j, 0x52), period);
            if (phase < 0.0) phase += period;
            if (phase >= period) phase = std::nextafter(period, 0.0);
            ++hist.counts[static_cast<std::size_t>(q.code_for(phase))];
        }
    }
    return hist;
}

std::vector<double> effective_widths(const DelayLine& line) {
    const double period = line.clock_period;
    std::vector<double> w(line.tap_delays.size());
    double prefix = 0.0;
    for (std::size_t i = 0; i < line.tap_delays.size(); ++i) {
        const double lo = std::min(prefix, period);
        prefix += line.tap_delays[i];
        const double hi = std::min(prefix, period);
        w[i] = std::max(0.0, hi - lo);
    }
    return w;
}

std::vector<double> estimate_bin_widths(const CodeHistogram& hist) {
    if (hist.phase_mode == PhaseMode::PhaseLocked)
        throw std::invalid_argument(
            "phase-locked histograms probe only a subset of bins; "
            "width estimation requires uniform arrivals");
    if (hist.total_hits == 0) throw std::invalid_argument("histogram has zero total hits");
    std::vector<double> w(hist.counts.size());
    const double scale = hist.clock_period / static_cast<double>(hist.total_hits);
    for (std::size_t i = 0; i < hist.counts.size(); ++i)
        w[i] = scale * static_cast<double>(hist.counts[i]);
    return w;
}

double estimate_sigma(const std::vector<double>& widths, double /*clock_period*/) {
    double sw = 0.0, sw3 = 0.0;
    for (double w : widths) {
        if (w < 0.0) throw std::invalid_argument("bin widths must be >= 0");
        sw += w;
        sw3 += w * w * w;
    }
    if (sw <= 0.0) throw std::invalid_argument("all bin widths are zero");
    return std::sqrt(sw3 / (12.0 * sw));
}

NonlinearityReport compute_nonlinearity(const std::vector<double>& widths,
                                        double clock_period) {
    if (widths.empty()) throw std::invalid_argument("empty width list");
    NonlinearityReport rep;
    rep.bin_widths = widths;
    rep.lsb_ideal = clock_period / static_cast<double>(widths.size());
    rep.dnl.resize(widths.size());
    rep.inl.resize(widths.size());
    double run = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        rep.dnl[i] = widths[i] - rep.lsb_ideal;
        run += rep.dnl[i];
        rep.inl[i] = run;
        sum += widths[i];
    }
    auto [dmin, dmax] = std::minmax_element(rep.dnl.begin(), rep.dnl.end());
    auto [imin, imax] = std::minmax_element(rep.inl.begin(), rep.inl.end());
    rep.dnl_range = {*dmin, *dmax};
    rep.inl_range = {*imin, *imax};
    rep.w_inl_pp = *imax - *imin;
    rep.residual = sum - clock_period;
    rep.sigma_quant = estimate_sigma(widths, clock_period);
    rep.sigma_jitter = 0.0;
    rep.sigma_tdc = rep.sigma_quant;
    return rep;
}

static void fold_in_jitter(NonlinearityReport& rep, const DelayLine& line) {
    rep.sigma_jitter = line.rms_jitter_ps;
    rep.sigma_tdc = std::hypot(rep.sigma_quant, line.rms_jitter_ps);
}

NonlinearityReport characterize_exact(const DelayLine& line) {
    line.validate();
    auto rep = compute_nonlinearity(effective_widths(line), line.clock_period);
    fold_in_jitter(rep, line);
    return rep;
}

NonlinearityReport characterize_sampled(const DelayLine& line, std::uint64_t n_hits,
                                        PhaseMode mode, std::uint64_t seed,
                                        const PhaseLockParams& lock) {
    const auto hist = run_code_density(line, n_hits, mode, seed, lock);
    auto rep = compute_nonlinearity(estimate_bin_widths(hist), line.clock_period);
    fold_in_jitter(rep, line);
    return rep;
}

void export_histogram(const CodeHistogram& hist, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    char head[128];
    std::snprintf(head, sizeof head, "# clock_period_ps=%.9g phase_mode=%s\n",
                  hist.clock_period,
                  hist.phase_mode == PhaseMode::Uniform ? "uniform" : "locked");
    out << head;
    for (std::size_t i = 0; i < hist.counts.size(); ++i)
        out << i << "," << hist.counts[i] << "\n";
}

CodeHistogram import_histogram(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open histogram file: " + path);
    std::string header;
    if (!std::getline(in, header) || header.rfind("# clock_period_ps=", 0) != 0)
        throw std::runtime_error("histogram file missing header line: " + path);

    CodeHistogram hist;
    std::istringstream hs(header.substr(2));
    std::string tok;
    bool have_period = false, have_mode = false;
    while (hs >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "clock_period_ps") {
            hist.clock_period = std::stod(val);
            have_period = true;
        } else if (key == "phase_mode") {
            if (val == "uniform") hist.phase_mode = PhaseMode::Uniform;
            else if (val == "locked") hist.phase_mode = PhaseMode::PhaseLocked;
            else throw std::runtime_error("unknown phase_mode: " + val);
            have_mode = true;
        }
    }
    if (!have_period || !have_mode || !(hist.clock_period > 0.0))
        throw std::runtime_error("invalid histogram header: " + path);

    std::string row;
    std::size_t expected = 0;
    while (std::getline(in, row)) {
        if (row.empty() || row[0] == '#') continue;
        const auto comma = row.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("malformed histogram row: " + row);
        const long long code = std::stoll(row.substr(0, comma));
        const long long count = std::stoll(row.substr(comma + 1));
        if (code != static_cast<long long>(expected))
            throw std::runtime_error("histogram codes must be dense from 0: " + row);
        if (count < 0) throw std::runtime_error("negative count in histogram: " + row);
        hist.counts.push_back(static_cast<std::uint64_t>(count));
        hist.total_hits += static_cast<std::uint64_t>(count);
        ++expected;
    }
    if (hist.counts.empty() || hist.total_hits == 0)
        throw std::runtime_error("histogram has no counts: " + path);
    return hist;
}

std::string report_to_json(const NonlinearityReport& rep) {
    nlohmann::json j;
    j["lsb_ideal_ps"] = rep.lsb_ideal;
    j["bin_widths_ps"] = rep.bin_widths;
    j["dnl_ps"] = rep.dnl;
    j["inl_ps"] = rep.inl;
    j["dnl_range_ps"] = {rep.dnl_range.first, rep.dnl_range.second};
    j["inl_range_ps"] = {rep.inl_range.first, rep.inl_range.second};
    j["w_inl_pp_ps"] = rep.w_inl_pp;
    j["sigma_tdc_ps"] = rep.sigma_tdc;
    j["sigma_quant_ps"] = rep.sigma_quant;
    j["sigma_jitter_ps"] = rep.sigma_jitter;
    j["residual_ps"] = rep.residual;
    return j.dump(2);
}

}  // namespace tdcsim
