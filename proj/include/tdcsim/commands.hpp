#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

namespace tdcsim::cmd {

/// Structured run configuration: a single JSON document (see README for the
/// schema) plus the handful of global flag overrides.
struct RunConfig {
    nlohmann::json doc;
    std::string out_dir = "out";
    std::string format = "csv";  // csv | json
    std::uint64_t seed = 0;
    bool quiet = false;

    static RunConfig load(const std::string& config_path);
    /// Flag overrides; empty/negative values keep the config document's.
    void apply_overrides(const std::string& out_dir_flag, const std::string& format_flag,
                         long long seed_flag);
};

std::uint64_t config_hash(const RunConfig& cfg);

// Each command writes its artifacts under cfg.out_dir and returns the list of
// files written (relative paths), printing a one-line summary unless quiet.
// Errors: std::domain_error for model-domain failures (exit 1),
// std::runtime_error / std::invalid_argument for usage and IO (exit 2).
std::vector<std::string> cmd_characterize(const RunConfig& cfg);
std::vector<std::string> cmd_mitigate(const RunConfig& cfg);
std::vector<std::string> cmd_qkd_curve(const RunConfig& cfg);
std::vector<std::string> cmd_mc_validate(const RunConfig& cfg);
std::vector<std::string> cmd_report(const RunConfig& cfg);

}  // namespace tdcsim::cmd
