#pragma once

#include "ilb/collision_kernel.hpp"
#include "ilb/config.hpp"

#include <exception>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace ilb {

struct CheckOutcome {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct CommandResult {
    std::vector<CheckOutcome> checks;
    std::vector<std::filesystem::path> artifacts;

    /// 0 if every check passed, else 10 + index of the first failing check.
    int exit_code() const;
};

const std::vector<std::string>& command_names();

/// Runs one subcommand, writing artifacts into cfg.out. Errors propagate as
/// exceptions; see exit_code_for.
CommandResult run_command(const std::string& name, const RunConfig& cfg, std::ostream& log);

/// 2 config, 3 missing calibration, 4 cache mismatch, 1 anything else.
int exit_code_for(const std::exception& e);

/// Normalization constants persisted by `calibrate` in `dir`.
NormalizationConstants load_calibration(const std::filesystem::path& dir);

} // namespace ilb
