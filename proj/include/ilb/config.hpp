#pragma once

#include "ilb/gas_model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ilb {

struct GridConfig {
    std::size_t N = 24;
    double L = 6.0;
    std::size_t Nr = 256;
    std::size_t s_order = 16;
    std::string sector = "radial-isotropic"; ///< or "full-3d"
    std::size_t memory_mb = 256;             ///< dense assembly budget
};

struct SolverConfig {
    std::string method = "spectral-exponential";
    double dt = 0;     ///< 0: 1e-3 / nu0
    double t_end = 0;  ///< 0: 10 / nu0
    std::size_t samples = 200;
    /// initial datum: Maxwellian at temperature initial_theta * theta#, mean u1 + initial_shift
    double initial_theta = 1.5;
    std::vector<double> initial_shift = {0.0, 0.0, 0.0};
    /// fit window as fractions of t_end
    double fit_from = 0.3;
    double fit_to = 0.6;
};

struct SpectrumConfig {
    std::size_t k = 0; ///< pairs to report; 0 = all on the dense path
    double tol = 1e-10;
    std::size_t max_iter = 400;
};

struct CalibrationConfig {
    std::size_t mc_samples = 200000;
};

struct TransportConfig {
    std::size_t nx = 32;
    std::size_t steps = 1000;
    std::size_t N = 8;
    double dt = 0; ///< 0: commensurate step
    bool collisions = true;
};

struct RunConfig {
    GasParameters gas;
    GridConfig grid;
    SolverConfig solver;
    SpectrumConfig spectrum;
    CalibrationConfig calibration;
    TransportConfig transport;
    std::uint64_t seed = 42;
    unsigned threads = 0;
    std::filesystem::path out = "ilbk_out";

    /// FNV-1a of the canonical dump, excluding out and threads.
    std::uint64_t hash() const;
    std::string hash_hex() const;
    /// Effective configuration as pretty-printed JSON.
    std::string to_json() const;
};

/// Parses JSON text (empty string = all defaults) and applies dotted
/// key=value overrides, e.g. "grid.N=16" or "u1=[0.5,0,0]". Unknown keys and
/// invalid values raise ConfigError naming the key.
RunConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Checks the gas parameters and the numerical settings.
void validate_config(const RunConfig& cfg);

} // namespace ilb
