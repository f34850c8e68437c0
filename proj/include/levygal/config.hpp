#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "levygal/galerkin_sim.hpp"
#include "levygal/levy_noise.hpp"
#include "levygal/spectral_core.hpp"

namespace levygal {

/// Invalid configuration; the message names the key and the broken constraint.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct EnsembleSettings {
    int paths = 200;
    std::vector<std::size_t> n_sweep{4, 8, 16};
    std::uint64_t seed = 1;
    double uniformity_ratio = 1.5;
    int stored_paths = 4;
    int isometry_paths = 2000;
};

struct CheckConfig {
    int trials = 1000;
    double tolerance = 1e-10;
    int probes = 400;
    double ball_radius = 1.0;
};

struct DiagnosticSettings {
    std::vector<double> deltas{0.01, 0.02, 0.05, 0.1, 0.2, 0.5};
    std::vector<double> thetas{0.005, 0.01, 0.02, 0.05, 0.1};
    std::vector<double> etas{0.01, 0.02, 0.05, 0.1, 0.2, 0.5};
    std::vector<double> hitting_levels{1.5, 2.0, 3.0};
    std::vector<double> fixed_times{0.0, 0.25, 0.5};
    int windows = 3;
    int modulus_paths = 4;
    std::size_t modulus_max_times = 200;
    int refinement_paths = 4;
};

struct RunConfig {
    BoxDomain domain;
    SystemSpec system;
    std::size_t n = 8;
    std::size_t basis_size = 0;  // resolved: max(n, n_sweep)
    double sobolev_order = 3.0;
    SimConfig sim;
    NoiseModel noise;
    EnsembleSettings ensemble;
    CheckConfig checks;
    DiagnosticSettings diagnostics;
    std::string output_root = "levygal_out";
    bool store_coefficients = false;

    nlohmann::json resolved;  // every key, defaults filled
    std::string digest;       // SHA-256 of the canonical resolved dump
};

/// Parse and validate; in strict mode unknown keys are errors.
RunConfig parse_config(const nlohmann::json& doc, bool strict);
RunConfig load_config(const std::filesystem::path& path, bool strict);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

}  // namespace levygal
