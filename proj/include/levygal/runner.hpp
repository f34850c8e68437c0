#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "levygal/config.hpp"

namespace levygal {

inline constexpr std::string_view code_version = "levygal 0.1.0";

enum class Command { check, simulate, moments, diagnose, all };
enum class Fault { none, uncompensated_jumps, break_antisymmetry };

Command parse_command(std::string_view name);
Fault parse_fault(std::string_view name);
std::string_view to_string(Command command);
std::string_view to_string(Fault fault);

struct RunOptions {
    int parallel = 1;
    Fault inject = Fault::none;
    std::filesystem::path output_root;  // empty: LEVYGAL_OUTPUT_ROOT, else output.root from the config
};

struct Gate {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct RunOutcome {
    std::filesystem::path root;
    std::vector<Gate> gates;
    std::vector<std::string> failures;  // failed gate names and path aborts

    bool pass() const { return failures.empty(); }
    int exit_code() const { return pass() ? 0 : 1; }
};

/// LEVYGAL_OUTPUT_ROOT when set, else output.root.
std::filesystem::path resolve_output_root(const RunConfig& cfg);

/// Runs one command and writes `manifest`, `certificates/`, `trajectories/`,
/// `reports/` and `failures` under the output root.
RunOutcome run(Command command, const RunConfig& cfg, const RunOptions& options);

}  // namespace levygal
