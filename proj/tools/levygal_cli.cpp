#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "levygal/config.hpp"
#include "levygal/runner.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Stochastic Galerkin simulator with Levy noise"};
    app.require_subcommand(1, 1);

    std::string config_path;
    int parallel = 1;
    bool strict = false;
    std::string inject = "none";
    std::string output;

    for (const char* name : {"check", "simulate", "moments", "diagnose", "all"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--parallel", parallel, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--strict", strict, "reject unknown configuration keys");
        sub->add_option("--inject", inject, "fault to inject")
            ->check(CLI::IsMember({"none", "uncompensated_jumps", "break_antisymmetry"}));
        sub->add_option("--output", output, "output root (overrides LEVYGAL_OUTPUT_ROOT and output.root)");
    }
    CLI11_PARSE(app, argc, argv);

    try {
        const auto command = levygal::parse_command(app.get_subcommands().front()->get_name());
        const auto cfg = levygal::load_config(config_path, strict);
        levygal::RunOptions options;
        options.parallel = parallel;
        options.inject = levygal::parse_fault(inject);
        options.output_root = output;
        const auto outcome = levygal::run(command, cfg, options);
        for (const auto& g : outcome.gates)
            std::cout << (g.pass ? "PASS " : "FAIL ") << g.name << (g.detail.empty() ? "" : "  " + g.detail) << '\n';
        for (const auto& f : outcome.failures)
            if (f.rfind("path_abort", 0) == 0) std::cout << "FAIL " << f << '\n';
        std::cout << "output: " << outcome.root.string() << '\n';
        return outcome.exit_code();
    } catch (const levygal::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
