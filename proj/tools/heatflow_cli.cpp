#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <utility>
#include <vector>

#include "heatflow/config.hpp"
#include "heatflow/errors.hpp"
#include "heatflow/experiments.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Heat-flow transport maps: construction, integration, verification"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string output_dir;
    int threads = 1;
    app.add_option("--config", config_path, "Configuration file (sectioned key=value text)");
    app.add_option("--set", overrides, "Override key=value on top of the config (repeatable)");
    app.add_option("--output", output_dir, "Output directory (default: run.output_dir or 'out')");
    app.add_option("--threads", threads, "Worker threads")->check(CLI::Range(1, 256));

    const std::vector<std::pair<std::string, std::string>> kinds = {
        {"transport", "Push Gaussian anchors through the transport map"},
        {"map-grid", "Evaluate the transport map on a rectangular grid"},
        {"regularity", "Hoelder scan of a transport-map derivative"},
        {"verify", "Run the diagnostic battery applicable to the target"},
        {"score-table", "Score field and Jacobian eigmax over a (tau, x) grid"},
        {"marginal-check", "Transported cloud vs the Gaussian interpolation law"},
        {"exponent-sweep", "Velocity-Jacobian magnitude scaling in 1 - t^2"},
    };
    for (const auto& [name, desc] : kinds) app.add_subcommand(name, desc)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : heatflow::kExitParse;
    }

    const std::string experiment = app.get_subcommands().front()->get_name();

    try {
        heatflow::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = heatflow::ExperimentConfig::parse_file(config_path);
        for (const auto& kv : overrides) cfg.set_override(kv);
        return heatflow::run_experiment(experiment, cfg, output_dir, threads);
    } catch (const heatflow::ParseError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return heatflow::kExitParse;
    } catch (const heatflow::InvalidInputError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return heatflow::kExitParse;
    } catch (const heatflow::CapabilityError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return heatflow::kExitParse;
    } catch (const heatflow::Error& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return heatflow::kExitNumerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return heatflow::kExitNumerical;
    }
}
