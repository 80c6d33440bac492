#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "profl/errors.hpp"
#include "profl/metrics.hpp"
#include "profl/runner.hpp"

namespace {

int do_run(const std::string& config_path, const std::string& mode_override,
           const std::string& out_override, bool have_seed, std::uint64_t seed_override) {
    profl::RunConfig cfg;
    try {
        cfg = profl::load_config(config_path);
        if (!mode_override.empty()) cfg.mode = profl::parse_mode(mode_override);
        if (!out_override.empty()) cfg.out_dir = out_override;
        if (have_seed) {
            cfg.seed = seed_override;
            cfg.fed.seed = seed_override;
        }
    } catch (const profl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const profl::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        profl::RunArtifacts art = profl::execute_run(cfg);
        if (art.result.not_applicable) {
            std::cout << "mode=" << profl::mode_name(art.mode)
                      << " not applicable: " << art.result.na_reason << "\n";
        } else {
            std::cout << "mode=" << profl::mode_name(art.mode)
                      << " rounds=" << art.result.records.size() << " final_accuracy="
                      << profl::format_double(art.result.records.empty()
                                                  ? 0.0
                                                  : art.result.records.back().test_accuracy)
                      << " metrics=" << art.metrics_csv.string() << "\n";
        }
        return 0;
    } catch (const profl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

int do_validate(const std::string& config_path) {
    profl::RunConfig cfg;
    try {
        cfg = profl::load_config(config_path);
    } catch (const profl::ConfigError& e) {
        std::cout << "error: " << e.what() << "\n";
        return 0;  // the report is the product; parse failures are report lines
    } catch (const profl::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    profl::ValidationReport report = profl::validate_config(cfg);
    for (const std::string& e : report.errors) std::cout << "error: " << e << "\n";
    for (const std::string& w : report.warnings) std::cout << "warning: " << w << "\n";
    if (report.errors.empty() && report.warnings.empty()) {
        std::cout << "configuration is clean\n";
    }
    return 0;
}

int do_compare(const std::vector<std::string>& files) {
    if (files.size() < 2) {
        std::cerr << "compare needs at least two summary files\n";
        return 1;
    }
    try {
        profl::Comparison cmp = profl::compare_summaries(files);
        std::cout << cmp.table;
        std::ofstream out("comparison.csv", std::ios::binary);
        if (!out) throw profl::IoError("cannot write comparison.csv");
        out << cmp.csv;
        std::cout << "wrote comparison.csv\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"memory-aware progressive federated learning simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string mode_override;
    std::string out_override;
    std::uint64_t seed_override = 0;

    CLI::App* run_cmd = app.add_subcommand("run", "execute a configured simulation");
    run_cmd->add_option("--config", config_path, "path to the run configuration")->required();
    CLI::Option* seed_opt = run_cmd->add_option("--seed", seed_override, "override the run seed");
    run_cmd->add_option("--mode", mode_override,
                        "override the mode (profl, oracle, allsmall, exclusive)");
    run_cmd->add_option("--out", out_override, "override the output directory");

    std::vector<std::string> files;
    CLI::App* cmp_cmd = app.add_subcommand("compare", "line up summaries of finished runs");
    cmp_cmd->add_option("files", files, "summary.json files, first one is the baseline");

    std::string validate_path;
    CLI::App* val_cmd = app.add_subcommand("validate", "check a config and report problems");
    val_cmd->add_option("--config", validate_path, "path to the run configuration")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // fold CLI11's error codes into the documented ones: bad usage is a
        // configuration mistake, --help stays a success
        return app.exit(e) == 0 ? 0 : 1;
    }

    if (run_cmd->parsed()) {
        return do_run(config_path, mode_override, out_override, seed_opt->count() > 0,
                      seed_override);
    }
    if (cmp_cmd->parsed()) return do_compare(files);
    return do_validate(validate_path);
}
