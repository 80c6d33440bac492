#pragma once

#include <filesystem>

#include "profl/config.hpp"

namespace profl {

struct RunArtifacts {
    std::filesystem::path metrics_csv;
    std::filesystem::path summary_json;
    std::filesystem::path checkpoint;  // empty when the run was not applicable
    RunResult result;
    RunMode mode = RunMode::Profl;
};

// Full pipeline: validate, build data/shards/budgets, simulate, write the
// metrics CSV, JSON summary and final checkpoint into cfg.out_dir.
// Validation failures raise ConfigError listing every problem.
RunArtifacts execute_run(const RunConfig& cfg);

// Device capacities drawn for this config, in pool order. Exposed so tests
// and tooling can reproduce the runner's pool exactly.
std::vector<DeviceBudget> draw_budgets(const RunConfig& cfg, std::uint64_t full_estimate_bytes);

}  // namespace profl
