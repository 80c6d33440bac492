#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "profl/data.hpp"
#include "profl/federation.hpp"

namespace profl {

struct DataConfig {
    std::string source = "gaussian";  // gaussian | idx
    std::size_t classes = 4;
    std::size_t dims = 16;
    std::size_t samples_per_class = 1000;
    std::size_t test_samples_per_class = 250;
    double spread = 1.0;
    std::string images;
    std::string labels;
    std::string test_images;
    std::string test_labels;
    PartitionSpec partition{PartitionKind::Dirichlet, 1.0};
};

// Device capacities are drawn uniformly per device, either as a fraction of
// the full-model footprint or, when the _mb pair is set, as absolute MB.
struct BudgetSpec {
    double low_frac = 0.15;
    double high_frac = 1.35;
    std::optional<double> low_mb;
    std::optional<double> high_mb;
};

struct RunConfig {
    RunMode mode = RunMode::Profl;
    std::uint64_t seed = 1;
    std::string out_dir = "runs/out";
    DataConfig data;
    std::vector<std::size_t> hidden = {32, 32, 16, 16};
    std::size_t blocks = 3;
    std::size_t pool = 100;
    BudgetSpec budget;
    FedConfig fed;  // fed.seed mirrors seed after parsing
};

RunMode parse_mode(const std::string& name);  // ConfigError on unknown names

// Flat key-value text with [section] headers, '#' or ';' comments. Unknown
// sections, unknown keys and malformed values all raise ConfigError with the
// line number.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);  // IoError if unreadable

struct ValidationReport {
    std::vector<std::string> errors;
    std::vector<std::string> warnings;
    bool ok() const { return errors.empty(); }
};

// Report-only checks: structural errors (block count vs depth, empty ranges)
// plus feasibility warnings comparing per-step footprints against the best
// budget any device could draw.
ValidationReport validate_config(const RunConfig& cfg);

// Model layout implied by the config; for IDX sources the input width and
// class count stay zero until the data is loaded.
ModelLayout config_layout(const RunConfig& cfg);

}  // namespace profl
