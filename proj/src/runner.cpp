#include "profl/runner.hpp"

#include <cmath>

#include "profl/checkpoint.hpp"
#include "profl/errors.hpp"
#include "profl/memory.hpp"
#include "profl/metrics.hpp"
#include "profl/rng.hpp"

namespace profl {

namespace {

Dataset class_slice(const Dataset& ds, std::size_t per_class, std::size_t skip) {
    const std::size_t classes = ds.class_count;
    const std::size_t block = ds.size() / classes;  // generator groups by class
    std::vector<std::size_t> idx;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t k = skip; k < skip + per_class; ++k) idx.push_back(c * block + k);
    }
    Dataset out;
    out.features = take_rows(ds.features, idx);
    out.labels.reserve(idx.size());
    for (std::size_t i : idx) out.labels.push_back(ds.labels[i]);
    out.class_count = classes;
    return out;
}

}  // namespace

std::vector<DeviceBudget> draw_budgets(const RunConfig& cfg, std::uint64_t full_estimate_bytes) {
    std::mt19937_64 rng = make_rng(cfg.seed, "budget");
    std::vector<DeviceBudget> pool;
    pool.reserve(cfg.pool);
    for (std::size_t i = 0; i < cfg.pool; ++i) {
        double bytes = 0.0;
        if (cfg.budget.low_mb.has_value()) {
            std::uniform_real_distribution<double> mb(*cfg.budget.low_mb, *cfg.budget.high_mb);
            bytes = mb(rng) * 1e6;
        } else {
            std::uniform_real_distribution<double> frac(cfg.budget.low_frac, cfg.budget.high_frac);
            bytes = frac(rng) * static_cast<double>(full_estimate_bytes);
        }
        pool.push_back({static_cast<int>(i), static_cast<std::uint64_t>(std::llround(bytes))});
    }
    return pool;
}

RunArtifacts execute_run(const RunConfig& cfg) {
    ValidationReport report = validate_config(cfg);
    if (!report.ok()) {
        std::string all;
        for (const std::string& e : report.errors) {
            if (!all.empty()) all += "; ";
            all += e;
        }
        throw ConfigError(all);
    }

    Dataset train;
    Dataset test;
    ModelLayout layout = config_layout(cfg);
    if (cfg.data.source == "gaussian") {
        Dataset all = gen_gaussian_mixture(
            cfg.data.classes, cfg.data.dims,
            cfg.data.samples_per_class + cfg.data.test_samples_per_class, cfg.data.spread,
            derive_seed(cfg.seed, "data"));
        train = class_slice(all, cfg.data.samples_per_class, 0);
        test = class_slice(all, cfg.data.test_samples_per_class, cfg.data.samples_per_class);
    } else {
        train = load_idx(cfg.data.images, cfg.data.labels);
        test = load_idx(cfg.data.test_images, cfg.data.test_labels);
        if (train.dims() != test.dims()) {
            throw FormatError("train and test images disagree on dimensions");
        }
        const std::size_t classes = std::max(train.class_count, test.class_count);
        train.class_count = classes;
        test.class_count = classes;
        layout.input_dim = train.dims();
        layout.class_count = classes;
        if (train.size() < cfg.pool) {
            throw ConfigError("data: fewer training samples than devices");
        }
    }

    std::vector<std::vector<std::size_t>> shards =
        partition(train, cfg.pool, cfg.data.partition, cfg.seed);

    GlobalModel probe = make_mlp_model(layout, cfg.blocks, derive_seed(cfg.seed, "model"));
    const std::uint64_t full_estimate =
        estimate(assemble_full(probe), cfg.fed.sgd.batch_size, false).bytes();
    std::vector<DeviceBudget> pool = draw_budgets(cfg, full_estimate);

    FedConfig fed = cfg.fed;
    fed.seed = cfg.seed;
    FederatedRun run(train, test, std::move(shards), std::move(pool), layout, cfg.blocks, fed);
    RunResult result = run.run(cfg.mode);

    const std::filesystem::path out_dir(cfg.out_dir);
    std::filesystem::create_directories(out_dir);

    RunArtifacts artifacts;
    artifacts.mode = cfg.mode;
    artifacts.metrics_csv = out_dir / "metrics.csv";
    artifacts.summary_json = out_dir / "summary.json";
    write_metrics_csv(artifacts.metrics_csv.string(), result.records);
    if (result.not_applicable) {
        write_json(artifacts.summary_json.string(), na_summary(cfg.mode, result.na_reason));
    } else {
        write_json(artifacts.summary_json.string(), summarize(result.records, cfg.mode));
        artifacts.checkpoint = out_dir / "model.ckpt";
        save_checkpoint(artifacts.checkpoint.string(), run.model());
    }
    artifacts.result = std::move(result);
    return artifacts;
}

}  // namespace profl
