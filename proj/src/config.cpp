#include "profl/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "profl/errors.hpp"
#include "profl/memory.hpp"

namespace profl {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void bad(std::size_t line, const std::string& what) {
    throw ConfigError("line " + std::to_string(line) + ": " + what);
}

std::uint64_t parse_u64(const std::string& v, std::size_t line, const std::string& key) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        bad(line, key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

double parse_double(const std::string& v, std::size_t line, const std::string& key) {
    try {
        std::size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return out;
    } catch (const std::exception&) {
        bad(line, key + ": expected a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v, std::size_t line, const std::string& key) {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    bad(line, key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& v, std::size_t line,
                                         const std::string& key) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) bad(line, key + ": empty list entry");
        out.push_back(parse_u64(item, line, key));
    }
    if (out.empty()) bad(line, key + ": expected a comma-separated list");
    return out;
}

}  // namespace

RunMode parse_mode(const std::string& name) {
    if (name == "profl") return RunMode::Profl;
    if (name == "oracle") return RunMode::Oracle;
    if (name == "allsmall") return RunMode::AllSmall;
    if (name == "exclusive") return RunMode::Exclusive;
    throw ConfigError("mode: expected profl, oracle, allsmall or exclusive, got '" + name + "'");
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::size_t line_no = 0;

    while (std::getline(in, raw)) {
        ++line_no;
        std::size_t cut = raw.find_first_of("#;");
        std::string line = trim(cut == std::string::npos ? raw : raw.substr(0, cut));
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') bad(line_no, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "run" && section != "data" && section != "model" &&
                section != "federation" && section != "freeze" && section != "distill" &&
                section != "profl") {
                bad(line_no, "unknown section [" + section + "]");
            }
            continue;
        }

        std::size_t eq = line.find('=');
        if (eq == std::string::npos) bad(line_no, "expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) bad(line_no, "empty key");
        if (section.empty()) bad(line_no, "key '" + key + "' outside any section");
        const std::string path = section + "." + key;

        if (section == "run") {
            if (key == "mode") {
                try {
                    cfg.mode = parse_mode(value);
                } catch (const ConfigError& e) {
                    bad(line_no, e.what());
                }
            } else if (key == "seed") {
                cfg.seed = parse_u64(value, line_no, path);
            } else if (key == "out") {
                cfg.out_dir = value;
            } else if (key == "round_cap") {
                cfg.fed.round_cap = parse_u64(value, line_no, path);
            } else {
                bad(line_no, "unknown key '" + path + "'");
            }
        } else if (section == "data") {
            if (key == "source") {
                if (value != "gaussian" && value != "idx") {
                    bad(line_no, path + ": expected gaussian or idx");
                }
                cfg.data.source = value;
            } else if (key == "classes") {
                cfg.data.classes = parse_u64(value, line_no, path);
            } else if (key == "dims") {
                cfg.data.dims = parse_u64(value, line_no, path);
            } else if (key == "samples_per_class") {
                cfg.data.samples_per_class = parse_u64(value, line_no, path);
            } else if (key == "test_samples_per_class") {
                cfg.data.test_samples_per_class = parse_u64(value, line_no, path);
            } else if (key == "spread") {
                cfg.data.spread = parse_double(value, line_no, path);
            } else if (key == "images") {
                cfg.data.images = value;
            } else if (key == "labels") {
                cfg.data.labels = value;
            } else if (key == "test_images") {
                cfg.data.test_images = value;
            } else if (key == "test_labels") {
                cfg.data.test_labels = value;
            } else if (key == "partition") {
                if (value == "iid") {
                    cfg.data.partition.kind = PartitionKind::Iid;
                } else if (value == "dirichlet") {
                    cfg.data.partition.kind = PartitionKind::Dirichlet;
                } else {
                    bad(line_no, path + ": expected iid or dirichlet");
                }
            } else if (key == "alpha") {
                cfg.data.partition.alpha = parse_double(value, line_no, path);
            } else {
                bad(line_no, "unknown key '" + path + "'");
            }
        } else if (section == "model") {
            if (key == "hidden") {
                cfg.hidden = parse_size_list(value, line_no, path);
            } else if (key == "blocks") {
                cfg.blocks = parse_u64(value, line_no, path);
            } else {
                bad(line_no, "unknown key '" + path + "'");
            }
        } else if (section == "federation") {
            if (key == "pool") {
                cfg.pool = parse_u64(value, line_no, path);
            } else if (key == "target") {
                cfg.fed.select_target = parse_u64(value, line_no, path);
            } else if (key == "local_epochs") {
                cfg.fed.sgd.local_epochs = parse_u64(value, line_no, path);
            } else if (key == "learning_rate") {
                cfg.fed.sgd.learning_rate = parse_double(value, line_no, path);
            } else if (key == "batch") {
                cfg.fed.sgd.batch_size = parse_u64(value, line_no, path);
            } else if (key == "cache_frozen") {
                cfg.fed.cache_frozen = parse_bool(value, line_no, path);
            } else if (key == "budget_low_frac") {
                cfg.budget.low_frac = parse_double(value, line_no, path);
            } else if (key == "budget_high_frac") {
                cfg.budget.high_frac = parse_double(value, line_no, path);
            } else if (key == "budget_low_mb") {
                cfg.budget.low_mb = parse_double(value, line_no, path);
            } else if (key == "budget_high_mb") {
                cfg.budget.high_mb = parse_double(value, line_no, path);
            } else {
                bad(line_no, "unknown key '" + path + "'");
            }
        } else if (section == "freeze") {
            if (key == "window") {
                cfg.fed.freeze.window = parse_u64(value, line_no, path);
            } else if (key == "threshold") {
                cfg.fed.freeze.threshold = parse_double(value, line_no, path);
            } else if (key == "patience") {
                cfg.fed.freeze.patience = parse_u64(value, line_no, path);
            } else if (key == "min_rounds") {
                cfg.fed.freeze.min_rounds = parse_u64(value, line_no, path);
            } else if (key == "slope_fit") {
                if (value == "full") {
                    cfg.fed.freeze.slope_fit = SlopeFit::FullSeries;
                } else if (value == "trailing") {
                    cfg.fed.freeze.slope_fit = SlopeFit::TrailingWindow;
                } else {
                    bad(line_no, path + ": expected full or trailing");
                }
            } else if (key == "trailing_window") {
                cfg.fed.freeze.trailing_window = parse_u64(value, line_no, path);
            } else {
                bad(line_no, "unknown key '" + path + "'");
            }
        } else if (section == "distill") {
            if (key == "rounds") {
                cfg.fed.distill.rounds = parse_u64(value, line_no, path);
            } else if (key == "learning_rate") {
                cfg.fed.distill.learning_rate = parse_double(value, line_no, path);
            } else if (key == "batch") {
                cfg.fed.distill.batch_size = parse_u64(value, line_no, path);
            } else if (key == "min_improvement") {
                cfg.fed.distill.min_improvement = parse_double(value, line_no, path);
            } else if (key == "stall_window") {
                cfg.fed.distill.stall_window = parse_u64(value, line_no, path);
            } else {
                bad(line_no, "unknown key '" + path + "'");
            }
        } else {  // profl
            if (key == "shrinking") {
                cfg.fed.shrinking = parse_bool(value, line_no, path);
            } else if (key == "train_basics_while_growing") {
                cfg.fed.train_basics_while_growing = parse_bool(value, line_no, path);
            } else {
                bad(line_no, "unknown key '" + path + "'");
            }
        }
    }

    cfg.fed.seed = cfg.seed;
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

ModelLayout config_layout(const RunConfig& cfg) {
    ModelLayout layout;
    layout.hidden = cfg.hidden;
    if (cfg.data.source == "gaussian") {
        layout.input_dim = cfg.data.dims;
        layout.class_count = cfg.data.classes;
    }
    return layout;
}

namespace {

// Best capacity any device could draw, in bytes.
double max_budget_bytes(const RunConfig& cfg, std::uint64_t full_estimate) {
    if (cfg.budget.high_mb.has_value()) return *cfg.budget.high_mb * 1e6;
    return cfg.budget.high_frac * static_cast<double>(full_estimate);
}

void feasibility_warnings(const RunConfig& cfg, ValidationReport& report) {
    if (cfg.data.source != "gaussian") return;  // input width unknown until load
    if (cfg.mode == RunMode::Oracle) return;    // budgets are ignored there

    GlobalModel model = make_mlp_model(config_layout(cfg), cfg.blocks, 1);
    const std::size_t T = model.plan.block_count;
    for (std::size_t t = 2; t <= T; ++t) {
        auto [in, out] = model.block_io(t);
        model.basics[t - 1] = DenseLayer(in, out, Activation::Identity);
    }
    const std::size_t batch = cfg.fed.sgd.batch_size;
    const bool cache = cfg.fed.cache_frozen;
    const std::uint64_t full_need = estimate(assemble_full(model), batch, cache).bytes();
    const double best = max_budget_bytes(cfg, full_need);

    auto check_step = [&](const SubModel& sub, const std::string& name) {
        const std::uint64_t need = estimate(sub, batch, cache).bytes();
        const std::uint64_t head_need = estimate(head_only(sub), batch, cache).bytes();
        if (static_cast<double>(head_need) > best) {
            report.warnings.push_back(name + ": no feasible participants even head-only");
        } else if (static_cast<double>(need) > best) {
            report.warnings.push_back(name + ": no device fits the full slice; the step would "
                                             "rely on head-only fallback");
        }
    };

    if (cfg.mode == RunMode::Profl) {
        if (cfg.fed.shrinking) {
            for (std::size_t t = T; t >= 2; --t) {
                check_step(assemble_shrinking(model, t),
                           "shrink step " + std::to_string(t));
                auto [abegin, aend] = model.plan.range(t);
                std::vector<DenseLayer> prefix(model.hidden.begin(),
                                               model.hidden.begin() + abegin);
                std::vector<DenseLayer> teacher(model.hidden.begin() + abegin,
                                                model.hidden.begin() + aend);
                auto [in, out] = model.block_io(t);
                const std::uint64_t dneed =
                    estimate_distill(prefix, teacher, init_student(in, out), cfg.fed.distill.batch_size,
                                     cache)
                        .bytes();
                const std::uint64_t dneed1 =
                    estimate_distill(prefix, teacher, init_student(in, out), 1, cache).bytes();
                if (static_cast<double>(dneed1) > best) {
                    report.warnings.push_back("distillation for block " + std::to_string(t) +
                                              ": no device fits even at batch 1");
                } else if (static_cast<double>(dneed) > best) {
                    report.warnings.push_back("distillation for block " + std::to_string(t) +
                                              ": would drop to batch 1 to fit");
                }
            }
        }
        for (std::size_t t = 1; t <= T; ++t) {
            check_step(assemble_growing(model, t), "grow step " + std::to_string(t));
        }
    } else if (cfg.mode == RunMode::Exclusive) {
        if (static_cast<double>(full_need) > best) {
            report.warnings.push_back(
                "exclusive baseline: no device can train the full model (run would be "
                "not-applicable)");
        }
    } else {  // AllSmall
        SubModel probe;
        std::size_t in = cfg.data.dims;
        for (std::size_t h : cfg.hidden) {
            const std::size_t w = std::max<std::size_t>(1, h / 1000);
            probe.layers.emplace_back(in, w, Activation::ReLU);
            probe.trainable.push_back(true);
            in = w;
        }
        probe.layers.emplace_back(in, cfg.data.classes, Activation::SoftmaxXent);
        probe.trainable.push_back(true);
        const std::uint64_t narrow_need = estimate(probe, batch, false).bytes();
        if (static_cast<double>(narrow_need) > best) {
            report.warnings.push_back(
                "allsmall baseline: even the narrowest model exceeds every budget (run would "
                "be not-applicable)");
        }
    }
}

}  // namespace

ValidationReport validate_config(const RunConfig& cfg) {
    ValidationReport report;
    auto err = [&](const std::string& m) { report.errors.push_back(m); };
    auto warn = [&](const std::string& m) { report.warnings.push_back(m); };

    if (cfg.hidden.empty()) err("model.hidden: at least one hidden layer is required");
    for (std::size_t w : cfg.hidden) {
        if (w == 0) {
            err("model.hidden: layer widths must be positive");
            break;
        }
    }
    if (cfg.blocks < 2) {
        err("model.blocks: progressive training needs at least 2 blocks");
    } else if (cfg.blocks > cfg.hidden.size()) {
        err("model.blocks: " + std::to_string(cfg.blocks) + " blocks cannot partition " +
            std::to_string(cfg.hidden.size()) + " hidden layers");
    }

    if (cfg.data.source == "gaussian") {
        if (cfg.data.classes < 2) err("data.classes: need at least 2 classes");
        if (cfg.data.dims == 0) err("data.dims: must be positive");
        if (cfg.data.samples_per_class == 0) err("data.samples_per_class: must be positive");
        if (cfg.data.test_samples_per_class == 0) {
            err("data.test_samples_per_class: must be positive");
        }
        if (cfg.data.spread < 0) err("data.spread: must be non-negative");
        if (cfg.data.classes * cfg.data.samples_per_class < cfg.pool) {
            err("data: fewer training samples than devices; some shards would be empty");
        }
    } else {
        if (cfg.data.images.empty()) err("data.images: required for idx source");
        if (cfg.data.labels.empty()) err("data.labels: required for idx source");
        if (cfg.data.test_images.empty()) err("data.test_images: required for idx source");
        if (cfg.data.test_labels.empty()) err("data.test_labels: required for idx source");
    }
    if (cfg.data.partition.kind == PartitionKind::Dirichlet && cfg.data.partition.alpha <= 0) {
        err("data.alpha: Dirichlet concentration must be positive");
    }

    if (cfg.pool == 0) err("federation.pool: must be positive");
    if (cfg.fed.select_target == 0) err("federation.target: must be positive");
    if (cfg.fed.select_target > cfg.pool) {
        warn("federation.target exceeds the pool; every eligible device is picked each round");
    }
    if (cfg.fed.round_cap == 0) err("run.round_cap: must be positive");
    if (cfg.fed.sgd.batch_size == 0) err("federation.batch: must be positive");
    if (cfg.fed.sgd.learning_rate < 0) err("federation.learning_rate: must be non-negative");
    if (cfg.fed.sgd.learning_rate == 0) warn("federation.learning_rate is 0; training is a no-op");
    if (cfg.fed.sgd.local_epochs == 0) warn("federation.local_epochs is 0; clients return unchanged models");

    if (cfg.fed.freeze.window == 0) err("freeze.window: must be positive");
    if (cfg.fed.freeze.threshold <= 0 || cfg.fed.freeze.threshold >= 1) {
        err("freeze.threshold: must lie strictly between 0 and 1");
    }
    if (cfg.fed.freeze.patience == 0) err("freeze.patience: must be positive");
    if (cfg.fed.freeze.slope_fit == SlopeFit::TrailingWindow && cfg.fed.freeze.trailing_window < 2) {
        err("freeze.trailing_window: need at least 2 points to fit a slope");
    }

    if (cfg.fed.distill.rounds == 0) err("distill.rounds: must be positive");
    if (cfg.fed.distill.batch_size == 0) err("distill.batch: must be positive");
    if (cfg.fed.distill.learning_rate < 0) err("distill.learning_rate: must be non-negative");
    if (cfg.fed.distill.min_improvement < 0) err("distill.min_improvement: must be non-negative");
    if (cfg.fed.distill.stall_window == 0) err("distill.stall_window: must be positive");

    if (cfg.budget.low_mb.has_value() != cfg.budget.high_mb.has_value()) {
        err("federation: budget_low_mb and budget_high_mb must be set together");
    } else if (cfg.budget.low_mb.has_value()) {
        if (*cfg.budget.low_mb < 0) err("federation.budget_low_mb: must be non-negative");
        if (*cfg.budget.low_mb > *cfg.budget.high_mb) {
            err("federation: budget_low_mb exceeds budget_high_mb");
        }
    } else {
        if (cfg.budget.low_frac <= 0) err("federation.budget_low_frac: must be positive");
        if (cfg.budget.low_frac > cfg.budget.high_frac) {
            err("federation: budget_low_frac exceeds budget_high_frac");
        }
    }

    if (report.errors.empty()) feasibility_warnings(cfg, report);
    return report;
}

}  // namespace profl
