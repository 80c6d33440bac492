#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "profl/blocks.hpp"
#include "profl/config.hpp"
#include "profl/data.hpp"
#include "profl/distill.hpp"
#include "profl/errors.hpp"
#include "profl/freeze.hpp"
#include "profl/memory.hpp"
#include "profl/metrics.hpp"
#include "profl/runner.hpp"

namespace py = pybind11;
using namespace profl;

namespace {

py::object json_to_py(const nlohmann::json& j) {
    switch (j.type()) {
        case nlohmann::json::value_t::null:
            return py::none();
        case nlohmann::json::value_t::boolean:
            return py::bool_(j.get<bool>());
        case nlohmann::json::value_t::number_integer:
            return py::int_(j.get<std::int64_t>());
        case nlohmann::json::value_t::number_unsigned:
            return py::int_(j.get<std::uint64_t>());
        case nlohmann::json::value_t::number_float:
            return py::float_(j.get<double>());
        case nlohmann::json::value_t::string:
            return py::str(j.get<std::string>());
        case nlohmann::json::value_t::array: {
            py::list out;
            for (const auto& item : j) out.append(json_to_py(item));
            return out;
        }
        case nlohmann::json::value_t::object: {
            py::dict out;
            for (auto it = j.begin(); it != j.end(); ++it)
                out[py::str(it.key())] = json_to_py(it.value());
            return out;
        }
        default:
            throw ValueError("unsupported json value in summary");
    }
}

PartitionKind parse_partition(const std::string& kind) {
    if (kind == "iid") return PartitionKind::Iid;
    if (kind == "dirichlet") return PartitionKind::Dirichlet;
    throw ValueError("partition kind must be iid or dirichlet, got '" + kind + "'");
}

SlopeFit parse_slope_fit(const std::string& fit) {
    if (fit == "full") return SlopeFit::FullSeries;
    if (fit == "trailing") return SlopeFit::TrailingWindow;
    throw ValueError("slope fit must be full or trailing, got '" + fit + "'");
}

// Per-phase training footprints for a model shape, without running anything.
// Basic layers are synthesized with the real shapes, so the numbers match
// what a simulation would report.
py::dict memory_profile(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                        std::size_t classes, std::size_t blocks, std::size_t batch,
                        bool cache_frozen) {
    GlobalModel model = make_mlp_model(ModelLayout{input_dim, hidden, classes}, blocks, 1);
    const std::size_t T = model.plan.block_count;
    for (std::size_t t = 2; t <= T; ++t) {
        auto [in, out] = model.block_io(t);
        model.basics[t - 1] = DenseLayer(in, out, Activation::Identity);
    }

    py::dict out;
    out["full"] = estimate(assemble_full(model), batch, cache_frozen).bytes();
    py::list shrink, grow, distill;
    const std::vector<DenseLayer> layers = model.full_layers();
    for (std::size_t t = T; t >= 2; --t) {
        shrink.append(estimate(assemble_shrinking(model, t), batch, cache_frozen).bytes());
        auto [first, last] = model.plan.range(t);
        std::vector<DenseLayer> prefix(layers.begin(), layers.begin() + first);
        std::vector<DenseLayer> teacher(layers.begin() + first, layers.begin() + last);
        auto [in, w] = model.block_io(t);
        distill.append(
            estimate_distill(prefix, teacher, init_student(in, w), batch, cache_frozen).bytes());
    }
    for (std::size_t t = 1; t <= T; ++t) {
        grow.append(estimate(assemble_growing(model, t), batch, cache_frozen).bytes());
    }
    out["shrink"] = shrink;
    out["grow"] = grow;
    out["distill"] = distill;
    return out;
}

py::dict run_simulation(const std::string& config_text, std::optional<std::string> out_dir,
                        std::optional<std::string> mode, std::optional<std::uint64_t> seed) {
    RunConfig cfg = parse_config_text(config_text);
    if (out_dir) cfg.out_dir = *out_dir;
    if (mode) cfg.mode = parse_mode(*mode);
    if (seed) {
        cfg.seed = *seed;
        cfg.fed.seed = *seed;
    }
    RunArtifacts art = execute_run(cfg);

    nlohmann::json summary = art.result.not_applicable
                                 ? na_summary(art.mode, art.result.na_reason)
                                 : summarize(art.result.records, art.mode);
    py::dict out = json_to_py(summary);
    py::dict paths;
    paths["metrics_csv"] = art.metrics_csv.string();
    paths["summary_json"] = art.summary_json.string();
    paths["checkpoint"] = art.checkpoint.string();
    out["artifacts"] = paths;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "memory-aware progressive federated learning simulator";
    m.attr("__version__") = "0.1.0";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("size", &Dataset::size)
        .def_property_readonly("dims", &Dataset::dims)
        .def_readonly("class_count", &Dataset::class_count)
        .def_property_readonly("labels", [](const Dataset& d) { return d.labels; })
        .def("row",
             [](const Dataset& d, std::size_t i) {
                 if (i >= d.size()) throw py::index_error();
                 std::vector<double> out(d.features.cols);
                 for (std::size_t c = 0; c < d.features.cols; ++c) out[c] = d.features.at(i, c);
                 return out;
             })
        .def("__len__", &Dataset::size)
        .def("__repr__", [](const Dataset& d) {
            return "Dataset(" + std::to_string(d.size()) + " samples, " +
                   std::to_string(d.dims()) + " dims, " + std::to_string(d.class_count) +
                   " classes)";
        });

    m.def("gen_gaussian_mixture", &gen_gaussian_mixture, py::arg("classes"), py::arg("dims"),
          py::arg("samples_per_class"), py::arg("spread"), py::arg("seed"));

    m.def("load_idx", &load_idx, py::arg("images_path"), py::arg("labels_path"));

    m.def(
        "partition",
        [](const Dataset& ds, std::size_t shards, const std::string& kind, double alpha,
           std::uint64_t seed) {
            return partition(ds, shards, PartitionSpec{parse_partition(kind), alpha}, seed);
        },
        py::arg("dataset"), py::arg("shards"), py::arg("kind") = "iid", py::arg("alpha") = 1.0,
        py::arg("seed") = 1);

    m.def("fit_slope", &fit_slope, py::arg("points"),
          "least-squares slope of (x, y) pairs");

    py::class_<EmTracker>(m, "EmTracker")
        .def(py::init<std::size_t>(), py::arg("window"))
        .def("observe", &EmTracker::observe, py::arg("params"))
        .def("latest", [](const EmTracker& t) { return t.latest(); })
        .def_property_readonly("window", &EmTracker::window)
        .def_property_readonly("rounds_observed", &EmTracker::rounds_observed)
        .def("series", [](const EmTracker& t) { return t.series(); });

    m.def(
        "replay_freeze",
        [](const std::vector<std::pair<double, double>>& series, std::size_t window,
           double threshold, std::size_t patience, std::size_t min_rounds,
           const std::string& slope_fit, std::size_t trailing_window,
           std::size_t rounds_before_first_em) {
            FreezePolicy policy{window, threshold, patience, min_rounds,
                                parse_slope_fit(slope_fit), trailing_window};
            return replay_freeze(series, policy, rounds_before_first_em);
        },
        py::arg("series"), py::arg("window") = 10, py::arg("threshold") = 0.15,
        py::arg("patience") = 20, py::arg("min_rounds") = 15, py::arg("slope_fit") = "full",
        py::arg("trailing_window") = 50, py::arg("rounds_before_first_em") = 10,
        "replays a recorded movement series through the freeze rule; returns the "
        "1-based firing position or None");

    m.def("memory_profile", &memory_profile, py::arg("input_dim"), py::arg("hidden"),
          py::arg("classes"), py::arg("blocks"), py::arg("batch") = 32,
          py::arg("cache_frozen") = false,
          "per-phase training footprints in bytes for a model shape");

    m.def("run_simulation", &run_simulation, py::arg("config_text"),
          py::arg("out_dir") = std::nullopt, py::arg("mode") = std::nullopt,
          py::arg("seed") = std::nullopt,
          "parses a configuration, runs the simulation, writes artifacts, and "
          "returns the summary as a dict");
}
