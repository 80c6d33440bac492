#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "profl/aggregate.hpp"
#include "profl/blocks.hpp"
#include "profl/data.hpp"
#include "profl/distill.hpp"
#include "profl/freeze.hpp"
#include "profl/memory.hpp"

namespace profl {

enum class RunMode : std::uint8_t { Profl = 0, Oracle = 1, AllSmall = 2, Exclusive = 3 };

const char* mode_name(RunMode mode);

struct FedConfig {
    std::size_t select_target = 20;
    SgdConfig sgd;
    bool cache_frozen = false;
    std::size_t round_cap = 300;
    FreezePolicy freeze;
    DistillConfig distill;
    bool shrinking = true;                   // run the back-to-front preparation stage
    bool train_basics_while_growing = false; // let distilled stand-ins keep learning
    std::uint64_t seed = 1;
};

// One CSV row. `freeze` is 0 while training, 1 when the movement rule fired
// this round, 2 when the round cap stopped the step instead.
struct RoundRecord {
    std::size_t round = 0;
    std::string stage;  // shrink | distill | grow | baseline
    std::size_t step = 0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
    std::optional<double> em;
    int freeze = 0;
    std::uint64_t peak_memory_bytes = 0;
    double participation = 0.0;
    std::uint64_t uploaded_scalars = 0;
    std::uint64_t downloaded_scalars = 0;
    std::uint64_t flops = 0;
};

struct Selection {
    std::vector<std::size_t> full;      // device indices training the whole slice
    std::vector<std::size_t> fallback;  // device indices training the head only
    double participation = 0.0;         // pool share able to take any offered role
};

// Uniform sample of up to `target` devices whose budget covers `full_need`
// bytes; when allowed, devices covering only `fallback_need` fill the rest.
Selection select_clients(const std::vector<DeviceBudget>& pool, std::uint64_t full_need,
                         std::uint64_t fallback_need, bool allow_fallback, std::size_t target,
                         std::mt19937_64& rng);

struct LocalOutcome {
    std::vector<double> trainable;  // packed trainable layers, layer order
    double mean_loss = 0.0;         // sample-weighted mean batch loss before each step
};

// E epochs of minibatch SGD on the client's shard. Only the trainable slice
// moves; the caller gets it back packed. Zero epochs or a zero learning rate
// return the incoming slice unchanged.
LocalOutcome local_train(const SubModel& sub, const Tensor2& features,
                         const std::vector<int>& labels, const std::vector<std::size_t>& shard,
                         const SgdConfig& sgd, std::mt19937_64& rng);

struct RunResult {
    std::vector<RoundRecord> records;
    bool not_applicable = false;
    std::string na_reason;
    std::size_t freeze_events = 0;  // rows with freeze != 0
};

// Orchestrates one full simulation: progressive two-stage training or one of
// the baselines, over a fixed device pool and data partition. Single-use:
// construct, optionally set an observer, call run() once.
class FederatedRun {
  public:
    FederatedRun(const Dataset& train, const Dataset& test,
                 std::vector<std::vector<std::size_t>> shards, std::vector<DeviceBudget> pool,
                 ModelLayout layout, std::size_t blocks, FedConfig cfg);

    // Called after every training round (not distillation), once the record
    // is final and the aggregate has been written back into model and sub.
    using Observer =
        std::function<void(const RoundRecord&, const GlobalModel&, const SubModel&)>;
    void set_observer(Observer obs) { observer_ = std::move(obs); }

    RunResult run(RunMode mode);

    const GlobalModel& model() const { return model_; }

  private:
    struct StepStats {
        std::size_t rounds = 0;
        bool capped = false;
    };

    StepStats train_step(SubModel& sub, const char* stage, std::size_t t, bool allow_fallback,
                         bool ignore_budgets);
    void distill_step(std::size_t t);
    void run_profl();
    void run_growing(bool with_artifacts);
    bool prepare_baseline(RunMode mode);  // false = NA
    double evaluate(const SubModel& sub) const;

    const Dataset& train_;
    const Dataset& test_;
    std::vector<std::vector<std::size_t>> shards_;
    std::vector<DeviceBudget> pool_;
    ModelLayout layout_;
    std::size_t blocks_;
    FedConfig cfg_;

    GlobalModel model_;
    RunResult result_;
    Observer observer_;
    std::size_t global_round_ = 0;
    double last_accuracy_ = 0.0;
    bool ran_ = false;
};

}  // namespace profl
