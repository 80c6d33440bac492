#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "profl/nn.hpp"

namespace profl {

// Contiguous split of the hidden layers into T blocks, near-even with the
// larger blocks first: 9 layers over T=4 gives sizes [3, 2, 2, 2].
struct BlockPlan {
    std::size_t block_count = 0;
    std::vector<std::size_t> sizes;  // one entry per block, sums to the hidden layer count

    static BlockPlan partition(std::size_t hidden_layers, std::size_t blocks);

    // Half-open [begin, end) hidden-layer range of 1-based block t.
    std::pair<std::size_t, std::size_t> range(std::size_t t) const;
};

enum class BlockState : std::uint8_t { Untrained = 0, Active = 1, Frozen = 2, WellTrained = 3 };

struct ModelLayout {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden;  // hidden layer widths
    std::size_t class_count = 0;
};

// Server-side view of the full model plus everything the progressive
// schedule accumulates: per-block states, the converged initializations
// harvested while shrinking, and the distilled basic layers.
struct GlobalModel {
    ModelLayout layout;
    BlockPlan plan;
    std::vector<DenseLayer> hidden;
    DenseLayer head;
    std::vector<BlockState> states;                            // per block
    std::vector<std::optional<std::vector<double>>> snapshots;  // block init params, index t-1
    std::vector<std::optional<DenseLayer>> basics;              // distilled stand-ins, index t-1

    // Input/output width a basic layer for block t must have.
    std::pair<std::size_t, std::size_t> block_io(std::size_t t) const;
    std::size_t block_param_count(std::size_t t) const;
    std::vector<double> pack_block(std::size_t t) const;
    void unpack_block(std::size_t t, const std::vector<double>& values);
    std::vector<DenseLayer> full_layers() const;  // hidden + head
};

GlobalModel make_mlp_model(const ModelLayout& layout, std::size_t blocks, std::uint64_t seed);

// Where a sub-model layer lives in the global model, for writing results back.
struct LayerOrigin {
    enum class Kind : std::uint8_t { Hidden = 0, Basic = 1, Head = 2, AuxHead = 3 };
    Kind kind = Kind::Hidden;
    std::size_t index = 0;  // hidden layer index, or block number for Basic
};

// The model slice a training step ships to clients: frozen prefix, the
// active block, then the output module, head last.
struct SubModel {
    std::vector<DenseLayer> layers;
    std::vector<bool> trainable;
    std::vector<LayerOrigin> origins;
    std::size_t active_block = 0;             // 1-based, 0 for whole-model baselines
    std::vector<std::size_t> active_layers;   // indices into `layers` tracked for freezing

    std::size_t prefix_len() const;           // leading frozen run
    std::vector<std::size_t> trainable_indices() const;
    std::size_t trainable_param_count() const;
    std::size_t total_param_count() const;
};

struct AssembleOptions {
    bool train_basics = false;  // if true, distilled basic layers keep learning while growing
};

// Growing step t: blocks 1..t-1 frozen at their grown values, block t active
// (re-initialized from its shrinking snapshot when one exists), then the
// remaining blocks' basic layers and the classification head.
SubModel assemble_growing(const GlobalModel& model, std::size_t t,
                          const AssembleOptions& opts = {});

// Growing step t without shrinking artifacts: prefix + block t + the given
// output layer. Used by the no-shrinking ablation; `out_head` must map the
// block output width to the class count. When t == T the model's own head
// is expected.
SubModel assemble_growing_plain(const GlobalModel& model, std::size_t t,
                                const DenseLayer& out_head, bool is_real_head);

// Shrinking step t (T down to 2): blocks 1..t-1 frozen at their random
// initialization, block t active, basic layers of t+1..T and the head
// trainable behind it.
SubModel assemble_shrinking(const GlobalModel& model, std::size_t t);

// Whole model, everything trainable; baselines train this.
SubModel assemble_full(const GlobalModel& model);

// Same layers with only the final layer trainable (fallback devices).
SubModel head_only(const SubModel& sub);

// Stores the converged block-t parameters harvested during shrinking.
// Refuses to overwrite an existing snapshot.
void snapshot_init(GlobalModel& model, std::size_t t, const std::vector<double>& block_params);

// Copies the sub-model's trainable layers back into the global model.
// AuxHead layers are skipped; the ablation loop owns those.
void apply_step_result(GlobalModel& model, const SubModel& sub);

// Packs/unpacks a subset of layers (by index) as one flat vector.
ParamVector pack_layers(const std::vector<DenseLayer>& layers,
                        const std::vector<std::size_t>& idx);
void unpack_layers(const ParamVector& pv, std::vector<DenseLayer>& layers,
                   const std::vector<std::size_t>& idx);

// Flat parameters of the active block, the series the freeze logic watches.
std::vector<double> pack_active(const SubModel& sub);

// He-style random initialization used for every fresh layer.
DenseLayer init_dense(std::size_t fan_in, std::size_t fan_out, Activation act,
                      std::mt19937_64& rng);

}  // namespace profl
