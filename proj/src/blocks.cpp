#include "profl/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "profl/errors.hpp"
#include "profl/rng.hpp"

namespace profl {

BlockPlan BlockPlan::partition(std::size_t hidden_layers, std::size_t blocks) {
    if (blocks < 2) {
        throw ValueError("partition: need at least 2 blocks, got " + std::to_string(blocks));
    }
    if (blocks > hidden_layers) {
        throw ValueError("partition: " + std::to_string(blocks) + " blocks for " +
                         std::to_string(hidden_layers) + " hidden layers");
    }
    BlockPlan plan;
    plan.block_count = blocks;
    const std::size_t base = hidden_layers / blocks;
    const std::size_t extra = hidden_layers % blocks;
    for (std::size_t b = 0; b < blocks; ++b) {
        plan.sizes.push_back(base + (b < extra ? 1 : 0));
    }
    return plan;
}

std::pair<std::size_t, std::size_t> BlockPlan::range(std::size_t t) const {
    if (t < 1 || t > block_count) {
        throw ValueError("block range: t=" + std::to_string(t) + " outside [1, " +
                         std::to_string(block_count) + "]");
    }
    std::size_t begin = 0;
    for (std::size_t b = 0; b + 1 < t; ++b) begin += sizes[b];
    return {begin, begin + sizes[t - 1]};
}

std::pair<std::size_t, std::size_t> GlobalModel::block_io(std::size_t t) const {
    auto [begin, end] = plan.range(t);
    const std::size_t in = begin == 0 ? layout.input_dim : layout.hidden[begin - 1];
    return {in, layout.hidden[end - 1]};
}

std::size_t GlobalModel::block_param_count(std::size_t t) const {
    auto [begin, end] = plan.range(t);
    std::size_t n = 0;
    for (std::size_t i = begin; i < end; ++i) n += hidden[i].param_count();
    return n;
}

std::vector<double> GlobalModel::pack_block(std::size_t t) const {
    auto [begin, end] = plan.range(t);
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    return pack_layers(hidden, idx).values;
}

void GlobalModel::unpack_block(std::size_t t, const std::vector<double>& values) {
    if (values.size() != block_param_count(t)) {
        throw LayoutError("unpack_block: " + std::to_string(values.size()) +
                          " values for a block of " + std::to_string(block_param_count(t)) +
                          " parameters");
    }
    auto [begin, end] = plan.range(t);
    std::size_t off = 0;
    for (std::size_t i = begin; i < end; ++i) {
        DenseLayer& l = hidden[i];
        std::copy(values.begin() + off, values.begin() + off + l.weights.size(),
                  l.weights.data.begin());
        off += l.weights.size();
        std::copy(values.begin() + off, values.begin() + off + l.bias.size(), l.bias.begin());
        off += l.bias.size();
    }
}

std::vector<DenseLayer> GlobalModel::full_layers() const {
    std::vector<DenseLayer> layers = hidden;
    layers.push_back(head);
    return layers;
}

DenseLayer init_dense(std::size_t fan_in, std::size_t fan_out, Activation act,
                      std::mt19937_64& rng) {
    if (fan_in == 0 || fan_out == 0) {
        throw ShapeError("init_dense: zero-width layer");
    }
    DenseLayer l(fan_in, fan_out, act);
    const double scale = act == Activation::ReLU ? 2.0 : 1.0;
    std::normal_distribution<double> dist(0.0, std::sqrt(scale / static_cast<double>(fan_in)));
    for (double& w : l.weights.data) w = dist(rng);
    return l;
}

GlobalModel make_mlp_model(const ModelLayout& layout, std::size_t blocks, std::uint64_t seed) {
    if (layout.input_dim == 0 || layout.class_count == 0 || layout.hidden.empty()) {
        throw ValueError("make_mlp_model: layout needs input dim, hidden widths and classes");
    }
    GlobalModel m;
    m.layout = layout;
    m.plan = BlockPlan::partition(layout.hidden.size(), blocks);
    std::mt19937_64 rng = make_rng(seed, "model-init");
    std::size_t in = layout.input_dim;
    for (std::size_t w : layout.hidden) {
        m.hidden.push_back(init_dense(in, w, Activation::ReLU, rng));
        in = w;
    }
    m.head = init_dense(in, layout.class_count, Activation::SoftmaxXent, rng);
    m.states.assign(blocks, BlockState::Untrained);
    m.snapshots.assign(blocks, std::nullopt);
    m.basics.assign(blocks, std::nullopt);
    return m;
}

std::size_t SubModel::prefix_len() const {
    std::size_t n = 0;
    while (n < trainable.size() && !trainable[n]) ++n;
    return n;
}

std::vector<std::size_t> SubModel::trainable_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < trainable.size(); ++i) {
        if (trainable[i]) idx.push_back(i);
    }
    return idx;
}

std::size_t SubModel::trainable_param_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (trainable[i]) n += layers[i].param_count();
    }
    return n;
}

std::size_t SubModel::total_param_count() const {
    std::size_t n = 0;
    for (const DenseLayer& l : layers) n += l.param_count();
    return n;
}

namespace {

void check_step_index(const GlobalModel& model, std::size_t t, std::size_t lowest,
                      const char* who) {
    if (t < lowest || t > model.plan.block_count) {
        throw ValueError(std::string(who) + ": step t=" + std::to_string(t) + " outside [" +
                         std::to_string(lowest) + ", " +
                         std::to_string(model.plan.block_count) + "]");
    }
}

// Prefix blocks 1..t-1 plus the active block t, recording origins and the
// active layer positions.
void push_hidden_through_block(const GlobalModel& model, std::size_t t, SubModel& sub) {
    auto [abegin, aend] = model.plan.range(t);
    for (std::size_t i = 0; i < aend; ++i) {
        sub.layers.push_back(model.hidden[i]);
        sub.trainable.push_back(i >= abegin);
        sub.origins.push_back({LayerOrigin::Kind::Hidden, i});
        if (i >= abegin) sub.active_layers.push_back(sub.layers.size() - 1);
    }
    sub.active_block = t;
}

void push_basics_and_head(const GlobalModel& model, std::size_t t, bool train_basics,
                          SubModel& sub, const char* who) {
    const std::size_t T = model.plan.block_count;
    for (std::size_t b = t + 1; b <= T; ++b) {
        if (!model.basics[b - 1].has_value()) {
            throw StateError(std::string(who) + ": no basic layer for block " +
                             std::to_string(b));
        }
        sub.layers.push_back(*model.basics[b - 1]);
        sub.trainable.push_back(train_basics);
        sub.origins.push_back({LayerOrigin::Kind::Basic, b});
    }
    sub.layers.push_back(model.head);
    sub.trainable.push_back(true);
    sub.origins.push_back({LayerOrigin::Kind::Head, 0});
}

}  // namespace

SubModel assemble_growing(const GlobalModel& model, std::size_t t, const AssembleOptions& opts) {
    check_step_index(model, t, 1, "assemble_growing");
    SubModel sub;
    push_hidden_through_block(model, t, sub);
    if (model.snapshots[t - 1].has_value()) {
        // A shrinking run left a converged initialization for this block.
        const std::vector<double>& snap = *model.snapshots[t - 1];
        if (snap.size() != model.block_param_count(t)) {
            throw LayoutError("assemble_growing: snapshot size does not match block " +
                              std::to_string(t));
        }
        ParamVector pv;
        pv.values = snap;
        std::vector<DenseLayer> block_view;
        auto [begin, end] = model.plan.range(t);
        for (std::size_t i = begin; i < end; ++i) block_view.push_back(model.hidden[i]);
        pv.layout = ParamLayout::of(block_view);
        unpack(pv, block_view);
        for (std::size_t i = begin; i < end; ++i) {
            sub.layers[i] = block_view[i - begin];
        }
    }
    push_basics_and_head(model, t, opts.train_basics, sub, "assemble_growing");
    return sub;
}

SubModel assemble_growing_plain(const GlobalModel& model, std::size_t t,
                                const DenseLayer& out_head, bool is_real_head) {
    check_step_index(model, t, 1, "assemble_growing_plain");
    auto [in, out] = model.block_io(t);
    (void)in;
    if (out_head.fan_in() != out || out_head.fan_out() != model.layout.class_count) {
        throw ShapeError("assemble_growing_plain: output layer is " +
                         std::to_string(out_head.fan_in()) + "->" +
                         std::to_string(out_head.fan_out()) + ", step needs " +
                         std::to_string(out) + "->" + std::to_string(model.layout.class_count));
    }
    SubModel sub;
    push_hidden_through_block(model, t, sub);
    sub.layers.push_back(out_head);
    sub.trainable.push_back(true);
    sub.origins.push_back({is_real_head ? LayerOrigin::Kind::Head : LayerOrigin::Kind::AuxHead, 0});
    return sub;
}

SubModel assemble_shrinking(const GlobalModel& model, std::size_t t) {
    check_step_index(model, t, 2, "assemble_shrinking");
    SubModel sub;
    push_hidden_through_block(model, t, sub);
    push_basics_and_head(model, t, /*train_basics=*/true, sub, "assemble_shrinking");
    return sub;
}

SubModel assemble_full(const GlobalModel& model) {
    SubModel sub;
    for (std::size_t i = 0; i < model.hidden.size(); ++i) {
        sub.layers.push_back(model.hidden[i]);
        sub.trainable.push_back(true);
        sub.origins.push_back({LayerOrigin::Kind::Hidden, i});
        sub.active_layers.push_back(i);
    }
    sub.layers.push_back(model.head);
    sub.trainable.push_back(true);
    sub.origins.push_back({LayerOrigin::Kind::Head, 0});
    sub.active_layers.push_back(sub.layers.size() - 1);
    sub.active_block = 0;
    return sub;
}

SubModel head_only(const SubModel& sub) {
    SubModel out = sub;
    out.trainable.assign(out.layers.size(), false);
    out.trainable.back() = true;
    out.active_layers.clear();
    out.active_layers.push_back(out.layers.size() - 1);
    return out;
}

void snapshot_init(GlobalModel& model, std::size_t t, const std::vector<double>& block_params) {
    check_step_index(model, t, 1, "snapshot_init");
    if (model.snapshots[t - 1].has_value()) {
        throw StateError("snapshot_init: block " + std::to_string(t) +
                         " already has an init snapshot");
    }
    if (block_params.size() != model.block_param_count(t)) {
        throw LayoutError("snapshot_init: " + std::to_string(block_params.size()) +
                          " values for block " + std::to_string(t) + " which has " +
                          std::to_string(model.block_param_count(t)) + " parameters");
    }
    model.snapshots[t - 1] = block_params;
}

void apply_step_result(GlobalModel& model, const SubModel& sub) {
    for (std::size_t i = 0; i < sub.layers.size(); ++i) {
        if (!sub.trainable[i]) continue;
        const LayerOrigin& o = sub.origins[i];
        switch (o.kind) {
            case LayerOrigin::Kind::Hidden:
                model.hidden.at(o.index) = sub.layers[i];
                break;
            case LayerOrigin::Kind::Basic:
                model.basics.at(o.index - 1) = sub.layers[i];
                break;
            case LayerOrigin::Kind::Head:
                model.head = sub.layers[i];
                break;
            case LayerOrigin::Kind::AuxHead:
                break;  // owned by the ablation loop, not the global model
        }
    }
}

ParamVector pack_layers(const std::vector<DenseLayer>& layers,
                        const std::vector<std::size_t>& idx) {
    std::vector<DenseLayer> view;
    view.reserve(idx.size());
    for (std::size_t i : idx) view.push_back(layers.at(i));
    return pack(view);
}

void unpack_layers(const ParamVector& pv, std::vector<DenseLayer>& layers,
                   const std::vector<std::size_t>& idx) {
    std::vector<DenseLayer> view;
    view.reserve(idx.size());
    for (std::size_t i : idx) view.push_back(layers.at(i));
    unpack(pv, view);
    for (std::size_t k = 0; k < idx.size(); ++k) layers.at(idx[k]) = std::move(view[k]);
}

std::vector<double> pack_active(const SubModel& sub) {
    return pack_layers(sub.layers, sub.active_layers).values;
}

}  // namespace profl
