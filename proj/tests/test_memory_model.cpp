#include "doctest.h"
#include "profl/errors.hpp"
#include "profl/memory.hpp"
#include "support.hpp"

using namespace profl;
using namespace profl::testing;

namespace {

SubModel single_layer_sub(std::size_t fan_in, std::size_t fan_out, bool trainable) {
    SubModel sub;
    sub.layers.push_back(DenseLayer(fan_in, fan_out, Activation::SoftmaxXent));
    sub.trainable.push_back(trainable);
    sub.origins.push_back({LayerOrigin::Kind::Head, 0});
    sub.active_layers.push_back(0);
    return sub;
}

DenseLayer make_basic(std::size_t fan_in, std::size_t fan_out) {
    return DenseLayer(fan_in, fan_out, Activation::Identity);
}

}  // namespace

TEST_CASE("single trainable layer footprint matches the hand count") {
    // 4 -> 3 layer, batch 2: 15 params + 15 grads + 2 * (4 + 3) activations
    SubModel sub = single_layer_sub(4, 3, true);
    MemoryEstimate e = estimate(sub, 2, false);
    CHECK(e.param_scalars == 15);
    CHECK(e.grad_scalars == 15);
    CHECK(e.stored_activation_scalars == 14);
    CHECK(e.transient_scalars == 0);
    CHECK(e.total_scalars() == 44);
    CHECK(e.bytes() == 176);
}

TEST_CASE("frozen layers stream through one transient buffer") {
    SubModel sub;
    sub.layers.push_back(DenseLayer(8, 6, Activation::ReLU));   // frozen prefix
    sub.layers.push_back(DenseLayer(6, 5, Activation::ReLU));   // trainable
    sub.layers.push_back(DenseLayer(5, 4, Activation::Identity));  // frozen mid-chain
    sub.layers.push_back(DenseLayer(4, 3, Activation::SoftmaxXent));  // trainable head
    sub.trainable = {false, true, false, true};
    const std::size_t batch = 2;

    MemoryEstimate plain = estimate(sub, batch, false);
    CHECK(plain.param_scalars == (8 * 6 + 6) + (6 * 5 + 5) + (5 * 4 + 4) + (4 * 3 + 3));
    CHECK(plain.grad_scalars == (6 * 5 + 5) + (4 * 3 + 3));
    CHECK(plain.stored_activation_scalars == batch * (6 + 5) + batch * (4 + 3));
    // widest frozen layer is the 8 -> 6 prefix layer
    CHECK(plain.transient_scalars == batch * (8 + 6));

    MemoryEstimate cached = estimate(sub, batch, true);
    // caching drops the prefix parameters and its streaming buffer, but the
    // frozen layer behind the trainable one still streams
    CHECK(cached.param_scalars == plain.param_scalars - (8 * 6 + 6));
    CHECK(cached.grad_scalars == plain.grad_scalars);
    CHECK(cached.stored_activation_scalars == plain.stored_activation_scalars);
    CHECK(cached.transient_scalars == batch * (5 + 4));
}

TEST_CASE("caching is a no-op when nothing is frozen in front") {
    SubModel sub = single_layer_sub(4, 3, true);
    MemoryEstimate a = estimate(sub, 2, false);
    MemoryEstimate b = estimate(sub, 2, true);
    CHECK(a.total_scalars() == b.total_scalars());
}

TEST_CASE("estimate validates its inputs") {
    SubModel sub = single_layer_sub(4, 3, true);
    CHECK_THROWS_AS(estimate(sub, 0, false), ValueError);
    SubModel empty;
    CHECK_THROWS_AS(estimate(empty, 2, false), ValueError);
}

TEST_CASE("growing footprints shrink step over step for a tapering cached model") {
    // input 8, hidden [8, 8, 4, 4], 3 classes, one block per layer
    ModelLayout layout{8, {8, 8, 4, 4}, 3};
    GlobalModel m = make_mlp_model(layout, 4, 99);
    m.basics[1] = make_basic(8, 8);
    m.basics[2] = make_basic(8, 4);
    m.basics[3] = make_basic(4, 4);

    const std::size_t batch = 2;
    std::vector<std::uint64_t> cached_totals;
    for (std::size_t t = 1; t <= 4; ++t) {
        SubModel sub = assemble_growing(m, t);
        cached_totals.push_back(estimate(sub, batch, true).total_scalars());
    }
    CHECK(cached_totals == std::vector<std::uint64_t>{380, 300, 176, 100});
    for (std::size_t t = 0; t + 1 < cached_totals.size(); ++t) {
        CHECK(cached_totals[t] >= cached_totals[t + 1]);
    }
}

TEST_CASE("every progressive step needs less memory than the full model") {
    ModelLayout layout{16, {32, 32, 16, 16}, 4};
    GlobalModel m = make_mlp_model(layout, 4, 7);
    m.basics[1] = make_basic(32, 32);
    m.basics[2] = make_basic(32, 16);
    m.basics[3] = make_basic(16, 16);

    const std::size_t batch = 8;
    const std::uint64_t full = estimate(assemble_full(m), batch, false).bytes();
    for (std::size_t t = 1; t <= 4; ++t) {
        CHECK(estimate(assemble_growing(m, t), batch, false).bytes() < full);
    }
    for (std::size_t t = 4; t >= 2; --t) {
        CHECK(estimate(assemble_shrinking(m, t), batch, false).bytes() < full);
    }
}

TEST_CASE("eligibility splits the pool at the exact byte boundary") {
    SubModel sub = single_layer_sub(4, 3, true);  // 176 bytes at batch 2
    std::vector<DeviceBudget> pool = {
        {3, 176}, {1, 175}, {2, 177}, {0, 10'000}, {4, 0}};
    std::vector<int> ids = eligible(pool, sub, 2, false);
    CHECK(ids == std::vector<int>{0, 2, 3});
}

TEST_CASE("head-only fallback always needs less than the full slice") {
    ModelLayout layout{16, {32, 32, 16, 16}, 4};
    GlobalModel m = make_mlp_model(layout, 4, 7);
    m.basics[1] = make_basic(32, 32);
    m.basics[2] = make_basic(32, 16);
    m.basics[3] = make_basic(16, 16);
    for (std::size_t t = 1; t <= 4; ++t) {
        SubModel sub = assemble_growing(m, t);
        SubModel fallback = head_only(sub);
        for (bool cache : {false, true}) {
            CHECK(estimate(fallback, 8, cache).bytes() < estimate(sub, 8, cache).bytes());
        }
    }
}

TEST_CASE("distillation footprint counts teacher streaming and student training") {
    std::vector<DenseLayer> prefix = {DenseLayer(6, 5, Activation::ReLU)};
    std::vector<DenseLayer> teacher = {DenseLayer(5, 4, Activation::ReLU),
                                       DenseLayer(4, 4, Activation::ReLU)};
    DenseLayer student(5, 4, Activation::Identity);
    const std::size_t batch = 2;

    MemoryEstimate e = estimate_distill(prefix, teacher, student, batch, false);
    CHECK(e.param_scalars == (6 * 5 + 5) + (5 * 4 + 4) + (4 * 4 + 4) + (5 * 4 + 4));
    CHECK(e.grad_scalars == 5 * 4 + 4);
    CHECK(e.stored_activation_scalars == batch * (5 + 4));
    CHECK(e.transient_scalars == batch * (6 + 5));  // widest streamed layer

    MemoryEstimate cached = estimate_distill(prefix, teacher, student, batch, true);
    CHECK(cached.param_scalars == e.param_scalars - (6 * 5 + 5));
    CHECK(cached.transient_scalars == batch * (5 + 4));

    CHECK_THROWS_AS(estimate_distill(prefix, {}, student, batch, false), ValueError);
    CHECK_THROWS_AS(estimate_distill(prefix, teacher, student, 0, false), ValueError);
}
