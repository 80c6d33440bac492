#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "profl/errors.hpp"
#include "profl/federation.hpp"
#include "profl/memory.hpp"
#include "profl/rng.hpp"

using namespace profl;

namespace {

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx) {
    Dataset out;
    out.features = take_rows(ds.features, idx);
    out.labels.reserve(idx.size());
    for (std::size_t i : idx) out.labels.push_back(ds.labels[i]);
    out.class_count = ds.class_count;
    return out;
}

// Two well-separated Gaussian classes, split into train and test halves that
// share the same centers.
struct Toy {
    Dataset train;
    Dataset test;
    std::vector<std::vector<std::size_t>> shards;
    std::vector<DeviceBudget> pool;
    ModelLayout layout{4, {6, 5}, 2};
    std::size_t blocks = 2;
};

Toy make_toy(std::uint64_t budget_bytes = 1ull << 20) {
    Dataset all = gen_gaussian_mixture(2, 4, 110, 0.2, 11);
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t k = 0; k < 110; ++k) {
            (k < 80 ? train_idx : test_idx).push_back(c * 110 + k);
        }
    }
    Toy toy;
    toy.train = subset(all, train_idx);
    toy.test = subset(all, test_idx);
    toy.shards = partition(toy.train, 8, PartitionSpec{PartitionKind::Iid, 1.0}, 21);
    for (int i = 0; i < 8; ++i) toy.pool.push_back({i, budget_bytes});
    return toy;
}

FedConfig toy_config() {
    FedConfig cfg;
    cfg.select_target = 4;
    cfg.sgd.learning_rate = 0.25;
    cfg.sgd.batch_size = 16;
    cfg.sgd.local_epochs = 3;
    cfg.freeze.window = 3;
    cfg.freeze.threshold = 0.5;
    cfg.freeze.patience = 5;
    cfg.freeze.min_rounds = 12;
    cfg.round_cap = 60;
    cfg.distill.rounds = 8;
    cfg.distill.learning_rate = 0.2;
    cfg.distill.batch_size = 16;
    cfg.seed = 5;
    return cfg;
}

std::vector<DeviceBudget> flat_pool(std::size_t n, std::uint64_t capacity) {
    std::vector<DeviceBudget> pool;
    for (std::size_t i = 0; i < n; ++i) pool.push_back({static_cast<int>(i), capacity});
    return pool;
}

}  // namespace

TEST_CASE("selection fills from capable devices and tops up with fallback") {
    std::vector<DeviceBudget> pool = {{0, 100}, {1, 200}, {2, 300}, {3, 400},
                                      {4, 50},  {5, 500}, {6, 60},  {7, 700}};
    auto rng = make_rng(1, "select-test");
    Selection sel = select_clients(pool, 250, 60, true, 6, rng);
    CHECK(sel.full == std::vector<std::size_t>{2, 3, 5, 7});
    REQUIRE(sel.fallback.size() == 2);
    for (std::size_t i : sel.fallback) {
        CHECK((i == 0 || i == 1 || i == 6));
    }
    CHECK(std::is_sorted(sel.fallback.begin(), sel.fallback.end()));
    CHECK(sel.fallback[0] != sel.fallback[1]);
    CHECK(sel.participation == doctest::Approx(7.0 / 8.0).epsilon(1e-15));

    auto rng2 = make_rng(1, "select-test");
    Selection again = select_clients(pool, 250, 60, true, 6, rng2);
    CHECK(again.full == sel.full);
    CHECK(again.fallback == sel.fallback);

    auto rng3 = make_rng(1, "select-test");
    Selection strict = select_clients(pool, 250, 60, false, 6, rng3);
    CHECK(strict.full == std::vector<std::size_t>{2, 3, 5, 7});
    CHECK(strict.fallback.empty());
    CHECK(strict.participation == doctest::Approx(0.5).epsilon(1e-15));

    auto rng4 = make_rng(2, "select-test");
    Selection pair = select_clients(pool, 250, 60, false, 2, rng4);
    CHECK(pair.full.size() == 2);
    CHECK(std::is_sorted(pair.full.begin(), pair.full.end()));

    auto rng5 = make_rng(3, "select-test");
    Selection everyone = select_clients(pool, 0, 0, false, 8, rng5);
    CHECK(everyone.full.size() == 8);
    CHECK(everyone.participation == doctest::Approx(1.0).epsilon(1e-15));

    auto rng6 = make_rng(4, "select-test");
    CHECK_THROWS_AS(select_clients({}, 0, 0, false, 1, rng6), ValueError);
    CHECK_THROWS_AS(select_clients(pool, 0, 0, false, 0, rng6), ValueError);
}

TEST_CASE("local training with zero epochs or zero rate is a no-op") {
    Toy toy = make_toy();
    GlobalModel model = make_mlp_model(toy.layout, 2, 77);
    SubModel sub = assemble_full(model);
    std::vector<std::size_t> shard = toy.shards[0];

    SgdConfig sgd;
    sgd.local_epochs = 0;
    auto rng = make_rng(9, "noop");
    LocalOutcome idle = local_train(sub, toy.train.features, toy.train.labels, shard, sgd, rng);
    CHECK(idle.trainable == pack_layers(sub.layers, sub.trainable_indices()).values);
    CHECK(idle.mean_loss == 0.0);

    sgd.local_epochs = 2;
    sgd.learning_rate = 0.0;
    auto rng2 = make_rng(9, "noop");
    LocalOutcome frozen_rate =
        local_train(sub, toy.train.features, toy.train.labels, shard, sgd, rng2);
    CHECK(frozen_rate.trainable == pack_layers(sub.layers, sub.trainable_indices()).values);
    CHECK(frozen_rate.mean_loss > 0.0);

    CHECK_THROWS_AS(local_train(sub, toy.train.features, toy.train.labels, {}, sgd, rng2),
                    ValueError);
}

TEST_CASE("one full-batch epoch equals a single explicit gradient step") {
    Toy toy = make_toy();
    GlobalModel model = make_mlp_model(toy.layout, 2, 31);
    SubModel sub = assemble_shrinking(model, 2);
    std::vector<std::size_t> shard = toy.shards[3];

    SgdConfig sgd;
    sgd.learning_rate = 0.1;
    sgd.batch_size = shard.size();
    sgd.local_epochs = 1;

    auto live = make_rng(3, "lockstep");
    auto mirror = make_rng(3, "lockstep");
    LocalOutcome out = local_train(sub, toy.train.features, toy.train.labels, shard, sgd, live);

    std::vector<std::size_t> order = shard;
    std::shuffle(order.begin(), order.end(), mirror);
    Tensor2 x = take_rows(toy.train.features, order);
    std::vector<int> y;
    for (std::size_t i : order) y.push_back(toy.train.labels[i]);
    std::vector<DenseLayer> layers = sub.layers;
    ForwardResult fr = forward(layers, x, CachePolicy::StoreTrainable, sub.trainable);
    LossResult loss = cross_entropy_loss(fr.output, y);
    ParamVector grad = backward(layers, fr.cache, loss.grad, sub.trainable);
    ParamVector params = pack(layers);
    apply_sgd_step(params, grad, sgd.learning_rate);
    unpack(params, layers);

    CHECK(out.trainable == pack_layers(layers, sub.trainable_indices()).values);
    CHECK(out.mean_loss == loss.loss);
}

TEST_CASE("progressive run lays down snapshots, basics and one stop row per step") {
    Toy toy = make_toy();
    FederatedRun run(toy.train, toy.test, toy.shards, toy.pool, toy.layout, toy.blocks,
                     toy_config());
    RunResult res = run.run(RunMode::Profl);

    REQUIRE(!res.not_applicable);
    REQUIRE(!res.records.empty());
    for (std::size_t i = 0; i < res.records.size(); ++i) {
        CHECK(res.records[i].round == i + 1);
    }

    // Stage order for T=2: shrink block 2, distill it, then grow 1 and 2.
    std::vector<std::pair<std::string, std::size_t>> phases;
    for (const RoundRecord& r : res.records) {
        std::pair<std::string, std::size_t> key{r.stage, r.step};
        if (phases.empty() || phases.back() != key) phases.push_back(key);
    }
    REQUIRE(phases.size() == 4);
    CHECK(phases[0] == std::pair<std::string, std::size_t>{"shrink", 2});
    CHECK(phases[1] == std::pair<std::string, std::size_t>{"distill", 2});
    CHECK(phases[2] == std::pair<std::string, std::size_t>{"grow", 1});
    CHECK(phases[3] == std::pair<std::string, std::size_t>{"grow", 2});

    std::size_t stop_rows = 0;
    for (std::size_t i = 0; i < res.records.size(); ++i) {
        const RoundRecord& r = res.records[i];
        if (r.freeze != 0) {
            ++stop_rows;
            CHECK(r.stage != "distill");
            const bool last_of_phase =
                i + 1 == res.records.size() || res.records[i + 1].stage != r.stage ||
                res.records[i + 1].step != r.step;
            CHECK(last_of_phase);
        }
        CHECK(r.participation == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(r.uploaded_scalars > 0);
        CHECK(r.downloaded_scalars > 0);
        CHECK(r.flops > 0);
        if (r.stage == "distill") {
            CHECK(!r.em.has_value());
            CHECK(r.freeze == 0);
        }
    }
    CHECK(stop_rows == 3);
    CHECK(res.freeze_events == 3);

    // Movement readings only appear once the window has filled.
    CHECK(!res.records[0].em.has_value());
    bool any_em = false;
    for (const RoundRecord& r : res.records) {
        if (r.stage == "shrink" && r.em.has_value()) any_em = true;
    }
    CHECK(any_em);

    const GlobalModel& model = run.model();
    REQUIRE(model.snapshots.size() == 2);
    CHECK(!model.snapshots[0].has_value());
    CHECK(model.snapshots[1].has_value());
    CHECK(!model.basics[0].has_value());
    CHECK(model.basics[1].has_value());
    CHECK(model.states[0] == BlockState::WellTrained);
    CHECK(model.states[1] == BlockState::WellTrained);

    CHECK(res.records.back().test_accuracy >= 0.9);
}

TEST_CASE("frozen layers never move inside a training step") {
    Toy toy = make_toy();
    FederatedRun run(toy.train, toy.test, toy.shards, toy.pool, toy.layout, toy.blocks,
                     toy_config());
    std::map<std::pair<std::string, std::size_t>, std::vector<double>> frozen_at_start;
    run.set_observer([&](const RoundRecord& rec, const GlobalModel&, const SubModel& sub) {
        std::vector<std::size_t> frozen_idx;
        for (std::size_t i = 0; i < sub.layers.size(); ++i) {
            if (!sub.trainable[i]) frozen_idx.push_back(i);
        }
        std::vector<double> now = pack_layers(sub.layers, frozen_idx).values;
        auto key = std::pair{rec.stage, rec.step};
        auto it = frozen_at_start.find(key);
        if (it == frozen_at_start.end()) {
            frozen_at_start.emplace(key, std::move(now));
        } else {
            CHECK(it->second == now);
        }
    });
    run.run(RunMode::Profl);
    CHECK(frozen_at_start.size() == 3);  // every training phase reported
}

TEST_CASE("identical seeds reproduce the record stream bit for bit") {
    Toy toy = make_toy();
    FederatedRun a(toy.train, toy.test, toy.shards, toy.pool, toy.layout, toy.blocks,
                   toy_config());
    FederatedRun b(toy.train, toy.test, toy.shards, toy.pool, toy.layout, toy.blocks,
                   toy_config());
    RunResult ra = a.run(RunMode::Profl);
    RunResult rb = b.run(RunMode::Profl);

    REQUIRE(ra.records.size() == rb.records.size());
    for (std::size_t i = 0; i < ra.records.size(); ++i) {
        const RoundRecord& x = ra.records[i];
        const RoundRecord& y = rb.records[i];
        CHECK(x.round == y.round);
        CHECK(x.stage == y.stage);
        CHECK(x.step == y.step);
        CHECK(x.train_loss == y.train_loss);
        CHECK(x.test_accuracy == y.test_accuracy);
        CHECK(x.em.has_value() == y.em.has_value());
        if (x.em.has_value()) CHECK(*x.em == *y.em);
        CHECK(x.freeze == y.freeze);
        CHECK(x.peak_memory_bytes == y.peak_memory_bytes);
        CHECK(x.participation == y.participation);
        CHECK(x.uploaded_scalars == y.uploaded_scalars);
        CHECK(x.downloaded_scalars == y.downloaded_scalars);
        CHECK(x.flops == y.flops);
    }
    CHECK(pack(a.model().full_layers()).values == pack(b.model().full_layers()).values);

    CHECK_THROWS_AS(a.run(RunMode::Profl), StateError);  // a run object is single-use
}

TEST_CASE("caching changes the accounting but not the numbers") {
    Toy toy = make_toy();
    FedConfig plain_cfg = toy_config();
    FedConfig cached_cfg = plain_cfg;
    cached_cfg.cache_frozen = true;
    FederatedRun plain(toy.train, toy.test, toy.shards, toy.pool, toy.layout, toy.blocks,
                       plain_cfg);
    FederatedRun cached(toy.train, toy.test, toy.shards, toy.pool, toy.layout, toy.blocks,
                        cached_cfg);
    RunResult rp = plain.run(RunMode::Profl);
    RunResult rc = cached.run(RunMode::Profl);

    REQUIRE(rp.records.size() == rc.records.size());
    bool any_download_saved = false;
    for (std::size_t i = 0; i < rp.records.size(); ++i) {
        CHECK(rp.records[i].train_loss == rc.records[i].train_loss);
        CHECK(rp.records[i].test_accuracy == rc.records[i].test_accuracy);
        CHECK(rp.records[i].freeze == rc.records[i].freeze);
        CHECK(rc.records[i].downloaded_scalars <= rp.records[i].downloaded_scalars);
        CHECK(rc.records[i].flops <= rp.records[i].flops);
        if (rc.records[i].downloaded_scalars < rp.records[i].downloaded_scalars) {
            any_download_saved = true;
        }
    }
    CHECK(any_download_saved);
}

TEST_CASE("oracle ignores budgets while exclusive refuses when nothing fits") {
    Toy toy = make_toy();
    std::vector<DeviceBudget> tiny = flat_pool(8, 1);

    FederatedRun oracle(toy.train, toy.test, toy.shards, tiny, toy.layout, toy.blocks,
                        toy_config());
    RunResult ro = oracle.run(RunMode::Oracle);
    CHECK(!ro.not_applicable);
    REQUIRE(!ro.records.empty());
    for (const RoundRecord& r : ro.records) {
        CHECK(r.stage == "baseline");
        CHECK(r.step == 0);
        CHECK(r.participation == doctest::Approx(1.0).epsilon(1e-15));
    }
    CHECK(ro.freeze_events == 1);
    CHECK(ro.records.back().freeze != 0);

    FederatedRun excl(toy.train, toy.test, toy.shards, tiny, toy.layout, toy.blocks,
                      toy_config());
    RunResult re = excl.run(RunMode::Exclusive);
    CHECK(re.not_applicable);
    CHECK(!re.na_reason.empty());
    CHECK(re.records.empty());

    FederatedRun excl_ok(toy.train, toy.test, toy.shards, toy.pool, toy.layout, toy.blocks,
                         toy_config());
    RunResult re2 = excl_ok.run(RunMode::Exclusive);
    CHECK(!re2.not_applicable);
    CHECK(re2.records.back().participation == doctest::Approx(1.0).epsilon(1e-15));

    FederatedRun broke(toy.train, toy.test, toy.shards, tiny, toy.layout, toy.blocks,
                       toy_config());
    CHECK_THROWS_AS(broke.run(RunMode::Profl), StateError);
}

TEST_CASE("allsmall picks the widest scaled model that fits the smallest device") {
    Toy toy = make_toy();

    FederatedRun generous(toy.train, toy.test, toy.shards, toy.pool, toy.layout, toy.blocks,
                          toy_config());
    RunResult rg = generous.run(RunMode::AllSmall);
    CHECK(!rg.not_applicable);
    CHECK(generous.model().layout.hidden == toy.layout.hidden);  // budget admits full width

    GlobalModel probe = make_mlp_model(toy.layout, 2, 1);
    const std::uint64_t full_need = estimate(assemble_full(probe), 16, false).bytes();
    std::vector<DeviceBudget> pinched = flat_pool(8, full_need / 2);
    FederatedRun narrow(toy.train, toy.test, toy.shards, pinched, toy.layout, toy.blocks,
                        toy_config());
    RunResult rn = narrow.run(RunMode::AllSmall);
    CHECK(!rn.not_applicable);
    const ModelLayout& shrunk = narrow.model().layout;
    REQUIRE(shrunk.hidden.size() == toy.layout.hidden.size());
    bool strictly_narrower = false;
    for (std::size_t i = 0; i < shrunk.hidden.size(); ++i) {
        CHECK(shrunk.hidden[i] >= 1);
        CHECK(shrunk.hidden[i] <= toy.layout.hidden[i]);
        if (shrunk.hidden[i] < toy.layout.hidden[i]) strictly_narrower = true;
    }
    CHECK(strictly_narrower);
    const std::uint64_t shrunk_need =
        estimate(assemble_full(narrow.model()), 16, false).bytes();
    CHECK(shrunk_need <= full_need / 2);
    for (const RoundRecord& r : rn.records) {
        CHECK(r.participation == doctest::Approx(1.0).epsilon(1e-15));
    }

    FederatedRun hopeless(toy.train, toy.test, toy.shards, flat_pool(8, 4), toy.layout,
                          toy.blocks, toy_config());
    RunResult rh = hopeless.run(RunMode::AllSmall);
    CHECK(rh.not_applicable);
    CHECK(!rh.na_reason.empty());
}

TEST_CASE("the no-shrinking ablation grows with stand-in output layers") {
    Toy toy = make_toy();
    FedConfig cfg = toy_config();
    cfg.shrinking = false;
    FederatedRun run(toy.train, toy.test, toy.shards, toy.pool, toy.layout, toy.blocks, cfg);
    RunResult res = run.run(RunMode::Profl);

    REQUIRE(!res.records.empty());
    for (const RoundRecord& r : res.records) {
        CHECK(r.stage == "grow");
        CHECK((r.step == 1 || r.step == 2));
    }
    CHECK(res.freeze_events == 2);
    CHECK(!run.model().snapshots[0].has_value());
    CHECK(!run.model().snapshots[1].has_value());
    CHECK(!run.model().basics[0].has_value());
    CHECK(!run.model().basics[1].has_value());
    CHECK(res.records.back().test_accuracy >= 0.9);
}

TEST_CASE("progressive steps upload less than whole-model training") {
    Toy toy = make_toy();
    FederatedRun profl(toy.train, toy.test, toy.shards, toy.pool, toy.layout, toy.blocks,
                       toy_config());
    FederatedRun oracle(toy.train, toy.test, toy.shards, toy.pool, toy.layout, toy.blocks,
                        toy_config());
    RunResult rp = profl.run(RunMode::Profl);
    RunResult ro = oracle.run(RunMode::Oracle);

    // Four clients per round throughout. Growing step 1 trains the first
    // block (4*6+6 = 30) plus the head (5*2+2 = 12); the whole model is 77.
    std::uint64_t oracle_upload = ro.records.front().uploaded_scalars;
    CHECK(oracle_upload == 4 * 77);
    for (const RoundRecord& r : rp.records) {
        if (r.stage == "grow" && r.step == 1) CHECK(r.uploaded_scalars == 4 * (30 + 12));
        if (r.stage != "distill") CHECK(r.uploaded_scalars < oracle_upload);
    }
}
