#include "profl/federation.hpp"

#include <algorithm>
#include <iostream>
#include <utility>

#include "profl/errors.hpp"
#include "profl/rng.hpp"

namespace profl {

namespace {

std::vector<std::size_t> sample_sorted(std::vector<std::size_t> candidates, std::size_t k,
                                       std::mt19937_64& rng) {
    if (k > candidates.size()) k = candidates.size();
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
        std::swap(candidates[i], candidates[pick(rng)]);
    }
    candidates.resize(k);
    std::sort(candidates.begin(), candidates.end());
    return candidates;
}

// Per-sample forward cost of one dense layer is 2*in*out multiply-adds; a
// backward pass is charged as twice the forward cost of everything behind
// the first layer that still learns.
std::uint64_t unit_fwd(const std::vector<DenseLayer>& layers, std::size_t begin, std::size_t end) {
    std::uint64_t sum = 0;
    for (std::size_t i = begin; i < end; ++i) {
        sum += 2ULL * layers[i].fan_in() * layers[i].fan_out();
    }
    return sum;
}

std::size_t param_span(const std::vector<DenseLayer>& layers, std::size_t begin, std::size_t end) {
    std::size_t sum = 0;
    for (std::size_t i = begin; i < end; ++i) sum += layers[i].param_count();
    return sum;
}

}  // namespace

const char* mode_name(RunMode mode) {
    switch (mode) {
        case RunMode::Profl: return "profl";
        case RunMode::Oracle: return "oracle";
        case RunMode::AllSmall: return "allsmall";
        case RunMode::Exclusive: return "exclusive";
    }
    throw ValueError("mode_name: unknown mode");
}

Selection select_clients(const std::vector<DeviceBudget>& pool, std::uint64_t full_need,
                         std::uint64_t fallback_need, bool allow_fallback, std::size_t target,
                         std::mt19937_64& rng) {
    if (pool.empty()) throw ValueError("select_clients: empty device pool");
    if (target == 0) throw ValueError("select_clients: target must be positive");
    std::vector<std::size_t> full_ok;
    std::vector<std::size_t> head_ok;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].capacity_bytes >= full_need) full_ok.push_back(i);
        if (pool[i].capacity_bytes >= fallback_need) head_ok.push_back(i);
    }

    Selection sel;
    const std::size_t able = allow_fallback ? head_ok.size() : full_ok.size();
    sel.participation = static_cast<double>(able) / static_cast<double>(pool.size());
    sel.full = sample_sorted(std::move(full_ok), target, rng);
    if (allow_fallback && sel.full.size() < target) {
        std::vector<std::size_t> rest;
        for (std::size_t i : head_ok) {
            if (!std::binary_search(sel.full.begin(), sel.full.end(), i)) rest.push_back(i);
        }
        sel.fallback = sample_sorted(std::move(rest), target - sel.full.size(), rng);
    }
    return sel;
}

LocalOutcome local_train(const SubModel& sub, const Tensor2& features,
                         const std::vector<int>& labels, const std::vector<std::size_t>& shard,
                         const SgdConfig& sgd, std::mt19937_64& rng) {
    if (shard.empty()) throw ValueError("local_train: empty shard");
    if (sgd.batch_size == 0) throw ValueError("local_train: batch size must be positive");

    std::vector<DenseLayer> layers = sub.layers;
    std::vector<std::size_t> order = shard;
    double loss_sum = 0.0;
    std::size_t loss_rows = 0;

    for (std::size_t epoch = 0; epoch < sgd.local_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t off = 0; off < order.size(); off += sgd.batch_size) {
            const std::size_t n = std::min(sgd.batch_size, order.size() - off);
            std::vector<std::size_t> idx(order.begin() + off, order.begin() + off + n);
            Tensor2 x = take_rows(features, idx);
            std::vector<int> y(n);
            for (std::size_t j = 0; j < n; ++j) y[j] = labels[idx[j]];

            ForwardResult fr = forward(layers, x, CachePolicy::StoreTrainable, sub.trainable);
            LossResult loss = cross_entropy_loss(fr.output, y);
            loss_sum += loss.loss * static_cast<double>(n);
            loss_rows += n;
            ParamVector grad = backward(layers, fr.cache, loss.grad, sub.trainable);
            ParamVector params = pack(layers);
            apply_sgd_step(params, grad, sgd.learning_rate);
            unpack(params, layers);
        }
    }

    LocalOutcome out;
    out.mean_loss = loss_rows == 0 ? 0.0 : loss_sum / static_cast<double>(loss_rows);
    out.trainable = pack_layers(layers, sub.trainable_indices()).values;
    return out;
}

FederatedRun::FederatedRun(const Dataset& train, const Dataset& test,
                           std::vector<std::vector<std::size_t>> shards,
                           std::vector<DeviceBudget> pool, ModelLayout layout, std::size_t blocks,
                           FedConfig cfg)
    : train_(train),
      test_(test),
      shards_(std::move(shards)),
      pool_(std::move(pool)),
      layout_(std::move(layout)),
      blocks_(blocks),
      cfg_(cfg) {
    if (pool_.empty()) throw ValueError("federation: empty device pool");
    if (shards_.size() != pool_.size()) throw ValueError("federation: shard and device counts differ");
    for (std::size_t i = 0; i < pool_.size(); ++i) {
        if (pool_[i].id != static_cast<int>(i)) {
            throw ValueError("federation: device ids must match pool order");
        }
    }
    for (const auto& shard : shards_) {
        if (shard.empty()) throw ValueError("federation: empty data shard");
    }
    if (cfg_.select_target == 0) throw ValueError("federation: selection target must be positive");
    if (cfg_.round_cap == 0) throw ValueError("federation: round cap must be positive");
}

FederatedRun::StepStats FederatedRun::train_step(SubModel& sub, const char* stage, std::size_t t,
                                                 bool allow_fallback, bool ignore_budgets) {
    const std::size_t batch = cfg_.sgd.batch_size;
    const std::size_t head_idx = sub.layers.size() - 1;
    if (!sub.trainable[head_idx]) throw StateError("train_step: output layer must be trainable");

    const std::uint64_t full_est = estimate(sub, batch, cfg_.cache_frozen).bytes();
    const std::uint64_t head_est = estimate(head_only(sub), batch, cfg_.cache_frozen).bytes();
    const std::size_t prefix = sub.prefix_len();
    const std::size_t head_params = sub.layers[head_idx].param_count();
    const std::size_t total_params = sub.total_param_count();
    const std::size_t prefix_params = param_span(sub.layers, 0, prefix);
    const std::size_t full_upload = sub.trainable_param_count();

    const std::uint64_t fwd_prefix = unit_fwd(sub.layers, 0, prefix);
    const std::uint64_t fwd_rest = unit_fwd(sub.layers, prefix, sub.layers.size());
    const std::uint64_t bwd_full = 2 * fwd_rest;
    const std::uint64_t bwd_head = 2 * unit_fwd(sub.layers, head_idx, sub.layers.size());
    const std::uint64_t epochs = cfg_.sgd.local_epochs;

    std::vector<std::size_t> tidx = sub.trainable_indices();
    const std::vector<std::size_t> rest_idx(tidx.begin(), tidx.end() - 1);

    StepFreezeController controller(cfg_.freeze, pack_active(sub).size());
    std::vector<bool> cached(pool_.size(), false);
    StepStats stats;

    for (std::size_t round_in_step = 1; round_in_step <= cfg_.round_cap; ++round_in_step) {
        ++global_round_;
        std::mt19937_64 sel_rng = make_rng(cfg_.seed, "select", global_round_);
        Selection sel =
            select_clients(pool_, ignore_budgets ? 0 : full_est, ignore_budgets ? 0 : head_est,
                           allow_fallback, cfg_.select_target, sel_rng);
        if (sel.full.empty() && sel.fallback.empty()) {
            throw StateError(std::string("step ") + stage + " " + std::to_string(t) +
                             ": no eligible devices");
        }

        RoundRecord rec;
        rec.round = global_round_;
        rec.stage = stage;
        rec.step = t;
        rec.participation = sel.participation;
        rec.peak_memory_bytes = full_est;

        std::vector<std::vector<double>> rest_updates;
        std::vector<std::size_t> rest_sizes;
        std::vector<std::vector<double>> head_updates;
        std::vector<std::size_t> head_sizes;
        double loss_sum = 0.0;
        std::size_t loss_rows = 0;

        const SubModel head_role = head_only(sub);
        auto account = [&](std::size_t id, bool full_role) {
            const std::uint64_t n = shards_[id].size();
            std::uint64_t flops = epochs * n * (fwd_rest + (full_role ? bwd_full : bwd_head));
            std::uint64_t download = total_params;
            if (cfg_.cache_frozen) {
                if (cached[id]) {
                    download -= prefix_params;
                } else {
                    flops += n * fwd_prefix;  // one pass to fill the cache
                }
                cached[id] = true;
            } else {
                flops += epochs * n * fwd_prefix;
            }
            rec.flops += flops;
            rec.downloaded_scalars += download;
            rec.uploaded_scalars += full_role ? full_upload : head_params;
        };

        for (std::size_t id : sel.full) {
            std::mt19937_64 rng = make_rng(cfg_.seed, "local", global_round_, id);
            LocalOutcome out = local_train(sub, train_.features, train_.labels, shards_[id],
                                           cfg_.sgd, rng);
            const std::size_t n = shards_[id].size();
            std::vector<double> rest(out.trainable.begin(), out.trainable.end() - head_params);
            std::vector<double> head(out.trainable.end() - head_params, out.trainable.end());
            if (!rest.empty()) {
                rest_updates.push_back(std::move(rest));
                rest_sizes.push_back(n);
            }
            head_updates.push_back(std::move(head));
            head_sizes.push_back(n);
            loss_sum += out.mean_loss * static_cast<double>(n);
            loss_rows += n;
            account(id, true);
        }
        for (std::size_t id : sel.fallback) {
            std::mt19937_64 rng = make_rng(cfg_.seed, "local", global_round_, id);
            LocalOutcome out = local_train(head_role, train_.features, train_.labels, shards_[id],
                                           cfg_.sgd, rng);
            const std::size_t n = shards_[id].size();
            head_updates.push_back(std::move(out.trainable));
            head_sizes.push_back(n);
            loss_sum += out.mean_loss * static_cast<double>(n);
            loss_rows += n;
            account(id, false);
        }

        if (!rest_updates.empty()) {
            ParamVector pv = pack_layers(sub.layers, rest_idx);
            pv.values = aggregate(rest_updates, rest_sizes);
            unpack_layers(pv, sub.layers, rest_idx);
        }
        {
            const std::vector<std::size_t> head_only_idx{head_idx};
            ParamVector pv = pack_layers(sub.layers, head_only_idx);
            pv.values = aggregate(head_updates, head_sizes);
            unpack_layers(pv, sub.layers, head_only_idx);
        }
        apply_step_result(model_, sub);

        FreezeDecision decision = controller.observe_and_decide(pack_active(sub));
        rec.em = controller.latest_em();
        rec.train_loss = loss_rows == 0 ? 0.0 : loss_sum / static_cast<double>(loss_rows);
        last_accuracy_ = evaluate(sub);
        rec.test_accuracy = last_accuracy_;

        bool stop = false;
        if (decision == FreezeDecision::Freeze) {
            rec.freeze = 1;
            stop = true;
        } else if (round_in_step == cfg_.round_cap) {
            rec.freeze = 2;
            stats.capped = true;
            std::cerr << "warning: " << stage << " step " << t << " hit the round cap ("
                      << cfg_.round_cap << ") before the movement rule fired\n";
            stop = true;
        }
        if (rec.freeze != 0) ++result_.freeze_events;
        result_.records.push_back(std::move(rec));
        if (observer_) observer_(result_.records.back(), model_, sub);
        if (stop) {
            stats.rounds = round_in_step;
            return stats;
        }
    }
    throw StateError("train_step: unreachable");
}

void FederatedRun::distill_step(std::size_t t) {
    const auto [begin, end] = model_.plan.range(t);
    DistillTask task;
    task.prefix.assign(model_.hidden.begin(), model_.hidden.begin() + begin);
    task.teacher.assign(model_.hidden.begin() + begin, model_.hidden.begin() + end);
    const auto [fan_in, fan_out] = model_.block_io(t);
    task.student = init_student(fan_in, fan_out);

    std::size_t batch = cfg_.distill.batch_size;
    auto eligible_at = [&](std::size_t b) {
        const std::uint64_t need =
            estimate_distill(task.prefix, task.teacher, task.student, b, cfg_.cache_frozen).bytes();
        std::vector<std::size_t> ids;
        for (std::size_t i = 0; i < pool_.size(); ++i) {
            if (pool_[i].capacity_bytes >= need) ids.push_back(i);
        }
        return std::pair(ids, need);
    };
    auto [ids, need] = eligible_at(batch);
    if (ids.empty() && batch > 1) {
        std::tie(ids, need) = eligible_at(1);
        if (!ids.empty()) {
            std::cerr << "note: distillation for block " << t
                      << " dropped to batch size 1 to fit device budgets\n";
            batch = 1;
        }
    }
    if (ids.empty()) {
        throw StateError("distillation for block " + std::to_string(t) +
                         ": no device can hold the task");
    }

    const double participation =
        static_cast<double>(ids.size()) / static_cast<double>(pool_.size());
    const std::uint64_t peak = need;
    const std::size_t student_params = task.student.param_count();
    const std::size_t source_params =
        param_span(task.prefix, 0, task.prefix.size()) +
        param_span(task.teacher, 0, task.teacher.size());
    const std::uint64_t fwd_prefix = unit_fwd(task.prefix, 0, task.prefix.size());

    std::vector<std::size_t> round_ids;
    auto pick = [&](std::size_t) {
        ++global_round_;
        round_ids.push_back(global_round_);
        std::mt19937_64 rng = make_rng(cfg_.seed, "select", global_round_);
        return sample_sorted(ids, std::min(cfg_.select_target, ids.size()), rng);
    };

    DistillConfig dcfg = cfg_.distill;
    dcfg.batch_size = batch;
    DistillResult res = run_distillation(task, train_.features, shards_, pick, dcfg);

    std::vector<bool> cached(pool_.size(), false);
    for (std::size_t i = 0; i < res.rounds.size(); ++i) {
        const DistillRoundLog& log = res.rounds[i];
        RoundRecord rec;
        rec.round = round_ids[i];
        rec.stage = "distill";
        rec.step = t;
        rec.train_loss = log.mse;
        rec.test_accuracy = last_accuracy_;
        rec.freeze = 0;
        rec.peak_memory_bytes = peak;
        rec.participation = participation;
        rec.flops = log.train_flops;
        for (std::size_t p : log.participants) {
            rec.uploaded_scalars += student_params;
            rec.downloaded_scalars += student_params;
            if (cfg_.cache_frozen) {
                if (!cached[p]) {
                    rec.downloaded_scalars += source_params;
                    rec.flops += static_cast<std::uint64_t>(shards_[p].size()) * fwd_prefix;
                    cached[p] = true;
                }
            } else {
                rec.downloaded_scalars += source_params;
            }
        }
        if (!cfg_.cache_frozen) rec.flops += log.prefix_flops;
        result_.records.push_back(std::move(rec));
    }

    model_.basics[t - 1] = std::move(res.student);
}

void FederatedRun::run_profl() {
    const std::size_t T = model_.plan.block_count;
    if (cfg_.shrinking) {
        for (std::size_t t = T; t >= 2; --t) {
            SubModel sub = assemble_shrinking(model_, t);
            model_.states[t - 1] = BlockState::Active;
            train_step(sub, "shrink", t, true, false);
            snapshot_init(model_, t, model_.pack_block(t));
            distill_step(t);
            model_.states[t - 1] = BlockState::Untrained;
        }
        run_growing(true);
    } else {
        run_growing(false);
    }
}

void FederatedRun::run_growing(bool with_artifacts) {
    const std::size_t T = model_.plan.block_count;
    std::optional<DenseLayer> aux;
    for (std::size_t t = 1; t <= T; ++t) {
        model_.states[t - 1] = BlockState::Active;
        SubModel sub;
        if (with_artifacts) {
            AssembleOptions opts;
            opts.train_basics = cfg_.train_basics_while_growing;
            sub = assemble_growing(model_, t, opts);
        } else if (t == T) {
            sub = assemble_growing_plain(model_, t, model_.head, true);
        } else {
            const auto [fan_in, fan_out] = model_.block_io(t);
            (void)fan_in;
            if (!aux.has_value() || aux->fan_in() != fan_out) {
                std::mt19937_64 rng = make_rng(cfg_.seed, "aux-head", t);
                aux = init_dense(fan_out, layout_.class_count, Activation::SoftmaxXent, rng);
            }
            sub = assemble_growing_plain(model_, t, *aux, false);
        }
        train_step(sub, "grow", t, true, false);
        if (!with_artifacts && t < T) aux = sub.layers.back();
        model_.states[t - 1] = BlockState::WellTrained;
    }
}

bool FederatedRun::prepare_baseline(RunMode mode) {
    if (mode == RunMode::Oracle) {
        model_ = make_mlp_model(layout_, blocks_, derive_seed(cfg_.seed, "model"));
        return true;
    }
    if (mode == RunMode::Exclusive) {
        model_ = make_mlp_model(layout_, blocks_, derive_seed(cfg_.seed, "model"));
        const std::uint64_t need =
            estimate(assemble_full(model_), cfg_.sgd.batch_size, cfg_.cache_frozen).bytes();
        const bool anyone = std::any_of(pool_.begin(), pool_.end(), [&](const DeviceBudget& d) {
            return d.capacity_bytes >= need;
        });
        if (!anyone) {
            result_.not_applicable = true;
            result_.na_reason = "no device can train the full model";
            return false;
        }
        return true;
    }

    // AllSmall: widest uniformly scaled copy of the layout that fits the
    // smallest device, found by binary search on a permille factor.
    std::uint64_t min_budget = pool_.front().capacity_bytes;
    for (const DeviceBudget& d : pool_) min_budget = std::min(min_budget, d.capacity_bytes);

    auto widths_at = [&](std::size_t k) {
        std::vector<std::size_t> w(layout_.hidden.size());
        for (std::size_t i = 0; i < w.size(); ++i) {
            w[i] = std::max<std::size_t>(1, layout_.hidden[i] * k / 1000);
        }
        return w;
    };
    auto need_at = [&](const std::vector<std::size_t>& widths) {
        SubModel probe;
        std::size_t in = layout_.input_dim;
        for (std::size_t w : widths) {
            probe.layers.emplace_back(in, w, Activation::ReLU);
            probe.trainable.push_back(true);
            in = w;
        }
        probe.layers.emplace_back(in, layout_.class_count, Activation::SoftmaxXent);
        probe.trainable.push_back(true);
        return estimate(probe, cfg_.sgd.batch_size, false).bytes();
    };

    if (need_at(widths_at(1)) > min_budget) {
        result_.not_applicable = true;
        result_.na_reason = "even the narrowest scaled model exceeds the smallest device budget";
        return false;
    }
    std::size_t lo = 1, hi = 1000;
    while (lo < hi) {
        const std::size_t mid = (lo + hi + 1) / 2;
        if (need_at(widths_at(mid)) <= min_budget) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    ModelLayout small = layout_;
    small.hidden = widths_at(lo);
    layout_ = small;
    model_ = make_mlp_model(small, 2, derive_seed(cfg_.seed, "allsmall-model"));
    return true;
}

RunResult FederatedRun::run(RunMode mode) {
    if (ran_) throw StateError("FederatedRun: run() already consumed");
    ran_ = true;

    if (mode == RunMode::Profl) {
        model_ = make_mlp_model(layout_, blocks_, derive_seed(cfg_.seed, "model"));
        run_profl();
        return result_;
    }

    if (!prepare_baseline(mode)) return result_;
    SubModel sub = assemble_full(model_);
    train_step(sub, "baseline", 0, false, mode == RunMode::Oracle);
    return result_;
}

double FederatedRun::evaluate(const SubModel& sub) const {
    Tensor2 logits = forward_infer(sub.layers, test_.features);
    return accuracy(logits, test_.labels);
}

}  // namespace profl
