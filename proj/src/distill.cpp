#include "profl/distill.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "profl/aggregate.hpp"
#include "profl/errors.hpp"

namespace profl {

DenseLayer init_student(std::size_t fan_in, std::size_t fan_out) {
    if (fan_in == 0 || fan_out == 0) throw ShapeError("init_student: zero-width student");
    DenseLayer l(fan_in, fan_out, Activation::Identity);
    for (std::size_t d = 0; d < std::min(fan_in, fan_out); ++d) l.weights.at(d, d) = 1.0;
    return l;
}

namespace {

std::uint64_t chain_flops(const std::vector<DenseLayer>& layers, std::uint64_t rows) {
    std::uint64_t f = 0;
    for (const DenseLayer& l : layers) {
        f += 2 * rows * static_cast<std::uint64_t>(l.fan_in()) * l.fan_out();
    }
    return f;
}

void check_task(const DistillTask& task) {
    if (task.teacher.empty()) throw ValueError("distill: empty teacher block");
    if (!task.prefix.empty() &&
        task.prefix.back().fan_out() != task.teacher.front().fan_in()) {
        throw ShapeError("distill: prefix output width " +
                         std::to_string(task.prefix.back().fan_out()) +
                         " does not feed a teacher expecting " +
                         std::to_string(task.teacher.front().fan_in()));
    }
    if (task.student.fan_in() != task.teacher.front().fan_in() ||
        task.student.fan_out() != task.teacher.back().fan_out()) {
        throw ShapeError("distill: student is " + std::to_string(task.student.fan_in()) + "->" +
                         std::to_string(task.student.fan_out()) + ", teacher block is " +
                         std::to_string(task.teacher.front().fan_in()) + "->" +
                         std::to_string(task.teacher.back().fan_out()));
    }
}

}  // namespace

DistillGrad distill_round(const DistillTask& task, const Tensor2& features,
                          const std::vector<std::size_t>& shard, std::size_t batch) {
    check_task(task);
    if (shard.empty()) throw ValueError("distill_round: empty shard");
    if (batch == 0) throw ValueError("distill_round: batch must be positive");

    const std::size_t in = task.student.fan_in();
    const std::size_t out = task.student.fan_out();
    DistillGrad g;
    g.weight_grad.assign(in * out, 0.0);
    g.samples = shard.size();

    double sse = 0.0;
    for (std::size_t pos = 0; pos < shard.size(); pos += batch) {
        const std::size_t n = std::min(batch, shard.size() - pos);
        Tensor2 x = take_rows(features, {shard.begin() + pos, shard.begin() + pos + n});
        Tensor2 h = task.prefix.empty() ? std::move(x) : forward_infer(task.prefix, x);
        Tensor2 y = forward_infer(task.teacher, h);
        Tensor2 s = forward_infer({task.student}, h);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < out; ++c) {
                const double e = s.at(r, c) - y.at(r, c);
                sse += e * e;
                s.at(r, c) = 2.0 * e;  // reuse the buffer for d(sse)/d(student output)
            }
        }
        Tensor2 dw = matmul_at_b(h, s);
        for (std::size_t i = 0; i < dw.data.size(); ++i) g.weight_grad[i] += dw.data[i];

        g.prefix_flops += chain_flops(task.prefix, n);
        g.train_flops += chain_flops(task.teacher, n);
        g.train_flops += 3 * chain_flops({task.student}, n);  // forward plus 2x backward
    }
    const double denom = static_cast<double>(shard.size()) * static_cast<double>(out);
    g.mse = sse / denom;
    for (double& v : g.weight_grad) v /= denom;
    return g;
}

DistillResult run_distillation(DistillTask task, const Tensor2& features,
                               const std::vector<std::vector<std::size_t>>& shards,
                               const std::function<std::vector<std::size_t>(std::size_t)>& pick,
                               const DistillConfig& cfg) {
    check_task(task);
    if (cfg.rounds == 0) throw ValueError("run_distillation: rounds must be positive");
    if (cfg.stall_window == 0) throw ValueError("run_distillation: stall window must be positive");

    DistillResult res;
    std::vector<double> series;
    for (std::size_t round = 0; round < cfg.rounds; ++round) {
        const std::vector<std::size_t> picked = pick(round);
        if (picked.empty()) throw ValueError("run_distillation: no participants in a round");

        DistillRoundLog log;
        log.participants = picked;
        std::vector<std::vector<double>> grads;
        std::vector<std::vector<double>> losses;
        std::vector<std::size_t> sizes;
        for (std::size_t idx : picked) {
            DistillGrad g = distill_round(task, features, shards.at(idx), cfg.batch_size);
            grads.push_back(std::move(g.weight_grad));
            losses.push_back({g.mse});
            sizes.push_back(g.samples);
            log.prefix_flops += g.prefix_flops;
            log.train_flops += g.train_flops;
        }
        const std::vector<double> grad = aggregate(grads, sizes);
        log.mse = aggregate(losses, sizes)[0];
        series.push_back(log.mse);
        res.rounds.push_back(std::move(log));

        if (series.size() > cfg.stall_window &&
            series[series.size() - 1 - cfg.stall_window] - series.back() <
                cfg.min_improvement) {
            res.stalled = true;
            break;
        }
        for (std::size_t i = 0; i < grad.size(); ++i) {
            task.student.weights.data[i] -= cfg.learning_rate * grad[i];
        }
    }
    res.student = std::move(task.student);
    return res;
}

}  // namespace profl
