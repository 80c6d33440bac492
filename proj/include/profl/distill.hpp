#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "profl/nn.hpp"

namespace profl {

struct DistillConfig {
    std::size_t rounds = 30;
    double learning_rate = 0.01;
    std::size_t batch_size = 32;
    double min_improvement = 1e-6;
    std::size_t stall_window = 5;
};

// A converged block (the teacher), the frozen layers feeding it, and the
// single layer that learns to stand in for the whole block.
struct DistillTask {
    std::vector<DenseLayer> prefix;
    std::vector<DenseLayer> teacher;
    DenseLayer student;
};

// Identity-like starting point: ones down the main diagonal, zeros elsewhere,
// zero bias. An identity teacher then yields zero loss from round one.
DenseLayer init_student(std::size_t fan_in, std::size_t fan_out);

struct DistillGrad {
    std::vector<double> weight_grad;  // fan_in x fan_out, row-major
    double mse = 0.0;
    std::size_t samples = 0;
    std::uint64_t prefix_flops = 0;  // forward through the frozen prefix
    std::uint64_t train_flops = 0;   // teacher and student forward + student backward
};

// Exact mean-squared-error gradient of the student over one client shard,
// streamed through prefix and teacher in batch-sized chunks. The student acts
// as a pure linear map here: its bias is pinned at zero and gets no gradient.
DistillGrad distill_round(const DistillTask& task, const Tensor2& features,
                          const std::vector<std::size_t>& shard, std::size_t batch);

struct DistillRoundLog {
    std::vector<std::size_t> participants;  // shard indices picked this round
    double mse = 0.0;                       // data-size-weighted over participants
    std::uint64_t prefix_flops = 0;
    std::uint64_t train_flops = 0;
};

struct DistillResult {
    DenseLayer student;
    std::vector<DistillRoundLog> rounds;
    bool stalled = false;  // stopped on the improvement rule rather than the cap
};

// Federated feature regression. Each round `pick(round)` chooses shard
// indices; those shards contribute exact gradients combined with data-size
// weights, then the server takes one SGD step on the student weights. Stops
// at the round cap or once the MSE improvement over `stall_window` rounds
// falls under `min_improvement`.
DistillResult run_distillation(DistillTask task, const Tensor2& features,
                               const std::vector<std::vector<std::size_t>>& shards,
                               const std::function<std::vector<std::size_t>(std::size_t)>& pick,
                               const DistillConfig& cfg);

}  // namespace profl
