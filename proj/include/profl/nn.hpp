#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "profl/tensor.hpp"

namespace profl {

// SoftmaxXent marks the classification head; the softmax is folded into
// cross_entropy_loss, so the layer itself emits raw logits.
enum class Activation : std::uint8_t { Identity = 0, ReLU = 1, SoftmaxXent = 2 };

struct DenseLayer {
    Tensor2 weights;            // fan_in x fan_out
    std::vector<double> bias;   // fan_out
    Activation act = Activation::Identity;

    DenseLayer() = default;
    DenseLayer(std::size_t fan_in, std::size_t fan_out, Activation a)
        : weights(fan_in, fan_out), bias(fan_out, 0.0), act(a) {}

    std::size_t fan_in() const { return weights.rows; }
    std::size_t fan_out() const { return weights.cols; }
    std::size_t param_count() const { return weights.size() + bias.size(); }
};

enum class CachePolicy : std::uint8_t { StoreNone = 0, StoreTrainable = 1, StoreAll = 2 };

struct CacheEntry {
    Tensor2 input;
    Tensor2 output;
    bool has_input = false;
    bool has_output = false;
};

struct ForwardCache {
    std::vector<CacheEntry> entries;  // one slot per layer
};

struct ForwardResult {
    Tensor2 output;
    ForwardCache cache;
};

// Runs the layer chain on `input`. The trainable mask is consulted only for
// StoreTrainable; an empty mask is treated as all-frozen. With
// StoreTrainable, trainable layers keep their input (for weight gradients)
// and ReLU layers at or past the first trainable one keep their output (for
// gating the backward pass).
ForwardResult forward(const std::vector<DenseLayer>& layers, const Tensor2& input,
                      CachePolicy policy, const std::vector<bool>& trainable = {});

// Output of the chain with no caching at all.
Tensor2 forward_infer(const std::vector<DenseLayer>& layers, const Tensor2& input);

// Flat view over a list of layers; per layer, weights row-major then bias.
struct ParamLayout {
    struct Entry {
        std::size_t offset;
        std::size_t fan_in;
        std::size_t fan_out;
    };
    std::vector<Entry> entries;
    std::size_t total = 0;

    static ParamLayout of(const std::vector<DenseLayer>& layers);
    bool operator==(const ParamLayout& o) const;
};

struct ParamVector {
    ParamLayout layout;
    std::vector<double> values;
};

ParamVector pack(const std::vector<DenseLayer>& layers);
void unpack(const ParamVector& pv, std::vector<DenseLayer>& layers);

// Gradient of a scalar loss with respect to every parameter. Frozen layers
// (trainable[i] == false) contribute exact zeros. `loss_grad` is d(loss)/d(output)
// of the final layer. Requires cached activations for the trainable layers.
ParamVector backward(const std::vector<DenseLayer>& layers, const ForwardCache& cache,
                     const Tensor2& loss_grad, const std::vector<bool>& trainable);

struct SgdConfig {
    double learning_rate = 0.01;
    std::size_t batch_size = 32;
    std::size_t local_epochs = 5;
};

// params - lr * grad, layouts must match. In-place flavour plus a
// value-returning convenience wrapper.
void apply_sgd_step(ParamVector& params, const ParamVector& grad, double learning_rate);
ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double learning_rate);

struct LossResult {
    double loss = 0.0;
    Tensor2 grad;  // d(loss)/d(logits), already divided by the batch size
};

// Mean cross-entropy over the batch with the softmax fused in. Labels are
// class indices in [0, logits.cols).
LossResult cross_entropy_loss(const Tensor2& logits, const std::vector<int>& labels);

// argmax-accuracy of logits against labels, in [0, 1]
double accuracy(const Tensor2& logits, const std::vector<int>& labels);

}  // namespace profl
