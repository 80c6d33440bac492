#include "profl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "profl/errors.hpp"

namespace profl {

namespace {

std::size_t first_trainable_index(const std::vector<bool>& trainable) {
    for (std::size_t i = 0; i < trainable.size(); ++i) {
        if (trainable[i]) return i;
    }
    return trainable.size();
}

void check_chain(const std::vector<DenseLayer>& layers, const Tensor2& input) {
    if (layers.empty()) throw ShapeError("forward: empty layer list");
    if (input.cols != layers.front().fan_in()) {
        throw ShapeError("forward: input has " + std::to_string(input.cols) +
                         " columns, first layer expects " +
                         std::to_string(layers.front().fan_in()));
    }
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
        if (layers[i].fan_out() != layers[i + 1].fan_in()) {
            throw ShapeError("forward: layer " + std::to_string(i) + " emits " +
                             std::to_string(layers[i].fan_out()) + ", layer " +
                             std::to_string(i + 1) + " expects " +
                             std::to_string(layers[i + 1].fan_in()));
        }
        if (layers[i].act == Activation::SoftmaxXent) {
            throw ShapeError("forward: SoftmaxXent is only allowed on the final layer");
        }
    }
}

Tensor2 layer_forward(const DenseLayer& l, const Tensor2& x) {
    Tensor2 z = matmul(x, l.weights);
    for (std::size_t i = 0; i < z.rows; ++i) {
        double* row = &z.data[i * z.cols];
        for (std::size_t j = 0; j < z.cols; ++j) row[j] += l.bias[j];
    }
    if (l.act == Activation::ReLU) {
        for (double& v : z.data) v = v > 0.0 ? v : 0.0;
    }
    // Identity and SoftmaxXent both emit raw affine outputs here.
    return z;
}

}  // namespace

ForwardResult forward(const std::vector<DenseLayer>& layers, const Tensor2& input,
                      CachePolicy policy, const std::vector<bool>& trainable) {
    check_chain(layers, input);
    if (!trainable.empty() && trainable.size() != layers.size()) {
        throw ShapeError("forward: trainable mask has " + std::to_string(trainable.size()) +
                         " entries for " + std::to_string(layers.size()) + " layers");
    }

    const std::vector<bool> mask =
        trainable.empty() ? std::vector<bool>(layers.size(), false) : trainable;
    const std::size_t first_tr = first_trainable_index(mask);

    ForwardResult res;
    res.cache.entries.resize(layers.size());
    Tensor2 x = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const bool want_input =
            policy == CachePolicy::StoreAll || (policy == CachePolicy::StoreTrainable && mask[i]);
        Tensor2 y = layer_forward(layers[i], x);
        const bool want_output =
            policy == CachePolicy::StoreAll ||
            (policy == CachePolicy::StoreTrainable && i >= first_tr &&
             layers[i].act == Activation::ReLU);
        CacheEntry& e = res.cache.entries[i];
        if (want_input) {
            e.input = std::move(x);
            e.has_input = true;
        }
        if (want_output) {
            e.output = y;
            e.has_output = true;
        }
        x = std::move(y);
    }
    res.output = std::move(x);
    return res;
}

Tensor2 forward_infer(const std::vector<DenseLayer>& layers, const Tensor2& input) {
    return forward(layers, input, CachePolicy::StoreNone).output;
}

ParamLayout ParamLayout::of(const std::vector<DenseLayer>& layers) {
    ParamLayout l;
    l.entries.reserve(layers.size());
    std::size_t off = 0;
    for (const DenseLayer& layer : layers) {
        l.entries.push_back({off, layer.fan_in(), layer.fan_out()});
        off += layer.param_count();
    }
    l.total = off;
    return l;
}

bool ParamLayout::operator==(const ParamLayout& o) const {
    if (total != o.total || entries.size() != o.entries.size()) return false;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].offset != o.entries[i].offset || entries[i].fan_in != o.entries[i].fan_in ||
            entries[i].fan_out != o.entries[i].fan_out) {
            return false;
        }
    }
    return true;
}

ParamVector pack(const std::vector<DenseLayer>& layers) {
    ParamVector pv;
    pv.layout = ParamLayout::of(layers);
    pv.values.resize(pv.layout.total);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        double* dst = &pv.values[pv.layout.entries[i].offset];
        dst = std::copy(layers[i].weights.data.begin(), layers[i].weights.data.end(), dst);
        std::copy(layers[i].bias.begin(), layers[i].bias.end(), dst);
    }
    return pv;
}

void unpack(const ParamVector& pv, std::vector<DenseLayer>& layers) {
    if (!(pv.layout == ParamLayout::of(layers))) {
        throw LayoutError("unpack: parameter vector layout does not match the layer list");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const double* src = &pv.values[pv.layout.entries[i].offset];
        std::copy(src, src + layers[i].weights.size(), layers[i].weights.data.begin());
        src += layers[i].weights.size();
        std::copy(src, src + layers[i].bias.size(), layers[i].bias.begin());
    }
}

ParamVector backward(const std::vector<DenseLayer>& layers, const ForwardCache& cache,
                     const Tensor2& loss_grad, const std::vector<bool>& trainable) {
    if (trainable.size() != layers.size()) {
        throw ShapeError("backward: trainable mask has " + std::to_string(trainable.size()) +
                         " entries for " + std::to_string(layers.size()) + " layers");
    }
    if (cache.entries.size() != layers.size()) {
        throw CacheError("backward: cache covers " + std::to_string(cache.entries.size()) +
                         " layers, model has " + std::to_string(layers.size()));
    }
    if (loss_grad.cols != layers.back().fan_out()) {
        throw ShapeError("backward: loss gradient has " + std::to_string(loss_grad.cols) +
                         " columns, final layer emits " +
                         std::to_string(layers.back().fan_out()));
    }

    ParamVector grad;
    grad.layout = ParamLayout::of(layers);
    grad.values.assign(grad.layout.total, 0.0);

    const std::size_t first_tr = first_trainable_index(trainable);
    if (first_tr == layers.size()) return grad;  // everything frozen

    Tensor2 delta = loss_grad;  // d(loss)/d(layer output)
    for (std::size_t ii = layers.size(); ii-- > first_tr;) {
        const DenseLayer& l = layers[ii];
        const CacheEntry& e = cache.entries[ii];
        if (l.act == Activation::ReLU) {
            if (!e.has_output) {
                throw CacheError("backward: no cached output for ReLU layer " +
                                 std::to_string(ii));
            }
            for (std::size_t k = 0; k < delta.data.size(); ++k) {
                if (e.output.data[k] <= 0.0) delta.data[k] = 0.0;
            }
        }
        if (trainable[ii]) {
            if (!e.has_input) {
                throw CacheError("backward: missing cached activation for trainable layer " +
                                 std::to_string(ii));
            }
            Tensor2 dw = matmul_at_b(e.input, delta);
            const std::size_t off = grad.layout.entries[ii].offset;
            std::copy(dw.data.begin(), dw.data.end(), grad.values.begin() + off);
            double* db = &grad.values[off + dw.data.size()];
            for (std::size_t r = 0; r < delta.rows; ++r) {
                const double* row = &delta.data[r * delta.cols];
                for (std::size_t j = 0; j < delta.cols; ++j) db[j] += row[j];
            }
        }
        if (ii > first_tr) delta = matmul_a_bt(delta, l.weights);
    }
    return grad;
}

void apply_sgd_step(ParamVector& params, const ParamVector& grad, double learning_rate) {
    if (!(params.layout == grad.layout)) {
        throw LayoutError("sgd_step: parameter and gradient layouts differ");
    }
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        params.values[i] -= learning_rate * grad.values[i];
    }
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double learning_rate) {
    ParamVector out = params;
    apply_sgd_step(out, grad, learning_rate);
    return out;
}

LossResult cross_entropy_loss(const Tensor2& logits, const std::vector<int>& labels) {
    if (logits.rows == 0 || logits.cols == 0) {
        throw ValueError("cross_entropy_loss: empty logits");
    }
    if (labels.size() != logits.rows) {
        throw ShapeError("cross_entropy_loss: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(logits.rows) + " rows");
    }
    LossResult res;
    res.grad = Tensor2(logits.rows, logits.cols);
    const double inv_b = 1.0 / static_cast<double>(logits.rows);
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols) {
            throw ValueError("cross_entropy_loss: label " + std::to_string(y) +
                             " outside [0, " + std::to_string(logits.cols) + ")");
        }
        const double* row = &logits.data[i * logits.cols];
        double zmax = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < logits.cols; ++j) zmax = std::max(zmax, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) sum += std::exp(row[j] - zmax);
        const double lse = zmax + std::log(sum);
        loss += lse - row[y];
        double* grow = &res.grad.data[i * logits.cols];
        for (std::size_t j = 0; j < logits.cols; ++j) {
            grow[j] = std::exp(row[j] - lse) * inv_b;
        }
        grow[y] -= inv_b;
    }
    res.loss = loss * inv_b;
    return res;
}

double accuracy(const Tensor2& logits, const std::vector<int>& labels) {
    if (labels.size() != logits.rows) {
        throw ShapeError("accuracy: label count does not match logit rows");
    }
    if (logits.rows == 0) throw ValueError("accuracy: empty batch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* row = &logits.data[i * logits.cols];
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols; ++j) {
            if (row[j] > row[best]) best = j;
        }
        if (static_cast<int>(best) == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows);
}

}  // namespace profl
