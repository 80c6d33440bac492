#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "profl/blocks.hpp"
#include "profl/nn.hpp"

namespace profl::testing {

inline DenseLayer make_layer(std::size_t fan_in, std::size_t fan_out,
                             std::vector<double> weights, std::vector<double> bias,
                             Activation act) {
    DenseLayer l(fan_in, fan_out, act);
    l.weights = Tensor2::from_rows(fan_in, fan_out, std::move(weights));
    l.bias = std::move(bias);
    return l;
}

// Central-difference gradient of the cross-entropy loss with respect to every
// parameter. Independent of backward(): bends one coordinate at a time and
// re-runs the forward pass.
inline ParamVector finite_diff_grad(const std::vector<DenseLayer>& layers,
                                    const Tensor2& input, const std::vector<int>& labels,
                                    double h = 1e-5) {
    std::vector<DenseLayer> work = layers;
    ParamVector params = pack(work);
    ParamVector grad = params;
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        const double saved = params.values[i];
        params.values[i] = saved + h;
        unpack(params, work);
        const double up = cross_entropy_loss(forward_infer(work, input), labels).loss;
        params.values[i] = saved - h;
        unpack(params, work);
        const double down = cross_entropy_loss(forward_infer(work, input), labels).loss;
        params.values[i] = saved;
        grad.values[i] = (up - down) / (2.0 * h);
    }
    unpack(params, work);
    return grad;
}

// Two-sided relative error with a floor so that near-zero coordinates are
// judged on absolute terms.
inline double rel_err(double a, double b, double floor = 1e-3) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct RandomNet {
    std::vector<DenseLayer> layers;
    std::vector<bool> trainable;
    Tensor2 input;
    std::vector<int> labels;
};

// Random small network plus batch whose ReLU pre-activations stay away from
// the kink, so central differences remain a valid oracle.
inline RandomNet random_net(std::mt19937_64& rng, double kink_margin = 1e-3) {
    std::uniform_int_distribution<std::size_t> depth_dist(1, 4);
    std::uniform_int_distribution<std::size_t> width_dist(1, 8);
    std::uniform_int_distribution<std::size_t> batch_dist(1, 4);
    std::uniform_int_distribution<int> coin(0, 1);
    std::normal_distribution<double> unit(0.0, 1.0);

    for (;;) {
        RandomNet net;
        const std::size_t depth = depth_dist(rng);
        std::size_t in = width_dist(rng);
        const std::size_t batch = batch_dist(rng);
        net.input = Tensor2(batch, in);
        for (double& v : net.input.data) v = unit(rng);
        for (std::size_t d = 0; d < depth; ++d) {
            const std::size_t out = width_dist(rng);
            const Activation act = d + 1 == depth ? Activation::SoftmaxXent
                                   : coin(rng)    ? Activation::ReLU
                                                  : Activation::Identity;
            DenseLayer l(in, out, act);
            for (double& v : l.weights.data) v = unit(rng) * 0.7;
            for (double& v : l.bias) v = unit(rng) * 0.3;
            net.layers.push_back(std::move(l));
            in = out;
        }
        net.labels.resize(batch);
        std::uniform_int_distribution<int> label_dist(0, static_cast<int>(in) - 1);
        for (int& y : net.labels) y = label_dist(rng);
        net.trainable.resize(depth);
        bool any = false;
        for (std::size_t d = 0; d < depth; ++d) {
            net.trainable[d] = coin(rng) == 1;
            any = any || net.trainable[d];
        }
        if (!any) net.trainable[depth - 1] = true;

        // reject batches that graze a ReLU kink
        bool safe = true;
        Tensor2 x = net.input;
        for (const DenseLayer& l : net.layers) {
            Tensor2 z = matmul(x, l.weights);
            for (std::size_t r = 0; r < z.rows; ++r) {
                for (std::size_t c = 0; c < z.cols; ++c) {
                    z.at(r, c) += l.bias[c];
                    if (l.act == Activation::ReLU && std::abs(z.at(r, c)) < kink_margin) {
                        safe = false;
                    }
                }
            }
            if (l.act == Activation::ReLU) {
                for (double& v : z.data) v = v > 0.0 ? v : 0.0;
            }
            x = std::move(z);
        }
        if (safe) return net;
    }
}

}  // namespace profl::testing
