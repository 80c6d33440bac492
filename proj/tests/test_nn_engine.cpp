#include <cmath>
#include <random>

#include "doctest.h"
#include "profl/errors.hpp"
#include "profl/nn.hpp"
#include "support.hpp"

using namespace profl;
using namespace profl::testing;

TEST_CASE("identity layer reproduces an affine map") {
    auto l = make_layer(2, 2, {1, 2, 3, 4}, {0.5, -0.5}, Activation::Identity);
    Tensor2 x = Tensor2::from_rows(1, 2, {1, 1});
    Tensor2 y = forward_infer({l}, x);
    CHECK(y.at(0, 0) == doctest::Approx(4.5));
    CHECK(y.at(0, 1) == doctest::Approx(5.5));
}

TEST_CASE("relu clamps negative pre-activations") {
    auto l = make_layer(1, 1, {1}, {0}, Activation::ReLU);
    Tensor2 x = Tensor2::from_rows(2, 1, {1, -1});
    Tensor2 y = forward_infer({l}, x);
    CHECK(y.at(0, 0) == 1.0);
    CHECK(y.at(1, 0) == 0.0);
}

TEST_CASE("two chained identity layers equal the composed affine map") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> unit(0.0, 1.0);
    DenseLayer a(3, 3, Activation::Identity);
    DenseLayer b(3, 3, Activation::Identity);
    for (double* v : {&a.weights.data[0], &b.weights.data[0]}) (void)v;
    for (double& v : a.weights.data) v = unit(rng);
    for (double& v : b.weights.data) v = unit(rng);
    for (double& v : a.bias) v = unit(rng);
    for (double& v : b.bias) v = unit(rng);
    Tensor2 x(3, 3);
    for (double& v : x.data) v = unit(rng);

    Tensor2 chained = forward_infer({a, b}, x);

    Tensor2 w = matmul(a.weights, b.weights);
    std::vector<double> bias(3);
    for (std::size_t j = 0; j < 3; ++j) {
        bias[j] = b.bias[j];
        for (std::size_t k = 0; k < 3; ++k) bias[j] += a.bias[k] * b.weights.at(k, j);
    }
    Tensor2 direct = matmul(x, w);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(chained.at(i, j) == doctest::Approx(direct.at(i, j) + bias[j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("forward rejects bad shapes and misplaced softmax") {
    auto l = make_layer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::Identity);
    Tensor2 narrow = Tensor2::from_rows(1, 1, {1});
    CHECK_THROWS_AS(forward_infer({l}, narrow), ShapeError);
    CHECK_THROWS_AS(forward_infer({}, narrow), ShapeError);

    auto head = make_layer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::SoftmaxXent);
    auto tail = make_layer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::Identity);
    Tensor2 x = Tensor2::from_rows(1, 2, {1, 2});
    CHECK_THROWS_AS(forward_infer({head, tail}, x), ShapeError);
}

TEST_CASE("cross entropy of uniform logits is log C") {
    const std::size_t C = 7;
    Tensor2 logits(3, C);
    for (double& v : logits.data) v = 0.25;
    auto res = cross_entropy_loss(logits, {0, 3, 6});
    CHECK(res.loss == doctest::Approx(std::log(double(C))).epsilon(1e-14));
}

TEST_CASE("cross entropy with a huge correct margin is numerically zero") {
    Tensor2 logits(1, 4);
    logits.at(0, 2) = 50.0;
    auto res = cross_entropy_loss(logits, {2});
    CHECK(res.loss >= 0.0);
    CHECK(res.loss < 1e-20);
}

TEST_CASE("cross entropy gradient matches finite differences on the logits") {
    Tensor2 logits = Tensor2::from_rows(2, 3, {0.3, -1.2, 0.8, 2.0, 0.1, -0.4});
    std::vector<int> labels = {2, 0};
    auto res = cross_entropy_loss(logits, labels);
    const double h = 1e-6;
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        Tensor2 up = logits;
        Tensor2 dn = logits;
        up.data[i] += h;
        dn.data[i] -= h;
        const double fd = (cross_entropy_loss(up, labels).loss -
                           cross_entropy_loss(dn, labels).loss) /
                          (2 * h);
        CHECK(res.grad.data[i] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("cross entropy rejects bad labels") {
    Tensor2 logits(1, 3);
    CHECK_THROWS_AS(cross_entropy_loss(logits, {3}), ValueError);
    CHECK_THROWS_AS(cross_entropy_loss(logits, {-1}), ValueError);
    CHECK_THROWS_AS(cross_entropy_loss(logits, {0, 1}), ShapeError);
}

TEST_CASE("backward reproduces the scalar chain-rule value") {
    // y = w * x with w = 2, x = 3 and upstream gradient dL/dy = y = 6
    // (the L = y^2 / 2 convention), so dL/dw = x * y = 18.
    auto l = make_layer(1, 1, {2}, {0}, Activation::Identity);
    Tensor2 x = Tensor2::from_rows(1, 1, {3});
    auto res = forward({l}, x, CachePolicy::StoreTrainable, {true});
    CHECK(res.output.at(0, 0) == 6.0);
    Tensor2 up = Tensor2::from_rows(1, 1, {6});
    ParamVector g = backward({l}, res.cache, up, {true});
    CHECK(g.values[0] == doctest::Approx(18.0));
    CHECK(g.values[1] == doctest::Approx(6.0));  // bias picks up dL/dy
}

TEST_CASE("fully frozen network yields an exact zero gradient") {
    std::mt19937_64 rng(3);
    RandomNet net = random_net(rng);
    std::vector<bool> frozen(net.layers.size(), false);
    auto res = forward(net.layers, net.input, CachePolicy::StoreTrainable, frozen);
    auto loss = cross_entropy_loss(res.output, net.labels);
    ParamVector g = backward(net.layers, res.cache, loss.grad, frozen);
    for (double v : g.values) CHECK(v == 0.0);
}

TEST_CASE("frozen layers get exact zeros, trainable ones match finite differences") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 25; ++rep) {
        RandomNet net = random_net(rng);
        auto res = forward(net.layers, net.input, CachePolicy::StoreTrainable, net.trainable);
        auto loss = cross_entropy_loss(res.output, net.labels);
        ParamVector g = backward(net.layers, res.cache, loss.grad, net.trainable);
        ParamVector fd = finite_diff_grad(net.layers, net.input, net.labels);
        for (std::size_t li = 0; li < net.layers.size(); ++li) {
            const auto& e = g.layout.entries[li];
            const std::size_t count =
                net.layers[li].weights.size() + net.layers[li].bias.size();
            for (std::size_t k = 0; k < count; ++k) {
                const double analytic = g.values[e.offset + k];
                if (!net.trainable[li]) {
                    CHECK(analytic == 0.0);
                } else {
                    CHECK(rel_err(analytic, fd.values[e.offset + k]) < 1e-5);
                }
            }
        }
    }
}

TEST_CASE("backward without cached activations reports the missing layer") {
    auto l = make_layer(1, 1, {2}, {0}, Activation::Identity);
    Tensor2 x = Tensor2::from_rows(1, 1, {3});
    auto res = forward({l}, x, CachePolicy::StoreNone);
    Tensor2 up = Tensor2::from_rows(1, 1, {1});
    CHECK_THROWS_AS(backward({l}, res.cache, up, {true}), CacheError);
}

TEST_CASE("sgd_step applies the textbook update") {
    auto l = make_layer(1, 2, {1, 1}, {0, 0}, Activation::Identity);
    ParamVector p = pack({l});
    ParamVector g = p;
    g.values = {10, 0, 0, 0};
    ParamVector next = sgd_step(p, g, 0.01);
    CHECK(next.values[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(next.values[1] == 1.0);  // untouched coordinate is bitwise unchanged
}

TEST_CASE("sgd_step rejects mismatched layouts") {
    auto a = make_layer(1, 2, {1, 1}, {0, 0}, Activation::Identity);
    auto b = make_layer(2, 1, {1, 1}, {0}, Activation::Identity);
    ParamVector p = pack({a});
    ParamVector g = pack({b});
    CHECK_THROWS_AS(apply_sgd_step(p, g, 0.1), LayoutError);
}

TEST_CASE("gradient descent contracts onto a quadratic optimum") {
    // loss (w - 3)^2 via upstream gradient 2 (y - 3) on y = w * x with x = 1
    auto l = make_layer(1, 1, {0}, {0}, Activation::Identity);
    std::vector<DenseLayer> layers = {l};
    layers[0].bias[0] = 0.0;
    Tensor2 x = Tensor2::from_rows(1, 1, {1});
    std::vector<bool> mask = {true};
    for (int step = 0; step < 200; ++step) {
        auto res = forward(layers, x, CachePolicy::StoreTrainable, mask);
        Tensor2 up = Tensor2::from_rows(1, 1, {2 * (res.output.at(0, 0) - 3.0)});
        ParamVector g = backward(layers, res.cache, up, mask);
        g.values[1] = 0.0;  // keep the bias pinned so w alone carries the fit
        ParamVector p = pack(layers);
        apply_sgd_step(p, g, 0.1);
        unpack(p, layers);
    }
    CHECK(std::abs(layers[0].weights.at(0, 0) - 3.0) < 1e-6);
}

TEST_CASE("pack and unpack round-trip bitwise") {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        RandomNet net = random_net(rng);
        ParamVector pv = pack(net.layers);
        std::vector<DenseLayer> copy = net.layers;
        for (DenseLayer& l : copy) {
            for (double& v : l.weights.data) v = 0;
            for (double& v : l.bias) v = 0;
        }
        unpack(pv, copy);
        ParamVector again = pack(copy);
        REQUIRE(again.values.size() == pv.values.size());
        for (std::size_t i = 0; i < pv.values.size(); ++i) {
            CHECK(again.values[i] == pv.values[i]);
        }
    }
}

TEST_CASE("unpack rejects a foreign layout") {
    auto a = make_layer(1, 2, {1, 1}, {0, 0}, Activation::Identity);
    auto b = make_layer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::Identity);
    ParamVector pv = pack({a});
    std::vector<DenseLayer> wrong = {b};
    CHECK_THROWS_AS(unpack(pv, wrong), LayoutError);
}

TEST_CASE("store-trainable caching is enough to backprop through frozen identity layers") {
    // frozen ReLU prefix, trainable middle, frozen identity bridge, trainable head
    std::mt19937_64 rng(23);
    std::normal_distribution<double> unit(0.0, 1.0);
    std::vector<DenseLayer> layers;
    layers.push_back(DenseLayer(3, 4, Activation::ReLU));
    layers.push_back(DenseLayer(4, 4, Activation::ReLU));
    layers.push_back(DenseLayer(4, 3, Activation::Identity));
    layers.push_back(DenseLayer(3, 2, Activation::SoftmaxXent));
    for (DenseLayer& l : layers) {
        for (double& v : l.weights.data) v = unit(rng);
        for (double& v : l.bias) v = 0.1 * unit(rng);
    }
    std::vector<bool> mask = {false, true, false, true};
    Tensor2 x(2, 3);
    for (double& v : x.data) v = unit(rng);
    std::vector<int> labels = {0, 1};

    auto res = forward(layers, x, CachePolicy::StoreTrainable, mask);
    auto loss = cross_entropy_loss(res.output, labels);
    ParamVector g = backward(layers, res.cache, loss.grad, mask);
    ParamVector fd = finite_diff_grad(layers, x, labels);
    for (std::size_t li : {std::size_t(1), std::size_t(3)}) {
        const auto& e = g.layout.entries[li];
        const std::size_t count = layers[li].weights.size() + layers[li].bias.size();
        for (std::size_t k = 0; k < count; ++k) {
            CHECK(rel_err(g.values[e.offset + k], fd.values[e.offset + k]) < 1e-5);
        }
    }
}
