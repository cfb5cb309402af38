#include <doctest.h>

#include <cmath>
#include <sstream>

#include "aush/neural.hpp"

using namespace aush;

namespace {

MlpNetwork random_net(Rng& rng, std::size_t depth) {
    std::uniform_int_distribution<std::size_t> width(1, 20);
    std::vector<std::size_t> dims{width(rng)};
    for (std::size_t l = 0; l < depth; ++l) dims.push_back(width(rng));
    auto out_act = rng() % 2 ? Activation::Sigmoid : Activation::Identity;
    auto net = MlpNetwork::create(dims, Activation::Sigmoid, out_act, rng);
    // nonzero biases so every parameter path is exercised
    std::normal_distribution<double> n(0.0, 0.5);
    for (std::size_t l = 0; l < net.num_layers(); ++l)
        for (auto& b : net.mutable_layer(l).bias) b = n(rng);
    return net;
}

}  // namespace

TEST_SUITE("neural") {

TEST_CASE("identity network returns its input") {
    DenseLayer id(3, 3, Activation::Identity);
    for (std::size_t i = 0; i < 3; ++i) id.w(i, i) = 1.0;
    MlpNetwork net({id});
    CHECK(net.num_hidden_layers() == 0);
    std::vector<double> x{0.3, -2.0, 7.5};
    auto c = mlp_forward(net, x);
    CHECK(std::vector<double>(c.output().begin(), c.output().end()) == x);
}

TEST_CASE("zero-weight sigmoid unit outputs one half") {
    MlpNetwork net({DenseLayer(4, 1, Activation::Sigmoid)});
    for (auto x : {std::vector<double>{0, 0, 0, 0}, std::vector<double>{5, -3, 1, 100}})
        CHECK(mlp_forward(net, x).output()[0] == 0.5);
}

TEST_CASE("two-layer net matches hand computation") {
    DenseLayer h(2, 2, Activation::Sigmoid);
    h.weights = {1.0, -1.0, 0.5, 2.0};
    h.bias = {0.0, -1.0};
    DenseLayer o(2, 1, Activation::Identity);
    o.weights = {2.0, -3.0};
    o.bias = {0.25};
    MlpNetwork net({h, o});
    std::vector<double> x{1.0, 0.5};
    // h = sigmoid(0.5), sigmoid(0.5 + 1 - 1) = sigmoid(0.5)
    const double s = 1.0 / (1.0 + std::exp(-0.5));
    CHECK(mlp_forward(net, x).output()[0] == doctest::Approx(2 * s - 3 * s + 0.25).epsilon(1e-14));
}

TEST_CASE("sigmoid is stable and in range") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(std::isfinite(sigmoid(-800.0)));
    for (double x : {-30.0, -3.0, 0.1, 3.0, 30.0}) {
        CHECK(sigmoid(x) > 0.0);
        CHECK(sigmoid(x) < 1.0);
    }
}

TEST_CASE("forward is pure") {
    Rng rng(3);
    auto net = random_net(rng, 2);
    std::vector<double> x(net.input_dim(), 0.7);
    auto a = mlp_forward(net, x);
    auto b = mlp_forward(net, x);
    CHECK(a.values == b.values);
}

TEST_CASE("dimension mismatch is rejected") {
    MlpNetwork net({DenseLayer(3, 1, Activation::Sigmoid)});
    std::vector<double> x(2, 0.0);
    CHECK_THROWS(mlp_forward(net, x));
}

TEST_CASE("zero output gradient gives zero parameter gradients") {
    Rng rng(9);
    auto net = random_net(rng, 3);
    std::vector<double> x(net.input_dim(), 0.4);
    auto c = mlp_forward(net, x);
    std::vector<double> g(net.output_dim(), 0.0);
    CHECK(mlp_backward(net, c, g).max_abs() == 0.0);
}

TEST_CASE("linear layer with squared error has the closed-form gradient") {
    DenseLayer l(3, 2, Activation::Identity);
    l.weights = {0.1, -0.2, 0.3, 0.5, 0.0, -1.0};
    l.bias = {0.2, -0.1};
    MlpNetwork net({l});
    std::vector<double> x{1.0, 2.0, -1.0}, t{0.5, 0.25};
    auto c = mlp_forward(net, x);
    std::vector<double> g(2);
    for (int i = 0; i < 2; ++i) g[i] = 2.0 * (c.output()[i] - t[i]);
    auto grads = mlp_backward(net, c, g);
    for (std::size_t o = 0; o < 2; ++o) {
        const double r = c.output()[o] - t[o];
        for (std::size_t i = 0; i < 3; ++i) CHECK(grads.weights[0][o * 3 + i] == doctest::Approx(2 * r * x[i]));
        CHECK(grads.bias[0][o] == doctest::Approx(2 * r));
    }
}

TEST_CASE("analytic gradients match central differences") {
    Rng rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        auto net = random_net(rng, 1 + trial % 3);
        std::normal_distribution<double> n(0.0, 1.0);
        std::vector<double> x(net.input_dim()), t(net.output_dim());
        for (auto& v : x) v = n(rng);
        for (auto& v : t) v = n(rng);
        auto loss = [&](std::span<const double> out) {
            double s = 0;
            for (std::size_t i = 0; i < out.size(); ++i) s += 0.5 * (out[i] - t[i]) * (out[i] - t[i]) + 0.3 * out[i];
            return s;
        };
        auto c = mlp_forward(net, x);
        std::vector<double> g(net.output_dim());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = (c.output()[i] - t[i]) + 0.3;
        auto analytic = mlp_backward(net, c, g);
        auto numeric = finite_difference_gradients(net, x, loss, 1e-5);
        CHECK(max_relative_error(analytic, numeric) < 1e-4);
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(analytic.input[i] == doctest::Approx(numeric.input[i]).epsilon(1e-5));
    }
}

TEST_CASE("finite differences converge quadratically in h") {
    Rng rng(17);
    auto net = random_net(rng, 2);
    std::vector<double> x(net.input_dim(), 0.3);
    auto loss = [](std::span<const double> out) {
        double s = 0;
        for (double o : out) s += std::sin(3 * o);
        return s;
    };
    auto c = mlp_forward(net, x);
    std::vector<double> g(net.output_dim());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = 3 * std::cos(3 * c.output()[i]);
    auto analytic = mlp_backward(net, c, g);
    auto err = [&](double h) {
        auto fd = finite_difference_gradients(net, x, loss, h);
        double worst = 0;
        for (std::size_t l = 0; l < fd.weights.size(); ++l)
            for (std::size_t i = 0; i < fd.weights[l].size(); ++i)
                worst = std::max(worst, std::abs(fd.weights[l][i] - analytic.weights[l][i]));
        return worst;
    };
    const double e1 = err(1e-2), e2 = err(5e-3);
    CHECK(e2 < e1);
    CHECK(e1 / e2 > 3.0);
}

TEST_CASE("stale cache is a contract violation") {
    Rng rng(4);
    auto net = random_net(rng, 2);
    std::vector<double> x(net.input_dim(), 0.1);
    auto c = mlp_forward(net, x);
    net.mutable_layer(0).bias[0] += 1.0;
    std::vector<double> g(net.output_dim(), 1.0);
    CHECK_THROWS_AS(mlp_backward(net, c, g), ContractViolation);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
    Rng rng(5);
    auto net = random_net(rng, 2);
    auto before = net;
    AdamState st(net, 0.01);
    adam_update(net, net.zero_gradients(), st);
    CHECK(st.step == 1);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        CHECK(net.layer(l).weights == before.layer(l).weights);
        CHECK(net.layer(l).bias == before.layer(l).bias);
    }
}

TEST_CASE("adam: first step with unit gradient moves by the learning rate") {
    DenseLayer l(1, 1, Activation::Identity);
    l.weights = {0.0};
    l.bias = {0.0};
    MlpNetwork net({l});
    AdamState st(net, 0.01);
    auto g = net.zero_gradients();
    g.weights[0][0] = 1.0;
    adam_update(net, g, st);
    // m_hat = 1, v_hat = 1: delta = -lr / (1 + eps)
    CHECK(net.layer(0).w(0, 0) == doctest::Approx(-0.01 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(net.layer(0).bias[0] == 0.0);
}

TEST_CASE("adam trajectories are bit-identical for the same seed") {
    auto run = [] {
        Rng rng(77);
        auto net = random_net(rng, 3);
        AdamState st(net, 0.01);
        std::vector<double> x(net.input_dim(), 0.2);
        for (int s = 0; s < 25; ++s) {
            auto c = mlp_forward(net, x);
            std::vector<double> g(c.output().begin(), c.output().end());
            adam_update(net, mlp_backward(net, c, g), st);
        }
        return net;
    };
    CHECK(run() == run());
}

TEST_CASE("adam rejects non-finite gradients") {
    MlpNetwork net({DenseLayer(2, 1, Activation::Identity)});
    AdamState st(net, 0.01);
    auto g = net.zero_gradients();
    g.weights[0][1] = std::nan("");
    CHECK_THROWS_AS(adam_update(net, g, st), NonFiniteError);
}

TEST_CASE("weight decay gradient") {
    Rng rng(8);
    auto net = random_net(rng, 2);
    auto fd = finite_difference_gradients(net, [](const MlpNetwork& n) { return 0.35 * weight_norm_sq(n); }, 1e-5);
    auto g = net.zero_gradients();
    add_weight_decay(net, g, 0.7);
    CHECK(max_relative_error(g, fd, 1e-6) < 1e-6);
}

TEST_CASE("checkpoints round-trip exactly") {
    Rng rng(12);
    auto net = random_net(rng, 3);
    auto ck = to_checkpoint(net, "mlp");
    ck.meta["note"] = "hello world";
    std::stringstream ss;
    write_checkpoint(ss, ck);
    auto back = read_checkpoint(ss);
    CHECK(back.kind == "mlp");
    CHECK(back.meta_value("note") == "hello world");
    CHECK(network_from_checkpoint(back) == net);

    std::stringstream bad("aush-checkpoint 99\nkind mlp\nend\n");
    CHECK_THROWS(read_checkpoint(bad));
}

}  // TEST_SUITE
