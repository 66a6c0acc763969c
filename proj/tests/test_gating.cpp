#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace crisp;
using namespace crisp::testing;

namespace {

GatingNet zero_net(std::vector<std::size_t> dims, const ParamLayout &layout)
{
    GatingNet net(std::move(dims), layout, 0);
    std::fill(net.weights().begin(), net.weights().end(), 0.0);
    return net;
}

}

TEST(GatingInit, LinearMapAtZeroIsBias)
{
    auto f = build_factorized(3);
    GatingNet net({2, 3}, f.layout(), 4);
    EXPECT_EQ(net.weights().size(), 2u * 3 + 3);
    auto p = net.forward(std::vector<double>{0.0, 0.0});
    for (auto s : f.layout().leaf_slots) EXPECT_EQ(p[s], 0.5); // biases start at zero
    net.weights()[6] = 2.0;                                      // bias of output 0
    EXPECT_NEAR(net.forward(std::vector<double>{0.0, 0.0})[0], 1 / (1 + std::exp(-2.0)), 1e-15);
}

TEST(GatingInit, SameSeedSameWeights)
{
    auto inst = crisp_instance(8, 2, 1);
    GatingNet a({4, 16, inst.circuit.num_params()}, inst.circuit.layout(), 9);
    GatingNet b({4, 16, inst.circuit.num_params()}, inst.circuit.layout(), 9);
    GatingNet c({4, 16, inst.circuit.num_params()}, inst.circuit.layout(), 10);
    EXPECT_EQ(a.weights(), b.weights());
    EXPECT_NE(a.weights(), c.weights());
}

TEST(GatingInit, DimensionMismatchIsConfigError)
{
    auto f = build_factorized(3);
    EXPECT_THROW(GatingNet({2, 4}, f.layout(), 0), ConfigError);
    EXPECT_THROW(GatingNet({2}, f.layout(), 0), ConfigError);
    EXPECT_THROW(GatingNet({2, 0, 3}, f.layout(), 0), ConfigError);
    EXPECT_THROW(GatingNet({2, 3}, f.layout(), std::vector<double>(5)), ConfigError);
}

TEST(GatingForward, OutputsAlwaysValid)
{
    auto inst = crisp_instance(8, 3, 2);
    GatingNet net({4, 16, inst.circuit.num_params()}, inst.circuit.layout(), 3);
    Rng rng(1);
    for (int t = 0; t < 10000; ++t) {
        std::vector<double> x(4);
        for (auto &v : x) v = 5 * standard_normal(rng);
        auto p = net.forward(x);
        auto r = check_params(inst.circuit.layout(), p);
        ASSERT_TRUE(r.pass) << r.detail;
        for (auto blk : inst.circuit.layout().sum_blocks) {
            double s = 0;
            for (std::size_t k = 0; k < blk.size; ++k) s += std::exp(p[blk.offset + k]);
            ASSERT_NEAR(std::log(s), 0.0, 1e-9);
        }
        for (auto s : inst.circuit.layout().leaf_slots) {
            ASSERT_GE(p[s], kLeafClampLo);
            ASSERT_LE(p[s], kLeafClampHi);
        }
    }
}

TEST(GatingForward, ZeroNetIsUniform)
{
    auto inst = crisp_instance(6, 3, 5);
    auto net = zero_net({3, 8, inst.circuit.num_params()}, inst.circuit.layout());
    auto p = net.forward(std::vector<double>{1.0, -2.0, 0.5});
    for (auto blk : inst.circuit.layout().sum_blocks)
        for (std::size_t k = 0; k < blk.size; ++k) EXPECT_NEAR(p[blk.offset + k], -std::log(double(blk.size)), 1e-15);
    for (auto s : inst.circuit.layout().leaf_slots) EXPECT_EQ(p[s], 0.5);
}

TEST(GatingForward, LipschitzInTheInput)
{
    auto inst = crisp_instance(6, 2, 7);
    GatingNet net({3, 10, 10, inst.circuit.num_params()}, inst.circuit.layout(), 8);
    // Product of per-layer Frobenius norms bounds the operator norm of the raw map (tanh is 1-Lipschitz).
    double bound = 1;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < net.dims().size(); ++l) {
        const std::size_t n = net.dims()[l] * net.dims()[l + 1];
        double f = 0;
        for (std::size_t k = 0; k < n; ++k) f += net.weights()[off + k] * net.weights()[off + k];
        bound *= std::sqrt(f);
        off += n + net.dims()[l + 1];
    }
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> x{standard_normal(rng), standard_normal(rng), standard_normal(rng)};
        const auto a = net.raw(x);
        for (double eps : {1e-3, 1e-6}) {
            auto y = x;
            y[t % 3] += eps;
            const auto b = net.raw(y);
            double d = 0;
            for (std::size_t k = 0; k < a.size(); ++k) d += (a[k] - b[k]) * (a[k] - b[k]);
            EXPECT_LE(std::sqrt(d), bound * eps * (1 + 1e-9));
        }
    }
    EXPECT_THROW(net.forward(std::vector<double>{0.0, NAN, 0.0}), NumericError);
    EXPECT_THROW(net.forward(std::vector<double>{0.0}), InvalidInput);
}

TEST(GatingGradient, MatchesFiniteDifferencesOnCrisp)
{
    auto inst = crisp_instance(4, 2, 3);
    GatingNet net({3, 6, inst.circuit.num_params()}, inst.circuit.layout(), 1);
    Rng rng(4);
    auto batch = random_examples(5, 3, nullptr, 4, rng);
    EXPECT_LE(nll_gradient_error(net, inst.circuit, batch, 20, rng), 1e-4);
}

TEST(GatingGradient, MatchesFiniteDifferencesOnFactorized)
{
    auto f = build_factorized(4);
    GatingNet net({3, 6, f.num_params()}, f.layout(), 2);
    Rng rng(5);
    auto batch = random_examples(5, 3, nullptr, 4, rng);
    EXPECT_LE(nll_gradient_error(net, f, batch, 20, rng), 1e-4);
}

TEST(GatingGradient, MatchesFiniteDifferencesOnConstrainedCrisp)
{
    auto inst = crisp_instance(8, 2, 6);
    auto h = benchmark_hierarchy();
    auto m = apply_constraints(inst.circuit, build_hierarchy_circuit(h, inst.vtree), inst.vtree);
    GatingNet net({3, 6, m.circuit.num_params()}, m.circuit.layout(), 3);
    Rng rng(6);
    auto batch = random_examples(5, 3, &h, 8, rng);
    EXPECT_LE(nll_gradient_error(net, m.circuit, batch, 20, rng), 1e-4);
}

TEST(GatingNll, ConstraintViolationReportsExampleIndex)
{
    auto inst = crisp_instance(8, 2, 6);
    auto h = benchmark_hierarchy();
    auto m = apply_constraints(inst.circuit, build_hierarchy_circuit(h, inst.vtree), inst.vtree);
    GatingNet net({2, m.circuit.num_params()}, m.circuit.layout(), 3);
    Rng rng(7);
    auto batch = random_examples(4, 2, &h, 8, rng);
    std::vector<std::uint8_t> bad(8, 0);
    bad[7] = 1;
    batch[2].evidence = EvidenceMask::observed(bad);
    try {
        nll(net, m.circuit, batch);
        FAIL() << "expected an infinite loss";
    } catch (const InfiniteLossError &e) {
        EXPECT_EQ(e.example_index, 2u);
    }
}

TEST(GatingFit, FactorizedRecoversEmpiricalMarginals)
{
    auto f = build_factorized(2);
    auto net = zero_net({1, f.num_params()}, f.layout());
    std::vector<Example> data;
    for (int i = 0; i < 10; ++i) {
        std::vector<std::uint8_t> y{std::uint8_t(i < 8), std::uint8_t(i % 10 < 3)};
        data.push_back({{1.0}, EvidenceMask::observed(y)});
    }
    TrainConfig cfg;
    cfg.steps = 2000;
    cfg.batch_size = 10;
    fit(net, f, data, cfg);
    auto p = net.forward(std::vector<double>{1.0});
    EXPECT_NEAR(p[leaf_slot(f, 0)], 0.8, 0.02);
    EXPECT_NEAR(p[leaf_slot(f, 1)], 0.3, 0.02);
}

TEST(GatingFit, ZeroLearningRateKeepsWeights)
{
    auto inst = crisp_instance(5, 2, 1);
    GatingNet net({3, inst.circuit.num_params()}, inst.circuit.layout(), 2);
    const auto before = net.weights();
    Rng rng(1);
    auto data = random_examples(20, 3, nullptr, 5, rng);
    TrainConfig cfg;
    cfg.learning_rate = 0;
    cfg.steps = 20;
    fit(net, inst.circuit, data, cfg);
    EXPECT_EQ(net.weights(), before);
}

TEST(GatingFit, SameSeedSameLossCurve)
{
    auto inst = crisp_instance(6, 2, 1);
    Rng rng(2);
    auto data = random_examples(40, 3, nullptr, 6, rng);
    TrainConfig cfg;
    cfg.steps = 50;
    cfg.seed = 11;
    GatingNet a({3, 8, inst.circuit.num_params()}, inst.circuit.layout(), 5), b = a;
    auto ra = fit(a, inst.circuit, data, cfg), rb = fit(b, inst.circuit, data, cfg);
    EXPECT_EQ(ra.losses, rb.losses);
    EXPECT_EQ(a.weights(), b.weights());
    ASSERT_EQ(ra.losses.size(), 50u);
}

TEST(GatingFit, SingleLabelLossDecreasesMonotonically)
{
    CircuitAssembler as(1);
    auto c = as.finish(as.bernoulli(0));
    GatingNet net({1, 1}, c.layout(), 0);
    std::vector<Example> data{{{0.5}, EvidenceMask::observed(std::vector<std::uint8_t>{1})}};
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.steps = 100;
    cfg.batch_size = 1;
    auto r = fit(net, c, data, cfg);
    for (std::size_t k = 1; k < r.losses.size(); ++k) EXPECT_LE(r.losses[k], r.losses[k - 1]) << k;
    EXPECT_LT(r.losses.back(), r.losses.front());
}

TEST(GatingFit, FirstOrderDescent)
{
    auto inst = crisp_instance(6, 2, 4);
    GatingNet net({3, 8, inst.circuit.num_params()}, inst.circuit.layout(), 6);
    Rng rng(3);
    auto data = random_examples(8, 3, nullptr, 6, rng);
    auto lg = nll(net, inst.circuit, data);
    double g2 = 0;
    for (double g : lg.grad) g2 += g * g;
    const double lr = 1e-6;
    for (std::size_t k = 0; k < lg.grad.size(); ++k) net.weights()[k] -= lr * lg.grad[k];
    const double change = nll(net, inst.circuit, data).loss - lg.loss;
    EXPECT_NEAR(change, -lr * g2, 0.05 * lr * g2);
}

TEST(GatingFit, LossBookkeepingMatchesOracle)
{
    SyntheticConfig sc;
    sc.hierarchy = benchmark_hierarchy();
    sc.num_examples = 300;
    sc.seed = 3;
    auto ds = generate_synthetic(sc);
    auto inst = crisp_instance(8, 2, 3);
    GatingNet net({16, 16, inst.circuit.num_params()}, inst.circuit.layout(), 1);
    auto data = ds.examples();
    TrainConfig cfg;
    cfg.steps = 300;
    fit(net, inst.circuit, data, cfg);
    double oracle_nll = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto t = oracle::enumerate(inst.circuit, net.forward(ds.X[i]));
        oracle_nll -= std::log(t.probs[oracle::to_index(ds.Y[i])]);
    }
    oracle_nll /= double(ds.size());
    EXPECT_NEAR(mean_nll(net, inst.circuit, data), oracle_nll, 0.1);
    EXPECT_NEAR(mean_nll(net, inst.circuit, data), oracle_nll, 1e-9);
}

TEST(GatingFit, ConfigValidated)
{
    TrainConfig cfg;
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.learning_rate = -1;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(GatingSerialization, RoundTrip)
{
    auto inst = crisp_instance(7, 3, 2);
    GatingNet net({5, 12, inst.circuit.num_params()}, inst.circuit.layout(), 4);
    std::stringstream ss;
    write_gating_net(ss, net);
    auto back = read_gating_net(ss);
    EXPECT_EQ(back.dims(), net.dims());
    EXPECT_EQ(back.layout(), net.layout());
    ASSERT_EQ(back.weights().size(), net.weights().size());
    for (std::size_t k = 0; k < net.weights().size(); ++k)
        EXPECT_NEAR(back.weights()[k], net.weights()[k], 1e-15 * std::max(1.0, std::abs(net.weights()[k])));
    std::istringstream bad("crisp-gating-net 2\n");
    EXPECT_THROW(read_gating_net(bad), InvalidInput);
}
