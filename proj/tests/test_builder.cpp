#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <string>

using namespace crisp;
using namespace crisp::testing;

TEST(Vtree, SingleVariable)
{
    auto vt = random_vtree(1, VtreeShape::BalancedRandom, 3);
    EXPECT_EQ(vt.size(), 1u);
    EXPECT_TRUE(vt.node(vt.root()).is_leaf());
}

TEST(Vtree, RightLinearSplits)
{
    auto vt = random_vtree(4, VtreeShape::RightLinear, 0);
    EXPECT_TRUE(vt.has_split(VarSet{0}, VarSet{1, 2, 3}));
    EXPECT_TRUE(vt.has_split(VarSet{1}, VarSet{2, 3}));
    EXPECT_TRUE(vt.has_split(VarSet{2}, VarSet{3}));
    EXPECT_EQ(vt.to_string(), "(0(1(2 3)))");
}

TEST(Vtree, BalancedSeedsDifferAndPartition)
{
    auto a = random_vtree(8, VtreeShape::BalancedRandom, 1);
    auto b = random_vtree(8, VtreeShape::BalancedRandom, 2);
    EXPECT_NE(a.leaf_order(), b.leaf_order());
    for (const auto *vt : {&a, &b}) {
        auto order = vt->leaf_order();
        std::sort(order.begin(), order.end());
        for (VarId v = 0; v < 8; ++v) EXPECT_EQ(order[v], v);
        for (const auto &n : vt->nodes())
            if (not n.is_leaf()) {
                const auto &l = vt->node(n.left).vars, &r = vt->node(n.right).vars;
                EXPECT_FALSE(l.intersects(r));
                EXPECT_EQ(l | r, n.vars);
                EXPECT_LE(r.size(), l.size());
                EXPECT_LE(l.size() - r.size(), 1u);
            }
    }
}

TEST(Vtree, ZeroVariablesRejected)
{
    EXPECT_THROW(random_vtree(0, VtreeShape::BalancedRandom, 0), InvalidInput);
}

TEST(Vtree, TextRoundTrip)
{
    auto vt = Vtree::parse("((0 2)(1 3))");
    EXPECT_EQ(vt.to_string(), "((0 2)(1 3))");
    EXPECT_TRUE(vt.has_split(VarSet{0, 2}, VarSet{1, 3}));
    auto r = random_vtree(11, VtreeShape::BalancedRandom, 5);
    EXPECT_EQ(Vtree::parse(r.to_string()).to_string(), r.to_string());
    EXPECT_THROW(Vtree::parse("(0 0)"), StructuralError);
    EXPECT_THROW(Vtree::parse("(0 2)"), StructuralError);
    EXPECT_THROW(Vtree::parse("(0 1"), InvalidInput);
}

TEST(Crisp, SingleVariableIsOneLeaf)
{
    auto c = build_crisp(random_vtree(1, VtreeShape::BalancedRandom, 0), 1, 0);
    EXPECT_EQ(c.size(), 1u);
    EXPECT_TRUE(c.unit(0).is_bernoulli());
    auto s = param_layout(c);
    EXPECT_EQ(s.sum_weights, 0u);
    EXPECT_EQ(s.leaf_params, 1u);
}

TEST(Crisp, TwoVariablesIsShannonExpansion)
{
    auto c = build_crisp(Vtree::parse("(0 1)"), 1, 0);
    const auto &root = c.unit(c.root());
    ASSERT_TRUE(root.is_sum());
    ASSERT_EQ(root.inputs.size(), 2u);
    EXPECT_EQ(root.decision_vars, std::vector<VarId>{0});
    std::set<int> gates;
    for (auto in : root.inputs) {
        const auto &p = c.unit(in);
        ASSERT_TRUE(p.is_product());
        ASSERT_EQ(p.inputs.size(), 2u);
        const auto &ind = c.unit(p.inputs[0]), &leaf = c.unit(p.inputs[1]);
        ASSERT_TRUE(ind.is_indicator());
        EXPECT_EQ(ind.var, 0u);
        gates.insert(ind.factors[0].pinned);
        EXPECT_TRUE(leaf.is_bernoulli());
        EXPECT_EQ(leaf.var, 1u);
    }
    EXPECT_EQ(gates, (std::set<int>{0, 1}));
    auto s = param_layout(c);
    EXPECT_EQ(s.sum_weights, 2u);
    EXPECT_EQ(s.leaf_params, 2u);
}

TEST(Crisp, HundredSeedsPassAllStructuralChecks)
{
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const std::size_t c = 2 + seed % 11;
        const std::size_t K = 1 + seed % 4;
        auto shape = seed % 3 == 0 ? VtreeShape::RightLinear : VtreeShape::BalancedRandom;
        auto inst = crisp_instance(c, K, seed, shape);
        const auto &circ = inst.circuit;
        EXPECT_TRUE(check_smooth(circ).pass) << seed;
        EXPECT_TRUE(check_decomposable(circ).pass) << seed;
        EXPECT_TRUE(check_structured(circ, inst.vtree).pass) << seed;
        auto d = check_deterministic(circ, random_params(circ.layout(), seed), 12);
        EXPECT_TRUE(d.pass) << seed << ": " << d.detail;
        EXPECT_TRUE(circ.locally_normalized());
        for (UnitId i = 0; i < circ.size(); ++i) {
            if (circ.unit(i).is_sum()) { EXPECT_EQ(circ.unit(i).inputs.size(), 2u); }
        }
    }
}

TEST(Crisp, GoldenCountsC10K4Seed7)
{
    std::ifstream in(CRISP_TEST_DATA_DIR "/golden_c10_k4_seed7.txt");
    ASSERT_TRUE(in) << "golden file missing";
    std::map<std::string, std::size_t> golden;
    std::string key;
    std::size_t value;
    while (in >> key >> value) golden[key] = value;
    auto c = build_crisp(BuilderConfig{10, 4, 7, VtreeShape::BalancedRandom});
    auto s = param_layout(c);
    EXPECT_EQ(c.size(), golden.at("units"));
    EXPECT_EQ(c.num_edges(), golden.at("edges"));
    EXPECT_EQ(s.total, golden.at("params"));
    EXPECT_EQ(s.sum_weights, golden.at("sum_weights"));
    EXPECT_EQ(s.leaf_params, golden.at("leaf_params"));
    auto vt = random_vtree(10, VtreeShape::BalancedRandom, 7);
    EXPECT_TRUE(check_smooth(c).pass);
    EXPECT_TRUE(check_decomposable(c).pass);
    EXPECT_TRUE(check_structured(c, vt).pass);
    EXPECT_TRUE(check_deterministic(c, random_params(c.layout(), 1)).pass);
}

TEST(Crisp, SupportCoverage)
{
    for (std::size_t c : {3u, 6u, 9u, 12u}) {
        auto inst = crisp_instance(c, 3, 40 + c);
        auto p = random_params(inst.circuit.layout(), c);
        for (std::uint64_t y = 0; y < (1u << c); ++y)
            ASSERT_GT(oracle::point_value(inst.circuit, p, y), 0.0) << "c=" << c << " y=" << y;
    }
}

TEST(Crisp, Reproducible)
{
    auto a = circuit_to_string(crisp_instance(9, 3, 123).circuit);
    auto b = circuit_to_string(crisp_instance(9, 3, 123).circuit);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, circuit_to_string(crisp_instance(9, 3, 124).circuit));
}

TEST(Crisp, InvalidWidth)
{
    EXPECT_THROW(build_crisp(random_vtree(3, VtreeShape::BalancedRandom, 0), 0, 0), InvalidInput);
    EXPECT_THROW(build_crisp(BuilderConfig{0, 1, 0, VtreeShape::BalancedRandom}), InvalidInput);
}

TEST(Factorized, Shapes)
{
    auto one = build_factorized(1);
    EXPECT_EQ(one.size(), 1u);
    auto three = build_factorized(3);
    EXPECT_EQ(three.size(), 5u);
    const auto &root = three.unit(three.root());
    ASSERT_TRUE(root.is_product());
    EXPECT_EQ(three.scope(root.inputs[0]), (VarSet{0}));
    EXPECT_EQ(three.scope(root.inputs[1]), (VarSet{1, 2}));
    auto s = param_layout(three);
    EXPECT_EQ(s.sum_weights, 0u);
    EXPECT_EQ(s.leaf_params, 3u);
}

TEST(Factorized, JointIsProductOfMarginals)
{
    auto f = build_factorized(12);
    auto p = random_params(f.layout(), 2);
    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
        auto y = random_labels(12, rng);
        double prod = 1;
        for (VarId v = 0; v < 12; ++v) {
            const double q = p[leaf_slot(f, v)];
            prod *= y[v] ? q : 1 - q;
        }
        EXPECT_NEAR(oracle::point_value(f, p, oracle::to_index(y)), prod, 1e-15);
    }
}

TEST(Layout, StableUnderSerialization)
{
    auto c = build_crisp(BuilderConfig{10, 4, 7, VtreeShape::BalancedRandom});
    EXPECT_EQ(param_layout(circuit_from_string(circuit_to_string(c))), param_layout(c));
    auto s = param_layout(c);
    std::size_t fan_in = 0, leaves = 0;
    for (const auto &u : c.units()) {
        if (u.is_sum()) fan_in += u.inputs.size();
        if (u.is_bernoulli()) ++leaves;
    }
    EXPECT_EQ(s.total, fan_in + leaves);
}

namespace {

/// Exact KL(target || model) in nats.
double kl(const std::vector<double> &target, const Circuit &c, const ParamVector &p)
{
    double s = 0;
    for (std::uint64_t y = 0; y < target.size(); ++y)
        if (target[y] > 0) s += target[y] * (std::log(target[y]) - std::log(oracle::point_value(c, p, y)));
    return s;
}

}

TEST(Crisp, FitsXorWhichFactorizedCannot)
{
    // y2 = y0 xor y1 with probability 0.96.
    std::vector<double> target(8);
    for (std::uint64_t y = 0; y < 8; ++y) target[y] = (oracle::bit(y, 2) == (oracle::bit(y, 0) != oracle::bit(y, 1))) ? 0.24 : 0.01;

    auto vt = random_vtree(3, VtreeShape::RightLinear, 0);
    auto c = build_crisp(vt, 2, 5);
    GatingNet net({1, c.num_params()}, c.layout(), 9);
    GatingNet::Trace tr;
    const std::vector<double> x{0.0};
    std::vector<double> dparams(c.num_params());
    for (int step = 0; step < 3000; ++step) {
        auto params = net.head(net.raw(x, &tr));
        std::fill(dparams.begin(), dparams.end(), 0.0);
        for (std::uint64_t y = 0; y < 8; ++y) evaluate_log_grad(c, params, full_mask(y, 3), -target[y], dparams);
        std::vector<double> gw(net.weights().size(), 0.0);
        net.backward(tr, params, dparams, gw);
        for (std::size_t k = 0; k < gw.size(); ++k) net.weights()[k] -= 0.5 * gw[k];
    }
    const double crisp_kl = kl(target, c, net.forward(x));
    EXPECT_LT(crisp_kl, 0.05);

    auto f = build_factorized(3);
    double best = INFINITY;
    for (int a = 1; a < 50; ++a)
        for (int b = 1; b < 50; ++b)
            for (int d = 1; d < 50; ++d)
                best = std::min(best, kl(target, f, factorized_params(f, {a / 50.0, b / 50.0, d / 50.0})));
    EXPECT_GT(best, 0.15);
}
