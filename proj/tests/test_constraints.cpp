#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace crisp;
using namespace crisp::testing;

namespace {

/// Random forest with `edges` edges: every child picks a parent earlier in a random order.
Hierarchy random_forest(std::size_t c, std::size_t edges, Rng &rng)
{
    auto order = random_permutation(c, rng);
    std::vector<std::size_t> positions;
    for (std::size_t k = 1; k < c; ++k) positions.push_back(k);
    shuffle(positions, rng);
    std::vector<Hierarchy::Edge> out;
    for (std::size_t e = 0; e < edges; ++e) {
        const auto k = positions[e];
        out.push_back({static_cast<VarId>(order[k]), static_cast<VarId>(order[uniform_index(rng, k)])});
    }
    return Hierarchy(c, out);
}

bool implies_all(const Hierarchy &h, std::uint64_t y)
{
    for (auto e : h.edges()) if (oracle::bit(y, e.child) and not oracle::bit(y, e.parent)) return false;
    return true;
}

double logic_value(const LogicCircuit &k, std::uint64_t y)
{
    return oracle::point_value(k.circuit(), ParamVector{}, y);
}

}

TEST(Hierarchy, NoEdgesIsConstantTrue)
{
    auto vt = random_vtree(5, VtreeShape::BalancedRandom, 1);
    auto k = build_hierarchy_circuit(Hierarchy(5, {}), vt);
    for (std::uint64_t y = 0; y < 32; ++y) EXPECT_EQ(logic_value(k, y), 1.0);
    EXPECT_EQ(count_satisfying(k), 32u);
}

TEST(Hierarchy, SingleImplication)
{
    auto vt = random_vtree(2, VtreeShape::BalancedRandom, 0);
    auto k = build_hierarchy_circuit(Hierarchy(2, {{1, 0}}), vt);
    EXPECT_EQ(logic_value(k, 0b00), 1.0);
    EXPECT_EQ(logic_value(k, 0b01), 1.0);
    EXPECT_EQ(logic_value(k, 0b11), 1.0);
    EXPECT_EQ(logic_value(k, 0b10), 0.0); // Y1 = 1, Y0 = 0
    EXPECT_EQ(count_satisfying(k), 3u);
}

TEST(Hierarchy, RandomForestsAgreeWithDirectChecking)
{
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        auto h = random_forest(8, 5, rng);
        auto vt = random_vtree(8, trial % 2 ? VtreeShape::RightLinear : VtreeShape::BalancedRandom, trial);
        auto k = build_hierarchy_circuit(h, vt);
        EXPECT_TRUE(check_smooth(k.circuit()).pass);
        EXPECT_TRUE(check_decomposable(k.circuit()).pass);
        EXPECT_TRUE(check_structured(k.circuit(), vt).pass);
        EXPECT_TRUE(check_deterministic(k.circuit(), ParamVector{}).pass);
        std::uint64_t models = 0;
        for (std::uint64_t y = 0; y < 256; ++y) {
            const bool sat = implies_all(h, y);
            models += sat;
            ASSERT_EQ(logic_value(k, y), sat ? 1.0 : 0.0) << "trial " << trial << " y " << y;
        }
        EXPECT_EQ(count_satisfying(k), models);
    }
}

TEST(Hierarchy, OutputIsBooleanUpTo12)
{
    Rng rng(3);
    auto h = random_forest(12, 9, rng);
    auto k = build_hierarchy_circuit(h, random_vtree(12, VtreeShape::BalancedRandom, 3));
    for (std::uint64_t y = 0; y < 4096; ++y) {
        const double v = logic_value(k, y);
        ASSERT_TRUE(v == 0.0 or v == 1.0);
    }
}

TEST(Count, ConstantTrueAndChain)
{
    EXPECT_EQ(count_satisfying(constant_true(random_vtree(3, VtreeShape::BalancedRandom, 0))), 8u);
    std::vector<Hierarchy::Edge> chain;
    for (VarId v = 1; v < 10; ++v) chain.push_back({v, v - 1});
    auto k = build_hierarchy_circuit(Hierarchy(10, chain), random_vtree(10, VtreeShape::BalancedRandom, 4));
    std::uint64_t brute = 0;
    Hierarchy h(10, chain);
    for (std::uint64_t y = 0; y < 1024; ++y) brute += implies_all(h, y);
    EXPECT_EQ(brute, 11u);
    EXPECT_EQ(count_satisfying(k), 11u);
}

TEST(Hierarchy, CyclesAndBadEdgesRejected)
{
    EXPECT_THROW(Hierarchy(3, {{0, 1}, {1, 2}, {2, 0}}), InvalidInput);
    EXPECT_THROW(Hierarchy(2, {{1, 1}}), InvalidInput);
    EXPECT_THROW(Hierarchy(2, {{2, 0}}), InvalidInput);
}

TEST(Hierarchy, TextInput)
{
    std::istringstream ok("# child parent\n1 0\n\n2 0  # second\n");
    auto h = read_hierarchy(ok, 3);
    ASSERT_EQ(h.edges().size(), 2u);
    EXPECT_EQ(h.edges()[1], (Hierarchy::Edge{2, 0}));
    std::istringstream bad("1\n");
    EXPECT_THROW(read_hierarchy(bad, 3), InvalidInput);
    std::istringstream extra("1 0 4\n");
    EXPECT_THROW(read_hierarchy(extra, 3), InvalidInput);
}

TEST(Hierarchy, LogicSerializationRoundTrip)
{
    auto vt = random_vtree(6, VtreeShape::BalancedRandom, 2);
    auto k = build_hierarchy_circuit(Hierarchy(6, {{1, 0}, {2, 1}, {4, 3}}), vt);
    std::ostringstream os;
    write_logic_circuit(os, k);
    EXPECT_EQ(os.str().find("LOGIC"), os.str().find('\n') + 1);
    std::istringstream is(os.str());
    auto back = read_logic_circuit(is);
    for (std::uint64_t y = 0; y < 64; ++y) EXPECT_EQ(logic_value(back, y), logic_value(k, y));
    std::istringstream plain(circuit_to_string(build_factorized(2)));
    EXPECT_THROW(read_logic_circuit(plain), InvalidInput);
}

TEST(Constrained, ViolatorsGetZeroAndRatiosPreserved)
{
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t c = trial % 2 ? 10 : 8;
        auto inst = crisp_instance(c, 2, 50 + trial);
        auto h = random_forest(c, 4, rng);
        auto k = build_hierarchy_circuit(h, inst.vtree);
        auto m = apply_constraints(inst.circuit, k, inst.vtree);
        auto p = random_params(inst.circuit.layout(), trial);
        const double lz = m.log_normalizer(p);
        auto base = oracle::enumerate(inst.circuit, p);
        double feasible_mass = 0;
        for (std::uint64_t y = 0; y < base.probs.size(); ++y) if (implies_all(h, y)) feasible_mass += base.probs[y];
        std::uint64_t ref = 0;
        while (not implies_all(h, ref)) ++ref;
        const double lref = evaluate_log(m.circuit, p, full_mask(ref, c));
        for (std::uint64_t y = 0; y < base.probs.size(); ++y) {
            const double lv = evaluate_log(m.circuit, p, full_mask(y, c));
            if (not implies_all(h, y)) {
                ASSERT_EQ(lv, -INFINITY);
                continue;
            }
            EXPECT_NEAR(std::exp(lv - lz), base.probs[y] / feasible_mass, 1e-9);
            EXPECT_NEAR(lv - lref, std::log(base.probs[y] / base.probs[ref]), 1e-9);
        }
    }
}
