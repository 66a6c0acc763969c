#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace crisp;
using namespace crisp::testing;

namespace {

oracle::DistributionTable dirichlet_table(std::size_t c, Rng &rng)
{
    oracle::DistributionTable t{c, std::vector<double>(std::size_t(1) << c)};
    std::exponential_distribution<double> gamma1(1.0); // Dirichlet(1, ..., 1) by normalized Gamma(1) draws
    double s = 0;
    for (auto &p : t.probs) s += p = gamma1(rng);
    for (auto &p : t.probs) p /= s;
    return t;
}

oracle::DistributionTable point_mass(std::size_t c, std::uint64_t y)
{
    oracle::DistributionTable t{c, std::vector<double>(std::size_t(1) << c, 0.0)};
    t.probs[y] = 1;
    return t;
}

}

TEST(OracleEnumerate, SingleLeafAndUniform)
{
    CircuitAssembler as(1);
    auto leaf = as.finish(as.bernoulli(0));
    auto t = oracle::enumerate(leaf, ParamVector({0.7}));
    ASSERT_EQ(t.probs.size(), 2u);
    EXPECT_NEAR(t.probs[0], 0.3, 1e-15);
    EXPECT_NEAR(t.probs[1], 0.7, 1e-15);
    auto f = build_factorized(2);
    for (double p : oracle::enumerate(f, uniform_params(f.layout())).probs) EXPECT_NEAR(p, 0.25, 1e-15);
}

TEST(OracleEnumerate, CrispC10SumsToOne)
{
    auto inst = crisp_instance(10, 4, 7);
    EXPECT_NEAR(oracle::enumerate(inst.circuit, random_params(inst.circuit.layout(), 1)).total(), 1.0, 1e-8);
}

TEST(OracleEnumerate, CapsAndChecks)
{
    auto big = build_factorized(17);
    EXPECT_THROW(oracle::enumerate(big, uniform_params(big.layout())), InvalidInput);
    auto f = build_factorized(13);
    auto t = oracle::enumerate(f, uniform_params(f.layout()));
    EXPECT_NO_THROW(oracle::entropy(t));
    EXPECT_THROW(oracle::power_sum(t, VarSet{0}, 2), InvalidInput);
    // A constrained product is unnormalized: strict enumeration refuses it, renormalization accepts.
    auto inst = crisp_instance(8, 2, 1);
    auto m = apply_constraints(inst.circuit, build_hierarchy_circuit(benchmark_hierarchy(), inst.vtree), inst.vtree);
    auto p = random_params(inst.circuit.layout(), 2);
    EXPECT_THROW(oracle::enumerate(m.circuit, p), PreconditionError);
    EXPECT_NEAR(oracle::enumerate(m.circuit, p, oracle::Normalization::Renormalize).total(), 1.0, 1e-12);
}

TEST(OracleQueries, PointMass)
{
    auto t = point_mass(4, 0b1010);
    EXPECT_EQ(oracle::entropy(t), 0.0);
    EXPECT_EQ(oracle::margin(t), 0.0);
    EXPECT_EQ(oracle::map(t).assignment, (std::vector<std::uint8_t>{0, 1, 0, 1}));
    Rng rng(1);
    for (int k = 0; k < 10; ++k) {
        auto Q = random_subset(4, rng);
        for (double alpha : {2.0, 3.0}) EXPECT_NEAR(oracle::renyi(t, Q, alpha), 0.0, 1e-15);
    }
}

TEST(OracleQueries, UniformC2)
{
    oracle::DistributionTable t{2, {0.25, 0.25, 0.25, 0.25}};
    EXPECT_NEAR(oracle::entropy(t), 2 * std::log(2.0), 1e-15);
    EXPECT_NEAR(oracle::renyi(t, VarSet{0, 1}, 2), 2 * std::log(2.0), 1e-15);
    EXPECT_NEAR(oracle::renyi(t, VarSet{0, 1}, 5), 2 * std::log(2.0), 1e-14);
    EXPECT_NEAR(oracle::margin(t), 0.75, 1e-15);
    EXPECT_EQ(oracle::map(t).assignment, (std::vector<std::uint8_t>{0, 0}));
    EXPECT_THROW(oracle::subset_entropy(t, VarSet{2}), InvalidInput);
}

TEST(OracleQueries, ChainRuleAgreesWithDirectOnDirichletTables)
{
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        auto t = dirichlet_table(6, rng);
        auto Q = random_subset(6, rng);
        EXPECT_NEAR(oracle::conditional_entropy_chain(t, Q), oracle::conditional_entropy_direct(t, Q), 1e-10);
        EXPECT_NEAR(oracle::entropy(t), oracle::subset_entropy(t, Q) + oracle::conditional_entropy_direct(t, Q), 1e-10);
    }
}

TEST(OracleQueries, MapTieRuleIsLexicographic)
{
    // Tied maxima at Y = (1,0,0) [index 1] and (0,1,1) [index 6]: Y0 = 0 wins.
    oracle::DistributionTable t{3, {0.1, 0.3, 0.0, 0.0, 0.0, 0.0, 0.3, 0.3}};
    EXPECT_EQ(oracle::map(t).assignment, (std::vector<std::uint8_t>{0, 1, 1}));
}

TEST(OracleQueries, MarginalAndSuspiciousness)
{
    Rng rng(4);
    auto t = dirichlet_table(3, rng);
    std::vector<std::uint8_t> partial{1, 2, 0};
    EXPECT_NEAR(oracle::marginal(t, partial), t.probs[0b001] + t.probs[0b011], 1e-15);
    std::vector<std::uint8_t> all{2, 2, 2};
    EXPECT_NEAR(oracle::marginal(t, all), 1.0, 1e-12);
    auto mode = oracle::map(t);
    EXPECT_EQ(oracle::suspiciousness(t, mode.assignment), 0.0);
    EXPECT_THROW(oracle::marginal(t, std::vector<std::uint8_t>{1}), InvalidInput);
}

TEST(OracleQueries, BestSubsetSmallCases)
{
    // Factorized with p = (0.5, 0.9): Y0 carries the most uncertainty.
    auto f = build_factorized(2);
    auto t = oracle::enumerate(f, factorized_params(f, {0.5, 0.9}));
    std::vector<double> unit{1, 1};
    auto b = oracle::best_subset(t, 1, unit, 2);
    EXPECT_EQ(b.Q, (VarSet{0}));
    EXPECT_NEAR(b.value, std::log(2.0), 1e-14);
    auto all = oracle::best_subset(t, 5, unit, 2);
    EXPECT_EQ(all.Q, (VarSet{0, 1}));
    auto none = oracle::best_subset(t, 0.5, unit, 2);
    EXPECT_TRUE(none.Q.empty());
}
