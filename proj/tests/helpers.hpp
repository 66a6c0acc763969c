#pragma once

#include "crisp/crisp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <set>
#include <vector>

namespace crisp::testing {

struct Instance
{
    Vtree vtree;
    Circuit circuit;
};

inline Instance crisp_instance(std::size_t c, std::size_t K, std::uint64_t seed, VtreeShape shape = VtreeShape::BalancedRandom)
{
    auto vt = random_vtree(c, shape, seed);
    auto circ = build_crisp(vt, K, seed);
    return {vt, circ};
}

inline std::vector<std::uint8_t> random_labels(std::size_t c, Rng &rng)
{
    std::vector<std::uint8_t> y(c);
    for (auto &v : y) v = static_cast<std::uint8_t>(uniform_index(rng, 2));
    return y;
}

/// Random subset of {0..c-1}, each label kept with probability 1/2, never empty.
inline VarSet random_subset(std::size_t c, Rng &rng)
{
    for (;;) {
        VarSet Q;
        for (std::size_t v = 0; v < c; ++v) if (uniform_index(rng, 2)) Q.insert(static_cast<VarId>(v));
        if (not Q.empty()) return Q;
    }
}

/// Scope by plain recursion over the unit graph, independent of compute_scopes.
inline std::set<VarId> traverse_scope(const Circuit &c, UnitId id)
{
    const auto &u = c.unit(id);
    if (u.is_leaf()) return {u.var};
    std::set<VarId> s;
    for (auto in : u.inputs) {
        auto t = traverse_scope(c, in);
        s.insert(t.begin(), t.end());
    }
    return s;
}

/// Leaf parameter slot of the (single) Bernoulli leaf over `v` in a factorized circuit.
inline Slot leaf_slot(const Circuit &c, VarId v)
{
    for (const auto &u : c.units()) if (u.is_bernoulli() and u.var == v) return u.factors[0].slot;
    return kNoSlot;
}

inline ParamVector factorized_params(const Circuit &c, const std::vector<double> &p)
{
    ParamVector out(std::vector<double>(c.num_params(), 0.0));
    for (std::size_t v = 0; v < p.size(); ++v) out[leaf_slot(c, static_cast<VarId>(v))] = p[v];
    return out;
}

/// Points at every label configuration as an EvidenceMask.
inline EvidenceMask full_mask(std::uint64_t index, std::size_t c)
{
    return EvidenceMask::observed(oracle::to_labels(index, c));
}

/** Worst relative error between the analytic nll gradient and central differences (step h) over
 * `coords` random weight coordinates.  The denominator is floored at 1e-5 so that coordinates with
 * a vanishing gradient are judged on absolute error. */
inline double nll_gradient_error(GatingNet net, const Circuit &c, std::span<const Example> batch, std::size_t coords,
                                 Rng &rng, double h = 1e-5)
{
    const auto g = nll(net, c, batch).grad;
    double worst = 0;
    for (std::size_t k = 0; k < coords; ++k) {
        const std::size_t j = uniform_index(rng, g.size());
        const double w = net.weights()[j];
        net.weights()[j] = w + h;
        const double hi = nll(net, c, batch).loss;
        net.weights()[j] = w - h;
        const double lo = nll(net, c, batch).loss;
        net.weights()[j] = w;
        const double fd = (hi - lo) / (2 * h);
        worst = std::max(worst, std::abs(g[j] - fd) / std::max({std::abs(fd), std::abs(g[j]), 1e-5}));
    }
    return worst;
}

/// Labels drawn uniformly and then closed upward under `h`.
inline std::vector<Example> random_examples(std::size_t n, std::size_t d, const Hierarchy *h, std::size_t c, Rng &rng)
{
    std::vector<Example> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x(d);
        for (auto &v : x) v = standard_normal(rng);
        auto y = random_labels(c, rng);
        if (h) y = h->close_upward(y);
        out.push_back({x, EvidenceMask::observed(y)});
    }
    return out;
}

}
