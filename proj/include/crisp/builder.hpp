#pragma once

#include "crisp/circuit.hpp"
#include "crisp/error.hpp"
#include "crisp/random.hpp"
#include "crisp/vtree.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <tuple>
#include <vector>

namespace crisp {

struct BuilderConfig
{
    std::size_t num_vars = 1;
    std::size_t width = 1;     ///< K, sum units per region
    std::uint64_t seed = 0;
    VtreeShape vtree_shape = VtreeShape::BalancedRandom;

    void validate() const {
        if (num_vars < 1) throw InvalidInput("builder needs at least one variable");
        if (width < 1) throw InvalidInput("builder width must be at least 1");
    }
};

namespace detail {

/** Randomized deterministic, structured-decomposable construction over a vtree.
 *
 * Every internal vtree node v gets a pivot variable drawn from its left subtree.  A sum unit of a
 * region at v is a Shannon expansion on that pivot:
 *
 *      s = w0 * [cond(L, pivot=0) x R0] + w1 * [cond(L, pivot=1) x R1]
 *
 * where L is a unit of the left child's region, cond(L, pivot=b) is L with every leaf over the pivot
 * replaced by the indicator (pivot=b), and Rb is a unit of the right child's region for branch b.
 * Right children therefore own one region per branch value, left children a single region that is
 * conditioned on demand.  Replica wiring is a seed-drawn permutation per node, shifted by the
 * branch value of the region so that sibling regions read different children. */
class CrispBuilder
{
    const Vtree &vt_;
    std::size_t K_;
    CircuitAssembler as_;
    std::vector<VarId> pivot_;
    std::vector<std::vector<std::size_t>> perm_left_, perm_right_;
    std::map<std::pair<int, int>, std::vector<UnitId>> regions_;
    std::map<std::tuple<UnitId, VarId, int>, std::int64_t> cond_memo_;

    static constexpr std::int64_t kZero = -1;

    public:
    CrispBuilder(const Vtree &vt, std::size_t K, std::uint64_t seed) : vt_(vt), K_(K), as_(vt.num_vars()) {
        Rng rng(seed);
        pivot_.assign(vt.size(), 0);
        perm_left_.resize(vt.size());
        perm_right_.resize(vt.size());
        // Draw in node order (children first) so the stream does not depend on recursion order.
        for (int i = 0; i < static_cast<int>(vt.size()); ++i) {
            const auto &n = vt.node(i);
            if (n.is_leaf()) continue;
            auto left_vars = vt.node(n.left).vars.to_vector();
            pivot_[i] = left_vars[uniform_index(rng, left_vars.size())];
            perm_left_[i] = random_permutation(K_, rng);
            perm_right_[i] = random_permutation(K_, rng);
        }
    }

    Circuit build() {
        if (vt_.size() == 1) {
            auto leaf = as_.bernoulli(vt_.node(0).var);
            return as_.finish(leaf);
        }
        auto root = region(vt_.root(), 0, true);
        return as_.finish(root.at(0));
    }

    private:
    const std::vector<UnitId> & region(int node, int key, bool is_root = false) {
        auto k = std::make_pair(node, key);
        if (auto it = regions_.find(k); it != regions_.end()) return it->second;
        const auto &n = vt_.node(node);
        std::vector<UnitId> units;
        if (n.is_leaf()) {
            for (std::size_t j = 0; j < K_; ++j) units.push_back(as_.bernoulli(n.var));
        } else {
            const std::size_t count = is_root ? 1 : K_;
            const auto left = region(n.left, 0);
            const auto right0 = region(n.right, 0);
            const auto right1 = region(n.right, 1);
            const VarId pivot = pivot_[node];
            for (std::size_t j = 0; j < count; ++j) {
                const std::size_t li = (perm_left_[node][j] + key) % K_;
                const std::size_t ri = (perm_right_[node][j] + key) % K_;
                std::vector<UnitId> inputs;
                for (int b = 0; b < 2; ++b) {
                    auto prime = condition(left[li], pivot, b);
                    if (prime == kZero) throw StructuralError("conditioning produced an empty branch");
                    auto sub = (b == 0 ? right0 : right1)[ri];
                    inputs.push_back(as_.product({static_cast<UnitId>(prime), sub}));
                }
                units.push_back(as_.sum(std::move(inputs), {pivot}));
            }
        }
        return regions_.emplace(k, std::move(units)).first->second;
    }

    /// `u` restricted to var = b, with leaves over var turned into indicators; kZero if empty.
    std::int64_t condition(UnitId u, VarId var, int b) {
        if (not as_.scope(u).contains(var)) return u;
        auto key = std::make_tuple(u, var, b);
        if (auto it = cond_memo_.find(key); it != cond_memo_.end()) return it->second;
        const Unit unit = as_.unit(u);
        std::int64_t out = kZero;
        if (unit.is_leaf()) {
            bool conflict = false;
            for (auto f : unit.factors) conflict |= f.pinned >= 0 and f.pinned != b;
            out = conflict ? kZero : std::int64_t(as_.indicator(var, b));
        } else if (unit.is_product()) {
            std::vector<UnitId> inputs;
            bool changed = false, zero = false;
            for (auto in : unit.inputs) {
                auto c = condition(in, var, b);
                if (c == kZero) { zero = true; break; }
                changed |= c != in;
                inputs.push_back(static_cast<UnitId>(c));
            }
            if (not zero) out = changed ? std::int64_t(as_.product(std::move(inputs))) : std::int64_t(u);
        } else {
            std::vector<UnitId> inputs;
            bool changed = false;
            for (auto in : unit.inputs) {
                auto c = condition(in, var, b);
                changed |= c != in;
                if (c != kZero) inputs.push_back(static_cast<UnitId>(c));
            }
            if (inputs.size() == 1) out = inputs[0];
            else if (inputs.size() > 1) out = changed ? std::int64_t(as_.sum(std::move(inputs), unit.decision_vars)) : std::int64_t(u);
        }
        cond_memo_.emplace(key, out);
        return out;
    }
};

}

/** Randomly wired CRISP circuit over `vt` with `K` sum units per region.  The output is smooth,
 * decomposable, structured by `vt`, and deterministic by construction; sum units carry their pivot
 * as decision variable.  With a single variable the circuit is one Bernoulli leaf. */
inline Circuit build_crisp(const Vtree &vt, std::size_t K, std::uint64_t seed)
{
    if (K < 1) throw InvalidInput("builder width must be at least 1");
    return detail::CrispBuilder(vt, K, seed).build();
}

inline Circuit build_crisp(const BuilderConfig &cfg)
{
    cfg.validate();
    return build_crisp(random_vtree(cfg.num_vars, cfg.vtree_shape, cfg.seed), cfg.width, cfg.seed);
}

/** Fully factorized baseline: c Bernoulli leaves joined by binary products along the right-linear
 * vtree, i.e. P(L0, P(L1, ... P(L{c-2}, L{c-1}))). */
inline Circuit build_factorized(std::size_t c)
{
    if (c < 1) throw InvalidInput("factorized circuit needs at least one variable");
    CircuitAssembler as(c);
    std::vector<UnitId> leaves;
    for (std::size_t v = 0; v < c; ++v) leaves.push_back(as.bernoulli(static_cast<VarId>(v)));
    UnitId acc = leaves.back();
    for (std::size_t v = c - 1; v-- > 0;) acc = as.product({leaves[v], acc});
    return as.finish(acc);
}

/// Counts and offsets of sum-weight and leaf-parameter blocks.
struct LayoutSummary
{
    std::size_t total = 0;
    std::size_t sum_weights = 0;
    std::size_t leaf_params = 0;
    std::size_t sum_blocks = 0;
    std::vector<std::size_t> block_offsets;
    std::vector<std::size_t> leaf_offsets;

    friend bool operator==(const LayoutSummary&, const LayoutSummary&) = default;
};

inline LayoutSummary param_layout(const Circuit &c)
{
    const auto &l = c.layout();
    LayoutSummary s;
    s.total = l.total();
    s.sum_weights = l.num_sum_weights();
    s.leaf_params = l.num_leaf_params();
    s.sum_blocks = l.sum_blocks.size();
    for (auto b : l.sum_blocks) s.block_offsets.push_back(b.offset);
    s.leaf_offsets = l.leaf_slots;
    return s;
}

/// Random valid parameters: per-sum softmax of Gaussian logits, leaves logistic of Gaussian logits.
inline ParamVector random_params(const ParamLayout &layout, std::uint64_t seed, double spread = 1.5)
{
    Rng rng(seed);
    ParamVector p(std::vector<double>(layout.total(), 0.0));
    for (auto blk : layout.sum_blocks) {
        double m = -INFINITY;
        for (std::size_t k = 0; k < blk.size; ++k) {
            p[blk.offset + k] = spread * standard_normal(rng);
            m = std::max(m, p[blk.offset + k]);
        }
        double s = 0;
        for (std::size_t k = 0; k < blk.size; ++k) s += std::exp(p[blk.offset + k] - m);
        const double lse = m + std::log(s);
        for (std::size_t k = 0; k < blk.size; ++k) p[blk.offset + k] -= lse;
    }
    for (auto s : layout.leaf_slots) p[s] = 1.0 / (1.0 + std::exp(-spread * standard_normal(rng)));
    return p;
}

/// Uniform-weight, p = 0.5 parameters.
inline ParamVector uniform_params(const ParamLayout &layout)
{
    ParamVector p(std::vector<double>(layout.total(), 0.0));
    for (auto blk : layout.sum_blocks)
        for (std::size_t k = 0; k < blk.size; ++k) p[blk.offset + k] = -std::log(double(blk.size));
    for (auto s : layout.leaf_slots) p[s] = 0.5;
    return p;
}

}
