#pragma once

#include "crisp/circuit.hpp"
#include "crisp/error.hpp"
#include "crisp/var_set.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

/** Brute-force ground truth over all 2^c label configurations.  The oracle evaluates circuits with
 * its own linear-space point evaluator and never calls the log-space inference code. */
namespace crisp::oracle {

inline constexpr std::size_t kMaxVars = 16;
inline constexpr std::size_t kMaxPowerVars = 12;

/// Same slack the MAP and subset searches use for ties.
inline constexpr double kTie = 1e-12;

/// Label `v` of configuration `index` (bit v of the index).
inline bool bit(std::uint64_t index, std::size_t v) { return (index >> v) & 1u; }

inline std::vector<std::uint8_t> to_labels(std::uint64_t index, std::size_t c)
{
    std::vector<std::uint8_t> y(c);
    for (std::size_t v = 0; v < c; ++v) y[v] = bit(index, v);
    return y;
}

inline std::uint64_t to_index(std::span<const std::uint8_t> y)
{
    std::uint64_t i = 0;
    for (std::size_t v = 0; v < y.size(); ++v) if (y[v]) i |= std::uint64_t(1) << v;
    return i;
}

/// Circuit value at a complete assignment, computed directly in linear space.
inline double point_value(const Circuit &c, const ParamVector &params, std::uint64_t y)
{
    std::vector<double> val(c.size());
    for (UnitId i = 0; i < c.size(); ++i) {
        const auto &u = c.unit(i);
        if (u.is_leaf()) {
            const bool v = bit(y, u.var);
            double f = 1;
            for (auto fac : u.factors) {
                if (fac.pinned >= 0 and fac.pinned != int(v)) { f = 0; break; }
                if (fac.slot >= 0) f *= v ? params[fac.slot] : 1 - params[fac.slot];
            }
            val[i] = f;
        } else if (u.is_product()) {
            double f = 1;
            for (auto in : u.inputs) f *= val[in];
            val[i] = f;
        } else {
            double s = 0;
            for (std::size_t k = 0; k < u.inputs.size(); ++k) {
                double lw = 0;
                for (auto slot : u.weights[k]) lw += params[slot];
                s += std::exp(lw) * val[u.inputs[k]];
            }
            val[i] = s;
        }
    }
    return val.back();
}

struct DistributionTable
{
    std::size_t c = 0;
    std::vector<double> probs;   ///< indexed by label bit pattern, bit v = Y_v

    double total() const { double s = 0; for (double p : probs) s += p; return s; }
};

enum class Normalization { Strict, Renormalize };

/** Table of p(y) for every y.  `Strict` requires the raw values to sum to 1 within 1e-8;
 * `Renormalize` divides by the total (for unnormalized circuits such as constrained products). */
inline DistributionTable enumerate(const Circuit &c, const ParamVector &params, Normalization mode = Normalization::Strict)
{
    if (c.num_vars() > kMaxVars) throw InvalidInput("oracle refuses more than 16 labels");
    if (params.size() != c.num_params()) throw InvalidInput("parameter vector does not match the circuit");
    DistributionTable t{c.num_vars(), std::vector<double>(std::size_t(1) << c.num_vars())};
    for (std::uint64_t y = 0; y < t.probs.size(); ++y) {
        t.probs[y] = point_value(c, params, y);
        if (not (t.probs[y] >= 0) or not std::isfinite(t.probs[y])) throw NumericError("oracle met a negative or non-finite value");
    }
    const double z = t.total();
    if (mode == Normalization::Strict) {
        if (std::abs(z - 1) > 1e-8) throw PreconditionError("oracle table sums to " + std::to_string(z) + ", not 1");
    } else {
        if (not (z > 0)) throw UnsatisfiableError("oracle table has no mass");
        for (auto &p : t.probs) p /= z;
    }
    return t;
}

inline void require_subset(const DistributionTable &t, const VarSet &Q)
{
    for (auto v : Q.to_vector())
        if (v >= t.c) throw InvalidInput("subset is not contained in the label variables");
}

inline double entropy(const DistributionTable &t)
{
    double h = 0;
    for (double p : t.probs) if (p > 0) h -= p * std::log(p);
    return h;
}

/// Marginal over Q, indexed by the bits of Q's members in ascending order.
inline std::vector<double> marginal_table(const DistributionTable &t, const VarSet &Q)
{
    require_subset(t, Q);
    const auto qs = Q.to_vector();
    std::vector<double> m(std::size_t(1) << qs.size(), 0.0);
    for (std::uint64_t y = 0; y < t.probs.size(); ++y) {
        std::uint64_t q = 0;
        for (std::size_t k = 0; k < qs.size(); ++k) if (bit(y, qs[k])) q |= std::uint64_t(1) << k;
        m[q] += t.probs[y];
    }
    return m;
}

/// H(Q), the Shannon entropy of the marginal over Q.
inline double subset_entropy(const DistributionTable &t, const VarSet &Q)
{
    double h = 0;
    for (double p : marginal_table(t, Q)) if (p > 0) h -= p * std::log(p);
    return h;
}

/// sum_q p_Q(q)^alpha
inline void require_power_cap(const DistributionTable &t)
{
    if (t.c > kMaxPowerVars) throw InvalidInput("oracle refuses power queries over more than 12 labels");
}

inline double power_sum(const DistributionTable &t, const VarSet &Q, double alpha)
{
    require_power_cap(t);
    double s = 0;
    for (double p : marginal_table(t, Q)) s += std::pow(p, alpha);
    return s;
}

inline double renyi(const DistributionTable &t, const VarSet &Q, double alpha)
{
    if (Q.empty()) return 0.0;
    return std::max(0.0, std::log(power_sum(t, Q, alpha)) / (1 - alpha));
}

struct Mode
{
    std::vector<std::uint8_t> assignment;
    double prob = 0;
};

/// Lexicographically smallest most probable configuration (Y0 compared first, 0 before 1).
inline Mode map(const DistributionTable &t)
{
    double best = 0;
    for (double p : t.probs) best = std::max(best, p);
    const double lbest = std::log(best);
    // Visit configurations in lexicographic order: Y0 is the most significant position.
    const std::uint64_t n = t.probs.size();
    for (std::uint64_t r = 0; r < n; ++r) {
        std::uint64_t y = 0;
        for (std::size_t v = 0; v < t.c; ++v) if (bit(r, t.c - 1 - v)) y |= std::uint64_t(1) << v;
        const double p = t.probs[y];
        if (p > 0 and (p == best or std::abs(std::log(p) - lbest) <= kTie)) return {to_labels(y, t.c), best};
    }
    return {to_labels(0, t.c), best};
}

inline double margin(const DistributionTable &t) { return 1 - map(t).prob; }

/// p(partial): entries at 0 or 1 are fixed, others (any value > 1) are summed out.
inline double marginal(const DistributionTable &t, std::span<const std::uint8_t> partial)
{
    if (partial.size() != t.c) throw InvalidInput("partial assignment has the wrong length");
    double s = 0;
    for (std::uint64_t y = 0; y < t.probs.size(); ++y) {
        bool match = true;
        for (std::size_t v = 0; v < t.c and match; ++v) match = partial[v] > 1 or bool(partial[v]) == bit(y, v);
        if (match) s += t.probs[y];
    }
    return s;
}

inline double suspiciousness(const DistributionTable &t, std::span<const std::uint8_t> annotated)
{
    return map(t).prob - t.probs[to_index(annotated)];
}

/// H(Y \ Q | Q) through the chain rule H(Y) - H(Q).
inline double conditional_entropy_chain(const DistributionTable &t, const VarSet &Q)
{
    return entropy(t) - subset_entropy(t, Q);
}

/// H(Y \ Q | Q) computed directly as -sum_q p(q) sum_m p(m|q) log p(m|q).
inline double conditional_entropy_direct(const DistributionTable &t, const VarSet &Q)
{
    require_subset(t, Q);
    const auto pq = marginal_table(t, Q);
    const auto qs = Q.to_vector();
    double h = 0;
    for (std::uint64_t y = 0; y < t.probs.size(); ++y) {
        const double p = t.probs[y];
        if (p <= 0) continue;
        std::uint64_t q = 0;
        for (std::size_t k = 0; k < qs.size(); ++k) if (bit(y, qs[k])) q |= std::uint64_t(1) << k;
        h -= p * std::log(p / pq[q]);
    }
    return h;
}

struct BestSubset
{
    VarSet Q;
    double value = 0;
    double cost = 0;
};

/** Budget-feasible Q maximizing the order-alpha Rényi entropy of its marginal, over every subset.
 * Ties go to the lexicographically smallest member list. */
inline BestSubset best_subset(const DistributionTable &t, double budget, std::span<const double> costs, double alpha)
{
    if (costs.size() != t.c) throw InvalidInput("cost vector has the wrong length");
    require_power_cap(t);
    BestSubset best;
    bool have = false;
    for (std::uint64_t m = 0; m < (std::uint64_t(1) << t.c); ++m) {
        double cost = 0;
        for (std::size_t v = 0; v < t.c; ++v) if (bit(m, v)) cost += costs[v];
        if (cost > budget + 1e-12) continue;
        const auto Q = VarSet::from_mask(m);
        const double r = renyi(t, Q, alpha);
        if (not have or r > best.value + kTie or (std::abs(r - best.value) <= kTie and lex_less(Q, best.Q))) {
            best = {Q, r, cost};
            have = true;
        }
    }
    return best;
}

}
