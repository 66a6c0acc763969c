#pragma once

#include "crisp/algebra.hpp"
#include "crisp/circuit.hpp"
#include "crisp/error.hpp"
#include "crisp/evaluate.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

namespace crisp {

/// Log-space slack under which two scores count as tied.  The oracle uses the same rule.
inline constexpr double kTieTolerance = 1e-12;

struct MapResult
{
    std::vector<std::uint8_t> assignment;
    double log_prob = -INFINITY;
};

namespace detail {

inline void require_queryable(const Circuit &c, const char *query)
{
    if (auto r = check_smooth(c); not r.pass) throw PropertyViolation(std::string(query) + " needs a smooth circuit: " + r.detail);
    if (auto r = check_decomposable(c); not r.pass) throw PropertyViolation(std::string(query) + " needs a decomposable circuit: " + r.detail);
}

inline void require_deterministic(const Circuit &c, const char *query)
{
    require_queryable(c, query);
    if (not c.certified_deterministic())
        throw PropertyViolation(std::string(query) + " needs a circuit certified deterministic: " + c.structural_determinism().detail);
}

/// log Z, skipping the pass when the circuit is locally normalized.
inline double log_partition(const Circuit &c, const ParamVector &params)
{
    if (c.locally_normalized()) return 0.0;
    const double z = log_normalizer(c, params);
    if (z == -INFINITY) throw UnsatisfiableError("circuit has no mass");
    return z;
}

/** Max-product pass plus backtracking.  Among maximizers the lexicographically smallest assignment
 * (Y0 most significant, 0 before 1) is returned: at a tie, each tied branch's own preferred
 * completion is materialized and compared. */
class MaxProduct
{
    const Circuit &c_;
    const ParamVector &params_;
    std::vector<double> mv_;
    std::unordered_map<UnitId, std::vector<std::uint8_t>> best_;

    public:
    MaxProduct(const Circuit &c, const ParamVector &params) : c_(c), params_(params), mv_(c.size()) {
        require_size(c, params);
        require_finite(params);
        for (UnitId i = 0; i < c.size(); ++i) {
            const auto &u = c.unit(i);
            if (u.is_leaf()) {
                mv_[i] = std::max(leaf_log_value(u, params, LeafMode::Zero), leaf_log_value(u, params, LeafMode::One));
            } else if (u.is_product()) {
                double s = 0;
                for (auto in : u.inputs) s += mv_[in];
                mv_[i] = std::isnan(s) ? -INFINITY : s;
            } else {
                double m = -INFINITY;
                for (std::size_t k = 0; k < u.inputs.size(); ++k)
                    m = std::max(m, edge_log_weight(u.weights[k], params) + mv_[u.inputs[k]]);
                mv_[i] = m;
            }
        }
    }

    double max_log() const { return mv_.back(); }

    const std::vector<std::uint8_t> & best(UnitId i) {
        if (auto it = best_.find(i); it != best_.end()) return it->second;
        const auto &u = c_.unit(i);
        std::vector<std::uint8_t> out(c_.num_vars(), 0);
        if (u.is_leaf()) {
            const double v0 = leaf_log_value(u, params_, LeafMode::Zero), v1 = leaf_log_value(u, params_, LeafMode::One);
            out[u.var] = (v1 > v0 and not tied(v1, v0)) ? 1 : 0;
        } else if (u.is_product()) {
            for (auto in : u.inputs) {
                const auto &b = best(in);
                for (auto v : c_.scope(in).to_vector()) out[v] = b[v];
            }
        } else {
            bool have = false;
            for (std::size_t k = 0; k < u.inputs.size(); ++k) {
                const double s = edge_log_weight(u.weights[k], params_) + mv_[u.inputs[k]];
                if (s == -INFINITY or not tied(s, mv_[i])) continue;
                const auto &b = best(u.inputs[k]);
                if (not have or std::lexicographical_compare(b.begin(), b.end(), out.begin(), out.end())) out = b;
                have = true;
            }
        }
        return best_.emplace(i, std::move(out)).first->second;
    }

    static bool tied(double a, double b) { return a == b or std::abs(a - b) <= kTieTolerance; }
};

}

/** Most probable assignment and its log-probability.  Needs a smooth, decomposable circuit certified
 * deterministic.  Unnormalized circuits (e.g. constrained models) are divided by their normalizer. */
inline MapResult map_state(const Circuit &c, const ParamVector &params)
{
    detail::require_deterministic(c, "MAP");
    detail::MaxProduct mp(c, params);
    if (mp.max_log() == -INFINITY) throw UnsatisfiableError("circuit has no mass");
    MapResult r;
    r.assignment = mp.best(c.root());
    r.log_prob = std::min(0.0, mp.max_log() - detail::log_partition(c, params));
    return r;
}

/// 1 - max_y p(y).
inline double margin(const Circuit &c, const ParamVector &params)
{
    return -std::expm1(map_state(c, params).log_prob);
}

/** Shannon entropy in nats.  Each unit tracks its log mass and the entropy of its normalized
 * distribution; for a deterministic sum with branch shares pi_k, H = sum_k pi_k (H_k - log pi_k).
 * On locally normalized circuits pi_k is the sum weight itself. */
inline double shannon_entropy(const Circuit &c, const ParamVector &params)
{
    require_valid_params(c.layout(), params);
    detail::require_deterministic(c, "Shannon entropy");
    std::vector<double> lz(c.size()), h(c.size());
    for (UnitId i = 0; i < c.size(); ++i) {
        const auto &u = c.unit(i);
        if (u.is_leaf()) {
            const double l0 = detail::leaf_log_value(u, params, LeafMode::Zero);
            const double l1 = detail::leaf_log_value(u, params, LeafMode::One);
            lz[i] = detail::log_add(l0, l1);
            double e = 0;
            for (double l : {l0, l1}) {
                if (l == -INFINITY) continue;
                const double q = l - lz[i];
                e -= std::exp(q) * q;
            }
            h[i] = e;
        } else if (u.is_product()) {
            lz[i] = 0;
            h[i] = 0;
            for (auto in : u.inputs) { lz[i] += lz[in]; h[i] += h[in]; }
            if (std::isnan(lz[i])) lz[i] = -INFINITY;
        } else {
            double z = -INFINITY;
            std::vector<double> s(u.inputs.size());
            for (std::size_t k = 0; k < u.inputs.size(); ++k) {
                s[k] = detail::edge_log_weight(u.weights[k], params) + lz[u.inputs[k]];
                z = detail::log_add(z, s[k]);
            }
            lz[i] = z;
            double e = 0;
            if (z > -INFINITY)
                for (std::size_t k = 0; k < u.inputs.size(); ++k) {
                    if (s[k] == -INFINITY) continue;
                    const double lpi = s[k] - z;
                    e += std::exp(lpi) * (h[u.inputs[k]] - lpi);
                }
            h[i] = e;
        }
    }
    if (lz.back() == -INFINITY) throw UnsatisfiableError("circuit has no mass");
    return std::max(0.0, h.back());
}

/** Rényi entropy of order alpha of the marginal over Q, in nats: log(sum_q p_Q(q)^alpha) / (1 - alpha).
 * Q empty gives 0. */
inline double renyi_entropy(const PowerCircuit &pc, const ParamVector &params, const VarSet &Q, unsigned alpha,
                            std::vector<double> &scratch)
{
    if (alpha != pc.alpha())
        throw InvalidInput("power circuit was materialized for alpha = " + std::to_string(pc.alpha()));
    if (Q.empty()) return 0.0;
    const double ls = log_power_subset_sum(pc, params, Q, scratch);
    return std::max(0.0, ls / (1.0 - double(alpha)));
}

inline double renyi_entropy(const PowerCircuit &pc, const ParamVector &params, const VarSet &Q, unsigned alpha)
{
    std::vector<double> scratch;
    return renyi_entropy(pc, params, Q, alpha, scratch);
}

inline double renyi_entropy(const PowerCircuit &pc, const ParamVector &params, const VarSet &Q)
{
    return renyi_entropy(pc, params, Q, pc.alpha());
}

/// log p(q) for the partial assignment in `partial` (marginalized entries are summed out).
inline double conditional_log_marginal(const Circuit &c, const ParamVector &params, const EvidenceMask &partial)
{
    return evaluate_log(c, params, partial) - detail::log_partition(c, params);
}

inline double conditional_marginal(const Circuit &c, const ParamVector &params, const EvidenceMask &partial)
{
    return std::exp(conditional_log_marginal(c, params, partial));
}

struct Suspiciousness
{
    double value = 0;          ///< max_y p(y) - p(annotated)
    double max_prob = 0;
    double annotated_prob = 0;
    bool violates = false;     ///< annotated has zero mass (it breaks a hard constraint)
};

/// How much more likely the model's preferred labeling is than the annotated one.
inline Suspiciousness suspiciousness(const Circuit &c, const ParamVector &params, std::span<const std::uint8_t> annotated)
{
    if (annotated.size() != c.num_vars()) throw InvalidInput("annotation length differs from the number of labels");
    const auto m = map_state(c, params);
    Suspiciousness s;
    s.max_prob = std::exp(m.log_prob);
    const double la = evaluate_log(c, params, EvidenceMask::observed(annotated)) - detail::log_partition(c, params);
    s.violates = la == -INFINITY;
    s.annotated_prob = std::min(s.max_prob, std::exp(la));
    s.value = s.max_prob - s.annotated_prob;
    return s;
}

/** Exact Shannon entropy of the marginal over Q for a fully factorized circuit: sum of per-label
 * binary entropies.  Any other circuit family is rejected; the general quantity is intractable. */
inline double factorized_subset_entropy(const Circuit &c, const ParamVector &params, const VarSet &Q)
{
    std::vector<int> leaf_of(c.num_vars(), -1);
    for (UnitId i = 0; i < c.size(); ++i) {
        const auto &u = c.unit(i);
        if (u.is_sum()) throw PropertyViolation("subset Shannon entropy is exact only for fully factorized circuits");
        if (u.is_leaf()) {
            if (not u.is_bernoulli() or leaf_of[u.var] >= 0)
                throw PropertyViolation("subset Shannon entropy is exact only for fully factorized circuits");
            leaf_of[u.var] = static_cast<int>(i);
        }
    }
    require_valid_params(c.layout(), params);
    double h = 0;
    for (auto v : Q.to_vector()) {
        if (v >= c.num_vars()) throw InvalidInput("subset contains a variable outside the circuit");
        const double p = params[c.unit(leaf_of[v]).factors[0].slot];
        h -= p * std::log(p) + (1 - p) * std::log1p(-p);
    }
    return h;
}

}
