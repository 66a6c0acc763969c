#pragma once

#include "crisp/circuit.hpp"
#include "crisp/error.hpp"
#include "crisp/evaluate.hpp"
#include "crisp/vtree.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

namespace crisp {

/** A circuit whose leaves are indicators and whose sum weights are fixed to 1: it evaluates to 1 on
 * assignments satisfying a formula and to 0 elsewhere. */
class LogicCircuit
{
    Circuit circuit_;

    public:
    LogicCircuit() = default;
    explicit LogicCircuit(Circuit c) : circuit_(std::move(c)) {
        if (not circuit_.is_logic()) throw InvalidInput("logic circuit must be built with fixed unit weights");
        for (const auto &u : circuit_.units())
            if (u.is_leaf() and not u.is_indicator()) throw InvalidInput("logic circuit leaves must be indicators");
    }

    const Circuit & circuit() const { return circuit_; }
    std::size_t num_vars() const { return circuit_.num_vars(); }

    /// Value on a complete assignment: 0 or 1.
    bool satisfied(std::span<const std::uint8_t> y) const {
        return evaluate_log(circuit_, ParamVector{}, EvidenceMask::observed(y)) > -INFINITY;
    }
};

/// Logic circuit with value 1 everywhere, following `vt`.
inline LogicCircuit constant_true(const Vtree &vt)
{
    CircuitAssembler as(vt.num_vars());
    std::vector<UnitId> at(vt.size());
    for (int i = 0; i < static_cast<int>(vt.size()); ++i) {
        const auto &n = vt.node(i);
        if (n.is_leaf()) {
            at[i] = as.sum({as.indicator(n.var, false), as.indicator(n.var, true)}, {{}, {}}, {n.var});
        } else {
            at[i] = as.product({at[n.left], at[n.right]});
        }
    }
    return LogicCircuit(as.finish(at.back(), ParamLayout{}, true));
}

namespace detail {

/** Memoized pairwise product of two circuits over the same variables.  `b`'s slots are shifted by
 * `offset_b`, so the result consumes `[params_a ; params_b]` (offset = |params_a|) or one shared
 * vector (offset = 0).  With `prune`, pairs of leaves pinned to different values are dropped as
 * zero; power circuits keep them because copies may be marginalized independently. */
class CircuitProduct
{
    const Circuit &a_, &b_;
    Slot offset_;
    bool prune_;
    std::size_t max_units_;
    CircuitAssembler as_;
    std::unordered_map<std::uint64_t, std::int64_t> memo_;

    static constexpr std::int64_t kZero = -1;

    public:
    CircuitProduct(const Circuit &a, const Circuit &b, std::size_t offset_b, bool prune, std::size_t max_units)
        : a_(a), b_(b), offset_(static_cast<Slot>(offset_b)), prune_(prune), max_units_(max_units), as_(a.num_vars())
    {
        if (a.num_vars() != b.num_vars()) throw CompatibilityError("circuits range over different numbers of variables");
    }

    Circuit run(ParamLayout layout) {
        auto r = pair(a_.root(), b_.root());
        if (r == kZero) throw UnsatisfiableError("circuit product is identically zero");
        return as_.finish(static_cast<UnitId>(r), std::move(layout), a_.is_logic() and b_.is_logic());
    }

    private:
    std::vector<Slot> shifted(const std::vector<Slot> &w) const {
        std::vector<Slot> out = w;
        for (auto &s : out) s += offset_;
        return out;
    }

    [[noreturn]] void incompatible(UnitId ia, UnitId ib, const std::string &why) const {
        throw CompatibilityError("incompatible unit pair (" + std::to_string(ia) + ", " + std::to_string(ib) + "): " + why);
    }

    void guard() const {
        if (as_.size() >= max_units_)
            throw InvalidInput("circuit product exceeds the size guard of " + std::to_string(max_units_) + " units");
    }

    std::int64_t pair(UnitId ia, UnitId ib) {
        const std::uint64_t key = (std::uint64_t(ia) << 32) | ib;
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;
        const auto &ua = a_.unit(ia), &ub = b_.unit(ib);
        if (not (a_.scope(ia) == b_.scope(ib))) incompatible(ia, ib, "scopes " + a_.scope(ia).to_string() + " vs " + b_.scope(ib).to_string());
        std::int64_t out = kZero;

        if (ua.is_sum() or ub.is_sum()) {
            std::vector<UnitId> inputs;
            std::vector<std::vector<Slot>> weights;
            auto add = [&](UnitId x, UnitId y, std::vector<Slot> w) {
                auto r = pair(x, y);
                if (r == kZero) return;
                inputs.push_back(static_cast<UnitId>(r));
                weights.push_back(std::move(w));
            };
            if (ua.is_sum() and ub.is_sum()) {
                for (std::size_t i = 0; i < ua.inputs.size(); ++i)
                    for (std::size_t j = 0; j < ub.inputs.size(); ++j) {
                        auto w = ua.weights[i];
                        auto wb = shifted(ub.weights[j]);
                        w.insert(w.end(), wb.begin(), wb.end());
                        add(ua.inputs[i], ub.inputs[j], std::move(w));
                    }
            } else if (ua.is_sum()) {
                for (std::size_t i = 0; i < ua.inputs.size(); ++i) add(ua.inputs[i], ib, ua.weights[i]);
            } else {
                for (std::size_t j = 0; j < ub.inputs.size(); ++j) add(ia, ub.inputs[j], shifted(ub.weights[j]));
            }
            if (not inputs.empty()) {
                std::vector<VarId> dv = ua.is_sum() ? ua.decision_vars : std::vector<VarId>{};
                if (ub.is_sum()) dv.insert(dv.end(), ub.decision_vars.begin(), ub.decision_vars.end());
                std::sort(dv.begin(), dv.end());
                dv.erase(std::unique(dv.begin(), dv.end()), dv.end());
                guard();
                out = as_.sum(std::move(inputs), std::move(weights), std::move(dv));
            }
        } else if (ua.is_product() and ub.is_product()) {
            if (ua.inputs.size() != ub.inputs.size()) incompatible(ia, ib, "products of different arity");
            std::vector<UnitId> inputs;
            bool zero = false;
            for (auto x : ua.inputs) {
                auto match = std::find_if(ub.inputs.begin(), ub.inputs.end(), [&](UnitId y) { return b_.scope(y) == a_.scope(x); });
                if (match == ub.inputs.end()) incompatible(ia, ib, "product splits differ");
                auto r = pair(x, *match);
                if (r == kZero) { zero = true; break; }
                inputs.push_back(static_cast<UnitId>(r));
            }
            if (not zero) { guard(); out = as_.product(std::move(inputs)); }
        } else if (ua.is_leaf() and ub.is_leaf()) {
            auto factors = ua.factors;
            // Power products keep each copy's factors apart for independent marginalization.
            std::uint8_t shift = 0;
            if (not prune_)
                for (auto f : ua.factors) shift = std::max<std::uint8_t>(shift, f.copy + 1);
            for (auto f : ub.factors) {
                if (f.slot >= 0) f.slot += offset_;
                f.copy += shift;
                factors.push_back(f);
            }
            bool conflict = false;
            if (prune_) {
                int pin = -1;
                for (auto f : factors)
                    if (f.pinned >= 0) {
                        if (pin >= 0 and pin != f.pinned) conflict = true;
                        pin = f.pinned;
                    }
            }
            if (not conflict) { guard(); out = as_.leaf(ua.var, std::move(factors)); }
        } else {
            incompatible(ia, ib, "leaf paired with a product");
        }
        memo_.emplace(key, out);
        return out;
    }
};

inline void require_compatible(const Circuit &c, const Vtree &vt, const char *which)
{
    for (const auto &r : {check_smooth(c), check_decomposable(c), check_structured(c, vt)})
        if (not r.pass) throw CompatibilityError(std::string(which) + " circuit is not " + r.property + ": " + r.detail);
}

}

/** Pointwise product a(y) * b(y) as one circuit consuming `[params_a ; params_b]`.  Both inputs must
 * be smooth, decomposable and conform to `vt`.  The result is generally unnormalized. */
inline Circuit multiply(const Circuit &a, const Circuit &b, const Vtree &vt)
{
    detail::require_compatible(a, vt, "first");
    detail::require_compatible(b, vt, "second");
    auto out = detail::CircuitProduct(a, b, a.num_params(), true, std::numeric_limits<std::size_t>::max())
                   .run(ParamLayout::concat(a.layout(), b.layout()));
    if (out.size() > a.size() * b.size()) throw StructuralError("circuit product exceeds |a|*|b| units");
    return out;
}

/// Default order of the materialized power circuit.
inline constexpr unsigned kDefaultAlpha = 2;

/** The alpha-fold product of a circuit with itself, materialized once.  Every leaf keeps one factor
 * per copy so that each variable can be evaluated either jointly across copies (it belongs to the
 * queried subset) or independently per copy (it is marginalized before powering). */
class PowerCircuit
{
    Circuit base_;
    Circuit graph_;
    unsigned alpha_ = kDefaultAlpha;

    public:
    PowerCircuit(Circuit base, Circuit graph, unsigned alpha) : base_(std::move(base)), graph_(std::move(graph)), alpha_(alpha) { }

    const Circuit & base() const { return base_; }
    const Circuit & graph() const { return graph_; }
    unsigned alpha() const { return alpha_; }
    std::size_t num_vars() const { return base_.num_vars(); }
};

/** Materializes the alpha-power of `base`.  Aborts if the product graph would exceed `max_units`. */
inline PowerCircuit power(const Circuit &base, unsigned alpha, std::size_t max_units = 10'000'000)
{
    if (alpha < 2) throw InvalidInput("power circuit needs alpha >= 2");
    for (const auto &r : {check_smooth(base), check_decomposable(base)})
        if (not r.pass) throw CompatibilityError("power base is not " + r.property + ": " + r.detail);
    Circuit acc = base;
    for (unsigned k = 1; k < alpha; ++k)
        acc = detail::CircuitProduct(acc, base, 0, false, max_units).run(base.layout());
    double bound = 1;
    for (unsigned k = 0; k < alpha; ++k) bound *= double(base.size());
    if (double(acc.size()) > bound) throw StructuralError("power circuit exceeds |p|^alpha units");
    return PowerCircuit(base, std::move(acc), alpha);
}

/** log of sum_q p_Q(q)^alpha, with p_Q the (normalized) marginal of the subset `Q`.  Variables in Q
 * are shared across the copies; the others are summed out per copy before powering.  An empty Q
 * gives log 1 = 0. */
inline double log_power_subset_sum(const PowerCircuit &pc, const ParamVector &params, const VarSet &Q,
                                   std::vector<double> &scratch)
{
    for (auto v : Q.to_vector())
        if (v >= pc.num_vars()) throw InvalidInput("subset contains a variable outside the circuit");
    double raw = detail::forward_log(pc.graph(), params,
                                     [&](VarId v) { return Q.contains(v) ? LeafMode::Joint : LeafMode::Independent; }, scratch);
    if (pc.base().locally_normalized()) return raw;
    return raw - double(pc.alpha()) * log_normalizer(pc.base(), params);
}

inline double log_power_subset_sum(const PowerCircuit &pc, const ParamVector &params, const VarSet &Q)
{
    std::vector<double> scratch;
    return log_power_subset_sum(pc, params, Q, scratch);
}

inline double power_subset_sum(const PowerCircuit &pc, const ParamVector &params, const VarSet &Q)
{
    return std::exp(log_power_subset_sum(pc, params, Q));
}

/** A model multiplied by a logic circuit.  The product is unnormalized; every query divides by the
 * per-parameter normalizer. */
struct ConstrainedCircuit
{
    Circuit circuit;

    double log_normalizer(const ParamVector &params) const {
        const double z = crisp::log_normalizer(circuit, params);
        if (z == -INFINITY) throw UnsatisfiableError("constraint leaves no mass under the model");
        return z;
    }
};

/** Restricts the model's support to the assignments satisfying `k`.  Both must follow `vt`.  The
 * product reads the model's parameter vector unchanged (logic circuits have no parameters). */
inline ConstrainedCircuit apply_constraints(const Circuit &model, const LogicCircuit &k, const Vtree &vt)
{
    try {
        return ConstrainedCircuit{multiply(model, k.circuit(), vt)};
    } catch (const UnsatisfiableError&) {
        throw UnsatisfiableError("constraint is unsatisfiable under the model's support");
    }
}

}
