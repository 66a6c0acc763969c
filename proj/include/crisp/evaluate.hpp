#pragma once

#include "crisp/circuit.hpp"
#include "crisp/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace crisp {

enum class VarState : std::uint8_t { Zero, One, Marginalized };

/// Per-variable evidence: observed 0, observed 1, or summed out.
class EvidenceMask
{
    std::vector<VarState> states_;

    public:
    EvidenceMask() = default;
    explicit EvidenceMask(std::size_t num_vars, VarState fill = VarState::Marginalized) : states_(num_vars, fill) { }

    static EvidenceMask all_marginalized(std::size_t num_vars) { return EvidenceMask(num_vars); }

    template<typename Label>
    static EvidenceMask observed(std::span<const Label> y) {
        EvidenceMask m(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) m.states_[i] = y[i] ? VarState::One : VarState::Zero;
        return m;
    }

    static EvidenceMask observed(const std::vector<std::uint8_t> &y) { return observed(std::span<const std::uint8_t>(y)); }

    std::size_t size() const { return states_.size(); }
    VarState operator[](std::size_t v) const { return states_[v]; }
    void set(std::size_t v, VarState s) { states_.at(v) = s; }
    void observe(std::size_t v, bool b) { set(v, b ? VarState::One : VarState::Zero); }
    void marginalize(std::size_t v) { set(v, VarState::Marginalized); }

    std::size_t num_observed() const {
        return static_cast<std::size_t>(std::count_if(states_.begin(), states_.end(), [](auto s) { return s != VarState::Marginalized; }));
    }

    friend bool operator==(const EvidenceMask&, const EvidenceMask&) = default;
};

/** How a leaf is evaluated.  `Joint` sums the leaf's (pointwise) value over both states; it is the
 * marginalization of ordinary circuits and the shared-variable mode of power circuits.
 * `Independent` marginalizes each factor separately, as if every factor belonged to its own copy of
 * the variable. */
enum class LeafMode : std::uint8_t { Zero, One, Joint, Independent };

inline LeafMode leaf_mode(VarState s)
{
    switch (s) {
        case VarState::Zero: return LeafMode::Zero;
        case VarState::One: return LeafMode::One;
        default: return LeafMode::Joint;
    }
}

namespace detail {

inline double log_add(double a, double b)
{
    if (a == -INFINITY) return b;
    if (b == -INFINITY) return a;
    return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

inline double factor_log(LeafFactor f, const ParamVector &params, bool v)
{
    if (f.pinned >= 0 and f.pinned != int(v)) return -INFINITY;
    if (f.slot < 0) return 0.0;
    const double p = params[f.slot];
    return v ? std::log(p) : std::log1p(-p);
}

inline double factor_value(LeafFactor f, const ParamVector &params, bool v)
{
    if (f.pinned >= 0 and f.pinned != int(v)) return 0.0;
    if (f.slot < 0) return 1.0;
    const double p = params[f.slot];
    return v ? p : 1.0 - p;
}

inline double leaf_log_value(const Unit &u, const ParamVector &params, LeafMode mode)
{
    auto at = [&](bool v) {
        double s = 0;
        for (auto f : u.factors) s += factor_log(f, params, v);
        return s;
    };
    switch (mode) {
        case LeafMode::Zero: return at(false);
        case LeafMode::One: return at(true);
        case LeafMode::Joint: return log_add(at(false), at(true));
        case LeafMode::Independent: {
            // Factors of one copy are contiguous; each copy is marginalized on its own.
            double s = 0;
            for (std::size_t b = 0; b < u.factors.size();) {
                double l0 = 0, l1 = 0;
                std::size_t e = b;
                for (; e < u.factors.size() and u.factors[e].copy == u.factors[b].copy; ++e) {
                    l0 += factor_log(u.factors[e], params, false);
                    l1 += factor_log(u.factors[e], params, true);
                }
                s += log_add(l0, l1);
                b = e;
            }
            return s;
        }
    }
    return -INFINITY;
}

inline double edge_log_weight(const std::vector<Slot> &slots, const ParamVector &params)
{
    double s = 0;
    for (auto k : slots) s += params[k];
    return s;
}

inline void require_finite(const ParamVector &params)
{
    for (std::size_t i = 0; i < params.size(); ++i)
        if (std::isnan(params[i]) or params[i] == INFINITY)
            throw NumericError("non-finite parameter at slot " + std::to_string(i));
}

inline void require_size(const Circuit &c, const ParamVector &params)
{
    if (params.size() != c.num_params())
        throw InvalidInput("parameter vector has " + std::to_string(params.size()) + " entries, circuit needs "
                           + std::to_string(c.num_params()));
}

/// Bottom-up log-space pass; `mode_of(var)` picks the leaf mode.  Fills `lv` with one value per unit.
template<typename ModeOf>
double forward_log(const Circuit &c, const ParamVector &params, ModeOf &&mode_of, std::vector<double> &lv)
{
    require_size(c, params);
    require_finite(params);
    lv.resize(c.size());
    for (UnitId i = 0; i < c.size(); ++i) {
        const auto &u = c.unit(i);
        switch (u.kind) {
            case UnitKind::Leaf:
                lv[i] = leaf_log_value(u, params, mode_of(u.var));
                break;
            case UnitKind::Product: {
                double s = 0;
                for (auto in : u.inputs) s += lv[in];
                lv[i] = std::isnan(s) ? -INFINITY : s;
                break;
            }
            case UnitKind::Sum: {
                double m = -INFINITY;
                for (std::size_t k = 0; k < u.inputs.size(); ++k)
                    m = std::max(m, edge_log_weight(u.weights[k], params) + lv[u.inputs[k]]);
                if (m == -INFINITY) { lv[i] = -INFINITY; break; }
                double s = 0;
                for (std::size_t k = 0; k < u.inputs.size(); ++k)
                    s += std::exp(edge_log_weight(u.weights[k], params) + lv[u.inputs[k]] - m);
                lv[i] = m + std::log(s);
                break;
            }
        }
    }
    return lv.back();
}

/// Gradient of log of the product of `factors` summed over the states allowed by `mode`.
inline void factor_group_log_grad(std::span<const LeafFactor> factors, const ParamVector &params, LeafMode mode,
                                  double scale, std::span<double> grad)
{
    const std::size_t nf = factors.size();
    const bool use0 = mode != LeafMode::One, use1 = mode != LeafMode::Zero;
    auto value_excluding = [&](bool v, std::size_t skip) {
        double p = 1;
        for (std::size_t j = 0; j < nf; ++j)
            if (j != skip) p *= factor_value(factors[j], params, v);
        return p;
    };
    double total = 0;
    if (use0) total += value_excluding(false, nf);
    if (use1) total += value_excluding(true, nf);
    if (not (total > 0)) return;
    for (std::size_t k = 0; k < nf; ++k) {
        const auto f = factors[k];
        if (f.slot < 0) continue;
        double d = 0;
        if (use1 and f.pinned != 0) d += value_excluding(true, k);
        if (use0 and f.pinned != 1) d -= value_excluding(false, k);
        grad[f.slot] += scale * d / total;
    }
}

/** Adds `scale * d(log leaf value)/d(param)` for every factor slot of a leaf. */
inline void leaf_log_grad(const Unit &u, const ParamVector &params, LeafMode mode, double scale, std::span<double> grad)
{
    const std::span<const LeafFactor> all(u.factors);
    if (mode != LeafMode::Independent) {
        factor_group_log_grad(all, params, mode, scale, grad);
        return;
    }
    for (std::size_t b = 0; b < all.size();) {
        std::size_t e = b;
        while (e < all.size() and all[e].copy == all[b].copy) ++e;
        factor_group_log_grad(all.subspan(b, e - b), params, LeafMode::Joint, scale, grad);
        b = e;
    }
}

/** Reverse pass after `forward_log`: accumulates `scale * d(log root)/d(params)` into `grad`. */
template<typename ModeOf>
void backward_log(const Circuit &c, const ParamVector &params, ModeOf &&mode_of, const std::vector<double> &lv,
                  double scale, std::span<double> grad, std::vector<double> &flow)
{
    flow.assign(c.size(), 0.0);
    flow.back() = 1.0;
    if (lv.back() == -INFINITY) return;
    for (UnitId i = c.root() + 1; i-- > 0;) {
        const double f = flow[i];
        if (f == 0.0) continue;
        const auto &u = c.unit(i);
        switch (u.kind) {
            case UnitKind::Leaf:
                leaf_log_grad(u, params, mode_of(u.var), scale * f, grad);
                break;
            case UnitKind::Product:
                for (auto in : u.inputs) flow[in] += f;
                break;
            case UnitKind::Sum:
                for (std::size_t k = 0; k < u.inputs.size(); ++k) {
                    const double r = std::exp(edge_log_weight(u.weights[k], params) + lv[u.inputs[k]] - lv[i]);
                    if (r == 0.0) continue;
                    flow[u.inputs[k]] += f * r;
                    for (auto s : u.weights[k]) grad[s] += scale * f * r;
                }
                break;
        }
    }
}

}

/** Log of the circuit polynomial with observed variables fixed and the remaining ones summed out.
 * One bottom-up pass; `scratch` holds one value per unit and may be reused across calls. */
inline double evaluate_log(const Circuit &c, const ParamVector &params, const EvidenceMask &mask, std::vector<double> &scratch)
{
    if (mask.size() != c.num_vars()) throw InvalidInput("evidence mask length differs from the number of variables");
    return detail::forward_log(c, params, [&](VarId v) { return leaf_mode(mask[v]); }, scratch);
}

inline double evaluate_log(const Circuit &c, const ParamVector &params, const EvidenceMask &mask)
{
    std::vector<double> scratch;
    return evaluate_log(c, params, mask, scratch);
}

/// Log partition function (all variables summed out).  Zero for locally normalized circuits.
inline double log_normalizer(const Circuit &c, const ParamVector &params)
{
    return evaluate_log(c, params, EvidenceMask::all_marginalized(c.num_vars()));
}

/** Log value under `mask`, and `scale * gradient` w.r.t. the parameter vector added into `grad`. */
inline double evaluate_log_grad(const Circuit &c, const ParamVector &params, const EvidenceMask &mask, double scale,
                                std::span<double> grad)
{
    if (mask.size() != c.num_vars()) throw InvalidInput("evidence mask length differs from the number of variables");
    if (grad.size() != c.num_params()) throw InvalidInput("gradient buffer has the wrong size");
    std::vector<double> lv, flow;
    auto mode_of = [&](VarId v) { return leaf_mode(mask[v]); };
    const double r = detail::forward_log(c, params, mode_of, lv);
    detail::backward_log(c, params, mode_of, lv, scale, grad, flow);
    return r;
}

}
