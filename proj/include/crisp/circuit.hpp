#pragma once

#include "crisp/error.hpp"
#include "crisp/var_set.hpp"
#include "crisp/vtree.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace crisp {

using UnitId = std::uint32_t;
using Slot = std::int32_t;
inline constexpr Slot kNoSlot = -1;

enum class UnitKind : std::uint8_t { Leaf, Sum, Product };

/** One multiplicative factor of a leaf over a single binary variable:
 *      f(v) = (slot >= 0 ? (v ? p : 1 - p) : 1) * [pinned < 0 or pinned == v]
 * where p is the parameter stored at `slot`.  A Bernoulli leaf has one factor with a slot; an
 * indicator leaf one factor with a pin.  Circuit products produce leaves with several factors.
 * In a power circuit `copy` says which copy of the base circuit the factor came from. */
struct LeafFactor
{
    Slot slot = kNoSlot;
    std::int8_t pinned = -1;
    std::uint8_t copy = 0;

    friend bool operator==(const LeafFactor&, const LeafFactor&) = default;
};

struct Unit
{
    UnitKind kind = UnitKind::Leaf;
    std::vector<UnitId> inputs;

    VarId var = 0;                           ///< Leaf
    std::vector<LeafFactor> factors;         ///< Leaf

    /// Sum: for every input, the slots whose values add up to the input's log-weight.  An empty
    /// list is weight 1.
    std::vector<std::vector<Slot>> weights;
    std::vector<VarId> decision_vars;        ///< Sum; empty when not certified

    bool is_leaf() const { return kind == UnitKind::Leaf; }
    bool is_sum() const { return kind == UnitKind::Sum; }
    bool is_product() const { return kind == UnitKind::Product; }
    bool is_bernoulli() const { return is_leaf() and factors.size() == 1 and factors[0].slot >= 0 and factors[0].pinned < 0; }
    bool is_indicator() const { return is_leaf() and factors.size() == 1 and factors[0].slot < 0 and factors[0].pinned >= 0; }
};

enum class SlotKind : std::uint8_t { SumWeight, LeafProb };

/** Where every parameter of a circuit lives in the flat parameter vector.  Sum weights are stored as
 * log-probabilities in one contiguous block per sum unit; Bernoulli leaves store p(Y=1). */
struct ParamLayout
{
    struct SumBlock
    {
        std::size_t offset;
        std::size_t size;
        friend bool operator==(const SumBlock&, const SumBlock&) = default;
    };

    std::vector<SlotKind> kinds;
    std::vector<SumBlock> sum_blocks;
    std::vector<std::size_t> leaf_slots;

    std::size_t total() const { return kinds.size(); }
    std::size_t num_sum_weights() const {
        return static_cast<std::size_t>(std::count(kinds.begin(), kinds.end(), SlotKind::SumWeight));
    }
    std::size_t num_leaf_params() const { return leaf_slots.size(); }

    /// Layout of the parameter vector `[a ; b]`.
    static ParamLayout concat(const ParamLayout &a, const ParamLayout &b) {
        ParamLayout out = a;
        const auto off = a.total();
        out.kinds.insert(out.kinds.end(), b.kinds.begin(), b.kinds.end());
        for (auto blk : b.sum_blocks) out.sum_blocks.push_back({blk.offset + off, blk.size});
        for (auto s : b.leaf_slots) out.leaf_slots.push_back(s + off);
        return out;
    }

    friend bool operator==(const ParamLayout&, const ParamLayout&) = default;
};

/// Flat parameter array; see ParamLayout for the convention.
struct ParamVector
{
    std::vector<double> values;

    ParamVector() = default;
    explicit ParamVector(std::vector<double> v) : values(std::move(v)) { }

    std::size_t size() const { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }
    double & operator[](std::size_t i) { return values[i]; }

    static ParamVector concat(const ParamVector &a, const ParamVector &b) {
        ParamVector out = a;
        out.values.insert(out.values.end(), b.values.begin(), b.values.end());
        return out;
    }
};

/// Result of a property check: pass/fail plus the offending units (or slots, for parameters).
struct CheckReport
{
    std::string property;
    bool pass = true;
    std::vector<std::size_t> offending;
    std::string detail;

    CheckReport() = default;
    explicit CheckReport(std::string name) : property(std::move(name)) { }

    void fail(std::size_t id, std::string why = {}) {
        pass = false;
        offending.push_back(id);
        if (detail.empty()) detail = std::move(why);
    }

    explicit operator bool() const { return pass; }
};

inline CheckReport check_params(const ParamLayout &layout, const ParamVector &params, double tol = 1e-9)
{
    CheckReport r{"params"};
    if (params.size() != layout.total()) {
        r.fail(params.size(), "parameter count " + std::to_string(params.size()) + " != layout total "
               + std::to_string(layout.total()));
        return r;
    }
    for (std::size_t i = 0; i < params.size(); ++i)
        if (not std::isfinite(params[i]) and not (layout.kinds[i] == SlotKind::SumWeight and params[i] == -INFINITY))
            r.fail(i, "non-finite parameter at slot " + std::to_string(i));
    for (const auto &blk : layout.sum_blocks) {
        double m = -INFINITY;
        for (std::size_t i = 0; i < blk.size; ++i) m = std::max(m, params[blk.offset + i]);
        double s = 0;
        for (std::size_t i = 0; i < blk.size; ++i) s += std::exp(params[blk.offset + i] - m);
        const double lse = m + std::log(s);
        if (not (std::abs(lse) <= tol))
            r.fail(blk.offset, "sum-normalization: block at slot " + std::to_string(blk.offset)
                   + " has log-sum-exp " + std::to_string(lse));
    }
    for (auto s : layout.leaf_slots)
        if (not (params[s] > 0.0 and params[s] < 1.0))
            r.fail(s, "leaf-range: leaf parameter at slot " + std::to_string(s) + " outside (0,1)");
    if (not r.pass) r.property = r.detail.substr(0, r.detail.find(':'));
    return r;
}

inline void require_valid_params(const ParamLayout &layout, const ParamVector &params)
{
    auto r = check_params(layout, params);
    if (not r.pass) throw PreconditionError("invalid parameters: " + r.detail);
}

/** Scope of every unit, for units in arbitrary order.  Throws StructuralError on a cycle or on an
 * input id that does not exist. */
inline std::vector<VarSet> compute_scopes(std::span<const Unit> units)
{
    const std::size_t n = units.size();
    std::vector<VarSet> scope(n);
    std::vector<std::uint8_t> state(n, 0); // 0 new, 1 on stack, 2 done
    std::vector<std::pair<std::size_t, std::size_t>> stack;
    for (std::size_t start = 0; start < n; ++start) {
        if (state[start]) continue;
        stack.push_back({start, 0});
        state[start] = 1;
        while (not stack.empty()) {
            auto &[u, next] = stack.back();
            const auto &unit = units[u];
            if (next < unit.inputs.size()) {
                auto in = unit.inputs[next++];
                if (in >= n) throw StructuralError("unit " + std::to_string(u) + " references missing unit " + std::to_string(in));
                if (state[in] == 1) throw StructuralError("cycle detected through unit " + std::to_string(in));
                if (state[in] == 0) { state[in] = 1; stack.push_back({in, 0}); }
                continue;
            }
            if (unit.is_leaf()) scope[u] = VarSet{unit.var};
            else for (auto in : unit.inputs) scope[u] |= scope[in];
            state[u] = 2;
            stack.pop_back();
        }
    }
    return scope;
}

/** Immutable computational graph of leaf, sum, and product units over binary labels.  Units are
 * topologically ordered (inputs have smaller ids) and the root is the last unit.  Scopes and the
 * structural determinism certificate are computed once at construction. */
class Circuit
{
    std::size_t num_vars_ = 0;
    std::vector<Unit> units_;
    std::vector<VarSet> scopes_;
    std::vector<VarSet> pinned0_, pinned1_;
    ParamLayout layout_;
    bool logic_ = false;
    bool locally_normalized_ = false;
    bool certified_deterministic_ = false;
    std::size_t edges_ = 0;

    public:
    Circuit() = default;

    Circuit(std::size_t num_vars, std::vector<Unit> units, ParamLayout layout, bool logic = false)
        : num_vars_(num_vars), units_(std::move(units)), layout_(std::move(layout)), logic_(logic)
    {
        if (units_.empty()) throw StructuralError("circuit has no units");
        for (std::size_t i = 0; i < units_.size(); ++i) {
            const auto &u = units_[i];
            for (auto in : u.inputs)
                if (in >= i) throw StructuralError("unit " + std::to_string(i) + " is not topologically ordered (input " + std::to_string(in) + ")");
            if (u.is_leaf()) {
                if (not u.inputs.empty()) throw StructuralError("leaf unit with inputs");
                if (u.var >= num_vars_) throw StructuralError("leaf variable out of range");
                if (u.factors.empty()) throw StructuralError("leaf without factors");
                for (auto f : u.factors)
                    if (f.slot >= static_cast<Slot>(layout_.total())) throw StructuralError("leaf slot outside layout");
            } else {
                if (u.inputs.empty()) throw StructuralError("inner unit " + std::to_string(i) + " without inputs");
                if (u.is_sum() and u.weights.size() != u.inputs.size())
                    throw StructuralError("sum unit " + std::to_string(i) + " weight count mismatch");
                for (const auto &w : u.weights)
                    for (auto s : w)
                        if (s < 0 or s >= static_cast<Slot>(layout_.total())) throw StructuralError("sum slot outside layout");
            }
            edges_ += u.inputs.size();
        }
        scopes_ = compute_scopes(units_);
        if (not (scopes_.back() == VarSet::range(num_vars_)))
            throw StructuralError("root scope " + scopes_.back().to_string() + " does not cover all variables");

        std::vector<char> reach(units_.size(), 0);
        reach.back() = 1;
        for (std::size_t i = units_.size(); i-- > 0;)
            if (reach[i]) for (auto in : units_[i].inputs) reach[in] = 1;
        for (std::size_t i = 0; i < units_.size(); ++i)
            if (not reach[i]) throw StructuralError("unit " + std::to_string(i) + " unreachable from root");

        compute_pinned();
        certified_deterministic_ = structural_determinism().pass;
        locally_normalized_ = compute_locally_normalized();
    }

    std::size_t num_vars() const { return num_vars_; }
    std::size_t size() const { return units_.size(); }
    std::size_t num_edges() const { return edges_; }
    UnitId root() const { return static_cast<UnitId>(units_.size() - 1); }
    const Unit & unit(UnitId id) const { return units_[id]; }
    const std::vector<Unit> & units() const { return units_; }
    const VarSet & scope(UnitId id) const { return scopes_[id]; }
    const std::vector<VarSet> & scopes() const { return scopes_; }
    const ParamLayout & layout() const { return layout_; }
    std::size_t num_params() const { return layout_.total(); }

    /// Sum weights are fixed to 1 and every leaf is an indicator.
    bool is_logic() const { return logic_; }

    /// Every sum owns one normalized weight block and every leaf is a plain Bernoulli or indicator,
    /// so valid parameters make the circuit globally normalized.
    bool locally_normalized() const { return locally_normalized_; }

    /// Every sum unit carries decision variables on which its inputs' supports are pinned apart.
    bool certified_deterministic() const { return certified_deterministic_; }

    /// Variables fixed to 0 (resp. 1) on the whole support of a unit.
    const VarSet & pinned_zero(UnitId id) const { return pinned0_[id]; }
    const VarSet & pinned_one(UnitId id) const { return pinned1_[id]; }

    CheckReport structural_determinism() const {
        CheckReport r{"deterministic"};
        for (std::size_t i = 0; i < units_.size(); ++i) {
            const auto &u = units_[i];
            if (not u.is_sum() or u.inputs.size() < 2) continue;
            if (u.decision_vars.empty()) { r.fail(i, "sum unit " + std::to_string(i) + " has no decision variable"); continue; }
            bool ok = true;
            for (std::size_t a = 0; a < u.inputs.size() and ok; ++a)
                for (std::size_t b = a + 1; b < u.inputs.size() and ok; ++b) {
                    const auto ia = u.inputs[a], ib = u.inputs[b];
                    bool apart = false;
                    for (auto v : u.decision_vars)
                        if ((pinned0_[ia].contains(v) and pinned1_[ib].contains(v)) or
                            (pinned1_[ia].contains(v) and pinned0_[ib].contains(v))) { apart = true; break; }
                    ok = apart;
                }
            if (not ok) r.fail(i, "sum unit " + std::to_string(i) + " has inputs not separated by its decision variables");
        }
        return r;
    }

    private:
    void compute_pinned() {
        pinned0_.assign(units_.size(), {});
        pinned1_.assign(units_.size(), {});
        for (std::size_t i = 0; i < units_.size(); ++i) {
            const auto &u = units_[i];
            if (u.is_leaf()) {
                for (auto f : u.factors) {
                    if (f.pinned == 0) pinned0_[i].insert(u.var);
                    if (f.pinned == 1) pinned1_[i].insert(u.var);
                }
            } else if (u.is_product()) {
                for (auto in : u.inputs) { pinned0_[i] |= pinned0_[in]; pinned1_[i] |= pinned1_[in]; }
            } else {
                pinned0_[i] = pinned0_[u.inputs[0]];
                pinned1_[i] = pinned1_[u.inputs[0]];
                for (std::size_t k = 1; k < u.inputs.size(); ++k) {
                    pinned0_[i] &= pinned0_[u.inputs[k]];
                    pinned1_[i] &= pinned1_[u.inputs[k]];
                }
            }
        }
    }

    bool compute_locally_normalized() const {
        if (logic_) return false;
        std::vector<std::size_t> block_of(layout_.total(), SIZE_MAX);
        for (std::size_t b = 0; b < layout_.sum_blocks.size(); ++b)
            for (std::size_t k = 0; k < layout_.sum_blocks[b].size; ++k) block_of[layout_.sum_blocks[b].offset + k] = b;
        std::vector<char> used(layout_.sum_blocks.size(), 0);
        for (const auto &u : units_) {
            if (u.is_leaf()) {
                if (not (u.is_bernoulli() or u.is_indicator())) return false;
                if (u.is_bernoulli() and layout_.kinds[u.factors[0].slot] != SlotKind::LeafProb) return false;
            } else if (u.is_sum()) {
                std::size_t blk = SIZE_MAX;
                for (std::size_t k = 0; k < u.weights.size(); ++k) {
                    if (u.weights[k].size() != 1) return false;
                    auto s = static_cast<std::size_t>(u.weights[k][0]);
                    if (block_of[s] == SIZE_MAX) return false;
                    if (k == 0) blk = block_of[s];
                    if (block_of[s] != blk or s != layout_.sum_blocks[blk].offset + k) return false;
                }
                if (layout_.sum_blocks[blk].size != u.weights.size() or used[blk]) return false;
                used[blk] = 1;
            }
        }
        return true;
    }
};

/** Incrementally assembles a circuit.  Units are appended in topological order; `finish` drops
 * units unreachable from the root, renumbers, and (for automatically parameterized circuits)
 * assigns parameter slots in unit order. */
class CircuitAssembler
{
    public:
    static constexpr Slot kAutoSlot = -2;

    private:
    std::size_t num_vars_;
    std::vector<Unit> units_;
    std::vector<VarSet> scopes_;
    std::map<std::pair<VarId, int>, UnitId> indicators_;

    UnitId push(Unit u, VarSet scope) {
        units_.push_back(std::move(u));
        scopes_.push_back(std::move(scope));
        return static_cast<UnitId>(units_.size() - 1);
    }

    public:
    explicit CircuitAssembler(std::size_t num_vars) : num_vars_(num_vars) { }

    std::size_t num_vars() const { return num_vars_; }
    std::size_t size() const { return units_.size(); }
    const Unit & unit(UnitId id) const { return units_[id]; }
    const VarSet & scope(UnitId id) const { return scopes_[id]; }

    UnitId bernoulli(VarId v) {
        Unit u;
        u.var = v;
        u.factors = {LeafFactor{kAutoSlot, -1}};
        return push(std::move(u), VarSet{v});
    }

    /// Parameter-free point mass on Y_v = b; deduplicated.
    UnitId indicator(VarId v, bool b) {
        auto key = std::make_pair(v, int(b));
        if (auto it = indicators_.find(key); it != indicators_.end()) return it->second;
        Unit u;
        u.var = v;
        u.factors = {LeafFactor{kNoSlot, static_cast<std::int8_t>(b)}};
        auto id = push(std::move(u), VarSet{v});
        indicators_.emplace(key, id);
        return id;
    }

    UnitId leaf(VarId v, std::vector<LeafFactor> factors) {
        Unit u;
        u.var = v;
        u.factors = std::move(factors);
        return push(std::move(u), VarSet{v});
    }

    /// Sum with one automatically assigned weight slot per input.
    UnitId sum(std::vector<UnitId> inputs, std::vector<VarId> decision_vars) {
        std::vector<std::vector<Slot>> w(inputs.size(), std::vector<Slot>{kAutoSlot});
        return sum(std::move(inputs), std::move(w), std::move(decision_vars));
    }

    UnitId sum(std::vector<UnitId> inputs, std::vector<std::vector<Slot>> weights, std::vector<VarId> decision_vars) {
        Unit u;
        u.kind = UnitKind::Sum;
        VarSet s;
        for (auto in : inputs) s |= scopes_.at(in);
        u.inputs = std::move(inputs);
        u.weights = std::move(weights);
        u.decision_vars = std::move(decision_vars);
        return push(std::move(u), std::move(s));
    }

    UnitId product(std::vector<UnitId> inputs) {
        Unit u;
        u.kind = UnitKind::Product;
        VarSet s;
        for (auto in : inputs) s |= scopes_.at(in);
        u.inputs = std::move(inputs);
        return push(std::move(u), std::move(s));
    }

    /** Compacts to the units reachable from `root`.  Without an explicit layout, every
     * `kAutoSlot` is replaced by a fresh slot in unit order: one contiguous block per sum followed
     * by one slot per Bernoulli leaf, interleaved as units appear. */
    Circuit finish(UnitId root, std::optional<ParamLayout> explicit_layout = std::nullopt, bool logic = false) const {
        std::vector<char> reach(units_.size(), 0);
        reach.at(root) = 1;
        for (std::size_t i = root + 1; i-- > 0;)
            if (reach[i]) for (auto in : units_[i].inputs) reach[in] = 1;
        std::vector<UnitId> remap(units_.size(), UINT32_MAX);
        std::vector<Unit> out;
        for (std::size_t i = 0; i <= root; ++i) {
            if (not reach[i]) continue;
            Unit u = units_[i];
            for (auto &in : u.inputs) in = remap[in];
            remap[i] = static_cast<UnitId>(out.size());
            out.push_back(std::move(u));
        }
        ParamLayout layout;
        if (explicit_layout) {
            layout = std::move(*explicit_layout);
        } else {
            for (auto &u : out) {
                if (u.is_sum()) {
                    bool auto_block = std::all_of(u.weights.begin(), u.weights.end(), [](const auto &w) {
                        return w.size() == 1 and w[0] == kAutoSlot;
                    });
                    if (not auto_block) continue;
                    layout.sum_blocks.push_back({layout.total(), u.weights.size()});
                    for (auto &w : u.weights) {
                        w[0] = static_cast<Slot>(layout.total());
                        layout.kinds.push_back(SlotKind::SumWeight);
                    }
                } else if (u.is_leaf()) {
                    for (auto &f : u.factors)
                        if (f.slot == kAutoSlot) {
                            f.slot = static_cast<Slot>(layout.total());
                            layout.leaf_slots.push_back(layout.total());
                            layout.kinds.push_back(SlotKind::LeafProb);
                        }
                }
            }
        }
        return Circuit(num_vars_, std::move(out), std::move(layout), logic);
    }
};

namespace detail {

inline std::string join_ids(const std::vector<UnitId> &ids) {
    std::string s;
    for (auto id : ids) s += " " + std::to_string(id);
    return s;
}

}

/** Writes the line-oriented text form
 *      L <id> <var>                   Bernoulli leaf
 *      I <id> <var> <value>           indicator leaf
 *      S <id> <decision vars|-> <inputs...>
 *      P <id> <inputs...>
 *      ROOT <id>
 * with an optional `LOGIC` header for logic circuits.  Decision variables are comma separated.
 * Only locally normalized and logic circuits have a text form; their parameter layout is implied
 * by unit order. */
inline void write_circuit(std::ostream &os, const Circuit &c)
{
    if (not c.locally_normalized() and not c.is_logic())
        throw InvalidInput("only locally normalized or logic circuits can be serialized");
    os << "# crisp circuit: " << c.num_vars() << " vars, " << c.size() << " units, " << c.num_edges() << " edges\n";
    if (c.is_logic()) os << "LOGIC\n";
    for (UnitId i = 0; i < c.size(); ++i) {
        const auto &u = c.unit(i);
        if (u.is_leaf()) {
            if (u.is_indicator()) os << "I " << i << ' ' << u.var << ' ' << int(u.factors[0].pinned) << '\n';
            else os << "L " << i << ' ' << u.var << '\n';
        } else if (u.is_sum()) {
            os << "S " << i << ' ';
            if (u.decision_vars.empty()) os << '-';
            for (std::size_t k = 0; k < u.decision_vars.size(); ++k) os << (k ? "," : "") << u.decision_vars[k];
            os << detail::join_ids(u.inputs) << '\n';
        } else {
            os << "P " << i << detail::join_ids(u.inputs) << '\n';
        }
    }
    os << "ROOT " << c.root() << '\n';
}

inline std::string circuit_to_string(const Circuit &c)
{
    std::ostringstream os;
    write_circuit(os, c);
    return os.str();
}

inline Circuit read_circuit(std::istream &is)
{
    std::string line;
    bool logic = false;
    std::vector<Unit> units;
    std::optional<UnitId> root;
    std::size_t lineno = 0;
    VarId max_var = 0;
    bool any_leaf = false;
    auto bad = [&](const std::string &why) { return InvalidInput("circuit line " + std::to_string(lineno) + ": " + why); };
    while (std::getline(is, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ls(line);
        std::string tag;
        if (not (ls >> tag)) continue;
        if (root) throw bad("content after ROOT");
        if (tag == "LOGIC") {
            if (not units.empty()) throw bad("LOGIC header must precede units");
            logic = true;
            continue;
        }
        if (tag == "ROOT") {
            UnitId r;
            if (not (ls >> r)) throw bad("ROOT needs an id");
            root = r;
            continue;
        }
        long long id;
        if (not (ls >> id)) throw bad("missing unit id");
        if (id != static_cast<long long>(units.size())) throw bad("unit ids must be dense and increasing");
        Unit u;
        if (tag == "L" or tag == "I") {
            long long v;
            if (not (ls >> v) or v < 0) throw bad("leaf needs a variable");
            u.var = static_cast<VarId>(v);
            if (tag == "L") {
                if (logic) throw bad("Bernoulli leaf in a logic circuit");
                u.factors = {LeafFactor{CircuitAssembler::kAutoSlot, -1}};
            } else {
                int b;
                if (not (ls >> b) or (b != 0 and b != 1)) throw bad("indicator needs a value 0 or 1");
                u.factors = {LeafFactor{kNoSlot, static_cast<std::int8_t>(b)}};
            }
            max_var = std::max(max_var, u.var);
            any_leaf = true;
        } else if (tag == "S" or tag == "P") {
            u.kind = tag == "S" ? UnitKind::Sum : UnitKind::Product;
            if (tag == "S") {
                std::string dv;
                if (not (ls >> dv)) throw bad("sum needs a decision variable field");
                if (dv != "-") {
                    std::istringstream ds(dv);
                    std::string tok;
                    while (std::getline(ds, tok, ',')) {
                        try { u.decision_vars.push_back(static_cast<VarId>(std::stoul(tok))); }
                        catch (const std::exception&) { throw bad("bad decision variable '" + tok + "'"); }
                    }
                }
            }
            long long in;
            while (ls >> in) {
                if (in < 0 or in >= id) throw bad("input " + std::to_string(in) + " not defined before use");
                u.inputs.push_back(static_cast<UnitId>(in));
            }
            if (not ls.eof()) throw bad("malformed input list");
            if (u.inputs.empty()) throw bad("inner unit without inputs");
            if (u.is_sum())
                u.weights.assign(u.inputs.size(), logic ? std::vector<Slot>{} : std::vector<Slot>{CircuitAssembler::kAutoSlot});
        } else {
            throw bad("unknown tag '" + tag + "'");
        }
        units.push_back(std::move(u));
    }
    if (not root) throw InvalidInput("circuit text has no ROOT line");
    if (units.empty() or not any_leaf) throw InvalidInput("circuit text has no units");
    if (*root + 1 != units.size()) throw InvalidInput("ROOT must be the last unit");

    // Reassemble so slot assignment matches the builder's convention exactly.
    CircuitAssembler as(max_var + 1);
    for (auto &u : units) {
        if (u.is_leaf()) as.leaf(u.var, u.factors);
        else if (u.is_sum()) as.sum(u.inputs, u.weights, u.decision_vars);
        else as.product(u.inputs);
    }
    auto out = logic ? as.finish(*root, ParamLayout{}, true) : as.finish(*root);
    if (out.size() != units.size()) throw InvalidInput("circuit text has units unreachable from ROOT");
    return out;
}

inline Circuit circuit_from_string(const std::string &text)
{
    std::istringstream is(text);
    return read_circuit(is);
}

/// Parameter file: `params <n>` followed by n values, 17 significant digits.
inline void write_params(std::ostream &os, const ParamVector &p)
{
    os << "params " << p.size() << '\n' << std::setprecision(17);
    for (double v : p.values) os << v << '\n';
}

inline ParamVector read_params(std::istream &is)
{
    std::string tag;
    long long n;
    if (not (is >> tag >> n) or tag != "params" or n < 0) throw InvalidInput("parameter file: expected `params <n>`");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto &x : v) {
        std::string tok;
        if (not (is >> tok)) throw InvalidInput("parameter file: truncated");
        try { x = std::stod(tok); } catch (const std::exception&) { throw InvalidInput("parameter file: bad value '" + tok + "'"); }
    }
    return ParamVector(std::move(v));
}

// ---------------------------------------------------------------------------------------------------
// Structural property checks
// ---------------------------------------------------------------------------------------------------

inline CheckReport check_smooth(const Circuit &c)
{
    CheckReport r{"smooth"};
    for (UnitId i = 0; i < c.size(); ++i) {
        const auto &u = c.unit(i);
        if (not u.is_sum()) continue;
        for (auto in : u.inputs)
            if (not (c.scope(in) == c.scope(u.inputs[0]))) {
                r.fail(i, "sum unit " + std::to_string(i) + " mixes scopes");
                break;
            }
    }
    return r;
}

inline CheckReport check_decomposable(const Circuit &c)
{
    CheckReport r{"decomposable"};
    for (UnitId i = 0; i < c.size(); ++i) {
        const auto &u = c.unit(i);
        if (not u.is_product()) continue;
        VarSet seen;
        for (auto in : u.inputs) {
            if (seen.intersects(c.scope(in))) {
                r.fail(i, "product unit " + std::to_string(i) + " has overlapping input scopes");
                break;
            }
            seen |= c.scope(in);
        }
    }
    return r;
}

namespace detail {

/// Whether input scopes can be grouped into nested binary products following vtree node `node`.
inline bool rearrangeable(const Vtree &vt, int node, const std::vector<VarSet> &parts)
{
    if (parts.size() == 1) return vt.node(node).vars == parts[0];
    const auto &n = vt.node(node);
    if (n.is_leaf()) return false;
    std::vector<VarSet> left, right;
    for (const auto &p : parts) {
        if (p.subset_of(vt.node(n.left).vars)) left.push_back(p);
        else if (p.subset_of(vt.node(n.right).vars)) right.push_back(p);
        else return false;
    }
    if (left.empty() or right.empty()) return false;
    return rearrangeable(vt, n.left, left) and rearrangeable(vt, n.right, right);
}

}

/// Every product splits its scope like some vtree node (after binary rearrangement of n-ary products).
inline CheckReport check_structured(const Circuit &c, const Vtree &vt)
{
    CheckReport r{"structured"};
    if (vt.num_vars() != c.num_vars()) {
        r.fail(0, "vtree has " + std::to_string(vt.num_vars()) + " vars, circuit " + std::to_string(c.num_vars()));
        return r;
    }
    for (UnitId i = 0; i < c.size(); ++i) {
        const auto &u = c.unit(i);
        if (not u.is_product() or u.inputs.size() < 2) continue;
        std::vector<VarSet> parts;
        for (auto in : u.inputs) parts.push_back(c.scope(in));
        auto node = vt.find(c.scope(i));
        bool ok = node.has_value();
        if (ok and parts.size() == 2) ok = vt.has_split(parts[0], parts[1]);
        else if (ok) ok = detail::rearrangeable(vt, *node, parts);
        if (not ok) r.fail(i, "product unit " + std::to_string(i) + " does not follow the vtree");
    }
    return r;
}

namespace detail {

inline bool leaf_nonzero(const Unit &u, const ParamVector &params, bool v)
{
    for (auto f : u.factors) {
        if (f.pinned >= 0 and f.pinned != int(v)) return false;
        if (f.slot >= 0) {
            const double p = params[f.slot];
            if ((v ? p : 1.0 - p) <= 0.0) return false;
        }
    }
    return true;
}

}

/** Structural certificate plus, for c <= 16, an exhaustive validator: on every complete assignment at
 * most one input of each sum has nonzero value. */
inline CheckReport check_deterministic(const Circuit &c, const ParamVector &params, std::size_t exhaustive_cap = 16)
{
    CheckReport r = c.structural_determinism();
    if (c.num_vars() > exhaustive_cap) return r;
    std::vector<char> nz(c.size());
    std::vector<char> flagged(c.size(), 0);
    const std::uint64_t states = std::uint64_t(1) << c.num_vars();
    for (std::uint64_t y = 0; y < states; ++y) {
        for (UnitId i = 0; i < c.size(); ++i) {
            const auto &u = c.unit(i);
            if (u.is_leaf()) {
                nz[i] = detail::leaf_nonzero(u, params, (y >> u.var) & 1u);
            } else if (u.is_product()) {
                nz[i] = std::all_of(u.inputs.begin(), u.inputs.end(), [&](UnitId in) { return nz[in]; });
            } else {
                int count = 0;
                for (std::size_t k = 0; k < u.inputs.size(); ++k) {
                    double lw = 0;
                    for (auto s : u.weights[k]) lw += params[s];
                    if (nz[u.inputs[k]] and lw > -INFINITY) ++count;
                }
                nz[i] = count > 0;
                if (count > 1 and not flagged[i]) {
                    flagged[i] = 1;
                    r.fail(i, "sum unit " + std::to_string(i) + " has overlapping supports (exhaustive)");
                }
            }
        }
    }
    return r;
}

}
