#pragma once

#include "crisp/algebra.hpp"
#include "crisp/circuit.hpp"
#include "crisp/error.hpp"
#include "crisp/vtree.hpp"

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace crisp {

/** Implications child = 1 => parent = 1 over label variables.  The edge relation must be acyclic. */
class Hierarchy
{
    public:
    struct Edge
    {
        VarId child;
        VarId parent;
        friend bool operator==(const Edge&, const Edge&) = default;
    };

    private:
    std::size_t num_vars_ = 0;
    std::vector<Edge> edges_;

    public:
    Hierarchy() = default;

    Hierarchy(std::size_t num_vars, std::vector<Edge> edges) : num_vars_(num_vars), edges_(std::move(edges)) {
        for (auto e : edges_) {
            if (e.child >= num_vars_ or e.parent >= num_vars_)
                throw InvalidInput("hierarchy edge (" + std::to_string(e.child) + ", " + std::to_string(e.parent) + ") out of range");
            if (e.child == e.parent) throw InvalidInput("hierarchy edge is a self-loop on Y" + std::to_string(e.child));
        }
        // Kahn's algorithm over child -> parent.
        std::vector<std::size_t> indeg(num_vars_, 0);
        std::vector<std::vector<VarId>> out(num_vars_);
        for (auto e : edges_) { out[e.child].push_back(e.parent); ++indeg[e.parent]; }
        std::vector<VarId> ready;
        for (VarId v = 0; v < num_vars_; ++v) if (indeg[v] == 0) ready.push_back(v);
        std::size_t seen = 0;
        while (not ready.empty()) {
            auto v = ready.back();
            ready.pop_back();
            ++seen;
            for (auto w : out[v]) if (--indeg[w] == 0) ready.push_back(w);
        }
        if (seen != num_vars_) throw InvalidInput("hierarchy contains a cycle");
    }

    std::size_t num_vars() const { return num_vars_; }
    const std::vector<Edge> & edges() const { return edges_; }

    bool satisfied(std::span<const std::uint8_t> y) const {
        for (auto e : edges_) if (y[e.child] and not y[e.parent]) return false;
        return true;
    }

    /// Smallest feasible completion: every ancestor of a positive label is switched on.
    std::vector<std::uint8_t> close_upward(std::vector<std::uint8_t> y) const {
        bool changed = true;
        while (changed) {
            changed = false;
            for (auto e : edges_)
                if (y[e.child] and not y[e.parent]) { y[e.parent] = 1; changed = true; }
        }
        return y;
    }

    /// Ancestors of `v`, including `v` itself.
    VarSet ancestor_closure(VarId v) const {
        std::vector<std::uint8_t> y(num_vars_, 0);
        y[v] = 1;
        y = close_upward(std::move(y));
        VarSet out;
        for (VarId i = 0; i < num_vars_; ++i) if (y[i]) out.insert(i);
        return out;
    }

    /// Variables that are nobody's parent.
    std::vector<VarId> leaves() const {
        std::vector<char> is_parent(num_vars_, 0);
        for (auto e : edges_) is_parent[e.parent] = 1;
        std::vector<VarId> out;
        for (VarId v = 0; v < num_vars_; ++v) if (not is_parent[v]) out.push_back(v);
        return out;
    }
};

/// One `child parent` pair per line; `#` starts a comment.
inline Hierarchy read_hierarchy(std::istream &is, std::size_t num_vars)
{
    std::vector<Hierarchy::Edge> edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ls(line);
        long long a, b;
        if (not (ls >> a)) continue;
        std::string rest;
        if (not (ls >> b) or a < 0 or b < 0 or (ls >> rest))
            throw InvalidInput("hierarchy line " + std::to_string(lineno) + ": expected `child parent`");
        edges.push_back({static_cast<VarId>(a), static_cast<VarId>(b)});
    }
    return Hierarchy(num_vars, std::move(edges));
}

inline Hierarchy read_hierarchy_file(const std::string &path, std::size_t num_vars)
{
    std::ifstream in(path);
    if (not in) throw InvalidInput("cannot open hierarchy file " + path);
    return read_hierarchy(in, num_vars);
}

inline void write_hierarchy(std::ostream &os, const Hierarchy &h)
{
    for (auto e : h.edges()) os << e.child << ' ' << e.parent << '\n';
}

namespace detail {

/** Compiles a hierarchy top-down along the vtree.  At a node splitting into (L, R), the implications
 * crossing the split are resolved by enumerating the L-side endpoints (the interface); each interface
 * assignment forces literals on the R side, so every element is a product of two independent
 * sub-compilations and the elements are separated by the interface variables. */
class HierarchyCompiler
{
    const Hierarchy &h_;
    const Vtree &vt_;
    CircuitAssembler as_;
    std::map<std::tuple<int, std::vector<std::uint64_t>, std::vector<std::uint64_t>>, std::int64_t> memo_;

    static constexpr std::int64_t kZero = -1;
    static constexpr std::size_t kMaxInterface = 24;

    public:
    HierarchyCompiler(const Hierarchy &h, const Vtree &vt) : h_(h), vt_(vt), as_(vt.num_vars()) {
        if (h.num_vars() != vt.num_vars()) throw InvalidInput("hierarchy and vtree disagree on the number of variables");
    }

    LogicCircuit run() {
        auto r = compile(vt_.root(), {}, {});
        if (r == kZero) throw UnsatisfiableError("hierarchy has no satisfying assignment");
        return LogicCircuit(as_.finish(static_cast<UnitId>(r), ParamLayout{}, true));
    }

    private:
    /// `ones` / `zeros`: literals forced on this node's variables.
    std::int64_t compile(int node, VarSet ones, VarSet zeros) {
        const auto &n = vt_.node(node);
        ones &= n.vars;
        zeros &= n.vars;
        if (ones.intersects(zeros)) return kZero;
        auto key = std::make_tuple(node, ones.words(), zeros.words());
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;

        std::int64_t out = kZero;
        if (n.is_leaf()) {
            if (ones.contains(n.var)) out = as_.indicator(n.var, true);
            else if (zeros.contains(n.var)) out = as_.indicator(n.var, false);
            else out = as_.sum({as_.indicator(n.var, false), as_.indicator(n.var, true)}, {{}, {}}, {n.var});
        } else {
            const auto &L = vt_.node(n.left).vars, &R = vt_.node(n.right).vars;
            VarSet iface;
            for (auto e : h_.edges()) {
                if (L.contains(e.child) and R.contains(e.parent)) iface.insert(e.child);
                if (L.contains(e.parent) and R.contains(e.child)) iface.insert(e.parent);
            }
            const VarSet free = iface - ones - zeros;
            const auto fv = free.to_vector();
            if (fv.size() > kMaxInterface) throw InvalidInput("hierarchy interface too wide for this vtree");
            std::vector<UnitId> elements;
            for (std::uint64_t a = 0; a < (std::uint64_t(1) << fv.size()); ++a) {
                VarSet lo = ones, lz = zeros;
                for (std::size_t k = 0; k < fv.size(); ++k) ((a >> k) & 1u ? lo : lz).insert(fv[k]);
                VarSet ro = ones, rz = zeros;
                for (auto e : h_.edges()) {
                    if (L.contains(e.child) and R.contains(e.parent) and lo.contains(e.child)) ro.insert(e.parent);
                    if (L.contains(e.parent) and R.contains(e.child) and lz.contains(e.parent)) rz.insert(e.child);
                }
                auto l = compile(n.left, lo, lz);
                if (l == kZero) continue;
                auto r = compile(n.right, ro, rz);
                if (r == kZero) continue;
                elements.push_back(as_.product({static_cast<UnitId>(l), static_cast<UnitId>(r)}));
            }
            if (fv.empty() and elements.size() == 1) out = elements[0];
            else if (not elements.empty())
                out = as_.sum(elements, std::vector<std::vector<Slot>>(elements.size()), fv);
        }
        memo_.emplace(std::move(key), out);
        return out;
    }
};

}

/// Logic circuit over `vt` whose value is 1 exactly on assignments satisfying every implication.
inline LogicCircuit build_hierarchy_circuit(const Hierarchy &h, const Vtree &vt)
{
    return detail::HierarchyCompiler(h, vt).run();
}

/** Number of satisfying assignments, by an integer pass over the circuit.  Needs a smooth,
 * deterministic logic circuit; counts are exact up to 2^63. */
inline std::uint64_t count_satisfying(const LogicCircuit &k)
{
    const auto &c = k.circuit();
    if (c.num_vars() > 63) throw InvalidInput("model count would overflow 64 bits");
    if (auto r = check_smooth(c); not r.pass) throw PropertyViolation("model counting needs a smooth circuit: " + r.detail);
    if (not c.certified_deterministic()) throw PropertyViolation("model counting needs a certified deterministic circuit");
    std::vector<std::uint64_t> n(c.size());
    for (UnitId i = 0; i < c.size(); ++i) {
        const auto &u = c.unit(i);
        if (u.is_leaf()) n[i] = 1;
        else if (u.is_product()) { n[i] = 1; for (auto in : u.inputs) n[i] *= n[in]; }
        else { n[i] = 0; for (auto in : u.inputs) n[i] += n[in]; }
    }
    return n.back();
}

inline void write_logic_circuit(std::ostream &os, const LogicCircuit &k) { write_circuit(os, k.circuit()); }

inline LogicCircuit read_logic_circuit(std::istream &is)
{
    auto c = read_circuit(is);
    if (not c.is_logic()) throw InvalidInput("logic circuit text needs a LOGIC header");
    return LogicCircuit(std::move(c));
}

}
