#pragma once

#include "crisp/error.hpp"
#include "crisp/random.hpp"
#include "crisp/var_set.hpp"

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace crisp {

/** Binary tree over label variables.  It fixes how every product unit of a compatible circuit is
 * allowed to split its scope.  Nodes are stored children-first; the root is the last node. */
class Vtree
{
    public:
    struct Node
    {
        int left = -1;
        int right = -1;
        VarId var = 0; ///< leaf only
        VarSet vars;

        bool is_leaf() const { return left < 0; }
    };

    private:
    std::vector<Node> nodes_;
    std::vector<int> parent_;
    std::unordered_map<VarSet, int, VarSetHash> by_vars_;
    std::size_t num_vars_ = 0;

    public:
    Vtree() = default;

    /// Validates that the leaves partition {0, ..., c-1} and every split is disjoint and covering.
    explicit Vtree(std::vector<Node> nodes) : nodes_(std::move(nodes)) {
        if (nodes_.empty()) throw InvalidInput("vtree has no nodes");
        parent_.assign(nodes_.size(), -1);
        std::size_t leaves = 0;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            auto &n = nodes_[i];
            if (n.is_leaf()) {
                if (n.right >= 0) throw StructuralError("vtree leaf with a right child");
                n.vars = VarSet{n.var};
                ++leaves;
            } else {
                if (n.right < 0 or n.left >= static_cast<int>(i) or n.right >= static_cast<int>(i))
                    throw StructuralError("vtree children must precede their parent");
                const auto &l = nodes_[n.left], &r = nodes_[n.right];
                if (l.vars.intersects(r.vars)) throw StructuralError("vtree split is not disjoint");
                if (parent_[n.left] >= 0 or parent_[n.right] >= 0)
                    throw StructuralError("vtree node with two parents");
                parent_[n.left] = parent_[n.right] = static_cast<int>(i);
                n.vars = l.vars | r.vars;
            }
        }
        for (std::size_t i = 0; i + 1 < nodes_.size(); ++i)
            if (parent_[i] < 0) throw StructuralError("vtree node unreachable from root");
        num_vars_ = leaves;
        if (not (nodes_.back().vars == VarSet::range(num_vars_)))
            throw StructuralError("vtree leaves do not partition the variables 0..c-1");
        for (std::size_t i = 0; i < nodes_.size(); ++i) by_vars_.emplace(nodes_[i].vars, static_cast<int>(i));
    }

    std::size_t num_vars() const { return num_vars_; }
    std::size_t size() const { return nodes_.size(); }
    int root() const { return static_cast<int>(nodes_.size()) - 1; }
    const Node & node(int i) const { return nodes_.at(i); }
    const std::vector<Node> & nodes() const { return nodes_; }
    int parent(int i) const { return parent_.at(i); }

    /// Node whose variable set equals `vars`, if any.
    std::optional<int> find(const VarSet &vars) const {
        auto it = by_vars_.find(vars);
        if (it == by_vars_.end()) return std::nullopt;
        return it->second;
    }

    /// Whether some internal node splits its variables into exactly {a, b} (in either order).
    bool has_split(const VarSet &a, const VarSet &b) const {
        auto n = find(a | b);
        if (not n or nodes_[*n].is_leaf()) return false;
        const auto &l = nodes_[nodes_[*n].left].vars, &r = nodes_[nodes_[*n].right].vars;
        return (l == a and r == b) or (l == b and r == a);
    }

    /// Variables in left-to-right leaf order.
    std::vector<VarId> leaf_order() const {
        std::vector<VarId> out;
        std::function<void(int)> walk = [&](int i) {
            if (nodes_[i].is_leaf()) { out.push_back(nodes_[i].var); return; }
            walk(nodes_[i].left);
            walk(nodes_[i].right);
        };
        walk(root());
        return out;
    }

    /// Nested parenthesized text, e.g. `((0 2)(1 3))`.
    std::string to_string() const {
        std::function<std::string(int)> str = [&](int i) -> std::string {
            const auto &n = nodes_[i];
            if (n.is_leaf()) return std::to_string(n.var);
            auto l = str(n.left), r = str(n.right);
            const bool space = l.back() != ')' and r.front() != '(';
            return "(" + l + (space ? " " : "") + r + ")";
        };
        return str(root());
    }

    static Vtree parse(const std::string &text) {
        std::vector<Node> nodes;
        std::size_t pos = 0;
        auto skip = [&] { while (pos < text.size() and std::isspace(static_cast<unsigned char>(text[pos]))) ++pos; };
        std::function<int()> node = [&]() -> int {
            skip();
            if (pos >= text.size()) throw InvalidInput("vtree text ends early");
            if (text[pos] == '(') {
                ++pos;
                int l = node();
                int r = node();
                skip();
                if (pos >= text.size() or text[pos] != ')') throw InvalidInput("vtree text: expected ')'");
                ++pos;
                nodes.push_back(Node{l, r, 0, {}});
                return static_cast<int>(nodes.size()) - 1;
            }
            if (not std::isdigit(static_cast<unsigned char>(text[pos])))
                throw InvalidInput("vtree text: unexpected character '" + std::string(1, text[pos]) + "'");
            std::size_t end = pos;
            while (end < text.size() and std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
            auto var = static_cast<VarId>(std::stoul(text.substr(pos, end - pos)));
            pos = end;
            nodes.push_back(Node{-1, -1, var, {}});
            return static_cast<int>(nodes.size()) - 1;
        };
        node();
        skip();
        if (pos != text.size()) throw InvalidInput("vtree text: trailing characters");
        return Vtree(std::move(nodes));
    }
};

enum class VtreeShape { BalancedRandom, RightLinear };

/** Balanced-random: variables shuffled by `seed`, then split recursively into halves of sizes
 * ceil(m/2), floor(m/2).  Right-linear: Y0 split off first, then Y1, and so on; `seed` unused. */
inline Vtree random_vtree(std::size_t c, VtreeShape shape, std::uint64_t seed)
{
    if (c == 0) throw InvalidInput("vtree needs at least one variable");
    std::vector<VarId> order(c);
    for (std::size_t i = 0; i < c; ++i) order[i] = static_cast<VarId>(i);
    if (shape == VtreeShape::BalancedRandom) {
        Rng rng(seed);
        shuffle(order, rng);
    }

    std::vector<Vtree::Node> nodes;
    std::function<int(std::size_t, std::size_t)> build = [&](std::size_t lo, std::size_t hi) -> int {
        if (hi - lo == 1) {
            nodes.push_back(Vtree::Node{-1, -1, order[lo], {}});
            return static_cast<int>(nodes.size()) - 1;
        }
        const std::size_t mid = shape == VtreeShape::RightLinear ? lo + 1 : lo + (hi - lo + 1) / 2;
        int l = build(lo, mid);
        int r = build(mid, hi);
        nodes.push_back(Vtree::Node{l, r, 0, {}});
        return static_cast<int>(nodes.size()) - 1;
    };
    build(0, c);
    return Vtree(std::move(nodes));
}

}
