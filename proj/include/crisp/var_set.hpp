#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace crisp {

using VarId = std::uint32_t;

/** Dynamic bitset over label variables `Y0 .. Y{n-1}`.  Ordering and equality are by content,
 * independent of the capacity the set was created with. */
class VarSet
{
    std::vector<std::uint64_t> words_;

    void grow(std::size_t word) { if (word >= words_.size()) words_.resize(word + 1, 0); }

    void trim() { while (not words_.empty() and words_.back() == 0) words_.pop_back(); }

    public:
    VarSet() = default;
    VarSet(std::initializer_list<VarId> vars) { for (auto v : vars) insert(v); }

    template<typename It>
    VarSet(It first, It last) { for (; first != last; ++first) insert(*first); }

    /// The set {0, ..., n-1}.
    static VarSet range(std::size_t n) {
        VarSet s;
        for (std::size_t v = 0; v < n; ++v) s.insert(static_cast<VarId>(v));
        return s;
    }

    static VarSet from_mask(std::uint64_t mask) {
        VarSet s;
        if (mask) s.words_.push_back(mask);
        return s;
    }

    void insert(VarId v) { grow(v / 64); words_[v / 64] |= std::uint64_t(1) << (v % 64); }

    void erase(VarId v) {
        if (v / 64 < words_.size()) words_[v / 64] &= ~(std::uint64_t(1) << (v % 64));
        trim();
    }

    bool contains(VarId v) const {
        return v / 64 < words_.size() and ((words_[v / 64] >> (v % 64)) & 1u);
    }

    std::size_t size() const {
        std::size_t n = 0;
        for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
        return n;
    }

    bool empty() const {
        return std::all_of(words_.begin(), words_.end(), [](auto w) { return w == 0; });
    }

    VarSet & operator|=(const VarSet &other) {
        if (other.words_.size() > words_.size()) words_.resize(other.words_.size(), 0);
        for (std::size_t i = 0; i < other.words_.size(); ++i) words_[i] |= other.words_[i];
        return *this;
    }

    VarSet & operator&=(const VarSet &other) {
        if (words_.size() > other.words_.size()) words_.resize(other.words_.size());
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= other.words_[i];
        trim();
        return *this;
    }

    VarSet & operator-=(const VarSet &other) {
        for (std::size_t i = 0; i < std::min(words_.size(), other.words_.size()); ++i)
            words_[i] &= ~other.words_[i];
        trim();
        return *this;
    }

    friend VarSet operator|(VarSet a, const VarSet &b) { return a |= b; }
    friend VarSet operator&(VarSet a, const VarSet &b) { return a &= b; }
    friend VarSet operator-(VarSet a, const VarSet &b) { return a -= b; }

    bool intersects(const VarSet &other) const {
        for (std::size_t i = 0; i < std::min(words_.size(), other.words_.size()); ++i)
            if (words_[i] & other.words_[i]) return true;
        return false;
    }

    bool subset_of(const VarSet &other) const { return (*this - other).empty(); }

    /// Members in ascending order.
    std::vector<VarId> to_vector() const {
        std::vector<VarId> out;
        for (std::size_t i = 0; i < words_.size(); ++i) {
            auto w = words_[i];
            while (w) {
                out.push_back(static_cast<VarId>(i * 64 + std::countr_zero(w)));
                w &= w - 1;
            }
        }
        return out;
    }

    /// Low 64 bits; only meaningful when every member is below 64.
    std::uint64_t mask() const { return words_.empty() ? 0 : words_[0]; }

    std::string to_string() const {
        std::string s = "{";
        bool first = true;
        for (auto v : to_vector()) {
            if (not first) s += ',';
            s += "Y" + std::to_string(v);
            first = false;
        }
        return s + "}";
    }

    friend bool operator==(const VarSet &a, const VarSet &b) {
        auto n = std::max(a.words_.size(), b.words_.size());
        for (std::size_t i = 0; i < n; ++i) {
            auto wa = i < a.words_.size() ? a.words_[i] : 0;
            auto wb = i < b.words_.size() ? b.words_[i] : 0;
            if (wa != wb) return false;
        }
        return true;
    }

    /// Lexicographic order on the ascending member lists.
    friend bool lex_less(const VarSet &a, const VarSet &b) {
        auto va = a.to_vector(), vb = b.to_vector();
        return std::lexicographical_compare(va.begin(), va.end(), vb.begin(), vb.end());
    }

    const std::vector<std::uint64_t> & words() const { return words_; }
};

struct VarSetHash
{
    std::size_t operator()(const VarSet &s) const {
        std::size_t h = 0xcbf29ce484222325ull;
        for (auto w : s.words()) h = (h ^ w) * 0x100000001b3ull;
        return h;
    }
};

}
