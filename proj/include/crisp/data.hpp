#pragma once

#include "crisp/constraints.hpp"
#include "crisp/error.hpp"
#include "crisp/evaluate.hpp"
#include "crisp/gating.hpp"
#include "crisp/random.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace crisp {

/// Feature/label table; row i is (X[i], Y[i]).
struct Dataset
{
    std::size_t d = 0;
    std::size_t c = 0;
    std::vector<std::vector<double>> X;
    std::vector<std::vector<std::uint8_t>> Y;

    std::size_t size() const { return X.size(); }

    void push(std::vector<double> x, std::vector<std::uint8_t> y) {
        if (x.size() != d or y.size() != c) throw InvalidInput("row dimensions differ from the dataset");
        X.push_back(std::move(x));
        Y.push_back(std::move(y));
    }

    Dataset slice(std::size_t from, std::size_t to) const {
        Dataset out{d, c, {}, {}};
        for (std::size_t i = from; i < std::min(to, size()); ++i) out.push(X[i], Y[i]);
        return out;
    }

    std::vector<Example> examples() const {
        std::vector<Example> out;
        for (std::size_t i = 0; i < size(); ++i) out.push_back({X[i], EvidenceMask::observed(Y[i])});
        return out;
    }
};

/// CSV with header `x0,...,x{d-1},y0,...,y{c-1}`.
inline void write_dataset_csv(std::ostream &os, const Dataset &ds)
{
    for (std::size_t j = 0; j < ds.d; ++j) os << (j ? "," : "") << 'x' << j;
    for (std::size_t j = 0; j < ds.c; ++j) os << (j or ds.d ? "," : "") << 'y' << j;
    os << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.d; ++j) os << (j ? "," : "") << ds.X[i][j];
        for (std::size_t j = 0; j < ds.c; ++j) os << (j or ds.d ? "," : "") << int(ds.Y[i][j]);
        os << '\n';
    }
}

inline Dataset read_dataset_csv(std::istream &is)
{
    std::string line;
    if (not std::getline(is, line)) throw InvalidInput("dataset CSV is empty");
    Dataset ds;
    {
        std::istringstream hs(line);
        std::string col;
        bool labels = false;
        while (std::getline(hs, col, ',')) {
            while (not col.empty() and std::isspace(static_cast<unsigned char>(col.back()))) col.pop_back();
            const auto expect_x = "x" + std::to_string(ds.d), expect_y = "y" + std::to_string(ds.c);
            if (not labels and col == expect_x) ++ds.d;
            else if (col == expect_y) { labels = true; ++ds.c; }
            else throw InvalidInput("dataset CSV header: unexpected column '" + col + "'");
        }
    }
    if (ds.c == 0) throw InvalidInput("dataset CSV has no label columns");
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() or line == "\r") continue;
        std::istringstream ls(line);
        std::string tok;
        std::vector<double> x;
        std::vector<std::uint8_t> y;
        while (std::getline(ls, tok, ',')) {
            if (x.size() < ds.d) {
                try { x.push_back(std::stod(tok)); }
                catch (const std::exception&) { throw InvalidInput("dataset line " + std::to_string(lineno) + ": bad feature '" + tok + "'"); }
            } else {
                while (not tok.empty() and std::isspace(static_cast<unsigned char>(tok.back()))) tok.pop_back();
                if (tok != "0" and tok != "1") throw InvalidInput("dataset line " + std::to_string(lineno) + ": labels must be 0 or 1");
                y.push_back(tok == "1");
            }
        }
        if (x.size() != ds.d or y.size() != ds.c) throw InvalidInput("dataset line " + std::to_string(lineno) + ": wrong column count");
        ds.push(std::move(x), std::move(y));
    }
    return ds;
}

inline Dataset read_dataset_file(const std::string &path)
{
    std::ifstream in(path);
    if (not in) throw InvalidInput("cannot open dataset " + path);
    return read_dataset_csv(in);
}

/// Every label flipped independently with probability eta; eta must lie in [0, 0.5).
inline std::vector<std::uint8_t> simulate_annotator(std::span<const std::uint8_t> y_true, double eta, std::uint64_t seed)
{
    if (not (eta >= 0 and eta < 0.5)) throw InvalidInput("annotator noise must lie in [0, 0.5)");
    Rng rng(seed);
    std::vector<std::uint8_t> out(y_true.begin(), y_true.end());
    for (auto &v : out) if (uniform_real(rng) < eta) v = not v;
    return out;
}

struct SyntheticConfig
{
    std::size_t c = 8;
    std::size_t d = 16;
    Hierarchy hierarchy;
    std::size_t num_examples = 1000;
    std::uint64_t seed = 0;
    double separation = 6.0;   ///< distance between class means, in units of the noise std
    double label_noise = 0.0;  ///< chance of switching on each non-ancestor label before projection
};

/** Latent class z uniform over the hierarchy's leaf labels; x ~ N(mu_z, I); y = ancestor closure of z,
 * optionally with extra labels switched on and projected back to feasibility.  Class means are
 * orthogonal (pairwise distance = separation) when there are at most d classes, Gaussian otherwise. */
inline Dataset generate_synthetic(const SyntheticConfig &cfg)
{
    if (cfg.c == 0 or cfg.d == 0) throw InvalidInput("synthetic data needs c >= 1 and d >= 1");
    if (cfg.hierarchy.num_vars() != cfg.c) throw InvalidInput("hierarchy ranges over a different number of labels");
    if (not (cfg.label_noise >= 0 and cfg.label_noise < 1)) throw InvalidInput("label noise must lie in [0, 1)");
    const auto classes = cfg.hierarchy.leaves();
    Rng rng(cfg.seed);
    std::vector<std::vector<double>> mu(classes.size(), std::vector<double>(cfg.d, 0.0));
    if (classes.size() <= cfg.d) {
        auto axes = random_permutation(cfg.d, rng);
        for (std::size_t k = 0; k < classes.size(); ++k) mu[k][axes[k]] = cfg.separation / std::sqrt(2.0);
    } else {
        for (auto &m : mu) for (auto &v : m) v = cfg.separation / std::sqrt(2.0) * standard_normal(rng);
    }
    std::vector<VarSet> closure;
    for (auto z : classes) closure.push_back(cfg.hierarchy.ancestor_closure(z));

    Dataset ds{cfg.d, cfg.c, {}, {}};
    for (std::size_t n = 0; n < cfg.num_examples; ++n) {
        const auto k = uniform_index(rng, classes.size());
        std::vector<double> x(cfg.d);
        for (std::size_t j = 0; j < cfg.d; ++j) x[j] = mu[k][j] + standard_normal(rng);
        std::vector<std::uint8_t> y(cfg.c, 0);
        for (auto v : closure[k].to_vector()) y[v] = 1;
        if (cfg.label_noise > 0) {
            for (std::size_t v = 0; v < cfg.c; ++v)
                if (not y[v] and uniform_real(rng) < cfg.label_noise) y[v] = 1;
            y = cfg.hierarchy.close_upward(std::move(y));
        }
        ds.push(std::move(x), std::move(y));
    }
    return ds;
}

/** Label hierarchy of the interactive benchmark for c = 8: two roots (0, 1); 0 has children 2 and 3,
 * 1 has children 4 and 5, 2 has children 6 and 7.  Five leaf classes. */
inline Hierarchy benchmark_hierarchy()
{
    return Hierarchy(8, {{2, 0}, {3, 0}, {4, 1}, {5, 1}, {6, 2}, {7, 2}});
}

}
