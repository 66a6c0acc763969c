#pragma once

#include "crisp/circuit.hpp"
#include "crisp/error.hpp"
#include "crisp/evaluate.hpp"
#include "crisp/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace crisp {

inline constexpr double kLeafClampLo = 1e-6;
inline constexpr double kLeafClampHi = 1 - 1e-6;

/// One supervised example: features plus the observed labels (unobserved ones are marginalized).
struct Example
{
    std::vector<double> x;
    EvidenceMask evidence;
};

/** Perceptron mapping features to a circuit parameter vector.  Hidden layers use tanh; the linear
 * output is normalized per sum block by log-softmax and per leaf by a clamped logistic. */
class GatingNet
{
    std::vector<std::size_t> dims_;
    ParamLayout layout_;
    std::vector<double> w_;                 ///< per layer: W (out x in, row-major), then b (out)
    std::vector<std::size_t> offset_;       ///< start of each layer in w_

    void index_layers() {
        offset_.clear();
        std::size_t at = 0;
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            offset_.push_back(at);
            at += dims_[l + 1] * (dims_[l] + 1);
        }
        offset_.push_back(at);
    }

    public:
    GatingNet() = default;

    GatingNet(std::vector<std::size_t> dims, ParamLayout layout, std::uint64_t seed)
        : dims_(std::move(dims)), layout_(std::move(layout))
    {
        validate();
        index_layers();
        w_.assign(offset_.back(), 0.0);
        Rng rng(seed);
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            const double scale = 1.0 / std::sqrt(double(std::max<std::size_t>(dims_[l], 1)));
            for (std::size_t k = 0; k < dims_[l + 1] * dims_[l]; ++k) w_[offset_[l] + k] = scale * standard_normal(rng);
        }
    }

    /// Rebuilds a net from stored weights.
    GatingNet(std::vector<std::size_t> dims, ParamLayout layout, std::vector<double> weights)
        : dims_(std::move(dims)), layout_(std::move(layout)), w_(std::move(weights))
    {
        validate();
        index_layers();
        if (w_.size() != offset_.back()) throw ConfigError("weight count does not match the layer dimensions");
    }

    void validate() const {
        if (dims_.size() < 2) throw ConfigError("gating net needs at least input and output dimensions");
        for (std::size_t l = 1; l < dims_.size(); ++l)
            if (dims_[l] == 0) throw ConfigError("gating net layers must be non-empty");
        if (dims_.back() != layout_.total())
            throw ConfigError("gating output width " + std::to_string(dims_.back()) + " != parameter count "
                              + std::to_string(layout_.total()));
    }

    const std::vector<std::size_t> & dims() const { return dims_; }
    std::size_t input_dim() const { return dims_.front(); }
    const ParamLayout & layout() const { return layout_; }
    std::vector<double> & weights() { return w_; }
    const std::vector<double> & weights() const { return w_; }
    std::size_t num_layers() const { return dims_.size() - 1; }

    /// Activations of every layer (input first, raw output last).
    struct Trace { std::vector<std::vector<double>> act; };

    std::vector<double> raw(std::span<const double> x, Trace *trace = nullptr) const {
        if (x.size() != dims_.front())
            throw InvalidInput("feature vector has " + std::to_string(x.size()) + " entries, net expects " + std::to_string(dims_.front()));
        for (double v : x) if (not std::isfinite(v)) throw NumericError("non-finite feature");
        std::vector<double> a(x.begin(), x.end());
        if (trace) { trace->act.clear(); trace->act.push_back(a); }
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            const std::size_t in = dims_[l], out = dims_[l + 1];
            const double *W = w_.data() + offset_[l], *b = W + out * in;
            std::vector<double> z(out);
            for (std::size_t o = 0; o < out; ++o) {
                double s = b[o];
                for (std::size_t i = 0; i < in; ++i) s += W[o * in + i] * a[i];
                z[o] = (l + 2 < dims_.size()) ? std::tanh(s) : s;
            }
            a = std::move(z);
            if (trace) trace->act.push_back(a);
        }
        return a;
    }

    /// Raw outputs to a valid parameter vector.
    ParamVector head(std::span<const double> z) const {
        ParamVector p(std::vector<double>(z.begin(), z.end()));
        for (auto blk : layout_.sum_blocks) {
            double m = -INFINITY;
            for (std::size_t k = 0; k < blk.size; ++k) m = std::max(m, z[blk.offset + k]);
            double s = 0;
            for (std::size_t k = 0; k < blk.size; ++k) s += std::exp(z[blk.offset + k] - m);
            const double lse = m + std::log(s);
            for (std::size_t k = 0; k < blk.size; ++k) p[blk.offset + k] = z[blk.offset + k] - lse;
        }
        for (auto s : layout_.leaf_slots) p[s] = std::clamp(1.0 / (1.0 + std::exp(-z[s])), kLeafClampLo, kLeafClampHi);
        return p;
    }

    ParamVector forward(std::span<const double> x) const { return head(raw(x)); }

    /** Pulls d(loss)/d(params) back through the head and the perceptron, adding into `gw`. */
    void backward(const Trace &tr, const ParamVector &params, std::span<const double> dparams, std::span<double> gw) const {
        const auto &z = tr.act.back();
        std::vector<double> d(dparams.begin(), dparams.end());
        for (auto blk : layout_.sum_blocks) {
            double gs = 0;
            for (std::size_t k = 0; k < blk.size; ++k) gs += dparams[blk.offset + k];
            for (std::size_t k = 0; k < blk.size; ++k)
                d[blk.offset + k] = dparams[blk.offset + k] - std::exp(params[blk.offset + k]) * gs;
        }
        for (auto s : layout_.leaf_slots) {
            const double sg = 1.0 / (1.0 + std::exp(-z[s]));
            d[s] = (sg < kLeafClampLo or sg > kLeafClampHi) ? 0.0 : dparams[s] * sg * (1 - sg);
        }
        for (std::size_t l = dims_.size() - 1; l-- > 0;) {
            const std::size_t in = dims_[l], out = dims_[l + 1];
            const double *W = w_.data() + offset_[l];
            double *gW = gw.data() + offset_[l], *gb = gW + out * in;
            const auto &a = tr.act[l];
            std::vector<double> da(in, 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                if (d[o] == 0.0) continue;
                gb[o] += d[o];
                for (std::size_t i = 0; i < in; ++i) {
                    gW[o * in + i] += d[o] * a[i];
                    da[i] += d[o] * W[o * in + i];
                }
            }
            if (l == 0) break;
            for (std::size_t i = 0; i < in; ++i) da[i] *= 1 - a[i] * a[i]; // tanh'
            d = std::move(da);
        }
    }
};

struct LossAndGrad
{
    double loss = 0;
    std::vector<double> grad;   ///< w.r.t. the net weights
};

/** Mean negative log-likelihood -1/B sum_b log p(evidence_b | x_b) and its gradient.  Unnormalized
 * circuits (constrained products) subtract their per-example log normalizer. */
inline LossAndGrad nll(const GatingNet &net, const Circuit &c, std::span<const Example> batch)
{
    if (batch.empty()) throw InvalidInput("empty batch");
    if (net.layout() != c.layout()) throw ConfigError("gating net layout does not match the circuit");
    LossAndGrad out;
    out.grad.assign(net.weights().size(), 0.0);
    const double inv = 1.0 / double(batch.size());
    const bool needs_z = not c.locally_normalized();
    const auto all = EvidenceMask::all_marginalized(c.num_vars());
    std::vector<double> dparams(c.num_params()), lv, flow;
    GatingNet::Trace tr;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto &ex = batch[b];
        if (ex.evidence.size() != c.num_vars()) throw InvalidInput("example label count differs from the circuit");
        const auto params = net.head(net.raw(ex.x, &tr));
        std::fill(dparams.begin(), dparams.end(), 0.0);
        auto mode = [&](VarId v) { return leaf_mode(ex.evidence[v]); };
        const double l = detail::forward_log(c, params, mode, lv);
        if (l == -INFINITY) throw InfiniteLossError(b, "example " + std::to_string(b) + " has zero probability under the model");
        detail::backward_log(c, params, mode, lv, -inv, dparams, flow);
        double lz = 0;
        if (needs_z) {
            auto marg = [](VarId) { return LeafMode::Joint; };
            lz = detail::forward_log(c, params, marg, lv);
            detail::backward_log(c, params, marg, lv, inv, dparams, flow);
        }
        out.loss -= inv * (l - lz);
        net.backward(tr, params, dparams, out.grad);
    }
    return out;
}

struct TrainConfig
{
    double learning_rate = 0.05;
    std::size_t steps = 200;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    double momentum = 0.9;
    double clip_norm = 5.0;

    void validate() const {
        if (not (learning_rate >= 0) or not std::isfinite(learning_rate)) throw ConfigError("learning rate must be finite and non-negative");
        if (batch_size < 1) throw ConfigError("batch size must be at least 1");
        if (not (momentum >= 0 and momentum < 1)) throw ConfigError("momentum must lie in [0, 1)");
        if (not (clip_norm > 0)) throw ConfigError("gradient clip norm must be positive");
    }
};

/// Optimizer state that survives across calls to `fit` (interactive loops keep it per run).
struct Momentum
{
    std::vector<double> velocity;
};

struct FitResult
{
    std::vector<double> losses;   ///< minibatch loss before each step
};

/** Minibatch SGD with momentum and gradient-norm clipping.  Batches are drawn by reshuffling the
 * dataset every epoch (seeded).  A non-finite loss aborts with the step index. */
inline FitResult fit(GatingNet &net, const Circuit &c, std::span<const Example> data, const TrainConfig &cfg,
                     Momentum *state = nullptr)
{
    cfg.validate();
    if (data.empty()) throw InvalidInput("empty training set");
    Momentum local;
    Momentum &mom = state ? *state : local;
    if (mom.velocity.size() != net.weights().size()) mom.velocity.assign(net.weights().size(), 0.0);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();
    FitResult out;
    std::vector<Example> batch;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        batch.clear();
        const std::size_t B = std::min(cfg.batch_size, data.size());
        while (batch.size() < B) {
            if (cursor == order.size()) { shuffle(order, rng); cursor = 0; }
            batch.push_back(data[order[cursor++]]);
        }
        LossAndGrad lg;
        try {
            lg = nll(net, c, batch);
        } catch (const InfiniteLossError&) {
            throw DivergenceError(step, "infinite loss at step " + std::to_string(step));
        }
        if (not std::isfinite(lg.loss)) throw DivergenceError(step, "non-finite loss at step " + std::to_string(step));
        out.losses.push_back(lg.loss);
        double norm = 0;
        for (double g : lg.grad) norm += g * g;
        norm = std::sqrt(norm);
        if (not std::isfinite(norm)) throw DivergenceError(step, "non-finite gradient at step " + std::to_string(step));
        const double scale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
        auto &w = net.weights();
        for (std::size_t k = 0; k < w.size(); ++k) {
            mom.velocity[k] = cfg.momentum * mom.velocity[k] + scale * lg.grad[k];
            w[k] -= cfg.learning_rate * mom.velocity[k];
        }
    }
    return out;
}

/// Average negative log-likelihood over a dataset without gradients.
inline double mean_nll(const GatingNet &net, const Circuit &c, std::span<const Example> data)
{
    double s = 0;
    const bool needs_z = not c.locally_normalized();
    std::vector<double> lv;
    for (const auto &ex : data) {
        const auto params = net.forward(ex.x);
        const double z = needs_z ? log_normalizer(c, params) : 0.0;
        s -= evaluate_log(c, params, ex.evidence, lv) - z;
    }
    return s / double(data.size());
}

/** Text form:
 *      crisp-gating-net 1
 *      dims <n> <d> <h1> ... <out>
 *      blocks <n> then n lines `<offset> <size>`
 *      leaves <n> <slot> ...
 *      weights <n> then one value per line, 17 significant digits */
inline void write_gating_net(std::ostream &os, const GatingNet &net)
{
    os << "crisp-gating-net 1\n";
    os << "dims " << net.dims().size();
    for (auto d : net.dims()) os << ' ' << d;
    os << '\n';
    const auto &l = net.layout();
    os << "blocks " << l.sum_blocks.size() << '\n';
    for (auto b : l.sum_blocks) os << b.offset << ' ' << b.size << '\n';
    os << "leaves " << l.leaf_slots.size();
    for (auto s : l.leaf_slots) os << ' ' << s;
    os << '\n';
    os << "weights " << net.weights().size() << '\n';
    os << std::setprecision(17);
    for (double w : net.weights()) os << w << '\n';
}

inline GatingNet read_gating_net(std::istream &is)
{
    auto expect = [&](const char *tag) {
        std::string t;
        if (not (is >> t) or t != tag) throw InvalidInput(std::string("gating net file: expected '") + tag + "'");
    };
    auto count = [&] {
        long long n;
        if (not (is >> n) or n < 0) throw InvalidInput("gating net file: bad count");
        return static_cast<std::size_t>(n);
    };
    expect("crisp-gating-net");
    if (count() != 1) throw InvalidInput("gating net file: unsupported version");
    expect("dims");
    std::vector<std::size_t> dims(count());
    for (auto &d : dims) d = count();
    ParamLayout layout;
    const std::size_t total = dims.empty() ? 0 : dims.back();
    layout.kinds.assign(total, SlotKind::LeafProb);
    expect("blocks");
    layout.sum_blocks.resize(count());
    for (auto &b : layout.sum_blocks) {
        b.offset = count();
        b.size = count();
        if (b.offset + b.size > total) throw InvalidInput("gating net file: sum block outside the output");
        for (std::size_t k = 0; k < b.size; ++k) layout.kinds[b.offset + k] = SlotKind::SumWeight;
    }
    expect("leaves");
    layout.leaf_slots.resize(count());
    for (auto &s : layout.leaf_slots) {
        s = count();
        if (s >= total) throw InvalidInput("gating net file: leaf slot outside the output");
    }
    if (layout.leaf_slots.size() + layout.num_sum_weights() != total)
        throw InvalidInput("gating net file: layout does not cover the output");
    expect("weights");
    std::vector<double> w(count());
    for (auto &v : w) {
        std::string tok;
        if (not (is >> tok)) throw InvalidInput("gating net file: truncated weights");
        try { v = std::stod(tok); } catch (const std::exception&) { throw InvalidInput("gating net file: bad weight '" + tok + "'"); }
    }
    return GatingNet(std::move(dims), std::move(layout), std::move(w));
}

}
