#pragma once

#include "crisp/algebra.hpp"
#include "crisp/data.hpp"
#include "crisp/error.hpp"
#include "crisp/gating.hpp"
#include "crisp/queries.hpp"
#include "crisp/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace crisp {

enum class Measure { Entropy, Margin };

struct QueryDecision
{
    bool query = false;
    double value = 0;
};

/// Query iff the chosen uncertainty of the predictive distribution reaches `threshold`.
inline QueryDecision should_query(const Circuit &c, const ParamVector &params, double threshold, Measure measure)
{
    const double u = measure == Measure::Entropy ? shannon_entropy(c, params) : margin(c, params);
    return {u >= threshold, u};
}

struct SubsetQuery
{
    VarSet Q;
    double objective_value = 0;  ///< Rényi entropy of the marginal over Q, nats
    double cost = 0;
    std::size_t expanded = 0;    ///< search nodes expanded (exhaustive: subsets scored)
    std::size_t evaluations = 0; ///< distinct objective evaluations
};

/// Objective memoized by subset bit mask.
class SubsetObjective
{
    std::function<double(const VarSet&)> f_;
    std::unordered_map<std::uint64_t, double> memo_;

    public:
    explicit SubsetObjective(std::function<double(const VarSet&)> f) : f_(std::move(f)) { }

    double operator()(const VarSet &Q) {
        const auto m = Q.mask();
        if (auto it = memo_.find(m); it != memo_.end()) return it->second;
        const double v = f_(Q);
        memo_.emplace(m, v);
        return v;
    }

    std::size_t evaluations() const { return memo_.size(); }
};

/// Rényi objective over a materialized power circuit.
inline SubsetObjective renyi_objective(const PowerCircuit &pc, const ParamVector &params)
{
    auto scratch = std::make_shared<std::vector<double>>();
    return SubsetObjective([&pc, &params, scratch](const VarSet &Q) { return renyi_entropy(pc, params, Q, pc.alpha(), *scratch); });
}

namespace detail {

inline constexpr double kSubsetTie = 1e-12;

inline bool better_subset(double v, const VarSet &Q, double best, const VarSet &bestQ)
{
    return v > best + kSubsetTie or (std::abs(v - best) <= kSubsetTie and lex_less(Q, bestQ));
}

inline std::vector<double> resolve_costs(std::size_t c, std::span<const double> costs)
{
    if (costs.empty()) return std::vector<double>(c, 1.0);
    if (costs.size() != c) throw InvalidInput("cost vector has the wrong length");
    for (double x : costs) if (not (x > 0) or not std::isfinite(x)) throw InvalidInput("label costs must be positive");
    return {costs.begin(), costs.end()};
}

inline bool affordable(double cost, double budget) { return cost <= budget + 1e-12; }

}

/** Scores every budget-feasible nonempty subset.  Ties go to the lexicographically smallest set.
 * An empty query is returned only when no single label is affordable. */
inline SubsetQuery select_subset_exhaustive(SubsetObjective &R, std::size_t c, double budget, std::span<const double> costs_in = {})
{
    if (c > 20) throw InvalidInput("exhaustive subset search is limited to 20 labels");
    const auto costs = detail::resolve_costs(c, costs_in);
    SubsetQuery best;
    bool have = false;
    for (std::uint64_t m = 1; m < (std::uint64_t(1) << c); ++m) {
        double cost = 0;
        for (std::size_t v = 0; v < c; ++v) if ((m >> v) & 1u) cost += costs[v];
        if (not detail::affordable(cost, budget)) continue;
        const auto Q = VarSet::from_mask(m);
        const double r = R(Q);
        ++best.expanded;
        if (not have or detail::better_subset(r, Q, best.objective_value, best.Q)) {
            best.Q = Q;
            best.objective_value = r;
            best.cost = cost;
            have = true;
        }
    }
    best.evaluations = R.evaluations();
    return best;
}

/// Repeatedly adds the affordable label with the largest gain (lowest index on ties).
inline SubsetQuery select_subset_greedy(SubsetObjective &R, std::size_t c, double budget, std::span<const double> costs_in = {})
{
    const auto costs = detail::resolve_costs(c, costs_in);
    SubsetQuery q;
    double value = 0;
    for (;;) {
        int pick = -1;
        double pick_value = -INFINITY;
        for (std::size_t v = 0; v < c; ++v) {
            if (q.Q.contains(static_cast<VarId>(v)) or not detail::affordable(q.cost + costs[v], budget)) continue;
            auto Q = q.Q;
            Q.insert(static_cast<VarId>(v));
            const double r = R(Q);
            if (r > pick_value) { pick_value = r; pick = static_cast<int>(v); }
        }
        if (pick < 0) break;
        q.Q.insert(static_cast<VarId>(pick));
        q.cost += costs[pick];
        value = pick_value;
        ++q.expanded;
    }
    q.objective_value = q.Q.empty() ? 0.0 : value;
    q.evaluations = R.evaluations();
    return q;
}

struct BranchAndBoundOptions
{
    bool verify_bound = false;   ///< check the bound against every expanded node's children
};

/** Depth-first search over the set-enumeration tree (children of Q add one later label).  A node's
 * bound is the objective on Q plus every later label that is still affordable; by subset
 * monotonicity it dominates the whole subtree.  Subtrees whose bound falls below the incumbent are
 * never expanded.  Labels are visited in decreasing order of their singleton objective and the
 * greedy solution seeds the incumbent. */
inline SubsetQuery select_subset_bb(SubsetObjective &R, std::size_t c, double budget, std::span<const double> costs_in = {},
                                    BranchAndBoundOptions opt = {})
{
    if (c > 64) throw InvalidInput("branch-and-bound subset search is limited to 64 labels");
    const auto costs = detail::resolve_costs(c, costs_in);

    std::vector<VarId> order(c);
    std::vector<double> single(c, -INFINITY);
    for (std::size_t v = 0; v < c; ++v) {
        order[v] = static_cast<VarId>(v);
        if (detail::affordable(costs[v], budget)) single[v] = R(VarSet{static_cast<VarId>(v)});
    }
    std::stable_sort(order.begin(), order.end(), [&](VarId a, VarId b) { return single[a] > single[b]; });

    SubsetQuery best = select_subset_greedy(R, c, budget, costs);
    best.expanded = 0;
    if (best.Q.empty()) { best.evaluations = R.evaluations(); return best; }

    std::size_t expanded = 0;
    std::function<void(const VarSet&, double, std::size_t)> visit = [&](const VarSet &Q, double cost, std::size_t from) {
        VarSet reach = Q;
        std::vector<std::size_t> kids;
        for (std::size_t k = from; k < c; ++k)
            if (detail::affordable(cost + costs[order[k]], budget)) { reach.insert(order[k]); kids.push_back(k); }
        const double bound = R(reach);
        if (bound < best.objective_value - detail::kSubsetTie) return;
        ++expanded;
        if (not Q.empty()) {
            const double r = R(Q);
            if (opt.verify_bound and r > bound + 1e-9) throw PropertyViolation("subset bound violated at " + Q.to_string());
            if (detail::better_subset(r, Q, best.objective_value, best.Q)) best = {Q, r, cost, 0, 0};
        }
        for (auto k : kids) {
            auto child = Q;
            child.insert(order[k]);
            if (opt.verify_bound and R(child) > bound + 1e-9)
                throw PropertyViolation("subset bound violated at " + child.to_string() + " (monotonicity fails)");
            visit(child, cost + costs[order[k]], k + 1);
        }
    };
    visit(VarSet{}, 0.0, 0);
    best.expanded = expanded;
    best.evaluations = R.evaluations();
    return best;
}

enum class SubsetSearch { Exhaustive, Greedy, BranchAndBound };

inline SubsetQuery select_subset(SubsetSearch how, SubsetObjective &R, std::size_t c, double budget, std::span<const double> costs = {})
{
    switch (how) {
        case SubsetSearch::Exhaustive: return select_subset_exhaustive(R, c, budget, costs);
        case SubsetSearch::Greedy: return select_subset_greedy(R, c, budget, costs);
        default: return select_subset_bb(R, c, budget, costs);
    }
}

// ---------------------------------------------------------------------------------------------------
// Interactive loops
// ---------------------------------------------------------------------------------------------------

/// Everything a loop needs to predict: shared circuit, gating net, optional power circuit.
struct ConditionalModel
{
    Circuit circuit;
    GatingNet net;
    std::optional<PowerCircuit> power;

    ParamVector params(std::span<const double> x) const { return net.forward(x); }

    void materialize_power(unsigned alpha) {
        if (not power or power->alpha() != alpha) power = crisp::power(circuit, alpha);
    }
};

struct EvalMetrics
{
    double exact_match = 0;
    double hamming = 0;   ///< per-label accuracy
};

inline EvalMetrics evaluate_accuracy(const ConditionalModel &m, const Dataset &held_out)
{
    EvalMetrics out;
    if (held_out.size() == 0) return out;
    for (std::size_t i = 0; i < held_out.size(); ++i) {
        const auto pred = map_state(m.circuit, m.params(held_out.X[i])).assignment;
        std::size_t agree = 0;
        for (std::size_t v = 0; v < held_out.c; ++v) agree += pred[v] == held_out.Y[i][v];
        out.exact_match += agree == held_out.c;
        out.hamming += double(agree) / double(held_out.c);
    }
    out.exact_match /= double(held_out.size());
    out.hamming /= double(held_out.size());
    return out;
}

struct TraceRow
{
    std::size_t round = 0;
    std::size_t instance = 0;
    double uncertainty = 0;
    bool queried = false;
    std::string subset;             ///< queried labels, e.g. "{Y0,Y3}"; "-" if none
    std::string labels;             ///< labels received, one digit per label, '?' if not requested
    double suspiciousness = NAN;    ///< skeptical runs only
    bool corrupted = false;         ///< skeptical runs: the annotation differed from the truth
    double cost = 0;
    double cumulative_cost = 0;
    double exact_match = NAN;
    double hamming = NAN;
};

struct InteractionTrace
{
    std::vector<TraceRow> rows;

    std::size_t num_queries() const {
        return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const TraceRow &r) { return r.queried; }));
    }
    double total_cost() const { return rows.empty() ? 0.0 : rows.back().cumulative_cost; }
    EvalMetrics final_metrics() const {
        for (auto it = rows.rbegin(); it != rows.rend(); ++it)
            if (not std::isnan(it->exact_match)) return {it->exact_match, it->hamming};
        return {};
    }
};

/// Columns: round,instance,uncertainty,queried,subset,labels,suspiciousness,corrupted,cost,cumulative_cost,exact_match,hamming
inline void write_trace_csv(std::ostream &os, const InteractionTrace &t)
{
    os << "round,instance,uncertainty,queried,subset,labels,suspiciousness,corrupted,cost,cumulative_cost,exact_match,hamming\n";
    os << std::setprecision(10);
    auto num = [&](double v) -> std::ostream & { if (std::isnan(v)) os << ""; else os << v; return os; };
    for (const auto &r : t.rows) {
        os << r.round << ',' << r.instance << ',';
        num(r.uncertainty) << ',' << int(r.queried) << ",\"" << r.subset << "\"," << r.labels << ',';
        num(r.suspiciousness) << ',' << int(r.corrupted) << ',' << r.cost << ',' << r.cumulative_cost << ',';
        num(r.exact_match) << ',';
        num(r.hamming) << '\n';
    }
}

struct ReplayConfig
{
    std::size_t buffer_size = 256;
    TrainConfig update{0.05, 20, 16, 0, 0.9, 5.0};
};

namespace detail {

/// Bounded buffer of acquired examples plus the optimizer state of the run.
class Learner
{
    ConditionalModel &model_;
    ReplayConfig cfg_;
    std::deque<Example> buffer_;
    Momentum mom_;
    std::uint64_t seed_;
    std::size_t updates_ = 0;

    public:
    Learner(ConditionalModel &m, ReplayConfig cfg, std::uint64_t seed) : model_(m), cfg_(cfg), seed_(seed) {
        if (cfg_.buffer_size < 1) throw ConfigError("replay buffer must hold at least one example");
        cfg_.update.validate();
    }

    void acquire(Example ex) {
        buffer_.push_back(std::move(ex));
        if (buffer_.size() > cfg_.buffer_size) buffer_.pop_front();
        std::vector<Example> data(buffer_.begin(), buffer_.end());
        auto tc = cfg_.update;
        tc.seed = derive_seed(seed_, updates_++);
        fit(model_.net, model_.circuit, data, tc, &mom_);
    }
};

inline std::string labels_string(std::span<const std::uint8_t> y, const VarSet *only = nullptr)
{
    std::string s;
    for (std::size_t v = 0; v < y.size(); ++v) s += (only and not only->contains(static_cast<VarId>(v))) ? '?' : char('0' + y[v]);
    return s;
}

}

enum class QueryMode { FullLabel, Subset };
enum class QueryPolicy { Uncertainty, Random };

struct ActiveConfig
{
    double threshold = 0.5;
    Measure measure = Measure::Entropy;
    QueryMode mode = QueryMode::FullLabel;
    QueryPolicy policy = QueryPolicy::Uncertainty;
    std::size_t random_queries = 0;      ///< Random policy: number of rounds queried, drawn uniformly
    double budget = 3;                   ///< Subset mode: a_max
    std::vector<double> costs;           ///< per-label costs; empty means 1 each
    unsigned alpha = kDefaultAlpha;
    SubsetSearch search = SubsetSearch::BranchAndBound;
    double annotator_noise = 0.0;
    ReplayConfig replay;
    std::size_t eval_every = 1;          ///< held-out evaluation period in rounds (last round always)
    std::uint64_t seed = 0;
};

/** Selective sampling over `stream`.  Each round the model either skips the instance or asks the
 * annotator for the full label vector (or, in subset mode, for the labels of the budget-feasible
 * subset with maximal Rényi entropy).  Acquired examples enter the replay buffer; partial answers
 * contribute their marginal likelihood. */
inline InteractionTrace active_run(ConditionalModel &model, const Dataset &stream, const Dataset &held_out, const ActiveConfig &cfg)
{
    if (stream.c != model.circuit.num_vars() or stream.d != model.net.input_dim())
        throw ConfigError("stream dimensions do not match the model");
    if (cfg.eval_every < 1) throw ConfigError("eval_every must be at least 1");
    const auto costs = detail::resolve_costs(stream.c, cfg.costs);
    if (cfg.mode == QueryMode::Subset) model.materialize_power(cfg.alpha);

    std::vector<char> random_pick;
    if (cfg.policy == QueryPolicy::Random) {
        if (cfg.random_queries > stream.size()) throw ConfigError("more random queries than rounds");
        Rng rng(derive_seed(cfg.seed, 0x5eed));
        auto perm = random_permutation(stream.size(), rng);
        random_pick.assign(stream.size(), 0);
        for (std::size_t k = 0; k < cfg.random_queries; ++k) random_pick[perm[k]] = 1;
    }

    detail::Learner learner(model, cfg.replay, derive_seed(cfg.seed, 1));
    InteractionTrace trace;
    double cumulative = 0;
    for (std::size_t t = 0; t < stream.size(); ++t) {
        TraceRow row;
        row.round = t;
        row.instance = t;
        const auto &x = stream.X[t];
        const auto params = model.params(x);
        const double u = cfg.measure == Measure::Entropy ? shannon_entropy(model.circuit, params) : margin(model.circuit, params);
        row.uncertainty = u;
        row.queried = cfg.policy == QueryPolicy::Random ? bool(random_pick[t]) : u >= cfg.threshold;
        row.subset = "-";
        row.labels = std::string(stream.c, '?');
        if (row.queried) {
            const auto answer = simulate_annotator(stream.Y[t], cfg.annotator_noise, derive_seed(cfg.seed, 1000 + t));
            EvidenceMask ev(stream.c);
            VarSet Q = VarSet::range(stream.c);
            if (cfg.mode == QueryMode::Subset) {
                auto R = renyi_objective(*model.power, params);
                auto sq = select_subset(cfg.search, R, stream.c, cfg.budget, costs);
                Q = sq.Q;
            }
            for (auto v : Q.to_vector()) { ev.observe(v, answer[v]); row.cost += costs[v]; }
            row.subset = Q.to_string();
            row.labels = detail::labels_string(answer, &Q);
            if (not Q.empty()) learner.acquire({x, ev});
        }
        cumulative += row.cost;
        row.cumulative_cost = cumulative;
        if ((t + 1) % cfg.eval_every == 0 or t + 1 == stream.size()) {
            const auto m = evaluate_accuracy(model, held_out);
            row.exact_match = m.exact_match;
            row.hamming = m.hamming;
        }
        trace.rows.push_back(std::move(row));
    }
    return trace;
}

struct SkepticalConfig
{
    double threshold = 0.5;              ///< T_s
    ReplayConfig replay;
    std::size_t eval_every = 1;
    std::uint64_t seed = 0;
};

struct SkepticalSummary
{
    std::size_t flagged = 0;
    std::size_t flagged_corrupted = 0;
    std::size_t corrupted = 0;
    std::size_t rounds = 0;

    double precision() const { return flagged ? double(flagged_corrupted) / double(flagged) : 0.0; }
    double base_rate() const { return rounds ? double(corrupted) / double(rounds) : 0.0; }
};

inline SkepticalSummary summarize(const InteractionTrace &t)
{
    SkepticalSummary s;
    for (const auto &r : t.rows) {
        ++s.rounds;
        s.corrupted += r.corrupted;
        s.flagged += r.queried;
        s.flagged_corrupted += r.queried and r.corrupted;
    }
    return s;
}

/** Skeptical learning: every example arrives with a possibly noisy annotation `noisy[t]`.  When the
 * suspiciousness max_y p(y|x) - p(annotation|x) reaches the threshold (or the annotation has zero
 * mass under the constraints) the annotator is asked again and returns the clean label.  The
 * accepted label is then learned from. */
inline InteractionTrace skeptical_run(ConditionalModel &model, const Dataset &stream, std::span<const std::vector<std::uint8_t>> noisy,
                                      const Dataset &held_out, const SkepticalConfig &cfg)
{
    if (noisy.size() != stream.size()) throw InvalidInput("one annotation per stream example is required");
    if (stream.c != model.circuit.num_vars() or stream.d != model.net.input_dim())
        throw ConfigError("stream dimensions do not match the model");
    if (cfg.eval_every < 1) throw ConfigError("eval_every must be at least 1");
    detail::Learner learner(model, cfg.replay, derive_seed(cfg.seed, 2));
    InteractionTrace trace;
    double cumulative = 0;
    for (std::size_t t = 0; t < stream.size(); ++t) {
        TraceRow row;
        row.round = t;
        row.instance = t;
        const auto &x = stream.X[t];
        const auto params = model.params(x);
        const auto s = suspiciousness(model.circuit, params, noisy[t]);
        row.suspiciousness = s.value;
        row.uncertainty = s.value;
        row.corrupted = noisy[t] != stream.Y[t];
        row.queried = s.violates or s.value >= cfg.threshold;
        const auto &accepted = row.queried ? stream.Y[t] : noisy[t];
        row.subset = row.queried ? VarSet::range(stream.c).to_string() : "-";
        row.labels = detail::labels_string(accepted);
        row.cost = row.queried ? double(stream.c) : 0.0;
        cumulative += row.cost;
        row.cumulative_cost = cumulative;
        learner.acquire({x, EvidenceMask::observed(accepted)});
        if ((t + 1) % cfg.eval_every == 0 or t + 1 == stream.size()) {
            const auto m = evaluate_accuracy(model, held_out);
            row.exact_match = m.exact_match;
            row.hamming = m.hamming;
        }
        trace.rows.push_back(std::move(row));
    }
    return trace;
}

}
