// Command-line driver.  Every command reads one JSON config (--config) and writes into --out.
// Exit status: 0 success, 1 invariant or check failure, 2 configuration or input error.

#include "crisp/crisp.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace crisp;

namespace {

/// One JSON object whose keys are checked against an allowed list; relative paths resolve against `base`.
class Section
{
    const json &j_;
    std::string where_;
    fs::path base_;

    public:
    Section(const json &j, std::string where, fs::path base, std::initializer_list<const char *> allowed)
        : j_(j), where_(std::move(where)), base_(std::move(base))
    {
        if (not j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (not ok.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where_);
    }

    bool has(const char *key) const { return j_.contains(key) and not j_.at(key).is_null(); }

    template<typename T>
    T get(const char *key) const {
        if (not has(key)) throw ConfigError("missing key '" + std::string(key) + "' in " + where_);
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("key '" + std::string(key) + "' in " + where_ + " has the wrong type");
        }
    }

    template<typename T>
    T get(const char *key, T fallback) const { return has(key) ? get<T>(key) : fallback; }

    std::size_t count(const char *key, std::size_t fallback, std::size_t min = 0) const {
        const auto v = has(key) ? get<long long>(key) : static_cast<long long>(fallback);
        if (v < static_cast<long long>(min)) throw ConfigError("key '" + std::string(key) + "' in " + where_ + " must be >= " + std::to_string(min));
        return static_cast<std::size_t>(v);
    }

    std::string path(const char *key) const {
        fs::path p = get<std::string>(key);
        return (p.is_absolute() ? p : base_ / p).string();
    }

    std::string choice(const char *key, const char *fallback, std::initializer_list<const char *> options) const {
        const auto v = get<std::string>(key, fallback);
        for (auto o : options) if (v == o) return v;
        throw ConfigError("key '" + std::string(key) + "' in " + where_ + " has unsupported value '" + v + "'");
    }

    Section sub(const char *key, std::initializer_list<const char *> allowed) const {
        static const json empty = json::object();
        return Section(has(key) ? j_.at(key) : empty, where_ + "." + key, base_, allowed);
    }

    const fs::path & base() const { return base_; }
};

struct Context
{
    json config;
    fs::path base;
    fs::path out;
    std::size_t threads = 1;

    std::string out_file(const std::string &name) const { return (out / name).string(); }
};

std::ifstream open_in(const std::string &path)
{
    std::ifstream in(path);
    if (not in) throw InvalidInput("cannot open " + path);
    return in;
}

std::ofstream open_out(const std::string &path)
{
    std::ofstream os(path);
    if (not os) throw InvalidInput("cannot write " + path);
    return os;
}

VtreeShape parse_shape(const std::string &s) { return s == "right-linear" ? VtreeShape::RightLinear : VtreeShape::BalancedRandom; }

// ------------------------------------------------------------------------------------------------
// Models on disk: a base circuit, optionally restricted by a label hierarchy over a vtree.

struct Model
{
    Circuit base;
    Circuit circuit;            ///< the base, or its product with the hierarchy constraint
    std::optional<Hierarchy> hierarchy;
};

Model load_model(const Section &s)
{
    auto m = s.sub("model", {"circuit", "vtree", "hierarchy"});
    auto in = open_in(m.path("circuit"));
    Model out{read_circuit(in), Circuit{}, std::nullopt};
    out.circuit = out.base;
    if (m.has("hierarchy")) {
        if (not m.has("vtree")) throw ConfigError("model.hierarchy needs model.vtree");
        auto vin = open_in(m.path("vtree"));
        std::string text((std::istreambuf_iterator<char>(vin)), std::istreambuf_iterator<char>());
        const auto vt = Vtree::parse(text);
        out.hierarchy = read_hierarchy_file(m.path("hierarchy"), out.base.num_vars());
        out.circuit = apply_constraints(out.base, build_hierarchy_circuit(*out.hierarchy, vt), vt).circuit;
    }
    return out;
}

GatingNet load_net(const std::string &path)
{
    auto in = open_in(path);
    return read_gating_net(in);
}

Dataset load_data(const std::string &path, const Circuit &c)
{
    auto ds = read_dataset_file(path);
    if (ds.c != c.num_vars())
        throw ConfigError(path + " has " + std::to_string(ds.c) + " labels, the circuit " + std::to_string(c.num_vars()));
    return ds;
}

void save_net(const Context &ctx, const GatingNet &net)
{
    auto os = open_out(ctx.out_file("net.txt"));
    write_gating_net(os, net);
}

/// Replay updates take their seeds from the run, so only a standalone fit reads one.
TrainConfig read_train(const Section &t, TrainConfig cfg, bool seeded)
{
    cfg.learning_rate = t.get<double>("learning_rate", cfg.learning_rate);
    cfg.steps = t.count("steps", cfg.steps);
    cfg.batch_size = t.count("batch_size", cfg.batch_size, 1);
    if (seeded) cfg.seed = t.get<std::uint64_t>("seed");
    cfg.momentum = t.get<double>("momentum", cfg.momentum);
    cfg.clip_norm = t.get<double>("clip_norm", cfg.clip_norm);
    cfg.validate();
    return cfg;
}

ReplayConfig read_replay(const Section &s)
{
    auto r = s.sub("replay", {"buffer_size", "steps", "learning_rate", "batch_size", "momentum", "clip_norm"});
    ReplayConfig cfg;
    cfg.buffer_size = r.count("buffer_size", cfg.buffer_size, 1);
    cfg.update = read_train(r, cfg.update, false);
    return cfg;
}

void print_metrics(const char *prefix, const EvalMetrics &m)
{
    std::cout << prefix << "exact_match " << m.exact_match << " hamming " << m.hamming << '\n';
}

// ------------------------------------------------------------------------------------------------

int cmd_build(const Context &ctx)
{
    Section s(ctx.config, "config", ctx.base, {"labels", "width", "seed", "vtree", "family", "hierarchy"});
    const auto c = s.count("labels", 0, 1);
    const auto family = s.choice("family", "crisp", {"crisp", "factorized"});
    const auto shape = family == "factorized" ? VtreeShape::RightLinear
                                              : parse_shape(s.choice("vtree", "balanced", {"balanced", "right-linear"}));
    const auto seed = s.get<std::uint64_t>("seed");
    const auto vt = random_vtree(c, shape, seed);
    const auto circ = family == "factorized" ? build_factorized(c) : build_crisp(vt, s.count("width", 2, 1), seed);
    {
        auto os = open_out(ctx.out_file("vtree.txt"));
        os << vt.to_string() << '\n';
    }
    {
        auto os = open_out(ctx.out_file("circuit.txt"));
        write_circuit(os, circ);
    }
    {
        auto os = open_out(ctx.out_file("params.txt"));
        write_params(os, random_params(circ.layout(), derive_seed(seed, 1)));
    }
    const auto lay = param_layout(circ);
    std::cout << "units " << circ.size() << " edges " << circ.num_edges() << " params " << lay.total
              << " sum_weights " << lay.sum_weights << " leaf_params " << lay.leaf_params << '\n';
    if (s.has("hierarchy")) {
        const auto h = read_hierarchy_file(s.path("hierarchy"), c);
        const auto k = build_hierarchy_circuit(h, vt);
        auto os = open_out(ctx.out_file("constraint.txt"));
        write_logic_circuit(os, k);
        const auto m = apply_constraints(circ, k, vt);
        std::cout << "constraint_units " << k.circuit().size();
        if (c <= 63) std::cout << " satisfying " << count_satisfying(k);
        std::cout << " constrained_units " << m.circuit.size() << " constrained_edges " << m.circuit.num_edges() << '\n';
    }
    return 0;
}

int cmd_gen_data(const Context &ctx)
{
    Section s(ctx.config, "config", ctx.base,
              {"labels", "features", "examples", "held_out", "seed", "separation", "label_noise", "hierarchy"});
    SyntheticConfig sc;
    sc.c = s.count("labels", 8, 1);
    sc.d = s.count("features", 16, 1);
    const auto train = s.count("examples", 1000, 1);
    const auto held = s.count("held_out", 0);
    sc.num_examples = train + held;
    sc.seed = s.get<std::uint64_t>("seed");
    sc.separation = s.get<double>("separation", 6.0);
    sc.label_noise = s.get<double>("label_noise", 0.0);
    const auto h = s.get<std::string>("hierarchy", "benchmark");
    if (h == "benchmark") {
        if (sc.c != 8) throw ConfigError("the benchmark hierarchy has 8 labels");
        sc.hierarchy = benchmark_hierarchy();
    } else if (h == "none") {
        sc.hierarchy = Hierarchy(sc.c, {});
    } else {
        sc.hierarchy = read_hierarchy_file(s.path("hierarchy"), sc.c);
    }
    const auto all = generate_synthetic(sc);
    {
        auto os = open_out(ctx.out_file("data.csv"));
        write_dataset_csv(os, all.slice(0, train));
    }
    if (held > 0) {
        auto os = open_out(ctx.out_file("held_out.csv"));
        write_dataset_csv(os, all.slice(train, train + held));
    }
    {
        auto os = open_out(ctx.out_file("hierarchy.txt"));
        write_hierarchy(os, sc.hierarchy);
    }
    std::cout << "examples " << train << " held_out " << held << " labels " << sc.c << " features " << sc.d << '\n';
    return 0;
}

int cmd_train(const Context &ctx)
{
    Section s(ctx.config, "config", ctx.base, {"model", "data", "hidden", "net_seed", "init_net", "train"});
    const auto model = load_model(s);
    const auto ds = load_data(s.path("data"), model.circuit);
    GatingNet net;
    if (s.has("init_net")) {
        net = load_net(s.path("init_net"));
        if (net.input_dim() != ds.d or net.layout() != model.circuit.layout())
            throw ConfigError("init_net does not match the data and circuit");
    } else {
        std::vector<std::size_t> dims{ds.d};
        for (auto hdim : s.get<std::vector<long long>>("hidden", {16})) {
            if (hdim < 1) throw ConfigError("hidden layer widths must be >= 1");
            dims.push_back(static_cast<std::size_t>(hdim));
        }
        dims.push_back(model.circuit.num_params());
        net = GatingNet(dims, model.circuit.layout(), s.get<std::uint64_t>("net_seed"));
    }
    const auto cfg = read_train(s.sub("train", {"learning_rate", "steps", "batch_size", "seed", "momentum", "clip_norm"}), TrainConfig{}, true);
    const auto data = ds.examples();
    const auto r = fit(net, model.circuit, data, cfg);
    save_net(ctx, net);
    {
        auto os = open_out(ctx.out_file("loss.csv"));
        os << "step,loss\n" << std::setprecision(17);
        for (std::size_t k = 0; k < r.losses.size(); ++k) os << k << ',' << r.losses[k] << '\n';
    }
    std::cout << std::setprecision(10) << "steps " << r.losses.size() << " final_batch_loss "
              << (r.losses.empty() ? NAN : r.losses.back()) << " mean_nll " << mean_nll(net, model.circuit, data) << '\n';
    return 0;
}

int cmd_eval(const Context &ctx)
{
    Section s(ctx.config, "config", ctx.base, {"model", "net", "data"});
    const auto model = load_model(s);
    const auto net = load_net(s.path("net"));
    const auto ds = load_data(s.path("data"), model.circuit);
    const ConditionalModel cm{model.circuit, net, std::nullopt};
    const auto m = evaluate_accuracy(cm, ds);
    const auto data = ds.examples();
    const double nll = mean_nll(net, model.circuit, data);
    json out{{"examples", ds.size()}, {"exact_match", m.exact_match}, {"hamming", m.hamming}, {"mean_nll", nll}};
    {
        auto os = open_out(ctx.out_file("metrics.json"));
        os << out.dump(2) << '\n';
    }
    std::cout << std::setprecision(10) << "examples " << ds.size() << ' ';
    print_metrics("", m);
    std::cout << "mean_nll " << nll << '\n';
    return 0;
}

int cmd_al_run(const Context &ctx)
{
    Section s(ctx.config, "config", ctx.base,
              {"model", "net", "stream", "held_out", "threshold", "measure", "mode", "policy", "random_queries", "budget",
               "costs", "alpha", "search", "annotator_noise", "replay", "eval_every", "seed"});
    const auto model = load_model(s);
    ConditionalModel cm{model.circuit, load_net(s.path("net")), std::nullopt};
    const auto stream = load_data(s.path("stream"), model.circuit);
    const auto held = load_data(s.path("held_out"), model.circuit);
    ActiveConfig cfg;
    cfg.threshold = s.get<double>("threshold", cfg.threshold);
    cfg.measure = s.choice("measure", "entropy", {"entropy", "margin"}) == "margin" ? Measure::Margin : Measure::Entropy;
    cfg.mode = s.choice("mode", "full", {"full", "subset"}) == "subset" ? QueryMode::Subset : QueryMode::FullLabel;
    cfg.policy = s.choice("policy", "uncertainty", {"uncertainty", "random"}) == "random" ? QueryPolicy::Random : QueryPolicy::Uncertainty;
    cfg.random_queries = s.count("random_queries", 0);
    cfg.budget = s.get<double>("budget", cfg.budget);
    cfg.costs = s.get<std::vector<double>>("costs", {});
    if (not cfg.costs.empty() and cfg.costs.size() != stream.c) throw ConfigError("costs must list one value per label");
    const auto alpha = s.count("alpha", kDefaultAlpha, 2);
    cfg.alpha = static_cast<unsigned>(alpha);
    const auto search = s.choice("search", "branch-and-bound", {"exhaustive", "greedy", "branch-and-bound"});
    cfg.search = search == "exhaustive" ? SubsetSearch::Exhaustive : search == "greedy" ? SubsetSearch::Greedy : SubsetSearch::BranchAndBound;
    cfg.annotator_noise = s.get<double>("annotator_noise", 0.0);
    if (not (cfg.annotator_noise >= 0 and cfg.annotator_noise < 0.5)) throw ConfigError("annotator_noise must lie in [0, 0.5)");
    cfg.replay = read_replay(s);
    cfg.eval_every = s.count("eval_every", 1, 1);
    cfg.seed = s.get<std::uint64_t>("seed");
    const auto trace = active_run(cm, stream, held, cfg);
    {
        auto os = open_out(ctx.out_file("trace.csv"));
        write_trace_csv(os, trace);
    }
    save_net(ctx, cm.net);
    std::cout << std::setprecision(10) << "rounds " << trace.rows.size() << " queries " << trace.num_queries() << " cost "
              << trace.total_cost() << ' ';
    print_metrics("", trace.final_metrics());
    return 0;
}

int cmd_sl_run(const Context &ctx)
{
    Section s(ctx.config, "config", ctx.base,
              {"model", "net", "stream", "held_out", "threshold", "noise", "noise_seed", "replay", "eval_every", "seed"});
    const auto model = load_model(s);
    ConditionalModel cm{model.circuit, load_net(s.path("net")), std::nullopt};
    const auto stream = load_data(s.path("stream"), model.circuit);
    const auto held = load_data(s.path("held_out"), model.circuit);
    const double eta = s.get<double>("noise", 0.2);
    if (not (eta >= 0 and eta < 0.5)) throw ConfigError("noise must lie in [0, 0.5)");
    const auto noise_seed = s.get<std::uint64_t>("noise_seed");
    std::vector<std::vector<std::uint8_t>> noisy;
    for (std::size_t t = 0; t < stream.size(); ++t) noisy.push_back(simulate_annotator(stream.Y[t], eta, derive_seed(noise_seed, t)));
    SkepticalConfig cfg;
    cfg.threshold = s.get<double>("threshold", cfg.threshold);
    cfg.replay = read_replay(s);
    cfg.eval_every = s.count("eval_every", 1, 1);
    cfg.seed = s.get<std::uint64_t>("seed");
    const auto trace = skeptical_run(cm, stream, noisy, held, cfg);
    {
        auto os = open_out(ctx.out_file("trace.csv"));
        write_trace_csv(os, trace);
    }
    save_net(ctx, cm.net);
    const auto sum = summarize(trace);
    std::cout << std::setprecision(10) << "rounds " << sum.rounds << " flagged " << sum.flagged << " corrupted " << sum.corrupted
              << " precision " << sum.precision() << " base_rate " << sum.base_rate() << ' ';
    print_metrics("", trace.final_metrics());
    return 0;
}

// ------------------------------------------------------------------------------------------------
// Differential check of every exact query against enumeration.

class Checker
{
    double tol_;
    std::map<std::string, double> worst_;
    std::vector<std::string> failures_;

    public:
    explicit Checker(double tol) : tol_(tol) { }

    void compare(const std::string &name, double got, double want) {
        const double err = std::abs(got - want);
        auto &w = worst_[name];
        w = std::max(w, std::isnan(err) ? INFINITY : err);
        if (not (err <= tol_)) failures_.push_back(name + ": got " + std::to_string(got) + ", oracle " + std::to_string(want));
    }

    void require(const std::string &name, bool ok, const std::string &detail = "") {
        worst_.try_emplace(name, 0.0);
        if (not ok) failures_.push_back(name + (detail.empty() ? "" : ": " + detail));
    }

    int report() const {
        for (const auto &[name, err] : worst_) {
            bool failed = false;
            for (const auto &f : failures_) failed |= f.rfind(name + ":", 0) == 0 or f == name;
            std::cout << (failed ? "FAIL " : "PASS ") << name << " max_err " << err << '\n';
        }
        for (const auto &f : failures_) std::cout << "  " << f << '\n';
        std::cout << (failures_.empty() ? "oracle-check: PASS\n" : "oracle-check: FAIL\n");
        return failures_.empty() ? 0 : 1;
    }
};

int cmd_oracle_check(const Context &ctx)
{
    Section s(ctx.config, "config", ctx.base,
              {"model", "params", "net", "inputs", "draws", "subsets", "partials", "annotations", "alpha", "seed", "tolerance"});
    const auto model = load_model(s);
    const auto &c = model.circuit;
    const std::size_t n = c.num_vars();
    if (n > oracle::kMaxVars) throw ConfigError("oracle-check refuses more than 16 labels");
    const auto seed = s.get<std::uint64_t>("seed");
    Rng rng(seed);

    std::vector<ParamVector> draws;
    if (s.has("params")) {
        auto in = open_in(s.path("params"));
        draws.push_back(read_params(in));
        if (draws.back().size() != c.num_params()) throw ConfigError("parameter file does not match the circuit");
    } else if (s.has("net")) {
        const auto net = load_net(s.path("net"));
        if (net.layout() != c.layout()) throw ConfigError("net layout does not match the circuit");
        for (std::size_t k = 0, m = s.count("inputs", 5, 1); k < m; ++k) {
            std::vector<double> x(net.input_dim());
            for (auto &v : x) v = standard_normal(rng);
            draws.push_back(net.forward(x));
        }
    } else {
        for (std::size_t k = 0, m = s.count("draws", 5, 1); k < m; ++k) draws.push_back(random_params(c.layout(), derive_seed(seed, k)));
    }
    const auto subsets = s.count("subsets", 30), partials = s.count("partials", 30), annotations = s.count("annotations", 30);
    const auto alpha = static_cast<unsigned>(s.count("alpha", kDefaultAlpha, 2));
    Checker ck(s.get<double>("tolerance", 1e-8));

    if (auto r = check_smooth(c); true) ck.require("smooth", r.pass, r.detail);
    if (auto r = check_decomposable(c); true) ck.require("decomposable", r.pass, r.detail);
    ck.require("certified-deterministic", c.certified_deterministic(), c.structural_determinism().detail);

    std::optional<PowerCircuit> pc;
    if (n <= oracle::kMaxPowerVars and subsets > 0) pc = power(c, alpha);
    else if (subsets > 0) std::cout << "SKIP renyi: the power oracle is limited to " << oracle::kMaxPowerVars << " labels\n";
    const auto mode = c.locally_normalized() ? oracle::Normalization::Strict : oracle::Normalization::Renormalize;
    for (const auto &p : draws) {
        if (auto r = check_params(c.layout(), p); not r.pass) {
            ck.require("params " + r.property, false, r.detail);
            continue;
        }
        ck.require("params", true);
        if (auto r = check_deterministic(c, p, 12); true) ck.require("deterministic", r.pass, r.detail);
        const auto t = oracle::enumerate(c, p, mode);
        const double lz = c.locally_normalized() ? 0.0 : log_normalizer(c, p);
        if (c.locally_normalized()) ck.compare("normalization", std::exp(log_normalizer(c, p)), 1.0);
        for (std::size_t k = 0; k < partials; ++k) {
            std::vector<std::uint8_t> partial(n, 2);
            EvidenceMask ev(n);
            for (std::size_t v = 0; v < n; ++v)
                if (uniform_index(rng, 2)) {
                    partial[v] = static_cast<std::uint8_t>(uniform_index(rng, 2));
                    ev.observe(static_cast<VarId>(v), partial[v]);
                }
            ck.compare("marginal", conditional_marginal(c, p, ev), oracle::marginal(t, partial));
        }
        const auto mp = map_state(c, p);
        const auto om = oracle::map(t);
        ck.require("map-assignment", mp.assignment == om.assignment, detail::labels_string(mp.assignment) + " vs " + detail::labels_string(om.assignment));
        ck.compare("map-log-prob", mp.log_prob, std::log(om.prob));
        ck.compare("map-self-consistency", mp.log_prob, evaluate_log(c, p, EvidenceMask::observed(mp.assignment)) - lz);
        ck.compare("margin", margin(c, p), oracle::margin(t));
        ck.compare("entropy", shannon_entropy(c, p), oracle::entropy(t));
        for (std::size_t k = 0; k < annotations; ++k) {
            std::vector<std::uint8_t> y(n);
            for (auto &v : y) v = static_cast<std::uint8_t>(uniform_index(rng, 2));
            ck.compare("suspiciousness", suspiciousness(c, p, y).value, oracle::suspiciousness(t, y));
        }
        if (pc) {
            std::vector<double> scratch;
            for (std::size_t k = 0; k < subsets; ++k) {
                VarSet Q;
                while (Q.empty())
                    for (std::size_t v = 0; v < n; ++v) if (uniform_index(rng, 2)) Q.insert(static_cast<VarId>(v));
                const double r = renyi_entropy(*pc, p, Q, alpha, scratch);
                ck.compare("renyi", r, oracle::renyi(t, Q, alpha));
                ck.require("renyi-below-shannon", r <= oracle::subset_entropy(t, Q) + 1e-9, Q.to_string());
            }
        }
    }
    return ck.report();
}

}

int main(int argc, char **argv)
{
    CLI::App app{"crisp: tractable circuits for structured label uncertainty"};
    std::string config, out = ".";
    std::size_t threads = 1;
    app.add_option("--config", config, "JSON configuration file")->required();
    app.add_option("--out", out, "output directory (created if missing)");
    app.add_option("--threads", threads, "worker cap; every command currently runs single-threaded")->check(CLI::PositiveNumber);
    app.require_subcommand(1, 1);
    const std::vector<std::pair<const char *, int (*)(const Context&)>> commands{
        {"build", cmd_build}, {"train", cmd_train}, {"eval", cmd_eval}, {"al-run", cmd_al_run},
        {"sl-run", cmd_sl_run}, {"oracle-check", cmd_oracle_check}, {"gen-data", cmd_gen_data}};
    const std::map<std::string, const char *> help{
        {"build", "build a vtree and circuit"}, {"train", "fit a gating net"}, {"eval", "held-out accuracy and NLL"},
        {"al-run", "active-learning simulation"}, {"sl-run", "skeptical-learning simulation"},
        {"oracle-check", "compare every exact query with enumeration"}, {"gen-data", "synthetic hierarchical data"}};
    for (const auto &[name, fn] : commands) app.add_subcommand(name, help.at(name))->fallthrough();
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    try {
        Context ctx;
        std::ifstream in(config);
        if (not in) throw ConfigError("cannot open config " + config);
        try {
            ctx.config = json::parse(in);
        } catch (const json::parse_error &e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        ctx.base = fs::absolute(config).parent_path();
        ctx.out = out;
        ctx.threads = threads;
        fs::create_directories(ctx.out);
        for (const auto &[name, fn] : commands)
            if (app.got_subcommand(name)) return fn(ctx);
        return 2;
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const InvalidInput &e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error &e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
