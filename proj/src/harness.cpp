#include "ulab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "ulab/format.hpp"

namespace ulab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stream tags for derive_seed; each consumer of randomness gets its own.
enum Stream : std::uint64_t {
    kSplitStream = 1,
    kInitStream = 2,
    kBaseTrainStream = 3,
    kPoolDrawStream = 10,
    kTestDrawStream = 11,
    kReferenceStream = 100,
    kUnlearnStream = 1000,
};

std::vector<double> default_lrs() { return {0.1, 0.05, 0.01, 0.005}; }

int method_rank(const std::string& name) {
    static const std::vector<std::string> order = {"base",         "retrain",  "regun",    "neggrad",
                                                   "neggrad_plus", "finetune", "l1_sparse"};
    const auto it = std::find(order.begin(), order.end(), name);
    return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions are rethrown on the caller.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < std::min(jobs, n); ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

MetricsReport failure_row(const std::string& method, std::uint64_t seed, double w,
                          const std::string& error) {
    MetricsReport r;
    r.method = method;
    r.seed = seed;
    r.w = w;
    r.failed = true;
    r.error = error;
    set_metric_values(r, std::vector<double>(metric_names().size(), kNaN));
    return r;
}

std::vector<double> or_default(const std::vector<double>& v, double d) {
    return v.empty() ? std::vector<double>{d} : v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig ExperimentConfig::defaults() {
    ExperimentConfig c;
    c.methods = {
        {Method::regun, default_lrs(), {0.1, 0.3, 0.5, 0.7, 0.9}, {}, 8},
        {Method::neggrad, {0.05, 0.01, 0.005, 0.001}, {}, {}},
        {Method::neggrad_plus, default_lrs(), {0.8, 0.85, 0.9, 0.95, 0.99}, {}},
        {Method::finetune, default_lrs(), {}, {}},
        {Method::l1_sparse, default_lrs(), {}, {5e-6, 5e-5, 5e-4, 5e-3}},
    };
    c.sweep_methods = {Method::regun, Method::neggrad_plus};
    c.sweep_w = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    return c;
}

void ExperimentConfig::validate() const {
    if (data.source == DataSource::gaussian) data.gen.validate();
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (!(forget_fraction > 0.0 && forget_fraction < 1.0)) throw ConfigError("forget_fraction must lie in (0, 1)");
    if (rmia_references < 1) throw ConfigError("rmia_references must be >= 1");
    if (unlearn_batch_size < 1) throw ConfigError("unlearning batch size must be >= 1");
    base_training.validate();
    for (const auto& g : methods) {
        for (double lr : g.lr) {
            if (!(lr >= 0.0)) throw ConfigError(to_string(g.method) + ": lr must be >= 0");
        }
        for (double w : g.w) {
            if (!(w >= 0.0 && w <= 1.0)) throw ConfigError(to_string(g.method) + ": w must lie in [0, 1]");
        }
        for (double gm : g.gamma) {
            if (!(gm >= 0.0)) throw ConfigError(to_string(g.method) + ": gamma must be >= 0");
        }
    }
    for (Method m : sweep_methods) {
        if (!method_uses_w(m)) throw ConfigError("sweep: method " + to_string(m) + " has no w parameter");
    }
    for (double w : sweep_w) {
        if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("sweep: w must lie in [0, 1]");
    }
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c = ExperimentConfig::defaults();
    try {
        if (j.contains("data")) {
            const auto& d = j.at("data");
            const std::string src = d.value("source", "gaussian");
            if (src == "gaussian") {
                c.data.source = DataSource::gaussian;
                c.data.gen.num_classes = d.value("num_classes", c.data.gen.num_classes);
                c.data.gen.input_dim = d.value("input_dim", c.data.gen.input_dim);
                c.data.gen.samples_per_class = d.value("samples_per_class", c.data.gen.samples_per_class);
                c.data.gen.centroid_scale = d.value("centroid_scale", c.data.gen.centroid_scale);
                c.data.gen.noise_sigma = d.value("noise_sigma", c.data.gen.noise_sigma);
                c.data.gen.seed = d.value("seed", c.data.gen.seed);
            } else if (src == "csv") {
                c.data.source = DataSource::csv;
                c.data.pool_csv = d.at("pool").get<std::string>();
                c.data.test_csv = d.at("test").get<std::string>();
                c.data.csv_header = d.value("header", false);
            } else {
                throw ConfigError("data.source must be 'gaussian' or 'csv'");
            }
        }
        if (j.contains("arch")) {
            const auto& a = j.at("arch");
            c.arch.kind = parse_arch_kind(a.value("kind", to_string(c.arch.kind)));
            c.arch.hidden_dim = a.value("hidden_dim", c.arch.hidden_dim);
            c.arch.activation = parse_activation(a.value("activation", to_string(c.arch.activation)));
        }
        if (j.contains("base_training")) {
            const auto& t = j.at("base_training");
            c.base_training.epochs = t.value("epochs", c.base_training.epochs);
            c.base_training.batch_size = t.value("batch_size", c.base_training.batch_size);
            c.base_training.lr = t.value("lr", c.base_training.lr);
            c.base_training.momentum = t.value("momentum", c.base_training.momentum);
        }
        c.forget_fraction = j.value("forget_fraction", c.forget_fraction);
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        c.rmia_references = j.value("rmia_references", c.rmia_references);
        if (j.contains("unlearning")) {
            const auto& u = j.at("unlearning");
            c.unlearn_epochs = u.value("epochs", c.unlearn_epochs);
            c.unlearn_batch_size = u.value("batch_size", c.unlearn_batch_size);
            c.retain_batch_size = u.value("retain_batch_size", c.retain_batch_size);
            c.refdist_m = u.value("m", c.refdist_m);
            c.unlearn_momentum = u.value("momentum", c.unlearn_momentum);
        }
        if (j.contains("methods")) {
            c.methods.clear();
            for (const auto& [name, g] : j.at("methods").items()) {
                MethodGrid mg;
                mg.method = parse_method(name);
                mg.lr = g.value("lr", std::vector<double>{});
                mg.w = g.value("w", std::vector<double>{});
                mg.gamma = g.value("gamma", std::vector<double>{});
                mg.batch_size = g.value("batch_size", std::size_t{0});
                c.methods.push_back(std::move(mg));
            }
            std::sort(c.methods.begin(), c.methods.end(), [](const MethodGrid& a, const MethodGrid& b) {
                return method_rank(to_string(a.method)) < method_rank(to_string(b.method));
            });
        }
        if (j.contains("sweep")) {
            const auto& s = j.at("sweep");
            c.sweep_methods.clear();
            for (const auto& name : s.value("methods", std::vector<std::string>{})) {
                c.sweep_methods.push_back(parse_method(name));
            }
            c.sweep_w = s.value("w", c.sweep_w);
        }
        c.jobs = j.value("jobs", c.jobs);
        if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    if (c.data.source == DataSource::gaussian) {
        j["data"] = {{"source", "gaussian"},
                     {"num_classes", c.data.gen.num_classes},
                     {"input_dim", c.data.gen.input_dim},
                     {"samples_per_class", c.data.gen.samples_per_class},
                     {"centroid_scale", c.data.gen.centroid_scale},
                     {"noise_sigma", c.data.gen.noise_sigma},
                     {"seed", c.data.gen.seed}};
    } else {
        j["data"] = {{"source", "csv"},
                     {"pool", c.data.pool_csv.string()},
                     {"test", c.data.test_csv.string()},
                     {"header", c.data.csv_header}};
    }
    j["arch"] = {{"kind", to_string(c.arch.kind)},
                 {"hidden_dim", c.arch.hidden_dim},
                 {"activation", to_string(c.arch.activation)}};
    j["base_training"] = {{"epochs", c.base_training.epochs},
                          {"batch_size", c.base_training.batch_size},
                          {"lr", c.base_training.lr},
                          {"momentum", c.base_training.momentum}};
    j["forget_fraction"] = c.forget_fraction;
    j["seeds"] = c.seeds;
    j["rmia_references"] = c.rmia_references;
    j["unlearning"] = {{"epochs", c.unlearn_epochs},
                       {"batch_size", c.unlearn_batch_size},
                       {"retain_batch_size", c.retain_batch_size},
                       {"m", c.refdist_m},
                       {"momentum", c.unlearn_momentum}};
    nlohmann::json methods = nlohmann::json::object();
    for (const auto& g : c.methods) {
        nlohmann::json mg = nlohmann::json::object();
        if (!g.lr.empty()) mg["lr"] = g.lr;
        if (!g.w.empty()) mg["w"] = g.w;
        if (!g.gamma.empty()) mg["gamma"] = g.gamma;
        if (g.batch_size) mg["batch_size"] = g.batch_size;
        methods[to_string(g.method)] = mg;
    }
    j["methods"] = methods;
    std::vector<std::string> sm;
    for (Method m : c.sweep_methods) sm.push_back(to_string(m));
    j["sweep"] = {{"methods", sm}, {"w", c.sweep_w}};
    j["jobs"] = c.jobs;
    j["output_dir"] = c.output_dir.string();
    return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Per-seed pipeline

SeedContext prepare_data(const ExperimentConfig& cfg, std::uint64_t seed) {
    SeedContext ctx;
    ctx.seed = seed;
    Dataset test;
    if (cfg.data.source == DataSource::gaussian) {
        ctx.pool = generate_gaussian_mixture(cfg.data.gen, derive_seed(seed, kPoolDrawStream));
        test = generate_gaussian_mixture(cfg.data.gen, derive_seed(seed, kTestDrawStream));
    } else {
        ctx.pool = load_csv(cfg.data.pool_csv, {cfg.data.csv_header});
        test = load_csv(cfg.data.test_csv, {cfg.data.csv_header});
        const std::size_t k = std::max(ctx.pool.num_classes, test.num_classes);
        ctx.pool.num_classes = test.num_classes = k;
        if (ctx.pool.dim() != test.dim()) throw ConfigError("pool and test CSV differ in feature count");
    }
    ctx.pool.validate();
    test.validate();
    ctx.splits = make_splits(ctx.pool, std::move(test), cfg.forget_fraction, derive_seed(seed, kSplitStream));

    ArchitectureSpec arch = cfg.arch;
    arch.input_dim = ctx.pool.dim();
    arch.num_classes = ctx.pool.num_classes;
    ctx.init = Model::initialize(arch, derive_seed(seed, kInitStream));
    return ctx;
}

namespace {

TrainConfig base_training_for(const ExperimentConfig& cfg, std::uint64_t seed) {
    TrainConfig tc = cfg.base_training;
    tc.seed = derive_seed(seed, kBaseTrainStream);
    return tc;
}

}  // namespace

std::vector<Model> train_references(const ExperimentConfig& cfg, const SeedContext& ctx) {
    const TrainConfig tc = base_training_for(cfg, ctx.seed);
    const std::size_t n_train = ctx.splits.retain.size() + ctx.splits.forget.size();
    std::vector<Model> refs;
    // Attack references never see the forget or test rows. With a generator they get
    // fresh draws of the training size; with CSV data they train on retain subsets.
    for (std::size_t r = 0; r < cfg.rmia_references; ++r) {
        const std::uint64_t rs = derive_seed(ctx.seed, kReferenceStream + r);
        Rng rng(derive_seed(rs, 0));
        TrainConfig rtc = tc;
        rtc.seed = derive_seed(rs, 1);
        const Model rinit = Model::initialize(ctx.init.arch, derive_seed(rs, 2));
        if (cfg.data.source == DataSource::gaussian) {
            const Dataset fresh = generate_gaussian_mixture(cfg.data.gen, derive_seed(rs, 3));
            const IndexSet pick = sample_minibatch(fresh.all_indices(), std::min(n_train, fresh.size()), rng);
            refs.push_back(train(rinit, fresh, pick, rtc));
        } else {
            const IndexSet pick =
                sample_minibatch(ctx.splits.retain, std::max<std::size_t>(1, ctx.splits.retain.size() / 2), rng);
            refs.push_back(train(rinit, ctx.pool, pick, rtc));
        }
    }
    return refs;
}

void attach_models(SeedContext& ctx, Model base, Model retrain, std::vector<Model> references) {
    if (references.empty()) throw ConfigError("at least one attack reference model is required");
    ctx.base = std::move(base);
    ctx.retrain = std::move(retrain);
    ctx.references = std::move(references);
    const EvalInputs in{ctx.pool, ctx.splits, ctx.references, ctx.retrain};
    ctx.retrain_eval = evaluate_model(ctx.retrain, in, "retrain", ctx.seed, kNaN);
}

SeedContext prepare_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    SeedContext ctx = prepare_data(cfg, seed);
    const TrainConfig tc = base_training_for(cfg, seed);
    Model base = train(ctx.init, ctx.pool, ctx.splits.train_indices(), tc);
    Model retrain = train(ctx.init, ctx.pool, ctx.splits.retain, tc);
    attach_models(ctx, std::move(base), std::move(retrain), train_references(cfg, ctx));
    return ctx;
}

MetricsReport evaluate_in_context(const SeedContext& ctx, const Model& model, const std::string& name,
                                  double w) {
    const EvalInputs in{ctx.pool, ctx.splits, ctx.references, ctx.retrain};
    MetricsReport r = evaluate_model(model, in, name, ctx.seed, w);
    const Gaps g = gap_report(r, ctx.retrain_eval);
    r.gap_rftp = g.rftp;
    r.gap_tp = g.tp;
    return r;
}

UnlearnConfig make_unlearn_config(const ExperimentConfig& cfg, Method m, double lr, double w,
                                  double gamma, std::uint64_t seed) {
    UnlearnConfig u = UnlearnConfig::defaults(m);
    if (m != Method::neggrad) u.epochs = cfg.unlearn_epochs;
    u.batch_size = cfg.unlearn_batch_size;
    u.retain_batch_size = cfg.retain_batch_size ? cfg.retain_batch_size : cfg.unlearn_batch_size;
    for (const auto& g : cfg.methods) {
        if (g.method == m && g.batch_size) u.batch_size = g.batch_size;
    }
    u.m = cfg.refdist_m;
    u.momentum = cfg.unlearn_momentum;
    u.lr = lr;
    u.w = method_uses_w(m) ? w : 1.0;
    u.gamma = m == Method::l1_sparse ? gamma : 0.0;
    u.seed = derive_seed(seed, kUnlearnStream + static_cast<std::uint64_t>(m));
    return u;
}

MetricsReport run_method(const ExperimentConfig&, const SeedContext& ctx, const UnlearnConfig& ucfg) {
    const double w = method_uses_w(ucfg.method) ? ucfg.w : kNaN;
    MetricsReport r;
    try {
        const Model out = unlearn(ctx.base, ctx.splits, ctx.pool, ucfg);
        r = evaluate_in_context(ctx, out, to_string(ucfg.method), w);
    } catch (const Error& e) {
        r = failure_row(to_string(ucfg.method), ctx.seed, w, e.what());
    }
    r.lr = ucfg.lr;
    r.gamma = ucfg.gamma;
    return r;
}

// ---------------------------------------------------------------------------
// Selection

double selection_score(const MetricsReport& r, double base_val_acc) {
    return std::abs(r.forget_acc - r.val_acc) + std::max(0.0, base_val_acc - r.val_acc);
}

std::size_t select_hyperparams(const std::vector<GridResult>& grid, double base_val_acc) {
    if (grid.empty()) throw ConfigError("select_hyperparams: empty grid");
    std::optional<std::size_t> best;
    auto key = [&](std::size_t i) {
        const auto& g = grid[i];
        const double w = method_uses_w(g.config.method) ? g.config.w : 0.0;
        return std::make_tuple(selection_score(g.aggregate_mean, base_val_acc), -g.aggregate_mean.val_acc,
                               g.config.lr, w, g.config.gamma);
    };
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& m = grid[i].aggregate_mean;
        if (m.failed || std::isnan(selection_score(m, base_val_acc))) continue;
        if (!best || key(i) < key(*best)) best = i;
    }
    if (!best) throw ConfigError("select_hyperparams: every grid point failed");
    return *best;
}

// ---------------------------------------------------------------------------
// Aggregation and sweep

void sort_report_rows(std::vector<MetricsReport>& rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const MetricsReport& a, const MetricsReport& b) {
        const int ra = method_rank(a.method), rb = method_rank(b.method);
        if (ra != rb) return ra < rb;
        if (a.method != b.method) return a.method < b.method;
        if (a.seed != b.seed) return a.seed < b.seed;
        const double wa = std::isnan(a.w) ? -1.0 : a.w, wb = std::isnan(b.w) ? -1.0 : b.w;
        return wa < wb;
    });
}

std::vector<AggregateReport> aggregate_table(const std::vector<MetricsReport>& rows) {
    std::vector<MetricsReport> sorted = rows;
    sort_report_rows(sorted);
    std::vector<AggregateReport> out;
    auto same_group = [](const MetricsReport& a, const MetricsReport& b) {
        return a.method == b.method && ((std::isnan(a.w) && std::isnan(b.w)) || a.w == b.w);
    };
    // Rows of one (method, w) group are not contiguous after the seed sort; gather them.
    std::vector<bool> used(sorted.size(), false);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (used[i]) continue;
        std::vector<MetricsReport> group;
        for (std::size_t j = i; j < sorted.size(); ++j) {
            if (!used[j] && same_group(sorted[i], sorted[j])) {
                used[j] = true;
                if (!sorted[j].failed) group.push_back(sorted[j]);
            }
        }
        if (!group.empty()) out.push_back(aggregate_seeds(group));
    }
    return out;
}

std::vector<SweepPoint> sweep_tradeoff(const ExperimentConfig& cfg, const std::vector<SeedContext>& seeds,
                                       Method method, double lr, const std::vector<double>& w_grid) {
    if (!method_uses_w(method)) throw ConfigError("sweep_tradeoff: " + to_string(method) + " has no w parameter");
    if (seeds.empty()) throw ConfigError("sweep_tradeoff: no prepared seeds");
    const std::size_t S = seeds.size();
    std::vector<MetricsReport> rows(w_grid.size() * S);
    parallel_for(rows.size(), cfg.jobs, [&](std::size_t t) {
        const std::size_t wi = t / S, si = t % S;
        const auto u = make_unlearn_config(cfg, method, lr, w_grid[wi], 0.0, seeds[si].seed);
        rows[t] = run_method(cfg, seeds[si], u);
    });
    std::vector<SweepPoint> out;
    for (std::size_t wi = 0; wi < w_grid.size(); ++wi) {
        std::vector<MetricsReport> ok;
        for (std::size_t si = 0; si < S; ++si) {
            if (!rows[wi * S + si].failed) ok.push_back(rows[wi * S + si]);
        }
        SweepPoint p;
        p.method = method;
        p.w = w_grid[wi];
        p.lr = lr;
        p.n = ok.size();
        if (ok.empty()) {
            p.test_acc_mean = p.test_acc_std = p.rmia_auc_mean = p.rmia_auc_std = p.gap_tp_mean =
                p.gap_tp_std = kNaN;
        } else {
            const auto a = aggregate_seeds(ok);
            p.test_acc_mean = a.mean.test_acc;
            p.test_acc_std = a.std.test_acc;
            p.rmia_auc_mean = a.mean.rmia_auc;
            p.rmia_auc_std = a.std.rmia_auc;
            p.gap_tp_mean = a.mean.gap_tp;
            p.gap_tp_std = a.std.gap_tp;
        }
        out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Full experiment

ExperimentResult run_experiment(const ExperimentConfig& cfg, RunOptions opts) {
    cfg.validate();
    ExperimentResult res;

    std::vector<std::optional<SeedContext>> slots(cfg.seeds.size());
    std::vector<std::string> errors(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), cfg.jobs, [&](std::size_t i) {
        try {
            slots[i] = prepare_seed(cfg, cfg.seeds[i]);
        } catch (const Error& e) {
            errors[i] = e.what();
        }
    });
    std::vector<SeedContext> seeds;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i]) {
            seeds.push_back(std::move(*slots[i]));
        } else {
            res.failures[cfg.seeds[i]] = errors[i];
            res.table.push_back(failure_row("base", cfg.seeds[i], kNaN, errors[i]));
        }
    }
    if (seeds.empty()) return res;

    double base_val = 0.0;
    for (const auto& ctx : seeds) {
        auto b = evaluate_in_context(ctx, ctx.base, "base", kNaN);
        base_val += b.val_acc;
        res.table.push_back(std::move(b));
        res.table.push_back(evaluate_in_context(ctx, ctx.retrain, "retrain", kNaN));
    }
    base_val /= static_cast<double>(seeds.size());

    // Grid points for every method, each evaluated on every prepared seed.
    struct Point {
        std::size_t method_idx;
        double lr, w, gamma;
    };
    std::vector<Point> points;
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        const auto& g = cfg.methods[mi];
        const Method m = g.method;
        const auto lrs = or_default(g.lr, 0.01);
        const auto ws = method_uses_w(m) ? or_default(g.w, 0.5) : std::vector<double>{1.0};
        const auto gammas = m == Method::l1_sparse ? or_default(g.gamma, 0.0) : std::vector<double>{0.0};
        for (double lr : lrs) {
            for (double w : ws) {
                for (double gm : gammas) points.push_back({mi, lr, w, gm});
            }
        }
    }
    const std::size_t S = seeds.size();
    std::vector<MetricsReport> grid_rows(points.size() * S);
    parallel_for(grid_rows.size(), cfg.jobs, [&](std::size_t t) {
        const Point& p = points[t / S];
        const SeedContext& ctx = seeds[t % S];
        const auto u = make_unlearn_config(cfg, cfg.methods[p.method_idx].method, p.lr, p.w, p.gamma, ctx.seed);
        grid_rows[t] = run_method(cfg, ctx, u);
    });
    res.grid_rows = grid_rows;
    sort_report_rows(res.grid_rows);

    std::map<Method, double> selected_lr;
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        std::vector<GridResult> grid;
        std::vector<std::size_t> point_of;
        for (std::size_t pi = 0; pi < points.size(); ++pi) {
            if (points[pi].method_idx != mi) continue;
            GridResult gr;
            const Point& p = points[pi];
            gr.config = make_unlearn_config(cfg, cfg.methods[mi].method, p.lr, p.w, p.gamma, 0);
            std::vector<MetricsReport> ok;
            for (std::size_t si = 0; si < S; ++si) {
                gr.per_seed.push_back(grid_rows[pi * S + si]);
                if (!grid_rows[pi * S + si].failed) ok.push_back(grid_rows[pi * S + si]);
            }
            if (ok.empty()) {
                gr.aggregate_mean = failure_row(to_string(gr.config.method), 0, p.w, "all seeds failed");
            } else {
                gr.aggregate_mean = aggregate_seeds(ok).mean;
            }
            grid.push_back(std::move(gr));
            point_of.push_back(pi);
        }
        const Method m = cfg.methods[mi].method;
        std::size_t best = 0;
        try {
            best = select_hyperparams(grid, base_val);
        } catch (const ConfigError&) {
            for (const auto& r : grid.front().per_seed) res.table.push_back(r);
            continue;
        }
        UnlearnConfig chosen = grid[best].config;
        chosen.seed = 0;
        res.selected[to_string(m)] = chosen;
        selected_lr[m] = chosen.lr;
        for (const auto& r : grid[best].per_seed) res.table.push_back(r);
    }
    sort_report_rows(res.table);
    res.aggregated = aggregate_table(res.table);

    if (opts.run_sweep) {
        for (Method m : cfg.sweep_methods) {
            const auto it = selected_lr.find(m);
            if (it == selected_lr.end()) continue;
            auto pts = sweep_tradeoff(cfg, seeds, m, it->second, cfg.sweep_w);
            res.sweep.insert(res.sweep.end(), pts.begin(), pts.end());
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Report files

namespace {

std::string cell(double v) { return std::isnan(v) ? std::string() : format_double(v); }

double parse_cell(const std::string& s) {
    if (s.empty()) return kNaN;
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw IoError("bad numeric cell '" + s + "'");
        return v;
    } catch (const std::logic_error&) {
        if (s == "nan" || s == "-nan") return kNaN;
        throw IoError("bad numeric cell '" + s + "'");
    }
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

}  // namespace

const std::vector<std::string>& metrics_columns() {
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> c = {"method", "seed", "w"};
        for (const auto& n : metric_names()) c.push_back(n);
        return c;
    }();
    return cols;
}

void write_metrics_csv(const std::vector<MetricsReport>& rows, const std::filesystem::path& path,
                       bool with_hyperparams) {
    auto out = open_out(path);
    const auto& cols = metrics_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    if (with_hyperparams) out << ",lr,gamma";
    out << "\n";
    for (const auto& r : rows) {
        out << r.method << "," << r.seed << "," << cell(r.w);
        for (double v : metric_values(r)) out << "," << cell(v);
        if (with_hyperparams) out << "," << cell(r.lr) << "," << cell(r.gamma);
        out << "\n";
    }
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<MetricsReport> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError(path.string() + ": empty metrics file");
    if (split_line(line) != metrics_columns()) throw IoError(path.string() + ": unexpected metrics header");
    std::vector<MetricsReport> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != metrics_columns().size()) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
        }
        MetricsReport r;
        r.method = cells[0];
        r.seed = std::stoull(cells[1]);
        r.w = parse_cell(cells[2]);
        std::vector<double> vals;
        for (std::size_t i = 3; i < cells.size(); ++i) vals.push_back(parse_cell(cells[i]));
        set_metric_values(r, vals);
        r.failed = std::isnan(r.test_acc);
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_aggregated_csv(const std::vector<AggregateReport>& rows, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "method,w,n";
    for (const auto& n : metric_names()) out << "," << n << "_mean," << n << "_std";
    out << "\n";
    for (const auto& a : rows) {
        out << a.method << "," << cell(a.w) << "," << a.n;
        const auto mean = metric_values(a.mean), sd = metric_values(a.std);
        for (std::size_t f = 0; f < mean.size(); ++f) out << "," << cell(mean[f]) << "," << cell(sd[f]);
        out << "\n";
    }
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<AggregateReport> read_aggregated_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError(path.string() + ": empty aggregated file");
    const std::size_t F = metric_names().size();
    std::vector<AggregateReport> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != 3 + 2 * F) throw IoError(path.string() + ": wrong column count");
        AggregateReport a;
        a.method = a.mean.method = a.std.method = cells[0];
        a.w = a.mean.w = a.std.w = parse_cell(cells[1]);
        a.n = std::stoull(cells[2]);
        std::vector<double> mean(F), sd(F);
        for (std::size_t f = 0; f < F; ++f) {
            mean[f] = parse_cell(cells[3 + 2 * f]);
            sd[f] = parse_cell(cells[4 + 2 * f]);
        }
        set_metric_values(a.mean, mean);
        set_metric_values(a.std, sd);
        rows.push_back(std::move(a));
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepPoint>& points, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "method,w,lr,n,test_acc_mean,test_acc_std,rmia_auc_mean,rmia_auc_std,gap_tp_mean,gap_tp_std\n";
    for (const auto& p : points) {
        out << to_string(p.method) << "," << cell(p.w) << "," << cell(p.lr) << "," << p.n << ","
            << cell(p.test_acc_mean) << "," << cell(p.test_acc_std) << "," << cell(p.rmia_auc_mean) << ","
            << cell(p.rmia_auc_std) << "," << cell(p.gap_tp_mean) << "," << cell(p.gap_tp_std) << "\n";
    }
    if (!out) throw IoError("write failed for " + path.string());
}

void write_report(const ExperimentConfig& cfg, const ExperimentResult& result, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_metrics_csv(result.table, dir / "metrics.csv");
    write_metrics_csv(result.grid_rows, dir / "grid.csv", true);
    write_aggregated_csv(result.aggregated, dir / "aggregated.csv");
    if (!result.sweep.empty()) write_sweep_csv(result.sweep, dir / "sweep.csv");

    nlohmann::json manifest;
    nlohmann::json resolved = config_to_json(cfg);
    resolved.erase("jobs");
    resolved.erase("output_dir");
    manifest["config"] = resolved;
    manifest["seeds"] = cfg.seeds;
    manifest["selection_rule"] =
        "minimize |forget_acc - val_acc| + max(0, base_val_acc - val_acc) on seed-averaged grid "
        "metrics; ties: higher val_acc, lower lr, lower w, lower gamma";
    manifest["membership_attacks"] = {
        {"members", "forget set"},
        {"nonmembers", "test set"},
        {"rmia", "rmia-lite: p_target(y|x) / max(1e-12, mean over reference models of p_ref(y|x))"},
        {"smia", "negated per-sample cross-entropy"}};
    nlohmann::json sel = nlohmann::json::object();
    for (const auto& [name, u] : result.selected) {
        nlohmann::json s = {{"lr", u.lr}, {"epochs", u.epochs}, {"batch_size", u.batch_size}};
        if (method_uses_w(u.method)) s["w"] = u.w;
        if (u.method == Method::l1_sparse) s["gamma"] = u.gamma;
        sel[name] = s;
    }
    manifest["selected"] = sel;
    nlohmann::json fails = nlohmann::json::object();
    for (const auto& [seed, msg] : result.failures) fails[std::to_string(seed)] = msg;
    for (const auto& r : result.grid_rows) {
        if (r.failed) fails[r.method + "/seed" + std::to_string(r.seed) + "/lr" + format_double(r.lr)] = r.error;
    }
    manifest["failures"] = fails;
    auto out = open_out(dir / "manifest.json");
    out << manifest.dump(2) << "\n";
    if (!out) throw IoError("write failed for manifest.json");
}

}  // namespace ulab
