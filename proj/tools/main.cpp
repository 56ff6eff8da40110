// ulab: command-line front end for training, unlearning, evaluation and experiment sweeps.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ulab/checkpoint.hpp"
#include "ulab/harness.hpp"

namespace fs = std::filesystem;
using namespace ulab;

namespace {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<double> forget_fraction;
    std::optional<std::size_t> jobs;
};

void add_common(CLI::App* app, CommonOptions& o, bool with_seed) {
    app->add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    if (with_seed) app->add_option("--seed", o.seed, "Seed to operate on (default: first configured seed)");
    app->add_option("--out", o.out, "Output directory (default: config output_dir)");
    app->add_option("--forget-fraction", o.forget_fraction, "Override the forget fraction");
    app->add_option("--jobs", o.jobs, "Worker threads");
}

ExperimentConfig resolve(const CommonOptions& o) {
    ExperimentConfig cfg = o.config.empty() ? ExperimentConfig::defaults() : load_config(o.config);
    if (o.forget_fraction) cfg.forget_fraction = *o.forget_fraction;
    if (o.jobs) cfg.jobs = *o.jobs;
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (o.seed) cfg.seeds = {*o.seed};
    cfg.validate();
    return cfg;
}

fs::path seed_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
    return cfg.output_dir / ("seed_" + std::to_string(seed));
}

std::vector<Model> load_references(const fs::path& dir, std::size_t count) {
    std::vector<Model> refs;
    for (std::size_t r = 0; r < count; ++r) refs.push_back(load_checkpoint(dir / ("ref_" + std::to_string(r) + ".ckpt")));
    return refs;
}

int cmd_train(const CommonOptions& o) {
    const ExperimentConfig cfg = resolve(o);
    for (std::uint64_t seed : cfg.seeds) {
        const SeedContext ctx = prepare_seed(cfg, seed);
        const fs::path dir = seed_dir(cfg, seed);
        fs::create_directories(dir);
        save_checkpoint(ctx.base, dir / "base.ckpt");
        save_checkpoint(ctx.retrain, dir / "retrain.ckpt");
        for (std::size_t r = 0; r < ctx.references.size(); ++r) {
            save_checkpoint(ctx.references[r], dir / ("ref_" + std::to_string(r) + ".ckpt"));
        }
        std::cout << "seed " << seed << ": wrote base, retrain and " << ctx.references.size()
                  << " reference checkpoints to " << dir.string() << "\n";
    }
    return 0;
}

struct UnlearnOptions {
    std::string method = "regun";
    std::optional<double> lr, w, gamma;
    std::optional<std::size_t> epochs;
    std::string model;
};

int cmd_unlearn(const CommonOptions& o, const UnlearnOptions& u) {
    const ExperimentConfig cfg = resolve(o);
    const Method method = parse_method(u.method);
    for (std::uint64_t seed : cfg.seeds) {
        const SeedContext ctx = prepare_data(cfg, seed);
        const fs::path dir = seed_dir(cfg, seed);
        const Model base = load_checkpoint(u.model.empty() ? dir / "base.ckpt" : fs::path(u.model));
        double lr = 0.01, w = 0.5, gamma = 0.0;
        for (const auto& g : cfg.methods) {
            if (g.method != method) continue;
            if (!g.lr.empty()) lr = g.lr.front();
            if (!g.w.empty()) w = g.w.front();
            if (!g.gamma.empty()) gamma = g.gamma.front();
        }
        if (u.lr) lr = *u.lr;
        if (u.w) w = *u.w;
        if (u.gamma) gamma = *u.gamma;
        UnlearnConfig ucfg = make_unlearn_config(cfg, method, lr, w, gamma, seed);
        if (u.epochs) ucfg.epochs = *u.epochs;
        const Model out = unlearn(base, ctx.splits, ctx.pool, ucfg);
        fs::create_directories(dir);
        const fs::path path = dir / (u.method + ".ckpt");
        save_checkpoint(out, path);
        std::cout << "seed " << seed << ": " << u.method << " (lr=" << lr;
        if (method_uses_w(method)) std::cout << ", w=" << w;
        if (method == Method::l1_sparse) std::cout << ", gamma=" << gamma;
        std::cout << ") -> " << path.string() << "\n";
    }
    return 0;
}

int cmd_evaluate(const CommonOptions& o) {
    const ExperimentConfig cfg = resolve(o);
    std::vector<MetricsReport> rows;
    for (std::uint64_t seed : cfg.seeds) {
        SeedContext ctx = prepare_data(cfg, seed);
        const fs::path dir = seed_dir(cfg, seed);
        attach_models(ctx, load_checkpoint(dir / "base.ckpt"), load_checkpoint(dir / "retrain.ckpt"),
                      load_references(dir, cfg.rmia_references));
        const double nan = std::numeric_limits<double>::quiet_NaN();
        rows.push_back(evaluate_in_context(ctx, ctx.base, "base", nan));
        rows.push_back(evaluate_in_context(ctx, ctx.retrain, "retrain", nan));
        for (const char* name : {"regun", "neggrad", "neggrad_plus", "finetune", "l1_sparse"}) {
            const fs::path p = dir / (std::string(name) + ".ckpt");
            if (fs::exists(p)) rows.push_back(evaluate_in_context(ctx, load_checkpoint(p), name, nan));
        }
    }
    sort_report_rows(rows);
    fs::create_directories(cfg.output_dir);
    write_metrics_csv(rows, cfg.output_dir / "metrics.csv");
    write_aggregated_csv(aggregate_table(rows), cfg.output_dir / "aggregated.csv");
    std::cout << "wrote " << rows.size() << " rows to " << (cfg.output_dir / "metrics.csv").string() << "\n";
    return 0;
}

void print_summary(const ExperimentResult& res) {
    std::cout << "method         n  test_acc  forget_acc  rmia_auc  smia_auc  gap_rftp  gap_tp\n";
    for (const auto& a : res.aggregated) {
        std::printf("%-13s %2zu  %8.2f  %10.2f  %8.2f  %8.2f  %8.2f  %6.2f\n", a.method.c_str(), a.n,
                    a.mean.test_acc, a.mean.forget_acc, a.mean.rmia_auc, a.mean.smia_auc, a.mean.gap_rftp,
                    a.mean.gap_tp);
    }
    for (const auto& [seed, msg] : res.failures) std::cout << "seed " << seed << " failed: " << msg << "\n";
}

int cmd_run(const CommonOptions& o, bool sweep_only) {
    const ExperimentConfig cfg = resolve(o);
    RunOptions opts;
    opts.run_sweep = sweep_only || !cfg.sweep_methods.empty();
    const ExperimentResult res = run_experiment(cfg, opts);
    write_report(cfg, res, cfg.output_dir);
    if (sweep_only) {
        std::cout << "method        w     test_acc  rmia_auc  gap_tp\n";
        for (const auto& p : res.sweep) {
            std::printf("%-12s %4.2f  %8.2f  %8.2f  %6.2f\n", to_string(p.method).c_str(), p.w, p.test_acc_mean,
                        p.rmia_auc_mean, p.gap_tp_mean);
        }
    } else {
        print_summary(res);
    }
    std::cout << "reports written to " << cfg.output_dir.string() << "\n";
    return res.failures.size() == cfg.seeds.size() ? 1 : 0;
}

int cmd_report(const CommonOptions& o) {
    const ExperimentConfig cfg = resolve(o);
    const auto rows = read_metrics_csv(cfg.output_dir / "metrics.csv");
    write_aggregated_csv(aggregate_table(rows), cfg.output_dir / "aggregated.csv");
    std::cout << "re-aggregated " << rows.size() << " rows into "
              << (cfg.output_dir / "aggregated.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ulab: reference-guided unlearning laboratory"};
    app.require_subcommand(1);

    CommonOptions train_o, unlearn_o, eval_o, run_o, sweep_o, report_o;
    UnlearnOptions uopts;

    auto* train_cmd = app.add_subcommand("train", "Train Base, Retrain and attack reference models");
    add_common(train_cmd, train_o, true);

    auto* unlearn_cmd = app.add_subcommand("unlearn", "Run one unlearning method from a Base checkpoint");
    add_common(unlearn_cmd, unlearn_o, true);
    unlearn_cmd->add_option("--method", uopts.method, "regun | neggrad | neggrad_plus | finetune | l1_sparse");
    unlearn_cmd->add_option("--lr", uopts.lr, "Learning rate");
    unlearn_cmd->add_option("--w", uopts.w, "Retain weight w");
    unlearn_cmd->add_option("--gamma", uopts.gamma, "l1 penalty weight");
    unlearn_cmd->add_option("--epochs", uopts.epochs, "Epoch budget override");
    unlearn_cmd->add_option("--model", uopts.model, "Base checkpoint (default: <out>/seed_<s>/base.ckpt)");

    auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate checkpoints into a metrics CSV");
    add_common(eval_cmd, eval_o, true);

    auto* run_cmd = app.add_subcommand("run", "Full experiment: train, grid search, select, report");
    add_common(run_cmd, run_o, false);
    std::string run_method_filter;
    run_cmd->add_option("--method", run_method_filter, "Restrict to one method");

    auto* sweep_cmd = app.add_subcommand("sweep", "Forgetting-utility trade-off sweep over w");
    add_common(sweep_cmd, sweep_o, false);
    std::string sweep_method_filter;
    sweep_cmd->add_option("--method", sweep_method_filter, "Restrict the sweep to one method");

    auto* report_cmd = app.add_subcommand("report", "Re-aggregate an existing metrics.csv");
    add_common(report_cmd, report_o, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) return cmd_train(train_o);
        if (*unlearn_cmd) return cmd_unlearn(unlearn_o, uopts);
        if (*eval_cmd) return cmd_evaluate(eval_o);
        if (*run_cmd) {
            if (!run_method_filter.empty()) {
                // Keep only the requested method; the sweep follows it when applicable.
                ExperimentConfig probe = resolve(run_o);
                const Method m = parse_method(run_method_filter);
                std::erase_if(probe.methods, [&](const MethodGrid& g) { return g.method != m; });
                std::erase_if(probe.sweep_methods, [&](Method s) { return s != m; });
                const ExperimentResult res = run_experiment(probe);
                write_report(probe, res, probe.output_dir);
                print_summary(res);
                return 0;
            }
            return cmd_run(run_o, false);
        }
        if (*sweep_cmd) {
            if (!sweep_method_filter.empty()) {
                ExperimentConfig probe = resolve(sweep_o);
                const Method m = parse_method(sweep_method_filter);
                if (!method_uses_w(m)) throw ConfigError("method " + sweep_method_filter + " has no w to sweep");
                std::erase_if(probe.methods, [&](const MethodGrid& g) { return g.method != m; });
                probe.sweep_methods = {m};
                const ExperimentResult res = run_experiment(probe);
                write_report(probe, res, probe.output_dir);
                for (const auto& p : res.sweep) {
                    std::printf("%-12s %4.2f  %8.2f  %8.2f  %6.2f\n", to_string(p.method).c_str(), p.w,
                                p.test_acc_mean, p.rmia_auc_mean, p.gap_tp_mean);
                }
                return 0;
            }
            return cmd_run(sweep_o, true);
        }
        if (*report_cmd) return cmd_report(report_o);
    } catch (const ulab::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
