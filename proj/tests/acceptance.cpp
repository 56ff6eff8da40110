// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <optional>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "support.hpp"
#include "ulab/evalkit.hpp"
#include "ulab/harness.hpp"
#include "ulab/refdist.hpp"
#include "ulab/training.hpp"
#include "ulab/unlearners.hpp"

using namespace ulab;
using namespace ulab::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Collects sub-checks; the first failures are kept for the report line.
struct Checks {
    bool ok = true;
    std::vector<std::string> failures;
    std::ostringstream notes;

    void require(bool cond, const std::string& what) {
        if (cond) return;
        ok = false;
        if (failures.size() < 4) failures.push_back(what);
    }
    Outcome done() const {
        std::string d = notes.str();
        for (const auto& f : failures) d += (d.empty() ? "" : "; ") + std::string("FAILED ") + f;
        return {ok, d};
    }
};

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

std::string fmt_e(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

// 1 ------------------------------------------------------------------------

Outcome gradient_correctness() {
    Checks c;
    Rng rng(20240101);
    double worst = 0.0;
    std::size_t coords = 0;
    for (int draw = 0; draw < 100; ++draw) {
        const std::size_t d = 1 + rng.below(5), k = 2 + rng.below(4), n = 1 + rng.below(6);
        ArchitectureSpec arch{ArchKind::linear, d, 0, k, Activation::tanh};
        if (draw % 3 != 0) {
            arch.kind = ArchKind::mlp1;
            arch.hidden_dim = 1 + rng.below(6);
            arch.activation = draw % 3 == 1 ? Activation::tanh : Activation::relu;
        }
        LossSpec spec;
        switch (draw % 5) {
            case 0: spec = LossSpec::hard(); break;
            case 1: spec = LossSpec::negated_hard(); break;
            case 2: spec = LossSpec::soft(random_simplex(k, rng)); break;
            case 3: spec = LossSpec::kl(random_simplex(k, rng)); break;
            default: spec = LossSpec::hard(0.01 * rng.uniform()); break;
        }
        // The check needs a differentiable point: redraw if any relu unit or l1 coordinate sits near its kink.
        Model m;
        Matrix x;
        do {
            m = random_model(arch, rng);
            x = random_matrix(n, d, rng);
        } while (!away_from_kinks(m, x, spec, 1e-3));
        const auto y = random_labels(n, k, rng);
        const auto g = loss_and_grad(m, x, y, spec).grad;
        const auto fd = finite_difference_grad(m, x, y, spec, 1e-5);
        for (std::size_t i = 0; i < g.size(); ++i) {
            worst = std::max(worst, rel_error(g[i], fd[i]));
            ++coords;
        }
    }
    c.require(worst <= 1e-6, "max relative error " + fmt_e(worst) + " > 1e-6");
    c.notes << "100 draws, " << coords << " coords, max rel err " << fmt_e(worst);
    return c.done();
}

// 2 ------------------------------------------------------------------------

Outcome kl_ce_identity() {
    Checks c;
    Rng rng(2);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const std::size_t d = 1 + rng.below(6), k = 2 + rng.below(8), n = 1 + rng.below(10);
        const ArchitectureSpec arch = t % 2 ? ArchitectureSpec{ArchKind::linear, d, 0, k, Activation::tanh}
                                            : ArchitectureSpec{ArchKind::mlp1, d, 1 + rng.below(8), k,
                                                               t % 4 ? Activation::relu : Activation::tanh};
        const Model m = random_model(arch, rng, 1.0);
        const Matrix x = random_matrix(n, d, rng);
        const ProbVector q = random_simplex(k, rng);
        const auto a = loss_and_grad(m, x, {}, LossSpec::kl(q)).grad;
        const auto b = loss_and_grad(m, x, {}, LossSpec::soft(q)).grad;
        for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    c.require(worst <= 1e-12, "max |diff| " + fmt_e(worst));
    c.notes << "50 cases, max |grad diff| " << fmt_e(worst);
    return c.done();
}

// 3 ------------------------------------------------------------------------

Outcome histogram_contract() {
    Checks c;
    Rng rng(3);
    double worst = 0.0;
    for (int t = 0; t < 10000; ++t) {
        const std::size_t K = 1 + rng.below(20), b = 1 + rng.below(256), m = 1 + rng.below(512);
        std::vector<std::size_t> counts(K, 0);
        // Skewed draws leave some classes empty.
        const std::size_t active = 1 + rng.below(K);
        for (std::size_t i = 0; i < b; ++i) ++counts[rng.below(active)];
        const auto got = match_histogram(ClassHistogram{counts}, b, m);
        std::size_t sum = 0;
        for (std::size_t k = 0; k < K; ++k) {
            sum += got[k];
            const double dev = std::abs(static_cast<double>(got[k]) -
                                        static_cast<double>(m) * static_cast<double>(counts[k]) / static_cast<double>(b));
            worst = std::max(worst, dev);
            if (counts[k] == 0) c.require(got[k] == 0, "zero class received draws");
        }
        c.require(sum == m, "counts do not sum to m");
    }
    c.require(worst < 1.0, "max deviation " + fmt(worst));
    c.notes << "10^4 cases, max |c~ - m c/b| " << fmt(worst);
    return c.done();
}

// 4 ------------------------------------------------------------------------

Outcome auc_oracle() {
    Checks c;
    Rng rng(4);
    double naive_dev = 0.0;
    for (int t = 0; t < 500; ++t) {
        const std::size_t nm = 1 + rng.below(200), nn = 1 + rng.below(200);
        AttackScores s;
        const int mode = t % 4;  // 0: continuous, 1: few levels, 2: all equal, 3: shared values
        auto draw = [&] {
            switch (mode) {
                case 0: return rng.normal();
                case 1: return static_cast<double>(rng.below(4));
                case 2: return 0.5;
                default: return std::round(4.0 * rng.normal()) / 4.0;
            }
        };
        for (std::size_t i = 0; i < nm; ++i) s.member_scores.push_back(draw());
        for (std::size_t i = 0; i < nn; ++i) s.nonmember_scores.push_back(draw());

        std::uint64_t tally = 0;
        for (double a : s.member_scores) {
            for (double b : s.nonmember_scores) tally += a > b ? 2 : (a == b ? 1 : 0);
        }
        const std::uint64_t full = 2 * static_cast<std::uint64_t>(nm) * nn;
        // Percent conversion: the smaller side is divided, the larger one is its complement.
        const double expect = 2 * tally <= full ? 100.0 * static_cast<double>(tally) / static_cast<double>(full)
                                                : 100.0 - 100.0 * static_cast<double>(full - tally) / static_cast<double>(full);
        const double got = attack_auc(s);
        c.require(mann_whitney_twice_u(s) == tally, "pair tally mismatch at case " + std::to_string(t));
        c.require(got == expect, "auc mismatch at case " + std::to_string(t));
        naive_dev = std::max(naive_dev, std::abs(got - 100.0 * static_cast<double>(tally) / static_cast<double>(full)));
    }
    c.notes << "500 pairs (n <= 200, 375 with ties), tallies exact, max |auc - 100 t/2N| " << fmt_e(naive_dev);
    c.require(naive_dev <= 1e-12, "percent conversion drifted");
    return c.done();
}

// 5 ------------------------------------------------------------------------

Outcome published_row_gaps() {
    Checks c;
    MetricsReport base, retrain;
    base.retain_acc = 100.0;
    base.forget_acc = 100.0;
    base.test_acc = 94.20;
    base.rmia_auc = 60.11;
    retrain.retain_acc = 100.0;
    retrain.forget_acc = 94.22;
    retrain.test_acc = 94.34;
    retrain.rmia_auc = 49.98;
    const Gaps g = gap_report(base, retrain);
    c.require(std::abs(g.tp - 5.135) <= 1e-9, "gap_tp " + fmt(g.tp, 6) + " != 5.135");
    c.require(std::abs(g.tp - 5.14) <= 0.30, "gap_tp not within 0.30 of 5.14");
    c.require(std::abs(g.rftp - 4.0125) <= 1e-9, "gap_rftp " + fmt(g.rftp, 6) + " != 4.0125");
    c.require(std::abs(g.rftp - 3.88) <= 0.30, "gap_rftp not within 0.30 of 3.88");
    c.notes << "gap_tp " << fmt(g.tp) << " (reported 5.14), gap_rftp " << fmt(g.rftp) << " (reported 3.88)";
    return c.done();
}

// 6 ------------------------------------------------------------------------

Outcome degeneracies() {
    Checks c;
    const ToyTask task = toy_task(4, 6, 50, 2.0, 1.2, 0.1, 21);
    const Model init = Model::initialize({ArchKind::mlp1, 6, 16, 4, Activation::relu}, 3);
    const Model base = train(init, task.pool, task.splits.train_indices(), {40, 16, 0.05, 0.9, 5, 0.0});
    const auto& pool = task.pool;

    auto cfg = [](Method m, double lr, double w) {
        UnlearnConfig u = UnlearnConfig::defaults(m);
        u.lr = lr;
        u.w = w;
        u.batch_size = 8;
        u.retain_batch_size = 16;
        u.epochs = m == Method::neggrad ? kNegGradEpochs : 3;
        u.seed = 99;
        return u;
    };

    for (Method m : {Method::regun, Method::neggrad, Method::neggrad_plus, Method::finetune, Method::l1_sparse}) {
        UnlearnConfig u = cfg(m, 0.1, 0.5);
        u.epochs = 0;
        u.gamma = 1e-3;
        c.require(unlearn(base, task.splits, pool, u) == base, "epochs=0 not identity for " + to_string(m));
    }

    // ReGUn(w=1): every step is a Finetune step on the same retain batch from the shared stream.
    {
        const UnlearnConfig u = cfg(Method::regun, 0.05, 1.0);
        Model replay = base;
        OptState opt = OptState::fresh(u.lr, u.momentum, replay.theta.size());
        std::size_t steps = 0;
        bool same = true;
        const Model out = regun(base, task.splits, pool, u, nullptr, [&](const StepRecord& r) {
            const auto ft = loss_and_grad(replay, pool.rows(r.retain_batch), pool.labels_of(r.retain_batch),
                                          LossSpec::hard());
            same = same && r.theta_before == replay.theta && r.direction == ft.grad;
            sgd_step_inplace(replay.theta, ft.grad, opt);
            ++steps;
        });
        c.require(same && out == replay, "regun(w=1) step differs from a finetune step");
        c.require(steps == steps_for(u.epochs, task.splits.forget.size(), u.batch_size), "regun step count");
    }

    {
        UnlearnConfig u = cfg(Method::finetune, 0.05, 0.5);
        const Model ft = finetune(base, task.splits, pool, u);
        u.method = Method::l1_sparse;
        u.gamma = 0.0;
        c.require(l1_sparse(base, task.splits, pool, u) == ft, "l1_sparse(gamma=0) != finetune");
    }

    {
        UnlearnConfig u = cfg(Method::neggrad, 0.1, 0.5);
        bool first = true, ascent = true;
        neggrad(base, task.splits, pool, u, [&](const StepRecord& r) {
            if (!first) return;
            first = false;
            const auto ce = loss_and_grad(base, pool.rows(r.forget_batch), pool.labels_of(r.forget_batch),
                                          LossSpec::hard());
            // Step is theta - lr * direction; ascent means direction = -grad CE.
            for (std::size_t i = 0; i < ce.grad.size(); ++i) {
                if (ce.grad[i] != 0.0) ascent = ascent && std::signbit(r.direction[i]) != std::signbit(ce.grad[i]);
                ascent = ascent && r.direction[i] == -ce.grad[i];
            }
            Model after = base;
            for (std::size_t i = 0; i < after.theta.size(); ++i) after.theta[i] -= 1e-4 * r.direction[i];
            const double before_ce = ce.loss;
            const double after_ce = loss_and_grad(after, pool.rows(r.forget_batch), pool.labels_of(r.forget_batch),
                                                  LossSpec::hard()).loss;
            ascent = ascent && after_ce > before_ce;
        });
        c.require(!first && ascent, "neggrad first step is not gradient ascent");
    }
    c.notes << "identity x5, regun(w=1) per-step, l1(0)==finetune bitwise, neggrad ascent sign";
    return c.done();
}

// 7-9 ---------------------------------------------------------------------

const AggregateReport* find_agg(const ExperimentResult& r, const std::string& method) {
    for (const auto& a : r.aggregated) {
        if (a.method == method) return &a;
    }
    return nullptr;
}

Outcome trend(const ExperimentResult& r) {
    Checks c;
    c.require(r.failures.empty(), "a seed failed");
    const auto* base = find_agg(r, "base");
    const auto* retrain = find_agg(r, "retrain");
    const auto* regun = find_agg(r, "regun");
    const auto* ng = find_agg(r, "neggrad");
    if (!base || !retrain || !regun || !ng) {
        c.require(false, "missing aggregated rows");
        return c.done();
    }
    const auto& B = base->mean;
    const auto& R = retrain->mean;
    const auto& G = regun->mean;
    const auto& N = ng->mean;
    c.require(B.forget_acc >= 99 && B.smia_auc >= 60 && B.rmia_auc >= 60, "(a) base memorization");
    c.require(R.smia_auc >= 45 && R.smia_auc <= 55 && R.rmia_auc >= 45 && R.rmia_auc <= 55,
              "(b) retrain attack AUCs outside [45, 55]");
    c.require(std::abs(R.forget_acc - R.test_acc) <= 3, "(b) retrain |forget - test| = " + fmt(std::abs(R.forget_acc - R.test_acc), 2) + " > 3");
    c.require(std::abs(G.rmia_auc - 50) <= 5, "(c) regun rmia " + fmt(G.rmia_auc, 2));
    c.require(std::abs(G.test_acc - R.test_acc) <= 5, "(c) regun test vs retrain");
    c.require(G.gap_tp < N.gap_tp && G.gap_tp < B.gap_tp, "(d) gap_tp ordering");
    c.notes << "(a) base forget " << fmt(B.forget_acc, 2) << " smia " << fmt(B.smia_auc, 2) << " rmia "
            << fmt(B.rmia_auc, 2) << "; (b) retrain smia " << fmt(R.smia_auc, 2) << " rmia " << fmt(R.rmia_auc, 2)
            << " |forget-test| " << fmt(std::abs(R.forget_acc - R.test_acc), 2) << "; (c) regun rmia "
            << fmt(G.rmia_auc, 2) << " test " << fmt(G.test_acc, 2) << " vs retrain " << fmt(R.test_acc, 2)
            << "; (d) gap_tp regun " << fmt(G.gap_tp, 2) << " neggrad " << fmt(N.gap_tp, 2) << " base "
            << fmt(B.gap_tp, 2);
    return c.done();
}

Outcome sweep_stability(const ExperimentResult& r) {
    Checks c;
    auto spread = [&](Method m, std::size_t& count) {
        double lo = INFINITY, hi = -INFINITY;
        count = 0;
        for (const auto& p : r.sweep) {
            if (p.method != m) continue;
            lo = std::min(lo, p.test_acc_mean);
            hi = std::max(hi, p.test_acc_mean);
            ++count;
        }
        return hi - lo;
    };
    std::size_t nr = 0, nn = 0;
    const double sr = spread(Method::regun, nr), sn = spread(Method::neggrad_plus, nn);
    c.require(nr == 9 && nn == 9, "sweep needs 9 points per method");
    c.require(sr < sn, "regun spread not below neggrad_plus");
    c.notes << "test_acc spread over w=0.1..0.9: regun " << fmt(sr, 2) << " vs neggrad_plus " << fmt(sn, 2);
    return c.done();
}

bool same_files(const fs::path& a, const fs::path& b, std::string& diff) {
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(a)) names.insert(e.path().filename().string());
    for (const auto& e : fs::directory_iterator(b)) names.insert(e.path().filename().string());
    for (const auto& n : names) {
        if (!fs::exists(a / n) || !fs::exists(b / n) || slurp(a / n) != slurp(b / n)) {
            diff = n;
            return false;
        }
    }
    return !names.empty();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ulab acceptance criteria"};
    std::size_t jobs = 2;
    std::string work = (fs::temp_directory_path() / "ulab_acceptance").string();
    std::vector<int> only;
    app.add_option("--jobs", jobs, "Worker threads for the parallel runs");
    app.add_option("--work", work, "Scratch directory for report files");
    app.add_option("--only", only, "Run only these criteria");
    CLI11_PARSE(app, argc, argv);
    if (jobs < 2) jobs = 2;

    auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };
    int failed = 0;
    auto report = [&](int n, const std::string& name, const std::function<Outcome()>& fn) {
        if (!wanted(n)) return;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!o.pass) ++failed;
        std::printf("[%s] %d %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", n, name.c_str(), secs, o.detail.c_str());
        std::fflush(stdout);
    };

    report(1, "gradient correctness", gradient_correctness);
    report(2, "KL/CE gradient identity", kl_ce_identity);
    report(3, "RefDist histogram contract", histogram_contract);
    report(4, "AUC oracle equivalence", auc_oracle);
    report(5, "gap formulas on a published row", published_row_gaps);
    report(6, "degeneracy identities", degeneracies);

    if (wanted(7) || wanted(8) || wanted(9)) {
        const fs::path root(work);
        fs::remove_all(root);
        ExperimentConfig cfg = ExperimentConfig::defaults();
        cfg.jobs = jobs;
        std::optional<ExperimentResult> main_run;
        std::string run_error;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            main_run = run_experiment(cfg);
            write_report(cfg, *main_run, root / "parallel_a");
        } catch (const std::exception& e) {
            run_error = e.what();
        }
        std::printf("default experiment: %.1fs with jobs=%zu\n",
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), jobs);
        auto needs_run = [&](const std::function<Outcome(const ExperimentResult&)>& fn) {
            return [&, fn] { return main_run ? fn(*main_run) : Outcome{false, "default run failed: " + run_error}; };
        };
        report(7, "desk-scale trend (default task, 3 seeds)", needs_run(trend));
        report(8, "sweep stability", needs_run(sweep_stability));
        report(9, "determinism", [&] {
            Checks c;
            if (!main_run) return Outcome{false, "default run failed: " + run_error};
            std::string diff;
            write_report(cfg, run_experiment(cfg), root / "parallel_b");
            c.require(same_files(root / "parallel_a", root / "parallel_b", diff), "repeat run differs in " + diff);
            ExperimentConfig serial = cfg;
            serial.jobs = 1;
            write_report(serial, run_experiment(serial), root / "serial");
            c.require(same_files(root / "parallel_a", root / "serial", diff), "serial run differs in " + diff);
            c.notes << "default run twice with jobs=" << jobs << " and once serially: report files byte-identical";
            return c.done();
        });
    }

    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
