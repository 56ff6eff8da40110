#include "ulab/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ulab {

namespace {

std::size_t argmax_first(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < v.size(); ++k) {
        if (v[k] > v[best]) best = k;
    }
    return best;
}

void check_labels(const Matrix& x, std::span<const int> labels, std::size_t K) {
    if (x.rows() != labels.size()) throw ShapeError("rows and labels differ in count");
    for (int y : labels) {
        if (y < 1 || static_cast<std::size_t>(y) > K) throw LabelError("label out of range");
    }
}

}  // namespace

double accuracy(const Model& model, const Matrix& x, std::span<const int> labels) {
    if (x.rows() == 0) throw EmptyBatchError("accuracy: empty subset");
    check_labels(x, labels, model.arch.num_classes);
    const Matrix z = forward_logits(model, x);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        if (argmax_first(z.row(i)) + 1 == static_cast<std::size_t>(labels[i])) ++correct;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(z.rows());
}

double accuracy(const Model& model, const Dataset& data) {
    return accuracy(model, data.features, data.labels);
}

std::vector<double> smia_scores(const Model& model, const Matrix& x, std::span<const int> labels) {
    check_labels(x, labels, model.arch.num_classes);
    const Matrix z = forward_logits(model, x);
    std::vector<double> out(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const auto row = z.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double v : row) s += std::exp(v - mx);
        // log p(y) = z_y - logsumexp(z)
        out[i] = row[static_cast<std::size_t>(labels[i] - 1)] - (mx + std::log(s));
    }
    return out;
}

std::vector<double> rmia_lite_scores(const Model& target, std::span<const Model> references,
                                     const Matrix& x, std::span<const int> labels) {
    if (references.empty()) throw ConfigError("rmia_lite_scores: no reference models");
    check_labels(x, labels, target.arch.num_classes);
    const Matrix pt = forward_probs_matrix(target, x);
    std::vector<double> ref_mean(x.rows(), 0.0);
    for (const Model& r : references) {
        if (r.arch.num_classes != target.arch.num_classes) throw ShapeError("reference class count mismatch");
        const Matrix pr = forward_probs_matrix(r, x);
        for (std::size_t i = 0; i < x.rows(); ++i) ref_mean[i] += pr(i, static_cast<std::size_t>(labels[i] - 1));
    }
    const double inv = 1.0 / static_cast<double>(references.size());
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double denom = std::max(kRmiaEpsilon, ref_mean[i] * inv);
        out[i] = pt(i, static_cast<std::size_t>(labels[i] - 1)) / denom;
    }
    return out;
}

std::uint64_t mann_whitney_twice_u(const AttackScores& s) {
    if (s.member_scores.empty() || s.nonmember_scores.empty()) {
        throw EmptyBatchError("attack_auc: both score sets must be nonempty");
    }
    std::vector<double> non = s.nonmember_scores;
    std::sort(non.begin(), non.end());
    std::uint64_t twice = 0;
    for (double m : s.member_scores) {
        const auto lo = std::lower_bound(non.begin(), non.end(), m);
        const auto hi = std::upper_bound(lo, non.end(), m);
        twice += 2 * static_cast<std::uint64_t>(lo - non.begin()) + static_cast<std::uint64_t>(hi - lo);
    }
    return twice;
}

double auc_percent(std::uint64_t twice_u, std::uint64_t pairs) {
    const std::uint64_t full = 2 * pairs;
    // Round the smaller side and take the complement for the larger one so that
    // swapping members and nonmembers sums to exactly 100.
    if (twice_u <= full - twice_u) {
        return 100.0 * static_cast<double>(twice_u) / static_cast<double>(full);
    }
    return 100.0 - 100.0 * static_cast<double>(full - twice_u) / static_cast<double>(full);
}

double attack_auc(const AttackScores& s) {
    const std::uint64_t pairs =
        static_cast<std::uint64_t>(s.member_scores.size()) * s.nonmember_scores.size();
    return auc_percent(mann_whitney_twice_u(s), pairs);
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw ShapeError("js_divergence: class counts differ");
    double kl_p = 0.0, kl_q = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double mk = 0.5 * (p[k] + q[k]);
        if (p[k] > 0.0) kl_p += p[k] * std::log2(p[k] / mk);
        if (q[k] > 0.0) kl_q += q[k] * std::log2(q[k] / mk);
    }
    return std::clamp(0.5 * kl_p + 0.5 * kl_q, 0.0, 1.0);
}

double js_divergence_avg(const Model& a, const Model& b, const Matrix& x) {
    if (a.arch.num_classes != b.arch.num_classes) throw ShapeError("js_divergence_avg: class count mismatch");
    if (x.rows() == 0) throw EmptyBatchError("js_divergence_avg: no samples");
    const Matrix pa = forward_probs_matrix(a, x);
    const Matrix pb = forward_probs_matrix(b, x);
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) s += js_divergence(pa.row(i), pb.row(i));
    return 100.0 * s / static_cast<double>(x.rows());
}

Gaps gap_report(const MetricsReport& m, const MetricsReport& r) {
    const double d_retain = std::abs(m.retain_acc - r.retain_acc);
    const double d_forget = std::abs(m.forget_acc - r.forget_acc);
    const double d_test = std::abs(m.test_acc - r.test_acc);
    const double d_rmia = std::abs(m.rmia_auc - r.rmia_auc);
    return {(d_retain + d_forget + d_test + d_rmia) / 4.0, (d_test + d_rmia) / 2.0};
}

const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names = {
        "retain_acc", "forget_acc", "test_acc", "val_acc", "retain_div",
        "test_div",   "rmia_auc",   "smia_auc", "gap_rftp", "gap_tp"};
    return names;
}

std::vector<double> metric_values(const MetricsReport& r) {
    return {r.retain_acc, r.forget_acc, r.test_acc, r.val_acc, r.retain_div,
            r.test_div,   r.rmia_auc,   r.smia_auc, r.gap_rftp, r.gap_tp};
}

void set_metric_values(MetricsReport& r, std::span<const double> v) {
    if (v.size() != metric_names().size()) throw ShapeError("metric vector has the wrong length");
    r.retain_acc = v[0];
    r.forget_acc = v[1];
    r.test_acc = v[2];
    r.val_acc = v[3];
    r.retain_div = v[4];
    r.test_div = v[5];
    r.rmia_auc = v[6];
    r.smia_auc = v[7];
    r.gap_rftp = v[8];
    r.gap_tp = v[9];
}

AggregateReport aggregate_seeds(std::span<const MetricsReport> reports) {
    if (reports.empty()) throw ConfigError("aggregate_seeds: no reports");
    const std::size_t F = metric_names().size();
    const std::size_t n = reports.size();
    std::vector<double> mean(F, 0.0), var(F, 0.0);
    for (const auto& r : reports) {
        const auto v = metric_values(r);
        for (std::size_t f = 0; f < F; ++f) mean[f] += v[f];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    if (n > 1) {
        for (const auto& r : reports) {
            const auto v = metric_values(r);
            for (std::size_t f = 0; f < F; ++f) var[f] += (v[f] - mean[f]) * (v[f] - mean[f]);
        }
        for (double& s : var) s = std::sqrt(s / static_cast<double>(n - 1));
    }
    AggregateReport out;
    out.method = reports.front().method;
    out.w = reports.front().w;
    out.n = n;
    out.mean.method = out.std.method = out.method;
    out.mean.w = out.std.w = out.w;
    out.mean.lr = out.std.lr = reports.front().lr;
    out.mean.gamma = out.std.gamma = reports.front().gamma;
    set_metric_values(out.mean, mean);
    set_metric_values(out.std, var);
    return out;
}

MetricsReport evaluate_model(const Model& model, const EvalInputs& in, const std::string& method,
                             std::uint64_t seed, double w) {
    const Dataset& pool = in.pool;
    const DataSplits& sp = in.splits;
    const Matrix xr = pool.rows(sp.retain), xf = pool.rows(sp.forget), xv = pool.rows(sp.validation);
    const auto yr = pool.labels_of(sp.retain), yf = pool.labels_of(sp.forget),
               yv = pool.labels_of(sp.validation);
    const Dataset& test = sp.test;

    MetricsReport r;
    r.method = method;
    r.seed = seed;
    r.w = w;
    r.retain_acc = accuracy(model, xr, yr);
    r.forget_acc = accuracy(model, xf, yf);
    r.test_acc = accuracy(model, test);
    r.val_acc = accuracy(model, xv, yv);
    r.retain_div = js_divergence_avg(model, in.retrain, xr);
    r.test_div = js_divergence_avg(model, in.retrain, test.features);

    AttackScores rmia{rmia_lite_scores(model, in.references, xf, yf),
                      rmia_lite_scores(model, in.references, test.features, test.labels)};
    r.rmia_auc = attack_auc(rmia);
    AttackScores smia{smia_scores(model, xf, yf), smia_scores(model, test.features, test.labels)};
    r.smia_auc = attack_auc(smia);
    return r;
}

}  // namespace ulab
