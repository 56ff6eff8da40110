#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ulab/datakit.hpp"
#include "ulab/model.hpp"

namespace ulab {

/// One evaluated model for one seed. All metrics are percentages.
struct MetricsReport {
    std::string method;
    std::uint64_t seed = 0;
    /// Trade-off weight, or NaN when the method has none.
    double w = 0.0;
    double retain_acc = 0.0;
    double forget_acc = 0.0;
    double test_acc = 0.0;
    double val_acc = 0.0;
    double retain_div = 0.0;
    double test_div = 0.0;
    double rmia_auc = 0.0;
    double smia_auc = 0.0;
    double gap_rftp = 0.0;
    double gap_tp = 0.0;
    /// Hyperparameters that produced the row (lr, gamma); informational.
    double lr = 0.0;
    double gamma = 0.0;
    bool failed = false;
    std::string error;
};

/// Member scores (forget set) and nonmember scores (test set); larger = more member-like.
struct AttackScores {
    std::vector<double> member_scores;
    std::vector<double> nonmember_scores;
};

/// 100 x fraction of rows whose argmax (ties to the lowest class) equals the label.
double accuracy(const Model& model, const Matrix& x, std::span<const int> labels);
double accuracy(const Model& model, const Dataset& data);

/// -CE(p(.|x), y) per row.
std::vector<double> smia_scores(const Model& model, const Matrix& x, std::span<const int> labels);

/// Floor for the reference-probability denominator of rmia_lite_scores.
inline constexpr double kRmiaEpsilon = 1e-12;

/// p_target(y|x) / max(eps, mean_r p_ref_r(y|x)) per row.
std::vector<double> rmia_lite_scores(const Model& target, std::span<const Model> references,
                                     const Matrix& x, std::span<const int> labels);

/// Twice the Mann-Whitney U: 2 x #(member > nonmember) + #(ties). Exact.
std::uint64_t mann_whitney_twice_u(const AttackScores& s);

/// 100 x U / (n_members * n_nonmembers), in [0, 100].
double attack_auc(const AttackScores& s);

/// Converts an exact pair tally into a percentage such that tallies t and
/// 2N - t map to values summing to exactly 100.
double auc_percent(std::uint64_t twice_u, std::uint64_t pairs);

/// Base-2 Jensen-Shannon divergence of two distributions, in [0, 1].
double js_divergence(std::span<const double> p, std::span<const double> q);

/// 100 x mean per-row JSD between the two models' predictions.
double js_divergence_avg(const Model& a, const Model& b, const Matrix& x);

struct Gaps {
    double rftp = 0.0;
    double tp = 0.0;
};

/// Mean |difference| to the retrain row over (retain, forget, test, rmia) and (test, rmia).
Gaps gap_report(const MetricsReport& method, const MetricsReport& retrain);

/// Per-field mean and sample standard deviation (n - 1; 0 for a single report).
struct AggregateReport {
    std::string method;
    double w = 0.0;
    std::size_t n = 0;
    MetricsReport mean;
    MetricsReport std;
};

AggregateReport aggregate_seeds(std::span<const MetricsReport> reports);

/// Names of the numeric metric columns, in report order.
const std::vector<std::string>& metric_names();
/// Metric values of a report in metric_names() order.
std::vector<double> metric_values(const MetricsReport& r);
void set_metric_values(MetricsReport& r, std::span<const double> values);

struct EvalInputs {
    const Dataset& pool;
    const DataSplits& splits;
    /// Trained on fresh draws; used by the calibrated attack.
    std::span<const Model> references;
    /// Retrain model for the divergence columns.
    const Model& retrain;
};

/// Accuracies, divergences and attack AUCs for one model. Gap columns are left at 0.
MetricsReport evaluate_model(const Model& model, const EvalInputs& in, const std::string& method,
                             std::uint64_t seed, double w);

}  // namespace ulab
