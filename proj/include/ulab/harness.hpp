#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ulab/datakit.hpp"
#include "ulab/evalkit.hpp"
#include "ulab/model.hpp"
#include "ulab/training.hpp"
#include "ulab/unlearners.hpp"

#include <nlohmann/json.hpp>

namespace ulab {

enum class DataSource { gaussian, csv };

struct DataConfig {
    DataSource source = DataSource::gaussian;
    GenSpec gen;
    std::filesystem::path pool_csv;
    std::filesystem::path test_csv;
    bool csv_header = false;
};

/// Hyperparameter grid for one method. Empty lists fall back to a single default.
struct MethodGrid {
    Method method = Method::regun;
    std::vector<double> lr;
    std::vector<double> w;
    std::vector<double> gamma;
    /// Forget batch size for this method; 0 uses the shared unlearning batch size.
    std::size_t batch_size = 0;
};

struct ExperimentConfig {
    DataConfig data;
    /// kind, hidden_dim and activation; input_dim and num_classes follow the data.
    ArchitectureSpec arch{ArchKind::mlp1, 0, 128, 0, Activation::relu};
    TrainConfig base_training{100, 64, 0.02, 0.9, 0, 0.0};
    double forget_fraction = 0.1;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::size_t rmia_references = 4;
    /// Shared unlearning settings: epochs (NegGrad keeps its own 2), batch sizes, momentum, m.
    std::size_t unlearn_epochs = 10;
    std::size_t unlearn_batch_size = 64;
    std::size_t retain_batch_size = 0;
    /// RefDist sample size; 0 means the forget batch size.
    std::size_t refdist_m = 64;
    double unlearn_momentum = 0.9;
    std::vector<MethodGrid> methods;
    std::vector<Method> sweep_methods;
    std::vector<double> sweep_w;
    std::size_t jobs = 1;
    std::filesystem::path output_dir = "ulab_out";

    /// The calibrated default task with every method and the trade-off sweep enabled.
    static ExperimentConfig defaults();
    void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Everything one seed needs: data, splits, and the trained fixed models.
struct SeedContext {
    std::uint64_t seed = 0;
    Dataset pool;
    DataSplits splits;
    Model init;
    Model base;
    Model retrain;
    std::vector<Model> references;
    /// Retrain evaluated once; the gap baseline for every row of this seed.
    MetricsReport retrain_eval;
};

/// Data, splits and the shared initialization only; no training.
SeedContext prepare_data(const ExperimentConfig& cfg, std::uint64_t seed);

/// Trains the attack reference models for a prepared seed.
std::vector<Model> train_references(const ExperimentConfig& cfg, const SeedContext& ctx);

/// Installs trained models into a prepared context and evaluates the Retrain baseline.
void attach_models(SeedContext& ctx, Model base, Model retrain, std::vector<Model> references);

/// Generates/loads data, splits it, trains Base (retain + forget), Retrain (retain) and
/// the attack reference models. Pure in (cfg, seed).
SeedContext prepare_seed(const ExperimentConfig& cfg, std::uint64_t seed);

/// Unlearning config for one grid point, with shared settings and a per-seed stream.
UnlearnConfig make_unlearn_config(const ExperimentConfig& cfg, Method m, double lr, double w,
                                  double gamma, std::uint64_t seed);

/// Runs one method configuration on a prepared seed and evaluates it (gaps filled in).
MetricsReport run_method(const ExperimentConfig& cfg, const SeedContext& ctx,
                         const UnlearnConfig& ucfg);

MetricsReport evaluate_in_context(const SeedContext& ctx, const Model& model,
                                  const std::string& name, double w);

/// One point of a trade-off curve (seed aggregated).
struct SweepPoint {
    Method method = Method::regun;
    double w = 0.0;
    double lr = 0.0;
    std::size_t n = 0;
    double test_acc_mean = 0.0, test_acc_std = 0.0;
    double rmia_auc_mean = 0.0, rmia_auc_std = 0.0;
    double gap_tp_mean = 0.0, gap_tp_std = 0.0;
};

/// Grid rows carry the hyperparameters that produced them.
struct GridResult {
    UnlearnConfig config;
    MetricsReport aggregate_mean;
    std::vector<MetricsReport> per_seed;
};

/// Score used for selection: |forget_acc - val_acc| + max(0, base_val_acc - val_acc).
double selection_score(const MetricsReport& r, double base_val_acc);

/// Lowest score wins; ties go to higher val_acc, then lower lr, then lower w, then lower gamma.
std::size_t select_hyperparams(const std::vector<GridResult>& grid, double base_val_acc);

struct ExperimentResult {
    /// Base, Retrain and the selected row of each method, for every seed.
    std::vector<MetricsReport> table;
    /// Every grid point, every seed.
    std::vector<MetricsReport> grid_rows;
    std::vector<AggregateReport> aggregated;
    std::vector<SweepPoint> sweep;
    /// Chosen configuration per method.
    std::map<std::string, UnlearnConfig> selected;
    /// seed -> error message, for seeds that aborted.
    std::map<std::uint64_t, std::string> failures;
};

struct RunOptions {
    bool run_sweep = true;
};

/// The full protocol: per-seed preparation and grids, selection on seed-aggregated
/// grid means, optional trade-off sweep at the selected lr. Deterministic in cfg;
/// cfg.jobs only changes scheduling.
ExperimentResult run_experiment(const ExperimentConfig& cfg, RunOptions opts = {});

/// Sweeps w for one method at a fixed lr over prepared seeds.
std::vector<SweepPoint> sweep_tradeoff(const ExperimentConfig& cfg,
                                       const std::vector<SeedContext>& seeds, Method method,
                                       double lr, const std::vector<double>& w_grid);

/// Orders rows by (method rank, seed, w) with Base and Retrain first.
void sort_report_rows(std::vector<MetricsReport>& rows);
std::vector<AggregateReport> aggregate_table(const std::vector<MetricsReport>& rows);

/// Column order of metrics.csv.
const std::vector<std::string>& metrics_columns();

/// with_hyperparams appends lr and gamma columns (used for grid.csv).
void write_metrics_csv(const std::vector<MetricsReport>& rows, const std::filesystem::path& path,
                       bool with_hyperparams = false);
std::vector<MetricsReport> read_metrics_csv(const std::filesystem::path& path);
void write_aggregated_csv(const std::vector<AggregateReport>& rows, const std::filesystem::path& path);
std::vector<AggregateReport> read_aggregated_csv(const std::filesystem::path& path);
void write_sweep_csv(const std::vector<SweepPoint>& points, const std::filesystem::path& path);

/// metrics.csv, grid.csv, aggregated.csv, sweep.csv (when present) and manifest.json.
void write_report(const ExperimentConfig& cfg, const ExperimentResult& result,
                  const std::filesystem::path& dir);

}  // namespace ulab
