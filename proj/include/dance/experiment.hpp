#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dance/baselines.hpp"
#include "dance/evalkit.hpp"
#include "dance/synthdata.hpp"
#include "dance/trainer.hpp"

namespace dance {

/// Everything a single experiment needs: scenario recipe, method, training
/// hyperparameters, evaluation options. One instance drives 1..n seeds.
struct ExperimentConfig {
    Regime regime = Regime::CDA;
    Method method = Method::DANCE;
    std::vector<std::uint64_t> seeds = {0};

    TrainConfig train;
    BaselineConfig baseline;
    SynthConfig synth;

    // model architecture (input_dim and num_classes are bound per scenario)
    std::vector<std::size_t> hidden_dims = {64};
    std::size_t feat_dim = 32;
    double tau_cls = 0.3;

    // target-domain shift
    double rotation_deg = 25.0;
    double translation_norm = 0.6;
    double shift_scale = 1.0;
    double shift_noise_sigma = 0.15;

    // scenario split; nullopt = canonical synth-office split for the regime
    std::optional<std::array<std::size_t, 4>> split; // total/shared/src-private/tgt-private

    std::optional<double> rho_eval; // nullopt = ln(K)/2
    std::string out_dir;            // empty = no files written

    void validate() const;
};

struct ResultsRow {
    std::string method;
    std::string regime;
    std::uint64_t seed = 0;
    MetricsReport report;
    double wall_seconds = 0.0;
    std::string config_hash;
};

struct SummaryRow {
    std::string method;
    std::string regime;
    std::size_t n_seeds = 0;
    double metric_mean = 0.0; // headline metric: overall acc (CDA/PDA), OS (ODA/OPDA)
    double metric_std = 0.0;
    double auc_mean = std::numeric_limits<double>::quiet_NaN();
};

/// Overall accuracy for CDA/PDA, OS for ODA/OPDA.
double headline_metric(const MetricsReport& report);

/// Hash over every semantically meaningful field, independent of any input
/// file ordering; output paths are excluded.
std::string config_hash(const ExperimentConfig& cfg);

ShiftScenario scenario_for(const ExperimentConfig& cfg, std::uint64_t seed);
DomainTransform target_transform_for(const ExperimentConfig& cfg, const ShiftScenario& scenario);

struct ExperimentData {
    ShiftScenario scenario;
    LabeledSet source;
    LabeledSet target;
};
ExperimentData make_experiment_data(const ExperimentConfig& cfg, std::uint64_t seed);

struct TrainedRun {
    Model model;
    std::vector<LossLogRow> log;
};
/// Trains cfg.method on the given data with cfg.train seeded by `seed`.
TrainedRun train_method(const ExperimentConfig& cfg, const ExperimentData& data,
                        std::uint64_t seed);

/// generate -> train -> evaluate, one row per seed; writes results, loss
/// logs, checkpoints and the scenario description under out_dir when set.
std::vector<ResultsRow> run_experiment(const ExperimentConfig& cfg);

SummaryRow summarize(const std::vector<ResultsRow>& rows);

struct MatrixResult {
    std::vector<ResultsRow> rows;
    std::vector<SummaryRow> summaries;
    std::vector<std::string> errors; // one entry per failed cell, grid still completes
};

/// Full cross product with a single shared hyperparameter set.
MatrixResult run_matrix(const std::vector<Regime>& regimes, const std::vector<Method>& methods,
                        const ExperimentConfig& base);

struct SweepRow {
    std::string param;
    double value;
    ResultsRow row;
};

/// Sensitivity sweep over lambda, m, tau_nc (full retrain per value) or rho
/// (one checkpoint per seed, re-evaluated under each threshold).
std::vector<SweepRow> run_sensitivity(const std::string& param, const std::vector<double>& values,
                                      const ExperimentConfig& base);

/// Trains cfg.method, freezes target features under the method's eval
/// domain, and runs the one-shot linear probe.
ProbeResult probe_experiment(const ExperimentConfig& cfg, std::uint64_t seed);

struct PcaProjection {
    Matrix coords; // n x 2
    std::array<double, 2> explained_fraction;
};
PcaProjection pca_top2(const Matrix& features);

/// CSV (x, y, label, known_flag) of the top-2 PCA projection.
void emit_projection(const Matrix& features, const std::vector<int>& labels,
                     const std::vector<bool>& known_flags, const std::string& path);

// --- results files -----------------------------------------------------------

std::string results_csv_header();
std::string results_csv_row(const ResultsRow& row);
void write_results_csv(const std::vector<ResultsRow>& rows, const std::string& path);
std::vector<ResultsRow> read_results_csv(const std::string& path);
void write_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path);

// --- config files --------------------------------------------------------------

/// Flat "key = value" text (# comments, lists comma-separated) or a .json
/// object with the same keys. Unknown keys are errors naming the key.
ExperimentConfig load_experiment_config(const std::string& path);
void apply_config_override(ExperimentConfig& cfg, const std::string& key,
                           const std::string& value);

} // namespace dance
