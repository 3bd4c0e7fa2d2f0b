#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dance/matrix.hpp"
#include "dance/model.hpp"
#include "dance/synthdata.hpp"

namespace dance {

/// Prediction value for rejected samples.
inline constexpr int kUnknownLabel = -1;

/// UNKNOWN when H(p) > rho, else argmax (ties to the lowest index).
int predict_with_rejection(const double* p, std::size_t k, double rho);
std::vector<int> predict_with_rejection(const Matrix& probs, double rho);

struct PerClassAccuracy {
    std::string name; // "c<label>" or "unknown"
    double accuracy;
    std::size_t count;
};

struct MetricsReport {
    Regime regime = Regime::CDA;
    double overall_acc = 0.0;
    double os = std::numeric_limits<double>::quiet_NaN();      // class average incl. unknown
    double os_star = std::numeric_limits<double>::quiet_NaN(); // class average, known only
    double auc_unknown = std::numeric_limits<double>::quiet_NaN();
    double openness = std::numeric_limits<double>::quiet_NaN();
    std::vector<PerClassAccuracy> per_class;
    std::size_t n_rejected = 0;
    std::size_t n_samples = 0;
};

/// Scores target predictions against world labels. A target-private sample
/// counts correct iff predicted UNKNOWN; all target-private classes pool
/// into one "unknown" per-class bucket. OS/OS* are reported only for
/// regimes with target-private classes.
MetricsReport score_predictions(const std::vector<int>& preds, const std::vector<int>& truth,
                                const ShiftScenario& scenario);

/// ROC-AUC of `scores` as an unknown-detector, rank-sum (Mann-Whitney)
/// formulation with midrank ties. Needs at least one positive and one
/// negative flag.
double auc_unknown(const std::vector<double>& scores, const std::vector<bool>& is_unknown);

struct ProbeResult {
    double known_acc;
    double novel_acc;
};

/// One-shot linear evaluation of frozen features: a bias-free linear softmax
/// classifier over every class present in the target (including private
/// ones) is trained on one seeded support sample per class with 100
/// full-batch gradient-descent epochs at lr 0.1, then scored on the rest.
ProbeResult linear_probe(const Matrix& features, const std::vector<int>& labels,
                         const ShiftScenario& scenario, std::uint64_t seed,
                         std::size_t epochs = 100, double lr = 0.1);

struct OpennessSweepRow {
    std::size_t n_unknown;
    std::string method;
    MetricsReport report;
};

/// Runs `runner` for every (method, unknown-count) pair.
std::vector<OpennessSweepRow> openness_sweep(
    const std::vector<std::string>& methods,
    const std::vector<std::size_t>& unknown_counts,
    const std::function<MetricsReport(const std::string&, std::size_t)>& runner);

struct EvalOutput {
    MetricsReport report;
    std::vector<int> preds;
    std::vector<double> entropy;
};

/// Full protocol on one trained model: inference features with the given
/// domain's BN statistics, temperature-scaled prototype logits,
/// entropy-threshold rejection at rho_eval, metrics plus unknown-AUC where
/// defined.
EvalOutput evaluate_model(Model& model, const LabeledSet& target, const ShiftScenario& scenario,
                          Domain domain, double rho_eval);

std::string metrics_to_json(const MetricsReport& report);

/// Flat CSV fragment, stable column order; see results schema in README.
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& report);

} // namespace dance
