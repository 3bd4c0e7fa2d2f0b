#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dance/matrix.hpp"
#include "dance/model.hpp"

namespace dance {

enum class Regime { CDA, PDA, ODA, OPDA };

Regime regime_from_string(const std::string& s);
const char* regime_name(Regime r);

/// Label-set bookkeeping for one category-shift setting. Classes are world
/// indices assigned in order: shared first, then source-private, then
/// target-private, so source labels are always contiguous in [0, K).
struct ShiftScenario {
    Regime regime = Regime::CDA;
    std::vector<int> shared;
    std::vector<int> source_private;
    std::vector<int> target_private;
    std::size_t n_world_classes = 0;
    std::uint64_t seed = 0;

    std::size_t num_source_classes() const { return shared.size() + source_private.size(); }
    std::vector<int> source_labels() const;
    std::vector<int> target_labels() const;
    bool is_target_private(int label) const;
};

ShiftScenario make_scenario(Regime regime, std::size_t n_total_classes, std::size_t n_shared,
                            std::size_t n_source_private, std::size_t n_target_private,
                            std::uint64_t seed);

/// The paper's openness ratio 1 - |shared| / |target-private|; undefined
/// (throws) when there are no target-private classes. Note this differs from
/// the more common 1 - |shared| / |L_t| convention.
double openness(const ShiftScenario& scenario);

/// Rigid-ish perturbation of the observed space standing in for real domain
/// shift: rotation by `rotation` radians inside a seeded 2-plane, uniform
/// scaling, translation, then isotropic Gaussian noise.
struct DomainTransform {
    double rotation = 0.0;
    std::vector<double> translation; // empty = zero vector
    double scale = 1.0;
    double noise_sigma = 0.0;

    static DomainTransform identity() { return {}; }
    void validate() const;
};

struct LabeledSet {
    Matrix x;
    std::vector<int> y;
    std::string domain;
};

/// Cluster geometry for the synthetic benchmark. Class centers live on the
/// unit circle for latent_dim == 2 and on seeded random unit directions
/// otherwise, redrawn until every pair has cosine <= max_center_cos so the
/// clusters are genuinely separated; a fixed seeded orthonormal embedding
/// lifts them to input_dim, where lift_noise_sigma is added for both
/// domains.
struct SynthConfig {
    std::size_t latent_dim = 6;
    std::size_t input_dim = 10;
    double cluster_sigma = 0.12;
    double lift_noise_sigma = 0.05;
    double max_center_cos = 0.5;
    std::size_t n_per_class = 100;
};

/// Draws n_per_class samples for every class legal in `which`, applies the
/// transform (source conventionally passes identity), and tags rows with
/// world class labels.
LabeledSet generate_domain(const ShiftScenario& scenario, const SynthConfig& cfg, Domain which,
                           std::size_t n_per_class, const DomainTransform& transform,
                           std::uint64_t seed);

/// Analytic post-transform mean of one class, for oracle checks:
/// scale * R * (E * center_c) + translation.
std::vector<double> analytic_class_mean(const ShiftScenario& scenario, const SynthConfig& cfg,
                                        int class_id, const DomainTransform& transform);

// --- canonical desk-scale benchmark ("synth-office") ------------------------

/// 12 world classes; splits CDA 12/0/0, PDA 6/6/0, ODA 6/0/6, OPDA 6/3/3.
ShiftScenario make_synth_office_scenario(Regime regime, std::uint64_t seed);

SynthConfig synth_office_config();

/// Rotation in a plane seeded by the scenario, translation of the given norm
/// along a seeded direction, uniform scale and extra noise.
DomainTransform make_shift_transform(const ShiftScenario& scenario, const SynthConfig& cfg,
                                     double rotation_rad, double translation_norm, double scale,
                                     double noise_sigma);

/// 25 degree rotation in a seeded plane, 0.3 translation along a seeded
/// direction, noise sigma 0.15.
DomainTransform synth_office_target_transform(const ShiftScenario& scenario,
                                              const SynthConfig& cfg);

// --- CSV interchange ---------------------------------------------------------

/// Header "f0,...,f{D-1},label"; doubles plus an integer label per row.
void save_csv(const LabeledSet& set, const std::string& path);
LabeledSet load_csv(const std::string& path);

} // namespace dance
