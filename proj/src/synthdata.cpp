#include "dance/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dance/rng.hpp"

namespace dance {

Regime regime_from_string(const std::string& s) {
    if (s == "CDA") return Regime::CDA;
    if (s == "PDA") return Regime::PDA;
    if (s == "ODA") return Regime::ODA;
    if (s == "OPDA") return Regime::OPDA;
    throw ValueError("unknown regime: " + s);
}

const char* regime_name(Regime r) {
    switch (r) {
        case Regime::CDA: return "CDA";
        case Regime::PDA: return "PDA";
        case Regime::ODA: return "ODA";
        case Regime::OPDA: return "OPDA";
    }
    return "?";
}

std::vector<int> ShiftScenario::source_labels() const {
    std::vector<int> out = shared;
    out.insert(out.end(), source_private.begin(), source_private.end());
    return out;
}

std::vector<int> ShiftScenario::target_labels() const {
    std::vector<int> out = shared;
    out.insert(out.end(), target_private.begin(), target_private.end());
    return out;
}

bool ShiftScenario::is_target_private(int label) const {
    return std::find(target_private.begin(), target_private.end(), label) !=
           target_private.end();
}

ShiftScenario make_scenario(Regime regime, std::size_t n_total_classes, std::size_t n_shared,
                            std::size_t n_source_private, std::size_t n_target_private,
                            std::uint64_t seed) {
    if (n_shared + n_source_private + n_target_private > n_total_classes) {
        throw ValueError("make_scenario: split counts exceed total classes");
    }
    if (n_shared + n_source_private < 2) {
        throw ValueError("make_scenario: need at least 2 source classes");
    }
    const bool sp = n_source_private > 0, tp = n_target_private > 0;
    switch (regime) {
        case Regime::CDA:
            if (sp || tp) throw ValueError("make_scenario: CDA requires empty private sets");
            break;
        case Regime::PDA:
            if (!sp || tp) throw ValueError("make_scenario: PDA requires source-private only");
            break;
        case Regime::ODA:
            if (sp || !tp) throw ValueError("make_scenario: ODA requires target-private only");
            break;
        case Regime::OPDA:
            if (!sp || !tp) throw ValueError("make_scenario: OPDA requires both private sets");
            break;
    }
    ShiftScenario s;
    s.regime = regime;
    s.n_world_classes = n_total_classes;
    s.seed = seed;
    int next = 0;
    for (std::size_t i = 0; i < n_shared; ++i) s.shared.push_back(next++);
    for (std::size_t i = 0; i < n_source_private; ++i) s.source_private.push_back(next++);
    for (std::size_t i = 0; i < n_target_private; ++i) s.target_private.push_back(next++);
    return s;
}

double openness(const ShiftScenario& scenario) {
    if (scenario.target_private.empty()) {
        throw ValueError("openness: undefined without target-private classes");
    }
    return 1.0 - static_cast<double>(scenario.shared.size()) /
                     static_cast<double>(scenario.target_private.size());
}

void DomainTransform::validate() const {
    if (!(scale > 0.0)) throw ValueError("DomainTransform: scale must be positive");
    if (noise_sigma < 0.0) throw ValueError("DomainTransform: noise_sigma must be >= 0");
}

namespace {

// Latent class centers: evenly spaced on the unit circle in 2-D, seeded
// random unit directions otherwise (redrawn until pairwise cosines stay at
// or below max_center_cos, so every class cluster is separated).
std::vector<std::vector<double>> class_centers(std::size_t n_classes, std::size_t latent_dim,
                                               double max_center_cos, std::uint64_t world_seed) {
    std::vector<std::vector<double>> centers(n_classes, std::vector<double>(latent_dim, 0.0));
    if (latent_dim == 2) {
        for (std::size_t c = 0; c < n_classes; ++c) {
            const double angle = 2.0 * M_PI * static_cast<double>(c) / static_cast<double>(n_classes);
            centers[c][0] = std::cos(angle);
            centers[c][1] = std::sin(angle);
        }
        return centers;
    }
    Rng rng(derive_seed(world_seed, 0x63656e74ULL)); // "cent"
    for (std::size_t c = 0; c < n_classes; ++c) {
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 10000) {
                throw ValueError("class_centers: cannot place " + std::to_string(n_classes) +
                                 " centers with pairwise cosine <= " +
                                 std::to_string(max_center_cos) + " in " +
                                 std::to_string(latent_dim) + " dims");
            }
            double sq = 0.0;
            for (double& v : centers[c]) {
                v = rng.normal();
                sq += v * v;
            }
            const double norm = std::sqrt(sq);
            for (double& v : centers[c]) v /= norm;
            bool separated = true;
            for (std::size_t prev = 0; prev < c && separated; ++prev) {
                double dot = 0.0;
                for (std::size_t j = 0; j < latent_dim; ++j) dot += centers[c][j] * centers[prev][j];
                separated = dot <= max_center_cos;
            }
            if (separated) break;
        }
    }
    return centers;
}

// Orthonormal columns via Gram-Schmidt on seeded gaussians.
Matrix embedding_matrix(std::size_t ambient, std::size_t latent, std::uint64_t world_seed,
                        std::uint64_t role) {
    if (latent > ambient) throw ValueError("embedding: latent dim exceeds ambient dim");
    Rng rng(derive_seed(world_seed, role));
    Matrix e(ambient, latent);
    for (std::size_t j = 0; j < latent; ++j) {
        std::vector<double> col(ambient);
        for (double& v : col) v = rng.normal();
        for (std::size_t prev = 0; prev < j; ++prev) {
            double dot = 0.0;
            for (std::size_t i = 0; i < ambient; ++i) dot += col[i] * e(i, prev);
            for (std::size_t i = 0; i < ambient; ++i) col[i] -= dot * e(i, prev);
        }
        double norm = 0.0;
        for (double v : col) norm += v * v;
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw ValueError("embedding: degenerate random draw");
        for (std::size_t i = 0; i < ambient; ++i) e(i, j) = col[i] / norm;
    }
    return e;
}

// Rotation by theta inside the seeded plane spanned by two orthonormal
// ambient vectors; identity outside it.
struct PlaneRotation {
    std::vector<double> u, v;
    double cos_t, sin_t;

    void apply(double* x, std::size_t n) const {
        double a = 0.0, b = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            a += x[i] * u[i];
            b += x[i] * v[i];
        }
        const double ar = a * cos_t - b * sin_t;
        const double br = a * sin_t + b * cos_t;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += (ar - a) * u[i] + (br - b) * v[i];
        }
    }
};

PlaneRotation make_plane_rotation(double theta, std::size_t ambient, std::uint64_t world_seed) {
    Matrix plane = embedding_matrix(ambient, 2, world_seed, 0x706c616eULL); // "plan"
    PlaneRotation r;
    r.u.resize(ambient);
    r.v.resize(ambient);
    for (std::size_t i = 0; i < ambient; ++i) {
        r.u[i] = plane(i, 0);
        r.v[i] = plane(i, 1);
    }
    r.cos_t = std::cos(theta);
    r.sin_t = std::sin(theta);
    return r;
}

void apply_transform_mean(std::vector<double>& x, const DomainTransform& t,
                          const PlaneRotation& rot) {
    for (double& v : x) v *= t.scale;
    rot.apply(x.data(), x.size());
    if (!t.translation.empty()) {
        if (t.translation.size() != x.size()) {
            throw ShapeError("DomainTransform: translation dimension mismatch");
        }
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += t.translation[i];
    }
}

} // namespace

LabeledSet generate_domain(const ShiftScenario& scenario, const SynthConfig& cfg, Domain which,
                           std::size_t n_per_class, const DomainTransform& transform,
                           std::uint64_t seed) {
    transform.validate();
    if (n_per_class < 1) throw ValueError("generate_domain: n_per_class must be >= 1");
    const auto labels = which == Domain::Source ? scenario.source_labels()
                                                : scenario.target_labels();
    const auto centers = class_centers(scenario.n_world_classes, cfg.latent_dim, cfg.max_center_cos, scenario.seed);
    const Matrix e = embedding_matrix(cfg.input_dim, cfg.latent_dim, scenario.seed,
                                      0x656d6264ULL); // "embd"
    const PlaneRotation rot = make_plane_rotation(transform.rotation, cfg.input_dim,
                                                  scenario.seed);

    Rng rng(derive_seed(seed, which == Domain::Source ? 0x737263ULL : 0x746774ULL));
    LabeledSet set;
    set.domain = domain_name(which);
    set.x = Matrix(labels.size() * n_per_class, cfg.input_dim);
    set.y.reserve(labels.size() * n_per_class);
    std::size_t row = 0;
    std::vector<double> z(cfg.latent_dim), x(cfg.input_dim);
    for (int label : labels) {
        for (std::size_t s = 0; s < n_per_class; ++s) {
            for (std::size_t j = 0; j < cfg.latent_dim; ++j) {
                z[j] = centers[static_cast<std::size_t>(label)][j] +
                       cfg.cluster_sigma * rng.normal();
            }
            for (std::size_t i = 0; i < cfg.input_dim; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < cfg.latent_dim; ++j) acc += e(i, j) * z[j];
                x[i] = acc;
            }
            std::vector<double> xt = x;
            apply_transform_mean(xt, transform, rot);
            for (std::size_t i = 0; i < cfg.input_dim; ++i) {
                xt[i] += transform.noise_sigma * rng.normal();
                xt[i] += cfg.lift_noise_sigma * rng.normal();
                set.x(row, i) = xt[i];
            }
            set.y.push_back(label);
            ++row;
        }
    }
    ensure_finite(set.x, "generate_domain");
    return set;
}

std::vector<double> analytic_class_mean(const ShiftScenario& scenario, const SynthConfig& cfg,
                                        int class_id, const DomainTransform& transform) {
    const auto centers = class_centers(scenario.n_world_classes, cfg.latent_dim, cfg.max_center_cos, scenario.seed);
    const Matrix e = embedding_matrix(cfg.input_dim, cfg.latent_dim, scenario.seed, 0x656d6264ULL);
    const PlaneRotation rot = make_plane_rotation(transform.rotation, cfg.input_dim,
                                                  scenario.seed);
    std::vector<double> mean(cfg.input_dim, 0.0);
    for (std::size_t i = 0; i < cfg.input_dim; ++i) {
        for (std::size_t j = 0; j < cfg.latent_dim; ++j) {
            mean[i] += e(i, j) * centers[static_cast<std::size_t>(class_id)][j];
        }
    }
    apply_transform_mean(mean, transform, rot);
    return mean;
}

ShiftScenario make_synth_office_scenario(Regime regime, std::uint64_t seed) {
    switch (regime) {
        case Regime::CDA: return make_scenario(regime, 12, 12, 0, 0, seed);
        case Regime::PDA: return make_scenario(regime, 12, 6, 6, 0, seed);
        case Regime::ODA: return make_scenario(regime, 12, 6, 0, 6, seed);
        case Regime::OPDA: return make_scenario(regime, 12, 6, 3, 3, seed);
    }
    throw ValueError("make_synth_office_scenario: bad regime");
}

SynthConfig synth_office_config() { return SynthConfig{}; }

DomainTransform make_shift_transform(const ShiftScenario& scenario, const SynthConfig& cfg,
                                     double rotation_rad, double translation_norm, double scale,
                                     double noise_sigma) {
    DomainTransform t;
    t.rotation = rotation_rad;
    t.scale = scale;
    t.noise_sigma = noise_sigma;
    if (translation_norm != 0.0) {
        Rng rng(derive_seed(scenario.seed, 0x7472616eULL)); // "tran"
        std::vector<double> dir(cfg.input_dim);
        double sq = 0.0;
        for (double& v : dir) {
            v = rng.normal();
            sq += v * v;
        }
        const double norm = std::sqrt(sq);
        t.translation.resize(cfg.input_dim);
        for (std::size_t i = 0; i < cfg.input_dim; ++i) {
            t.translation[i] = translation_norm * dir[i] / norm;
        }
    }
    t.validate();
    return t;
}

DomainTransform synth_office_target_transform(const ShiftScenario& scenario,
                                              const SynthConfig& cfg) {
    return make_shift_transform(scenario, cfg, 25.0 * M_PI / 180.0, 0.3, 1.0, 0.15);
}

void save_csv(const LabeledSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_csv: cannot open " + path);
    for (std::size_t j = 0; j < set.x.cols(); ++j) out << "f" << j << ",";
    out << "label\n";
    out.precision(17);
    for (std::size_t i = 0; i < set.x.rows(); ++i) {
        for (std::size_t j = 0; j < set.x.cols(); ++j) out << set.x(i, j) << ",";
        out << set.y[i] << "\n";
    }
    if (!out) throw IoError("save_csv: write failed for " + path);
}

LabeledSet load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("load_csv: empty file " + path);
    std::size_t n_cols = 0;
    {
        std::stringstream header(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(header, cell, ',')) cells.push_back(cell);
        if (cells.empty() || cells.back() != "label") {
            throw ParseError("load_csv: header must end with 'label'");
        }
        n_cols = cells.size() - 1;
        for (std::size_t j = 0; j < n_cols; ++j) {
            if (cells[j] != "f" + std::to_string(j)) {
                throw ParseError("load_csv: unexpected header column '" + cells[j] + "'");
            }
        }
    }
    std::vector<double> data;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() != n_cols + 1) {
            throw ParseError("load_csv: line " + std::to_string(line_no) + ": expected " +
                             std::to_string(n_cols + 1) + " cells, got " +
                             std::to_string(cells.size()));
        }
        for (std::size_t j = 0; j < n_cols; ++j) {
            double v = 0.0;
            const char* begin = cells[j].data();
            const char* end = begin + cells[j].size();
            auto [ptr, ec] = std::from_chars(begin, end, v);
            if (ec != std::errc{} || ptr != end || !std::isfinite(v)) {
                throw ParseError("load_csv: line " + std::to_string(line_no) +
                                 ": bad numeric cell '" + cells[j] + "'");
            }
            data.push_back(v);
        }
        int y = 0;
        const char* begin = cells[n_cols].data();
        const char* end = begin + cells[n_cols].size();
        auto [ptr, ec] = std::from_chars(begin, end, y);
        if (ec != std::errc{} || ptr != end) {
            throw ParseError("load_csv: line " + std::to_string(line_no) + ": bad label '" +
                             cells[n_cols] + "'");
        }
        labels.push_back(y);
    }
    LabeledSet set;
    set.x = Matrix(labels.size(), n_cols, std::move(data));
    set.y = std::move(labels);
    set.domain = "unknown";
    return set;
}

} // namespace dance
