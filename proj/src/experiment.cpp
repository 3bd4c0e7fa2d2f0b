#include "dance/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "dance/kernels.hpp"
#include "dance/losses.hpp"

namespace dance {

namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw ValueError("ExperimentConfig: at least one seed required");
    train.validate();
    if (feat_dim < 2) throw ValueError("ExperimentConfig: feat_dim must be >= 2");
    if (!(tau_cls > 0.0)) throw ValueError("ExperimentConfig: tau_cls must be positive");
    if (baseline.ent_weight < 0.0) throw ValueError("ExperimentConfig: ent_weight must be >= 0");
    if (baseline.grl_mu < 0.0) throw ValueError("ExperimentConfig: grl_mu must be >= 0");
    if (shift_scale <= 0.0) throw ValueError("ExperimentConfig: shift_scale must be positive");
    if (shift_noise_sigma < 0.0) {
        throw ValueError("ExperimentConfig: shift_noise_sigma must be >= 0");
    }
    if (rho_eval.has_value() && !(*rho_eval > 0.0)) {
        throw ValueError("ExperimentConfig: rho_eval must be positive");
    }
    if (synth.n_per_class < 1) throw ValueError("ExperimentConfig: n_per_class must be >= 1");
}

double headline_metric(const MetricsReport& report) {
    return (report.regime == Regime::ODA || report.regime == Regime::OPDA) ? report.os
                                                                           : report.overall_acc;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

std::string join_seeds(const std::vector<std::uint64_t>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

/// All semantic fields as sorted key=value lines.
std::vector<std::pair<std::string, std::string>> canonical_fields(const ExperimentConfig& c) {
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("regime", regime_name(c.regime));
    kv.emplace_back("method", method_name(c.method));
    kv.emplace_back("seeds", join_seeds(c.seeds));
    kv.emplace_back("batch_size", std::to_string(c.train.batch_size));
    kv.emplace_back("total_iters", std::to_string(c.train.total_iters));
    kv.emplace_back("base_lr", fmt(c.train.base_lr));
    kv.emplace_back("gamma_sched", fmt(c.train.gamma_sched));
    kv.emplace_back("power_sched", fmt(c.train.power_sched));
    kv.emplace_back("momentum", fmt(c.train.momentum));
    kv.emplace_back("weight_decay", fmt(c.train.weight_decay));
    kv.emplace_back("nesterov", c.train.nesterov ? "1" : "0");
    kv.emplace_back("lambda", fmt(c.train.lambda));
    kv.emplace_back("margin", fmt(c.train.margin));
    kv.emplace_back("rho", c.train.rho ? fmt(*c.train.rho) : "auto");
    kv.emplace_back("tau_nc", fmt(c.train.tau_nc));
    kv.emplace_back("memory_enabled", c.train.memory_enabled ? "1" : "0");
    kv.emplace_back("detach_prototypes_in_nc", c.train.detach_prototypes_in_nc ? "1" : "0");
    kv.emplace_back("bank_update_order",
                    c.train.bank_update_order == BankUpdateOrder::Before ? "before" : "after");
    kv.emplace_back("ent_weight", fmt(c.baseline.ent_weight));
    kv.emplace_back("grl_mu", fmt(c.baseline.grl_mu));
    kv.emplace_back("dann_hidden", std::to_string(c.baseline.dann_hidden));
    kv.emplace_back("latent_dim", std::to_string(c.synth.latent_dim));
    kv.emplace_back("input_dim", std::to_string(c.synth.input_dim));
    kv.emplace_back("cluster_sigma", fmt(c.synth.cluster_sigma));
    kv.emplace_back("lift_noise_sigma", fmt(c.synth.lift_noise_sigma));
    kv.emplace_back("max_center_cos", fmt(c.synth.max_center_cos));
    kv.emplace_back("n_per_class", std::to_string(c.synth.n_per_class));
    kv.emplace_back("hidden_dims", join_sizes(c.hidden_dims));
    kv.emplace_back("feat_dim", std::to_string(c.feat_dim));
    kv.emplace_back("tau_cls", fmt(c.tau_cls));
    kv.emplace_back("rotation_deg", fmt(c.rotation_deg));
    kv.emplace_back("translation_norm", fmt(c.translation_norm));
    kv.emplace_back("shift_scale", fmt(c.shift_scale));
    kv.emplace_back("shift_noise_sigma", fmt(c.shift_noise_sigma));
    if (c.split) {
        std::ostringstream os;
        os << (*c.split)[0] << "," << (*c.split)[1] << "," << (*c.split)[2] << ","
           << (*c.split)[3];
        kv.emplace_back("split", os.str());
    } else {
        kv.emplace_back("split", "canonical");
    }
    kv.emplace_back("rho_eval", c.rho_eval ? fmt(*c.rho_eval) : "auto");
    std::sort(kv.begin(), kv.end());
    return kv;
}

} // namespace

std::string config_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    auto mix = [&h](const std::string& s) {
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [k, v] : canonical_fields(cfg)) {
        mix(k);
        mix("=");
        mix(v);
        mix("\n");
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

ShiftScenario scenario_for(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.split) {
        const auto& s = *cfg.split;
        return make_scenario(cfg.regime, s[0], s[1], s[2], s[3], seed);
    }
    return make_synth_office_scenario(cfg.regime, seed);
}

DomainTransform target_transform_for(const ExperimentConfig& cfg, const ShiftScenario& scenario) {
    return make_shift_transform(scenario, cfg.synth, cfg.rotation_deg * M_PI / 180.0,
                                cfg.translation_norm, cfg.shift_scale, cfg.shift_noise_sigma);
}

ExperimentData make_experiment_data(const ExperimentConfig& cfg, std::uint64_t seed) {
    ExperimentData data;
    data.scenario = scenario_for(cfg, seed);
    data.source = generate_domain(data.scenario, cfg.synth, Domain::Source,
                                  cfg.synth.n_per_class, DomainTransform::identity(), seed);
    data.target = generate_domain(data.scenario, cfg.synth, Domain::Target, cfg.synth.n_per_class,
                                  target_transform_for(cfg, data.scenario), seed);
    return data;
}

namespace {

ModelConfig model_config_for(const ExperimentConfig& cfg, const ShiftScenario& scenario,
                             std::uint64_t seed) {
    ModelConfig m;
    m.input_dim = cfg.synth.input_dim;
    m.hidden_dims = cfg.hidden_dims;
    m.feat_dim = cfg.feat_dim;
    m.num_classes = scenario.num_source_classes();
    m.tau_nc = cfg.train.tau_nc;
    m.tau_cls = cfg.tau_cls;
    m.seed = seed;
    return m;
}

} // namespace

TrainedRun train_method(const ExperimentConfig& cfg, const ExperimentData& data,
                        std::uint64_t seed) {
    ModelConfig mcfg = model_config_for(cfg, data.scenario, seed);
    TrainConfig tcfg = cfg.train;
    tcfg.seed = seed;
    switch (cfg.method) {
        case Method::DANCE: {
            TrainResult r = train_dance(data.source, data.target, mcfg, tcfg);
            return {std::move(r.model), std::move(r.log)};
        }
        case Method::SO: {
            TrainResult r = train_source_only(data.source, mcfg, tcfg);
            return {std::move(r.model), std::move(r.log)};
        }
        case Method::ENT: {
            TrainResult r = train_ent(data.source, data.target, mcfg, tcfg,
                                      cfg.baseline.ent_weight);
            return {std::move(r.model), std::move(r.log)};
        }
        case Method::DANN: {
            DannResult r = train_dann(data.source, data.target, mcfg, tcfg, cfg.baseline.grl_mu,
                                      cfg.baseline.dann_hidden);
            return {std::move(r.train.model), std::move(r.train.log)};
        }
    }
    throw ValueError("train_method: unrecognized method");
}

namespace {

std::string scenario_to_json(const ShiftScenario& s) {
    nlohmann::json j;
    j["regime"] = regime_name(s.regime);
    j["shared"] = s.shared;
    j["source_private"] = s.source_private;
    j["target_private"] = s.target_private;
    j["n_world_classes"] = s.n_world_classes;
    j["seed"] = s.seed;
    try {
        j["openness"] = openness(s);
    } catch (const ValueError&) {
        j["openness"] = nullptr;
    }
    return j.dump(2);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path);
    out << text;
    if (!out) throw IoError("write failed for " + path);
}

std::string run_tag(const ExperimentConfig& cfg, std::uint64_t seed) {
    return std::string(method_name(cfg.method)) + "_" + regime_name(cfg.regime) + "_s" +
           std::to_string(seed);
}

} // namespace

std::vector<ResultsRow> run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::string hash = config_hash(cfg);
    const bool write = !cfg.out_dir.empty();
    if (write) fs::create_directories(cfg.out_dir);

    std::vector<ResultsRow> rows;
    for (std::uint64_t seed : cfg.seeds) {
        const auto t0 = std::chrono::steady_clock::now();
        ExperimentData data = make_experiment_data(cfg, seed);
        TrainedRun run = train_method(cfg, data, seed);
        const double rho_eval = cfg.rho_eval ? *cfg.rho_eval
                                             : resolve_rho(data.scenario.num_source_classes());
        EvalOutput eval = evaluate_model(run.model, data.target, data.scenario,
                                         eval_domain(cfg.method), rho_eval);
        const auto t1 = std::chrono::steady_clock::now();

        ResultsRow row;
        row.method = method_name(cfg.method);
        row.regime = regime_name(cfg.regime);
        row.seed = seed;
        row.report = eval.report;
        row.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        row.config_hash = hash;
        rows.push_back(row);

        if (write) {
            const std::string tag = run_tag(cfg, seed);
            save_loss_log(run.log, cfg.out_dir + "/loss_" + tag + ".csv");
            save_model(run.model, cfg.out_dir + "/model_" + tag + ".json");
            write_text(cfg.out_dir + "/metrics_" + tag + ".json", metrics_to_json(eval.report));
            if (seed == cfg.seeds.front()) {
                write_text(cfg.out_dir + "/scenario_" + std::string(regime_name(cfg.regime)) +
                               ".json",
                           scenario_to_json(data.scenario));
            }
        }
    }
    if (write) {
        write_results_csv(rows, cfg.out_dir + "/results_" + run_tag(cfg, cfg.seeds.front()) +
                                    ".csv");
        write_summary_csv({summarize(rows)}, cfg.out_dir + "/summary_" +
                                                 run_tag(cfg, cfg.seeds.front()) + ".csv");
    }
    return rows;
}

SummaryRow summarize(const std::vector<ResultsRow>& rows) {
    if (rows.empty()) throw ValueError("summarize: no rows");
    SummaryRow s;
    s.method = rows.front().method;
    s.regime = rows.front().regime;
    s.n_seeds = rows.size();
    double sum = 0.0, auc_sum = 0.0;
    std::size_t auc_n = 0;
    for (const auto& r : rows) {
        sum += headline_metric(r.report);
        if (!std::isnan(r.report.auc_unknown)) {
            auc_sum += r.report.auc_unknown;
            ++auc_n;
        }
    }
    s.metric_mean = sum / static_cast<double>(rows.size());
    double sq = 0.0;
    for (const auto& r : rows) {
        const double d = headline_metric(r.report) - s.metric_mean;
        sq += d * d;
    }
    s.metric_std = rows.size() > 1 ? std::sqrt(sq / static_cast<double>(rows.size() - 1)) : 0.0;
    if (auc_n > 0) s.auc_mean = auc_sum / static_cast<double>(auc_n);
    return s;
}

MatrixResult run_matrix(const std::vector<Regime>& regimes, const std::vector<Method>& methods,
                        const ExperimentConfig& base) {
    if (regimes.empty() || methods.empty()) {
        throw ValueError("run_matrix: regimes and methods must be nonempty");
    }
    MatrixResult result;
    for (Regime regime : regimes) {
        for (Method method : methods) {
            ExperimentConfig cell = base;
            cell.regime = regime;
            cell.method = method;
            cell.out_dir.clear(); // cell outputs land in the aggregate files below
            try {
                std::vector<ResultsRow> rows = run_experiment(cell);
                result.summaries.push_back(summarize(rows));
                result.rows.insert(result.rows.end(), rows.begin(), rows.end());
            } catch (const std::exception& e) {
                result.errors.push_back(std::string(method_name(method)) + "/" +
                                        regime_name(regime) + ": " + e.what());
            }
        }
    }
    if (!base.out_dir.empty()) {
        fs::create_directories(base.out_dir);
        write_results_csv(result.rows, base.out_dir + "/matrix_results.csv");
        write_summary_csv(result.summaries, base.out_dir + "/matrix_summary.csv");
        if (!result.errors.empty()) {
            std::ostringstream os;
            for (const auto& e : result.errors) os << e << "\n";
            write_text(base.out_dir + "/matrix_errors.txt", os.str());
        }
    }
    return result;
}

std::vector<SweepRow> run_sensitivity(const std::string& param, const std::vector<double>& values,
                                      const ExperimentConfig& base) {
    if (values.empty()) throw ValueError("run_sensitivity: values must be nonempty");
    if (param != "lambda" && param != "m" && param != "rho" && param != "tau_nc") {
        throw ValueError("run_sensitivity: unknown parameter '" + param + "'");
    }
    std::vector<SweepRow> out;
    if (param == "rho") {
        // one checkpoint per seed, re-scored under each rejection threshold
        ExperimentConfig cfg = base;
        cfg.out_dir.clear();
        cfg.validate();
        const std::string hash = config_hash(cfg);
        for (std::uint64_t seed : cfg.seeds) {
            ExperimentData data = make_experiment_data(cfg, seed);
            TrainedRun run = train_method(cfg, data, seed);
            for (double value : values) {
                if (!(value > 0.0)) throw ValueError("run_sensitivity: rho must be positive");
                EvalOutput eval = evaluate_model(run.model, data.target, data.scenario,
                                                 eval_domain(cfg.method), value);
                ResultsRow row;
                row.method = method_name(cfg.method);
                row.regime = regime_name(cfg.regime);
                row.seed = seed;
                row.report = eval.report;
                row.config_hash = hash;
                out.push_back({param, value, std::move(row)});
            }
        }
    } else {
        for (double value : values) {
            ExperimentConfig cfg = base;
            cfg.out_dir.clear();
            if (param == "lambda") {
                cfg.train.lambda = value;
            } else if (param == "m") {
                cfg.train.margin = value;
            } else {
                cfg.train.tau_nc = value;
            }
            for (auto& row : run_experiment(cfg)) {
                out.push_back({param, value, std::move(row)});
            }
        }
    }
    if (!base.out_dir.empty()) {
        fs::create_directories(base.out_dir);
        std::ostringstream os;
        os << "param,value," << results_csv_header() << "\n";
        for (const auto& s : out) {
            os << s.param << "," << fmt(s.value) << "," << results_csv_row(s.row) << "\n";
        }
        write_text(base.out_dir + "/sweep_" + param + ".csv", os.str());
    }
    return out;
}

ProbeResult probe_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ExperimentData data = make_experiment_data(cfg, seed);
    TrainedRun run = train_method(cfg, data, seed);
    Matrix features = export_features(run.model, data.target.x, eval_domain(cfg.method));
    return linear_probe(features, data.target.y, data.scenario, seed);
}

// --- PCA ---------------------------------------------------------------------

PcaProjection pca_top2(const Matrix& features) {
    const std::size_t n = features.rows(), d = features.cols();
    if (n < 2 || d < 2) throw ValueError("pca_top2: need at least 2 samples and 2 dims");
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) mean[j] += features(i, j);
    }
    for (double& v : mean) v /= static_cast<double>(n);
    Matrix centered(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) centered(i, j) = features(i, j) - mean[j];
    }
    Matrix cov = matmul_tn(centered, centered);
    kernels::scale(cov.size(), 1.0 / static_cast<double>(n - 1), cov.data());

    // cyclic Jacobi eigensolver; d is small
    Matrix a = cov;
    Matrix v(d, d);
    for (std::size_t i = 0; i < d; ++i) v(i, i) = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) off += a(p, q) * a(p, q);
        }
        if (off < 1e-22) break;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < d; ++i) {
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    const double api = a(p, i), aqi = a(q, i);
                    a(p, i) = c * api - s * aqi;
                    a(q, i) = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    const double vip = v(i, p), viq = v(i, q);
                    v(i, p) = c * vip - s * viq;
                    v(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
    double trace = 0.0;
    for (std::size_t j = 0; j < d; ++j) trace += std::max(a(j, j), 0.0);

    PcaProjection proj;
    proj.coords = Matrix(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t comp = 0; comp < 2; ++comp) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += centered(i, j) * v(j, order[comp]);
            proj.coords(i, comp) = dot;
        }
    }
    for (std::size_t comp = 0; comp < 2; ++comp) {
        proj.explained_fraction[comp] =
            trace > 0.0 ? std::max(a(order[comp], order[comp]), 0.0) / trace : 0.0;
    }
    return proj;
}

void emit_projection(const Matrix& features, const std::vector<int>& labels,
                     const std::vector<bool>& known_flags, const std::string& path) {
    if (features.rows() == 0) throw ValueError("emit_projection: empty features");
    if (labels.size() != features.rows() || known_flags.size() != features.rows()) {
        throw ShapeError("emit_projection: label/flag length mismatch");
    }
    PcaProjection proj = pca_top2(features);
    std::ofstream out(path);
    if (!out) throw IoError("emit_projection: cannot open " + path);
    out << "x,y,label,known_flag\n";
    out.precision(17);
    for (std::size_t i = 0; i < features.rows(); ++i) {
        out << proj.coords(i, 0) << "," << proj.coords(i, 1) << "," << labels[i] << ","
            << (known_flags[i] ? 1 : 0) << "\n";
    }
    if (!out) throw IoError("emit_projection: write failed for " + path);
}

// --- results csv ---------------------------------------------------------------

std::string results_csv_header() {
    return "method,regime,seed," + metrics_csv_header() + ",wall_seconds,config_hash";
}

std::string results_csv_row(const ResultsRow& row) {
    std::ostringstream os;
    os << row.method << "," << row.regime << "," << row.seed << "," << metrics_csv_row(row.report)
       << "," << fmt(row.wall_seconds) << "," << row.config_hash;
    return os.str();
}

void write_results_csv(const std::vector<ResultsRow>& rows, const std::string& path) {
    std::ostringstream os;
    os << results_csv_header() << "\n";
    for (const auto& row : rows) os << results_csv_row(row) << "\n";
    write_text(path, os.str());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

double parse_double(const std::string& s, const char* what) {
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw ParseError(std::string("results csv: bad ") + what + " '" + s + "'");
    }
}

} // namespace

std::vector<ResultsRow> read_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_results_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("read_results_csv: empty file");
    if (line != results_csv_header()) throw ParseError("read_results_csv: unexpected header");
    std::vector<ResultsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 14) {
            throw ParseError("read_results_csv: expected 14 cells, got " +
                             std::to_string(cells.size()));
        }
        ResultsRow row;
        row.method = cells[0];
        row.regime = cells[1];
        row.seed = std::stoull(cells[2]);
        row.report.regime = regime_from_string(cells[3]);
        row.report.overall_acc = parse_double(cells[4], "overall_acc");
        row.report.os = parse_double(cells[5], "os");
        row.report.os_star = parse_double(cells[6], "os_star");
        row.report.auc_unknown = parse_double(cells[7], "auc_unknown");
        row.report.openness = parse_double(cells[8], "openness");
        row.report.n_rejected = std::stoull(cells[9]);
        row.report.n_samples = std::stoull(cells[10]);
        if (!cells[11].empty()) {
            std::stringstream per(cells[11]);
            std::string item;
            while (std::getline(per, item, ';')) {
                const auto colon = item.find(':');
                if (colon == std::string::npos) {
                    throw ParseError("read_results_csv: bad per_class item '" + item + "'");
                }
                PerClassAccuracy pc;
                pc.name = item.substr(0, colon);
                pc.accuracy = parse_double(item.substr(colon + 1), "per_class accuracy");
                pc.count = 0; // counts are not round-tripped through the flat row
                row.report.per_class.push_back(std::move(pc));
            }
        }
        row.wall_seconds = parse_double(cells[12], "wall_seconds");
        row.config_hash = cells[13];
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path) {
    std::ostringstream os;
    os << "method,regime,n_seeds,metric_mean,metric_std,auc_mean\n";
    for (const auto& s : rows) {
        os << s.method << "," << s.regime << "," << s.n_seeds << "," << fmt(s.metric_mean) << ","
           << fmt(s.metric_std) << "," << fmt(s.auc_mean) << "\n";
    }
    write_text(path, os.str());
}

// --- config files ---------------------------------------------------------------

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ParseError("config key '" + key + "': expected boolean, got '" + v + "'");
}

double parse_double_cfg(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ParseError("config key '" + key + "': expected number, got '" + v + "'");
    }
}

std::size_t parse_size(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const unsigned long long u = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<std::size_t>(u);
    } catch (const std::exception&) {
        throw ParseError("config key '" + key + "': expected non-negative integer, got '" + v +
                         "'");
    }
}

template <typename T>
std::vector<T> parse_list(const std::string& v, const std::string& key,
                          T (*one)(const std::string&, const std::string&)) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(one(item, key));
    if (out.empty()) throw ParseError("config key '" + key + "': empty list");
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

void apply_config_override(ExperimentConfig& cfg, const std::string& key,
                           const std::string& value) {
    if (key == "regime") {
        cfg.regime = regime_from_string(value);
    } else if (key == "method") {
        cfg.method = method_from_string(value);
        cfg.baseline.method = cfg.method;
    } else if (key == "seeds") {
        cfg.seeds.clear();
        for (std::size_t s : parse_list<std::size_t>(value, key, parse_size)) {
            cfg.seeds.push_back(s);
        }
    } else if (key == "out_dir") {
        cfg.out_dir = value;
    } else if (key == "batch_size") {
        cfg.train.batch_size = parse_size(value, key);
    } else if (key == "total_iters") {
        cfg.train.total_iters = parse_size(value, key);
    } else if (key == "base_lr") {
        cfg.train.base_lr = parse_double_cfg(value, key);
    } else if (key == "gamma_sched") {
        cfg.train.gamma_sched = parse_double_cfg(value, key);
    } else if (key == "power_sched") {
        cfg.train.power_sched = parse_double_cfg(value, key);
    } else if (key == "momentum") {
        cfg.train.momentum = parse_double_cfg(value, key);
    } else if (key == "weight_decay") {
        cfg.train.weight_decay = parse_double_cfg(value, key);
    } else if (key == "nesterov") {
        cfg.train.nesterov = parse_bool(value, key);
    } else if (key == "lambda") {
        cfg.train.lambda = parse_double_cfg(value, key);
    } else if (key == "margin" || key == "m") {
        cfg.train.margin = parse_double_cfg(value, key);
    } else if (key == "rho") {
        if (value == "auto") {
            cfg.train.rho.reset();
        } else {
            cfg.train.rho = parse_double_cfg(value, key);
        }
    } else if (key == "tau_nc") {
        cfg.train.tau_nc = parse_double_cfg(value, key);
    } else if (key == "memory_enabled") {
        cfg.train.memory_enabled = parse_bool(value, key);
    } else if (key == "detach_prototypes_in_nc") {
        cfg.train.detach_prototypes_in_nc = parse_bool(value, key);
    } else if (key == "bank_update_order") {
        if (value == "before") {
            cfg.train.bank_update_order = BankUpdateOrder::Before;
        } else if (value == "after") {
            cfg.train.bank_update_order = BankUpdateOrder::After;
        } else {
            throw ParseError("config key 'bank_update_order': expected before|after");
        }
    } else if (key == "debug_checks") {
        cfg.train.debug_checks = parse_bool(value, key);
    } else if (key == "ent_weight") {
        cfg.baseline.ent_weight = parse_double_cfg(value, key);
    } else if (key == "grl_mu") {
        cfg.baseline.grl_mu = parse_double_cfg(value, key);
    } else if (key == "dann_hidden") {
        cfg.baseline.dann_hidden = parse_size(value, key);
    } else if (key == "latent_dim") {
        cfg.synth.latent_dim = parse_size(value, key);
    } else if (key == "input_dim") {
        cfg.synth.input_dim = parse_size(value, key);
    } else if (key == "cluster_sigma") {
        cfg.synth.cluster_sigma = parse_double_cfg(value, key);
    } else if (key == "lift_noise_sigma") {
        cfg.synth.lift_noise_sigma = parse_double_cfg(value, key);
    } else if (key == "max_center_cos") {
        cfg.synth.max_center_cos = parse_double_cfg(value, key);
    } else if (key == "n_per_class") {
        cfg.synth.n_per_class = parse_size(value, key);
    } else if (key == "hidden_dims") {
        cfg.hidden_dims = parse_list<std::size_t>(value, key, parse_size);
    } else if (key == "feat_dim") {
        cfg.feat_dim = parse_size(value, key);
    } else if (key == "tau_cls") {
        cfg.tau_cls = parse_double_cfg(value, key);
    } else if (key == "rotation_deg") {
        cfg.rotation_deg = parse_double_cfg(value, key);
    } else if (key == "translation_norm") {
        cfg.translation_norm = parse_double_cfg(value, key);
    } else if (key == "shift_scale") {
        cfg.shift_scale = parse_double_cfg(value, key);
    } else if (key == "shift_noise_sigma") {
        cfg.shift_noise_sigma = parse_double_cfg(value, key);
    } else if (key == "split") {
        if (value == "canonical") {
            cfg.split.reset();
        } else {
            const auto parts = parse_list<std::size_t>(value, key, parse_size);
            if (parts.size() != 4) {
                throw ParseError("config key 'split': expected total,shared,src,tgt");
            }
            cfg.split = std::array<std::size_t, 4>{parts[0], parts[1], parts[2], parts[3]};
        }
    } else if (key == "rho_eval") {
        if (value == "auto") {
            cfg.rho_eval.reset();
        } else {
            cfg.rho_eval = parse_double_cfg(value, key);
        }
    } else {
        throw ParseError("unknown config key: '" + key + "'");
    }
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_experiment_config: cannot open " + path);
    ExperimentConfig cfg;
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("load_experiment_config: " + std::string(e.what()));
        }
        if (!j.is_object()) throw ParseError("load_experiment_config: expected a JSON object");
        for (const auto& [key, value] : j.items()) {
            std::string text;
            if (value.is_string()) {
                text = value.get<std::string>();
            } else if (value.is_boolean()) {
                text = value.get<bool>() ? "1" : "0";
            } else if (value.is_array()) {
                std::ostringstream os;
                bool first = true;
                for (const auto& item : value) {
                    os << (first ? "" : ",") << item.dump();
                    first = false;
                }
                text = os.str();
            } else {
                text = value.dump();
            }
            apply_config_override(cfg, key, text);
        }
        return cfg;
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ParseError("load_experiment_config: line " + std::to_string(line_no) +
                             ": expected key = value");
        }
        apply_config_override(cfg, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    }
    return cfg;
}

} // namespace dance
