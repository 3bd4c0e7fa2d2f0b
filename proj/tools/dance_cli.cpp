#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dance/experiment.hpp"
#include "dance/kernels.hpp"
#include "dance/losses.hpp"

using namespace dance;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "flat key=value or .json config file");
    cmd->add_option("--set", opts.overrides, "override, e.g. --set lambda=0.1")->take_all();
    cmd->add_option("--out", opts.out_dir, "output directory for results files");
}

ExperimentConfig build_config(const CommonOpts& opts) {
    ExperimentConfig cfg;
    if (!opts.config_path.empty()) cfg = load_experiment_config(opts.config_path);
    for (const auto& kv : opts.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ParseError("--set expects key=value, got '" + kv + "'");
        }
        apply_config_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    cfg.validate();
    return cfg;
}

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

void print_rows(const std::vector<ResultsRow>& rows) {
    std::cout << results_csv_header() << "\n";
    for (const auto& row : rows) std::cout << results_csv_row(row) << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"DANCE universal domain adaptation laboratory"};
    app.require_subcommand(1);

    std::string kernel_backend = "auto";
    app.add_option("--kernels", kernel_backend, "kernel backend: auto|scalar|avx2")
        ->check(CLI::IsMember({"auto", "scalar", "avx2"}));

    CommonOpts run_opts;
    auto* run_cmd = app.add_subcommand("run", "run one experiment (all configured seeds)");
    add_common(run_cmd, run_opts);

    CommonOpts matrix_opts;
    std::string matrix_methods = "SO,DANCE,ENT,DANN";
    std::string matrix_regimes = "CDA,PDA,ODA,OPDA";
    auto* matrix_cmd = app.add_subcommand("matrix", "methods x regimes grid, shared settings");
    add_common(matrix_cmd, matrix_opts);
    matrix_cmd->add_option("--methods", matrix_methods, "comma list of methods");
    matrix_cmd->add_option("--regimes", matrix_regimes, "comma list of regimes");

    CommonOpts sweep_opts;
    std::string sweep_param;
    std::string sweep_values;
    auto* sweep_cmd = app.add_subcommand("sweep", "sensitivity sweep over one hyperparameter");
    add_common(sweep_cmd, sweep_opts);
    sweep_cmd->add_option("--param", sweep_param, "lambda | m | rho | tau_nc")->required();
    sweep_cmd->add_option("--values", sweep_values, "comma list of values")->required();

    std::string project_model, project_data, project_domain = "target", project_out;
    auto* project_cmd =
        app.add_subcommand("project", "2-D PCA projection of checkpoint features over a CSV");
    project_cmd->add_option("--model", project_model, "model checkpoint (.json)")->required();
    project_cmd->add_option("--data", project_data, "dataset CSV (f0..fD,label)")->required();
    project_cmd->add_option("--domain", project_domain, "BN statistics to use: source|target")
        ->check(CLI::IsMember({"source", "target"}));
    project_cmd->add_option("--out-file", project_out, "output CSV path")->required();

    CommonOpts probe_opts;
    std::uint64_t probe_seed = 0;
    auto* probe_cmd =
        app.add_subcommand("probe", "one-shot linear probe of frozen target features");
    add_common(probe_cmd, probe_opts);
    probe_cmd->add_option("--seed", probe_seed, "seed (data + training + probe)");

    CLI11_PARSE(app, argc, argv);

    if (kernel_backend == "scalar") {
        kernels::set_backend(kernels::Backend::Scalar);
    } else if (kernel_backend == "avx2") {
        if (!kernels::avx2_supported()) {
            std::cerr << "error: avx2 not supported on this host\n";
            return 2;
        }
        kernels::set_backend(kernels::Backend::Avx2);
    }

    try {
        if (*run_cmd) {
            ExperimentConfig cfg = build_config(run_opts);
            auto rows = run_experiment(cfg);
            print_rows(rows);
            SummaryRow s = summarize(rows);
            std::cout << "# summary " << s.method << " " << s.regime << " metric=" << s.metric_mean
                      << " +- " << s.metric_std << " over " << s.n_seeds << " seeds\n";
        } else if (*matrix_cmd) {
            ExperimentConfig cfg = build_config(matrix_opts);
            std::vector<Method> methods;
            std::vector<Regime> regimes;
            {
                std::stringstream ss(matrix_methods);
                std::string item;
                while (std::getline(ss, item, ',')) methods.push_back(method_from_string(item));
            }
            {
                std::stringstream ss(matrix_regimes);
                std::string item;
                while (std::getline(ss, item, ',')) regimes.push_back(regime_from_string(item));
            }
            MatrixResult mr = run_matrix(regimes, methods, cfg);
            print_rows(mr.rows);
            for (const auto& s : mr.summaries) {
                std::cout << "# summary " << s.method << " " << s.regime
                          << " metric=" << s.metric_mean << " +- " << s.metric_std << "\n";
            }
            for (const auto& e : mr.errors) std::cerr << "cell error: " << e << "\n";
            if (!mr.errors.empty()) return 1;
        } else if (*sweep_cmd) {
            ExperimentConfig cfg = build_config(sweep_opts);
            auto rows = run_sensitivity(sweep_param, parse_values(sweep_values), cfg);
            std::cout << "param,value," << results_csv_header() << "\n";
            for (const auto& s : rows) {
                std::cout << s.param << "," << s.value << "," << results_csv_row(s.row) << "\n";
            }
        } else if (*project_cmd) {
            Model model = load_model(project_model);
            LabeledSet data = load_csv(project_data);
            const Domain domain = project_domain == "source" ? Domain::Source : Domain::Target;
            Matrix features = export_features(model, data.x, domain);
            std::vector<bool> known(data.y.size());
            for (std::size_t i = 0; i < data.y.size(); ++i) {
                known[i] = data.y[i] >= 0 &&
                           static_cast<std::size_t>(data.y[i]) < model.config.num_classes;
            }
            emit_projection(features, data.y, known, project_out);
            std::cout << "wrote " << project_out << " (" << features.rows() << " rows)\n";
        } else if (*probe_cmd) {
            ExperimentConfig cfg = build_config(probe_opts);
            ProbeResult r = probe_experiment(cfg, probe_seed);
            std::cout << "known_acc=" << r.known_acc << " novel_acc=" << r.novel_acc << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
