#include "dance/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "dance/losses.hpp"
#include "dance/rng.hpp"
#include "dance/trainer.hpp"

namespace dance {

int predict_with_rejection(const double* p, std::size_t k, double rho) {
    if (entropy_row(p, k) > rho) return kUnknownLabel;
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
        if (p[j] > p[best]) best = j;
    }
    return static_cast<int>(best);
}

std::vector<int> predict_with_rejection(const Matrix& probs, double rho) {
    std::vector<int> preds(probs.rows());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        preds[i] = predict_with_rejection(probs.row(i), probs.cols(), rho);
    }
    return preds;
}

MetricsReport score_predictions(const std::vector<int>& preds, const std::vector<int>& truth,
                                const ShiftScenario& scenario) {
    if (preds.size() != truth.size()) throw ShapeError("score_predictions: length mismatch");
    if (preds.empty()) throw ValueError("score_predictions: empty input");
    const auto legal = scenario.target_labels();
    for (int y : truth) {
        if (std::find(legal.begin(), legal.end(), y) == legal.end()) {
            throw ValueError("score_predictions: truth label " + std::to_string(y) +
                             " not a target class of the scenario");
        }
    }

    MetricsReport report;
    report.regime = scenario.regime;
    report.n_samples = preds.size();

    std::map<int, std::pair<std::size_t, std::size_t>> known_counts; // label -> (correct, total)
    std::size_t unknown_correct = 0, unknown_total = 0, correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool is_private = scenario.is_target_private(truth[i]);
        const bool ok = is_private ? preds[i] == kUnknownLabel : preds[i] == truth[i];
        if (ok) ++correct;
        if (preds[i] == kUnknownLabel) ++report.n_rejected;
        if (is_private) {
            ++unknown_total;
            if (ok) ++unknown_correct;
        } else {
            auto& [c_ok, c_tot] = known_counts[truth[i]];
            ++c_tot;
            if (ok) ++c_ok;
        }
    }
    report.overall_acc = static_cast<double>(correct) / static_cast<double>(preds.size());

    double known_sum = 0.0;
    std::size_t known_classes = 0;
    for (const auto& [label, counts] : known_counts) {
        const double acc = counts.second > 0
                               ? static_cast<double>(counts.first) / static_cast<double>(counts.second)
                               : 0.0;
        report.per_class.push_back({"c" + std::to_string(label), acc, counts.second});
        known_sum += acc;
        ++known_classes;
    }
    if (unknown_total > 0) {
        const double acc = static_cast<double>(unknown_correct) / static_cast<double>(unknown_total);
        report.per_class.push_back({"unknown", acc, unknown_total});
        report.os_star = known_classes > 0 ? known_sum / static_cast<double>(known_classes)
                                           : std::numeric_limits<double>::quiet_NaN();
        report.os = (known_sum + acc) / static_cast<double>(known_classes + 1);
        report.openness = openness(scenario);
    }
    return report;
}

double auc_unknown(const std::vector<double>& scores, const std::vector<bool>& is_unknown) {
    if (scores.size() != is_unknown.size()) throw ShapeError("auc_unknown: length mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (bool f : is_unknown) n_pos += f ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw ValueError("auc_unknown: need both unknown and known samples");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // midranks over tie groups
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
        i = j + 1;
    }
    double pos_rank_sum = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        if (is_unknown[t]) pos_rank_sum += rank[t];
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

ProbeResult linear_probe(const Matrix& features, const std::vector<int>& labels,
                         const ShiftScenario& scenario, std::uint64_t seed, std::size_t epochs,
                         double lr) {
    if (features.rows() != labels.size()) throw ShapeError("linear_probe: length mismatch");
    const auto classes = scenario.target_labels();
    std::map<int, std::size_t> class_to_idx;
    for (std::size_t c = 0; c < classes.size(); ++c) class_to_idx[classes[c]] = c;

    // one seeded support sample per class
    Rng rng(derive_seed(seed, 0x70726f6265ULL)); // "probe"
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    std::vector<std::size_t> support;
    std::vector<bool> is_support(labels.size(), false);
    for (int c : classes) {
        auto it = by_class.find(c);
        if (it == by_class.end() || it->second.empty()) {
            throw ValueError("linear_probe: class " + std::to_string(c) +
                             " has no target sample for support");
        }
        const auto& rows = it->second;
        const std::size_t pick =
            rows[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(rows.size()) - 1))];
        support.push_back(pick);
        is_support[pick] = true;
    }

    Matrix x_sup(support.size(), features.cols());
    std::vector<int> y_sup(support.size());
    for (std::size_t i = 0; i < support.size(); ++i) {
        for (std::size_t j = 0; j < features.cols(); ++j) x_sup(i, j) = features(support[i], j);
        y_sup[i] = static_cast<int>(class_to_idx.at(labels[support[i]]));
    }

    // bias-free linear softmax classifier, full-batch gradient descent
    Matrix w(classes.size(), features.cols());
    for (double& v : w.storage()) v = 0.01 * rng.normal();
    for (std::size_t e = 0; e < epochs; ++e) {
        Matrix logits = matmul_nt(x_sup, w);
        ClsLossResult loss = cls_loss(logits, y_sup);
        Matrix d_w = matmul_tn(loss.d_logits, x_sup);
        for (std::size_t t = 0; t < w.size(); ++t) w.data()[t] -= lr * d_w.data()[t];
    }

    std::size_t known_ok = 0, known_tot = 0, novel_ok = 0, novel_tot = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (is_support[i]) continue;
        double best = -HUGE_VAL;
        std::size_t pred = 0;
        for (std::size_t c = 0; c < classes.size(); ++c) {
            double dot = 0.0;
            for (std::size_t j = 0; j < features.cols(); ++j) dot += features(i, j) * w(c, j);
            if (dot > best) {
                best = dot;
                pred = c;
            }
        }
        const bool ok = classes[pred] == labels[i];
        if (scenario.is_target_private(labels[i])) {
            ++novel_tot;
            novel_ok += ok ? 1 : 0;
        } else {
            ++known_tot;
            known_ok += ok ? 1 : 0;
        }
    }
    ProbeResult res;
    res.known_acc = known_tot > 0 ? static_cast<double>(known_ok) / static_cast<double>(known_tot)
                                  : std::numeric_limits<double>::quiet_NaN();
    res.novel_acc = novel_tot > 0 ? static_cast<double>(novel_ok) / static_cast<double>(novel_tot)
                                  : std::numeric_limits<double>::quiet_NaN();
    return res;
}

std::vector<OpennessSweepRow> openness_sweep(
    const std::vector<std::string>& methods,
    const std::vector<std::size_t>& unknown_counts,
    const std::function<MetricsReport(const std::string&, std::size_t)>& runner) {
    std::vector<OpennessSweepRow> rows;
    for (std::size_t count : unknown_counts) {
        for (const auto& method : methods) {
            rows.push_back({count, method, runner(method, count)});
        }
    }
    return rows;
}

EvalOutput evaluate_model(Model& model, const LabeledSet& target, const ShiftScenario& scenario,
                          Domain domain, double rho_eval) {
    EvalOutput out;
    Matrix f = export_features(model, target.x, domain);
    Matrix probs = classify(model, f).second;
    out.entropy = entropy_rows(probs);
    out.preds = predict_with_rejection(probs, rho_eval);
    out.report = score_predictions(out.preds, target.y, scenario);
    if (!scenario.target_private.empty()) {
        std::vector<bool> flags(target.y.size());
        for (std::size_t i = 0; i < target.y.size(); ++i) {
            flags[i] = scenario.is_target_private(target.y[i]);
        }
        out.report.auc_unknown = auc_unknown(out.entropy, flags);
    }
    return out;
}

std::string metrics_to_json(const MetricsReport& report) {
    nlohmann::json j;
    j["regime"] = regime_name(report.regime);
    j["overall_acc"] = report.overall_acc;
    j["os"] = report.os;
    j["os_star"] = report.os_star;
    j["auc_unknown"] = report.auc_unknown;
    j["openness"] = report.openness;
    j["n_rejected"] = report.n_rejected;
    j["n_samples"] = report.n_samples;
    nlohmann::json per;
    for (const auto& pc : report.per_class) {
        per[pc.name] = {{"accuracy", pc.accuracy}, {"count", pc.count}};
    }
    j["per_class"] = std::move(per);
    return j.dump(2);
}

std::string metrics_csv_header() {
    return "regime,overall_acc,os,os_star,auc_unknown,openness,n_rejected,n_samples,per_class";
}

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

std::string metrics_csv_row(const MetricsReport& report) {
    std::ostringstream os;
    os << regime_name(report.regime) << "," << fmt_double(report.overall_acc) << ","
       << fmt_double(report.os) << "," << fmt_double(report.os_star) << ","
       << fmt_double(report.auc_unknown) << "," << fmt_double(report.openness) << ","
       << report.n_rejected << "," << report.n_samples << ",";
    for (std::size_t i = 0; i < report.per_class.size(); ++i) {
        if (i) os << ";";
        os << report.per_class[i].name << ":" << fmt_double(report.per_class[i].accuracy);
    }
    return os.str();
}

} // namespace dance
