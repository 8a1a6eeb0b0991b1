#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dpsc/evaluation.hpp"
#include "dpsc/harness.hpp"
#include "dpsc/parallel.hpp"
#include "dpsc/persist.hpp"
#include "dpsc/rng.hpp"

namespace dpsc {

namespace {

TrainConfig panel_train_config(const ExperimentConfig& cfg, std::uint64_t seed) {
    TrainConfig t;
    t.learning_rate = cfg.learning_rate;
    t.loss = LossSpec{CrossEntropyLoss{}, cfg.entropy_beta};
    t.checkpoint_interval = cfg.checkpoint_interval;
    t.seed = seed;
    return t;
}

double mean_of(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Single-outlier panel

ExperimentConfig default_outlier_config() {
    ExperimentConfig c;
    c.dataset.generator = "gaussian_outlier";
    c.dataset.n_major = 1000;
    c.dataset.outlier_mean = {10.0, 0.0};
    c.model.architecture = Architecture::Linear;
    c.learning_rate = 0.5;
    c.entropy_beta = 0.0;
    c.steps = 1000;
    c.sampling_rate = 0.3;
    c.checkpoint_interval = 50;
    c.clip_norm = 0.05;
    c.epsilons = {kInfinity, 7.0, 3.0, 1.0};
    c.methods.methods = {Method::SR};
    return c;
}

OutlierReport panel_outlier(const ExperimentConfig& cfg, std::span<const double> epsilons,
                            std::span<const std::uint64_t> seeds, std::size_t jobs) {
    struct Job {
        double eps;
        std::uint64_t seed;
    };
    std::vector<Job> todo;
    for (double e : epsilons)
        for (auto s : seeds) todo.push_back({e, s});

    OutlierReport report;
    report.rows.resize(todo.size());
    std::vector<std::string> errors(todo.size());
    parallel_for(todo.size(), jobs, [&](std::size_t i) {
        try {
            const auto [eps, seed] = todo[i];
            const auto d = make_cell_data(cfg.dataset, seed);
            ModelSpec spec = resolve_model(cfg, d.train);
            const auto priv = resolve_privacy(cfg, eps, d.train.size());
            const auto tc = panel_train_config(cfg, derive_seed({seed, epsilon_key(eps), tag("outlier")}));
            const auto r = train(d.train, spec, tc, priv, d.test);
            const std::size_t star = d.train.size() - 1;
            const auto probs = softmax(forward(r.params, spec, d.train.row(star)).logits);
            const int y = d.train.labels[star];
            OutlierRow row;
            row.epsilon = eps;
            row.seed = seed;
            row.predicted = argmax(probs, spec.num_classes);
            row.correct = row.predicted == y;
            row.correct_class_prob = probs[static_cast<std::size_t>(y)];
            std::size_t hits = 0;
            for (std::size_t k = 0; k < d.test.size(); ++k)
                hits += r.log.predictions.back()[k] == d.test.labels[k] ? 1 : 0;
            row.test_accuracy = static_cast<double>(hits) / static_cast<double>(d.test.size());
            row.privacy = r.privacy;
            report.rows[i] = row;
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (const auto& e : errors)
        if (!e.empty()) throw std::runtime_error("panel_outlier: " + e);

    for (double e : epsilons) {
        OutlierSummary s;
        s.epsilon = e;
        std::vector<double> conf;
        for (const auto& r : report.rows) {
            if (r.epsilon != e) continue;
            ++s.seeds;
            s.correct += r.correct ? 1 : 0;
            conf.push_back(r.correct_class_prob);
        }
        s.mean_correct_class_prob = mean_of(conf);
        report.summary.push_back(s);
    }
    return report;
}

Json OutlierReport::to_json() const {
    Json rows_j = Json::array();
    for (const auto& r : rows)
        rows_j.push_back({{"epsilon", epsilon_label(r.epsilon)},
                          {"seed", r.seed},
                          {"predicted", r.predicted},
                          {"correct", r.correct},
                          {"correct_class_prob", r.correct_class_prob},
                          {"test_accuracy", r.test_accuracy},
                          {"privacy", dpsc::to_json(r.privacy)}});
    Json sum = Json::array();
    for (const auto& s : summary)
        sum.push_back({{"epsilon", epsilon_label(s.epsilon)},
                       {"seeds", s.seeds},
                       {"outlier_correct", s.correct},
                       {"mean_correct_class_prob", s.mean_correct_class_prob}});
    return Json{{"panel", "outlier"}, {"rows", rows_j}, {"summary", sum}};
}

// ---------------------------------------------------------------------------
// Class-imbalance panel

ExperimentConfig default_imbalance_config() {
    ExperimentConfig c;
    c.dataset.generator = "mixture";
    MixtureSpec m;
    const std::vector<std::vector<double>> means{{2.0, 0.0}, {0.0, 2.0}, {-2.0, 0.0}, {0.0, -2.0}};
    for (int k = 0; k < 4; ++k) {
        MixtureComponent comp;
        comp.mean = means[static_cast<std::size_t>(k)];
        comp.scale = 1.0;
        comp.count = 500;
        comp.label = k;
        m.components.push_back(comp);
    }
    m.num_classes = 4;
    c.dataset.mixture = m;
    c.dataset.minority_class = 0;
    c.dataset.p0 = 0.25;
    c.model.architecture = Architecture::Mlp;
    c.model.hidden_sizes = {64};
    c.model.dropout_rate = 0.0;
    c.learning_rate = 1.0;
    c.entropy_beta = 0.01;
    c.steps = 1000;
    c.sampling_rate = 0.05;
    c.checkpoint_interval = 50;
    c.clip_norm = 1.0;
    c.epsilons = {kInfinity, 7.0, 3.0, 1.0};
    c.methods.methods = {Method::SR};
    return c;
}

ImbalanceReport panel_imbalance(const ExperimentConfig& cfg, std::span<const double> p0_list,
                                std::span<const double> epsilons,
                                std::span<const std::uint64_t> seeds, std::size_t jobs) {
    struct Job {
        double p0;
        double eps;
        std::uint64_t seed;
    };
    std::vector<Job> todo;
    for (double p0 : p0_list)
        for (double e : epsilons)
            for (auto s : seeds) todo.push_back({p0, e, s});

    ImbalanceReport report;
    report.rows.resize(todo.size());
    std::vector<std::string> errors(todo.size());
    parallel_for(todo.size(), jobs, [&](std::size_t i) {
        try {
            const auto [p0, eps, seed] = todo[i];
            ExperimentConfig c = cfg;
            c.dataset.p0 = p0;
            const auto d = make_cell_data(c.dataset, seed);
            const auto spec = resolve_model(c, d.train);
            const auto priv = resolve_privacy(c, eps, d.train.size());
            const auto tc = panel_train_config(c, derive_seed({seed, epsilon_key(eps), tag("imbalance")}));
            const auto r = train(d.train, spec, tc, priv, d.test);
            const auto& pred = r.log.predictions.back();
            std::vector<bool> correct(d.test.size());
            for (std::size_t k = 0; k < d.test.size(); ++k) correct[k] = pred[k] == d.test.labels[k];
            const auto curve = build_curve(score_sr(r.log.final_probs), correct);

            ImbalanceRow row;
            row.p0 = p0;
            row.epsilon = eps;
            row.seed = seed;
            row.n_train = d.train.size();
            row.n_minority_train = static_cast<std::size_t>(
                std::count(d.train.labels.begin(), d.train.labels.end(), c.dataset.minority_class));
            row.a_full = curve.a_full;
            row.auc = auc(curve);
            row.normalized_score = normalized_score(curve);
            std::size_t minority_hits = 0;
            for (std::size_t rank = 0; rank < curve.order.size(); ++rank) {
                const auto idx = curve.order[rank];
                if (d.test.labels[idx] != c.dataset.minority_class) continue;
                row.minority_positions.push_back(curve.coverage[rank]);
                row.minority_correct.push_back(correct[idx]);
                minority_hits += correct[idx] ? 1 : 0;
            }
            row.minority_accuracy =
                row.minority_positions.empty()
                    ? 0.0
                    : static_cast<double>(minority_hits) /
                          static_cast<double>(row.minority_positions.size());
            row.minority_mean_position = mean_of(row.minority_positions);
            row.overall_mean_position = mean_of(curve.coverage);
            row.privacy = r.privacy;
            report.rows[i] = std::move(row);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (const auto& e : errors)
        if (!e.empty()) throw std::runtime_error("panel_imbalance: " + e);
    return report;
}

Json ImbalanceReport::to_json() const {
    Json rows_j = Json::array();
    for (const auto& r : rows) {
        Json accept = Json::array();
        for (std::size_t k = 0; k < r.minority_positions.size(); ++k)
            accept.push_back({r.minority_positions[k], static_cast<bool>(r.minority_correct[k])});
        rows_j.push_back({{"p0", r.p0},
                          {"epsilon", epsilon_label(r.epsilon)},
                          {"seed", r.seed},
                          {"n_train", r.n_train},
                          {"n_minority_train", r.n_minority_train},
                          {"a_full", r.a_full},
                          {"auc", r.auc},
                          {"normalized_score", r.normalized_score},
                          {"minority_accuracy", r.minority_accuracy},
                          {"minority_mean_position", r.minority_mean_position},
                          {"overall_mean_position", r.overall_mean_position},
                          {"minority_acceptance", accept},
                          {"privacy", dpsc::to_json(r.privacy)}});
    }
    // Per (p0, epsilon) means over seeds.
    Json summary = Json::array();
    std::vector<std::pair<double, double>> keys;
    for (const auto& r : rows)
        if (std::find(keys.begin(), keys.end(), std::pair{r.p0, r.epsilon}) == keys.end())
            keys.emplace_back(r.p0, r.epsilon);
    for (const auto& [p0, eps] : keys) {
        std::vector<double> score, macc, mpos, afull;
        for (const auto& r : rows) {
            if (r.p0 != p0 || r.epsilon != eps) continue;
            score.push_back(r.normalized_score);
            macc.push_back(r.minority_accuracy);
            mpos.push_back(r.minority_mean_position);
            afull.push_back(r.a_full);
        }
        summary.push_back({{"p0", p0},
                           {"epsilon", epsilon_label(eps)},
                           {"seeds", score.size()},
                           {"mean_a_full", mean_of(afull)},
                           {"mean_normalized_score", mean_of(score)},
                           {"mean_minority_accuracy", mean_of(macc)},
                           {"mean_minority_position", mean_of(mpos)}});
    }
    return Json{{"panel", "imbalance"}, {"rows", rows_j}, {"summary", summary}};
}

// ---------------------------------------------------------------------------
// Bound reachability panel

std::vector<BoundRow> panel_bound(std::span<const double> a_list, std::size_t n,
                                  std::uint64_t seed) {
    std::vector<BoundRow> out;
    for (std::size_t k = 0; k < a_list.size(); ++k) {
        const auto sample = ideal_score_oracle(a_list[k], n, derive_seed({seed, k}));
        const auto curve = build_curve(sample.scores, sample.correct);
        out.push_back({a_list[k], n, max_bound_deviation(curve), normalized_score(curve)});
    }
    return out;
}

Json to_json(const std::vector<BoundRow>& rows) {
    Json r = Json::array();
    for (const auto& b : rows)
        r.push_back({{"a_full", b.a_full},
                     {"n", b.n},
                     {"max_deviation", b.max_deviation},
                     {"normalized_score", b.normalized_score}});
    return Json{{"panel", "bound"}, {"rows", r}};
}

}  // namespace dpsc
