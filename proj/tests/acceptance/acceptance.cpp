// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dpsc/accountant.hpp"
#include "dpsc/config.hpp"
#include "dpsc/evaluation.hpp"
#include "dpsc/harness.hpp"
#include "dpsc/persist.hpp"
#include "dpsc/rng.hpp"
#include "dpsc/selection.hpp"
#include "dpsc/trainer.hpp"
#include "../support/oracles.hpp"

using namespace dpsc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// ---------------------------------------------------------------------------

Outcome bound_reachability() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = 10000;
    double worst = 0.0;
    for (double a : {0.5, 0.7, 0.9}) {
        const auto s = ideal_score_oracle(a, n, derive_seed({17, tag("acceptance")}));
        const auto c = build_curve(s.scores, s.correct);
        for (std::size_t i = 0; i < c.size(); ++i) {
            const double cov = static_cast<double>(i + 1) / static_cast<double>(n);
            const double b = cov <= a ? 1.0 : a / cov;
            worst = std::max(worst, std::abs(c.accuracy[i] - b));
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1.0 / static_cast<double>(n) && secs < 1.0,
            "max deviation " + fmt("%.3g", worst) + ", " + fmt("%.3f", secs) + " s"};
}

Outcome sgd_degeneracy() {
    const auto t0 = std::chrono::steady_clock::now();
    MixtureSpec m;
    m.components.push_back({{-1.0, 0.5}, 1.0, {}, 100, 0});
    m.components.push_back({{1.0, -0.5}, 1.0, {}, 100, 1});
    const auto data = gen_mixture(m, 11);
    ModelSpec spec;
    spec.architecture = Architecture::Mlp;
    spec.input_dim = 2;
    spec.num_classes = 2;
    spec.hidden_sizes = {16, 8};
    const LossSpec loss{CrossEntropyLoss{}, 0.01};
    auto a = init_params(spec, 3);
    auto b = a;
    for (std::size_t t = 0; t < 500; ++t) {
        Batch batch{&data, poisson_sample(data.size(), 0.1, 5, t), nullptr, std::nullopt};
        a = dpsgd_step(a, spec, batch, loss, 1e9, 0.0, 0.2, t);
        b = sgd_step(b, spec, batch, loss, 0.2);
    }
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a.values[i] - b.values[i]));
    const double secs = seconds_since(t0);
    return {diff <= 1e-9 && secs < 10.0,
            "max parameter difference " + fmt("%.3g", diff) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome gradient_correctness() {
    Rng rng(23);
    LabeledDataset data;
    data.dim = 3;
    data.num_classes = 3;
    std::vector<double> x(3);
    for (int i = 0; i < 6; ++i) {
        for (auto& v : x) v = rng.normal();
        data.push_back(x, i % 3);
    }
    std::vector<double> targets;
    for (int i = 0; i < 6; ++i) {
        std::vector<double> t{rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0)};
        const double s = t[0] + t[1] + t[2];
        for (double v : t) targets.push_back(v / s);
    }
    Batch batch{&data, {0, 1, 2, 3, 4, 5}, &targets, std::nullopt};

    ModelSpec base;
    base.architecture = Architecture::Mlp;
    base.input_dim = 3;
    base.num_classes = 3;
    base.hidden_sizes = {6, 5};

    struct Case {
        const char* name;
        ModelSpec spec;
        LossSpec loss;
    };
    std::vector<Case> cases;
    cases.push_back({"ce", base, LossSpec{CrossEntropyLoss{}, 0.01}});
    auto sat = base;
    sat.abstention_head = true;
    cases.push_back({"sat", sat, LossSpec{SatLoss{}, 0.01}});
    auto sn = base;
    sn.selectivenet_heads = true;
    cases.push_back({"sn", sn, LossSpec{SelectiveNetLoss{0.5, 32.0, 0.5}, 0.01}});

    double worst = 0.0;
    std::string detail;
    for (const auto& c : cases) {
        int points = 0;
        for (std::uint64_t seed = 0; points < 20 && seed < 1000; ++seed) {
            const auto p = init_params(c.spec, derive_seed({seed, tag(c.name)}));
            if (oracle::min_hidden_margin(p, c.spec, batch) < 1e-3) continue;
            ++points;
            const auto g = per_sample_grad(p, c.spec, batch, c.loss);
            for (std::size_t m = 0; m < batch.indices.size(); ++m)
                worst = std::max(worst, oracle::max_rel_err(g[m], oracle::fd_per_sample(p, c.spec, batch, c.loss, m)));
        }
        if (points < 20) return {false, std::string(c.name) + ": not enough parameter points"};
    }
    return {worst <= 1e-4, "max relative error " + fmt("%.3g", worst) + " over 3 losses x 20 points"};
}

Outcome accountant_closed_form() {
    double q1 = 0.0;
    for (int a = 2; a <= 64; ++a)
        for (double s : {0.5, 1.0, 4.0})
            q1 = std::max(q1, std::abs(rdp_subsampled_gaussian(1.0, s, a) - a / (2.0 * s * s)));
    bool calib = true;
    std::string eps_detail;
    for (double e : {1.0, 3.0, 7.0}) {
        const double sigma = calibrate_sigma(e, 1e-5, 0.01, 10000);
        const double got = account(sigma, 0.01, 10000, 1e-5).epsilon;
        calib = calib && got <= e && got >= 0.999 * e;
        eps_detail += " " + fmt("%.5f", got);
    }
    double three = 0.0;
    for (double q : {0.001, 0.01, 0.1, 0.5})
        for (double s : {0.7, 1.0, 2.0, 5.0}) {
            const double direct =
                std::log((1 - q) * (1 - q) + 2 * q * (1 - q) + q * q * std::exp(1.0 / (s * s)));
            three = std::max(three, std::abs(rdp_subsampled_gaussian(q, s, 2) - direct));
        }
    return {q1 <= 1e-9 && calib && three <= 1e-6,
            "q=1 error " + fmt("%.3g", q1) + ", realized eps" + eps_detail + ", order-2 error " +
                fmt("%.3g", three)};
}

Outcome outlier_replication() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = default_outlier_config();
    const std::vector<double> eps{kInfinity, 7.0, 3.0, 1.0};
    const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    const auto r = panel_outlier(cfg, eps, seeds);
    const double secs = seconds_since(t0);
    bool ok = r.summary[0].correct >= 4;
    std::string detail = "correct";
    for (const auto& s : r.summary) {
        if (!std::isinf(s.epsilon)) ok = ok && s.correct <= 1;
        detail += " " + std::to_string(s.correct) + "/5";
    }
    int violations = 0;
    detail += ", confidence";
    for (std::size_t k = 0; k < r.summary.size(); ++k) {
        detail += " " + fmt("%.4f", r.summary[k].mean_correct_class_prob);
        if (k > 0 && r.summary[k].mean_correct_class_prob > r.summary[k - 1].mean_correct_class_prob)
            ++violations;
    }
    ok = ok && violations <= 1 && secs < 120.0;
    return {ok, detail + " (eps inf,7,3,1), " + std::to_string(violations) + " violation(s), " +
                    fmt("%.1f", secs) + " s"};
}

Outcome imbalance_trend() {
    const auto cfg = default_imbalance_config();
    const std::vector<double> p0{cfg.dataset.p0};
    const std::vector<double> eps{kInfinity, 1.0};
    const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    const auto r = panel_imbalance(cfg, p0, eps, seeds);
    int wins = 0;
    std::string detail;
    for (auto s : seeds) {
        double inf_score = 0.0, one_score = 0.0;
        for (const auto& row : r.rows) {
            if (row.seed != s) continue;
            (std::isinf(row.epsilon) ? inf_score : one_score) = row.normalized_score;
        }
        wins += one_score > inf_score;
        detail += " " + fmt("%.4f", inf_score) + "->" + fmt("%.4f", one_score);
    }
    return {wins >= 4, std::to_string(wins) + "/5 seeds worse at eps 1, p0 " + fmt("%g", p0[0]) +
                           ", score inf->1:" + detail};
}

Outcome metric_identity() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(derive_seed({seed, tag("identity")}));
        const std::size_t n = 5 + static_cast<std::size_t>(rng.uniform() * 3000);
        const double p = rng.uniform();
        std::vector<double> s(n);
        std::vector<bool> ok(n);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = std::floor(rng.uniform() * 50.0);  // ties included
            ok[i] = rng.bernoulli(p);
            hits += ok[i];
        }
        const auto c = build_curve(s, ok);
        const double a = static_cast<double>(hits) / static_cast<double>(n);
        double grid = 0.0;
        for (std::size_t i = 1; i <= n; ++i) {
            const double cov = static_cast<double>(i) / static_cast<double>(n);
            grid += cov <= a ? 1.0 : a / cov;
        }
        grid /= static_cast<double>(n);
        worst = std::max(worst, std::abs(auc(c) + normalized_score(c) - grid));
    }
    return {worst <= 1e-12, "max identity error " + fmt("%.3g", worst) + " over 100 curves"};
}

Outcome null_property() {
    const std::size_t n = 10000;
    Rng rng(derive_seed({5, tag("null")}));
    std::vector<double> s(n);
    std::vector<bool> ok(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = rng.uniform();
        ok[i] = rng.bernoulli(0.8);
    }
    const auto c = build_curve(s, ok);
    double worst = 0.0;
    for (double cov : {0.25, 0.5, 0.75}) {
        const auto i = static_cast<std::size_t>(cov * static_cast<double>(n)) - 1;
        worst = std::max(worst, std::abs(c.accuracy[i] - c.a_full));
    }
    return {worst <= 0.02, "max |acc_c - a_full| " + fmt("%.4f", worst)};
}

Outcome sctd_golden() {
    CheckpointLog golden;
    golden.times = {1, 2, 3, 4};
    golden.predictions = {{1}, {1}, {0}, {0}};
    const double g = score_sctd(golden, 3.0).scores[0];

    // Column i of the log: checkpoints 1..4 disagree with the final
    // prediction where bit t of i is set.
    const std::size_t T = 5, n = 16;
    CheckpointLog log;
    for (std::size_t t = 0; t < T; ++t) {
        log.times.push_back(t + 1);
        std::vector<int> row(n, 0);
        if (t + 1 < T)
            for (std::size_t i = 0; i < n; ++i) row[i] = (i >> t) & 1U;
        log.predictions.push_back(row);
    }
    const auto s = score_sctd(log, 3.0).scores;
    bool mono = true;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t bit = 0; bit < 4; ++bit)
            if (!((i >> bit) & 1U)) mono = mono && s[i | (std::size_t{1} << bit)] > s[i];
    return {g == 0.140625 && mono, "golden " + fmt("%.17g", g) + ", monotone over 16 patterns: " +
                                       (mono ? "yes" : "no")};
}

Outcome budget_split() {
    ExperimentConfig c;
    c.dataset.generator = "mixture";
    c.dataset.mixture.num_classes = 2;
    c.dataset.mixture.components.push_back({{-1.5, 0.0}, 1.0, {}, 150, 0});
    c.dataset.mixture.components.push_back({{1.5, 0.0}, 1.0, {}, 150, 1});
    c.model.architecture = Architecture::Mlp;
    c.model.hidden_sizes = {8};
    c.learning_rate = 0.3;
    c.steps = 60;
    c.sampling_rate = 0.1;
    c.checkpoint_interval = 20;
    c.epsilons = {7.0, 3.0, 1.0};
    c.seeds = {0};
    c.methods.methods = {Method::DE, Method::SN};
    c.methods.de_members = 5;
    c.methods.sn_coverages = {0.1, 0.25, 0.5, 0.75, 1.0};
    c.output_dir = (fs::temp_directory_path() / "dpsc_acceptance_budget").string();
    fs::remove_all(c.output_dir);
    const auto summary = run(c);
    if (!summary.all_ok()) return {false, "run failed: " + summary.to_json().dump()};

    std::size_t files = 0;
    bool ok = true;
    double worst_ratio = 0.0;
    for (const auto& rec : summary.records) {
        const auto pj = read_json(rec.dir / "privacy.json");
        const double target = parse_epsilon(pj.at("epsilon_target").get<std::string>());
        const double realized = pj.at("realized").at("epsilon").get<double>();
        const auto runs = pj.at("runs").get<std::size_t>();
        ok = ok && realized <= target && runs == 5;
        worst_ratio = std::max(worst_ratio, realized / target);
        ++files;
    }
    ok = ok && files == 6;
    return {ok, std::to_string(files) + " privacy.json files, max realized/target " + fmt("%.6f", worst_ratio)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"bound reachability", bound_reachability},
        {"DP-SGD degeneracy", sgd_degeneracy},
        {"gradient correctness", gradient_correctness},
        {"accountant closed form", accountant_closed_form},
        {"outlier replication", outlier_replication},
        {"imbalance score trend", imbalance_trend},
        {"metric identity", metric_identity},
        {"null-score property", null_property},
        {"SCTD golden value", sctd_golden},
        {"budget-split soundness", budget_split},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("criterion %2zu %-24s %s  %s\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL",
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
