// dpsc: command-line driver for private selective classification experiments.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpsc/accountant.hpp"
#include "dpsc/config.hpp"
#include "dpsc/errors.hpp"
#include "dpsc/evaluation.hpp"
#include "dpsc/harness.hpp"
#include "dpsc/persist.hpp"
#include "dpsc/rng.hpp"

namespace fs = std::filesystem;
using dpsc::Json;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> eps;
    std::string out;
    std::size_t jobs = 1;
};

void add_common(CLI::App* app, Common& c, bool with_config = true) {
    if (with_config) app->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "run a single seed");
    app->add_option("--eps", c.eps, "privacy budget(s): inf, 7, 3, 1 or any float")->delimiter(',');
    app->add_option("--out", c.out, "output directory");
    app->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
}

std::vector<double> parse_eps_list(const std::vector<std::string>& raw) {
    std::vector<double> out;
    for (const auto& s : raw) out.push_back(dpsc::parse_epsilon(s));
    return out;
}

// Flags override config keys.
dpsc::ExperimentConfig resolve(const Common& c, dpsc::ExperimentConfig base) {
    if (!c.config.empty()) base = dpsc::load_config(c.config);
    if (c.seed) base.seeds = {*c.seed};
    if (!c.eps.empty()) base.epsilons = parse_eps_list(c.eps);
    if (!c.out.empty()) base.output_dir = c.out;
    base.validate();
    return base;
}

void emit(const Json& j) { std::cout << j.dump(2) << '\n'; }

int cmd_train(const Common& c) {
    auto cfg = resolve(c, dpsc::ExperimentConfig{});
    Json runs = Json::array();
    bool ok = true;
    for (auto seed : cfg.seeds) {
        for (double eps : cfg.epsilons) {
            const fs::path dir = fs::path(cfg.output_dir) / dpsc::cell_hash(cfg, eps) /
                                 std::to_string(seed) / "base";
            Json row{{"seed", seed}, {"epsilon", dpsc::epsilon_label(eps)}, {"dir", dir.string()}};
            try {
                const auto r = dpsc::train_base(cfg, seed, eps, dir);
                row["status"] = "ok";
                row["privacy"] = dpsc::to_json(r.privacy);
                row["checkpoints"] = r.log.times.size();
            } catch (const std::exception& e) {
                row["status"] = "failed";
                row["error"] = e.what();
                ok = false;
            }
            runs.push_back(row);
        }
    }
    emit(Json{{"command", "train"}, {"ok", ok}, {"runs", runs}});
    return ok ? 0 : 1;
}

int cmd_run(const Common& c, const char* name) {
    const auto cfg = resolve(c, dpsc::ExperimentConfig{});
    const auto summary = dpsc::run(cfg, c.jobs);
    Json j = summary.to_json();
    j["command"] = name;
    emit(j);
    return summary.all_ok() ? 0 : 1;
}

struct AccountantArgs {
    std::optional<double> sigma;
    double q = 0.01;
    std::size_t steps = 1000;
    double delta = 1e-5;
    std::optional<std::string> eps;
    std::size_t members = 1;
};

int cmd_accountant(const AccountantArgs& a) {
    if (a.eps) {
        const double eps = dpsc::parse_epsilon(*a.eps);
        if (a.members > 1) {
            const auto split = dpsc::split_budget(eps, a.delta, a.members, a.q, a.steps);
            emit(Json{{"command", "accountant"},
                      {"sigma", split.sigma},
                      {"members", split.members},
                      {"total", dpsc::to_json(split.total)},
                      {"per_member", dpsc::to_json(split.per_member)},
                      {"heuristic_per_member_epsilon", split.heuristic_epsilon}});
            return 0;
        }
        const double sigma = dpsc::calibrate_sigma(eps, a.delta, a.q, a.steps);
        emit(Json{{"command", "accountant"},
                  {"epsilon_target", dpsc::epsilon_label(eps)},
                  {"report", dpsc::to_json(dpsc::account(sigma, a.q, a.steps, a.delta))}});
        return 0;
    }
    if (!a.sigma) throw std::invalid_argument("accountant: give --sigma or --eps");
    emit(Json{{"command", "accountant"},
              {"report", dpsc::to_json(dpsc::account(*a.sigma, a.q, a.steps, a.delta))}});
    return 0;
}

struct OracleArgs {
    std::vector<double> a_full{0.5, 0.7, 0.9};
    std::size_t n = 10000;
};

int cmd_oracle(const OracleArgs& a, const Common& c) {
    const std::uint64_t seed = c.seed.value_or(0);
    const auto rows = dpsc::panel_bound(a.a_full, a.n, seed);
    if (!c.out.empty()) {
        for (std::size_t k = 0; k < a.a_full.size(); ++k) {
            const auto s = dpsc::ideal_score_oracle(a.a_full[k], a.n, dpsc::derive_seed({seed, k}));
            dpsc::save_curve(fs::path(c.out) / ("oracle_a" + dpsc::format_double(a.a_full[k]) + ".csv"),
                             dpsc::build_curve(s.scores, s.correct));
        }
    }
    bool ok = true;
    for (const auto& r : rows) ok = ok && r.max_deviation <= 1.0 / static_cast<double>(a.n);
    Json j = dpsc::to_json(rows);
    j["command"] = "oracle";
    j["ok"] = ok;
    emit(j);
    return ok ? 0 : 1;
}

std::vector<std::uint64_t> panel_seeds(const Common& c, const dpsc::ExperimentConfig& cfg) {
    if (c.seed) return {*c.seed};
    return cfg.seeds;
}

void write_panel(const Common& c, const std::string& name, const Json& j) {
    if (c.out.empty()) return;
    dpsc::write_json(fs::path(c.out) / ("panel_" + name + ".json"), j);
}

int cmd_panel_outlier(const Common& c) {
    const auto cfg = resolve(c, dpsc::default_outlier_config());
    const auto report = dpsc::panel_outlier(cfg, cfg.epsilons, panel_seeds(c, cfg), c.jobs);
    Json j = report.to_json();
    bool ok = true;
    for (const auto& r : report.rows) ok = ok && r.privacy.epsilon <= r.epsilon;
    j["ok"] = ok;
    write_panel(c, "outlier", j);
    emit(j);
    return ok ? 0 : 1;
}

int cmd_panel_imbalance(const Common& c, const std::vector<double>& p0) {
    const auto cfg = resolve(c, dpsc::default_imbalance_config());
    const auto report = dpsc::panel_imbalance(cfg, p0, cfg.epsilons, panel_seeds(c, cfg), c.jobs);
    Json j = report.to_json();
    bool ok = true;
    for (const auto& r : report.rows) ok = ok && r.privacy.epsilon <= r.epsilon;
    j["ok"] = ok;
    write_panel(c, "imbalance", j);
    emit(j);
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Differentially private selective classification experiments"};
    app.require_subcommand(1);

    Common train_c, eval_c, sweep_c, oracle_c, outlier_c, imbalance_c, bound_c;

    auto* train = app.add_subcommand("train", "train the shared cross-entropy model per cell");
    add_common(train, train_c);
    auto* evaluate = app.add_subcommand("evaluate", "train, score and evaluate one seed");
    add_common(evaluate, eval_c);
    auto* sweep = app.add_subcommand("sweep", "run every seed x epsilon cell of a config");
    add_common(sweep, sweep_c);

    AccountantArgs acc;
    auto* accountant = app.add_subcommand("accountant", "RDP accounting and noise calibration");
    accountant->add_option("--sigma", acc.sigma, "noise multiplier");
    accountant->add_option("--q", acc.q, "sampling rate");
    accountant->add_option("--steps", acc.steps, "number of steps");
    accountant->add_option("--delta", acc.delta, "target delta");
    accountant->add_option("--eps", acc.eps, "calibrate sigma for this epsilon");
    accountant->add_option("--members", acc.members, "split the budget across this many runs");

    OracleArgs orc;
    auto* oracle = app.add_subcommand("oracle", "ideal selection scores against the accuracy bound");
    oracle->add_option("--a-full", orc.a_full, "full-coverage accuracies")->delimiter(',');
    oracle->add_option("--n", orc.n, "number of points");
    add_common(oracle, oracle_c, false);

    auto* panel = app.add_subcommand("panel", "replication panels");
    panel->require_subcommand(1);
    auto* outlier = panel->add_subcommand("outlier", "single-outlier logistic regression");
    add_common(outlier, outlier_c);
    std::vector<double> p0{0.5, 0.25, 0.1, 0.01};
    auto* imbalance = panel->add_subcommand("imbalance", "class-imbalanced mixture with an MLP");
    add_common(imbalance, imbalance_c);
    imbalance->add_option("--p0", p0, "minority retention rates")->delimiter(',');
    OracleArgs bnd;
    auto* bnd_cmd = panel->add_subcommand("bound", "bound reachability");
    bnd_cmd->add_option("--a-full", bnd.a_full, "full-coverage accuracies")->delimiter(',');
    bnd_cmd->add_option("--n", bnd.n, "number of points");
    add_common(bnd_cmd, bound_c, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(train_c);
        if (*evaluate) {
            if (!eval_c.seed) eval_c.seed = 0;
            return cmd_run(eval_c, "evaluate");
        }
        if (*sweep) return cmd_run(sweep_c, "sweep");
        if (*accountant) return cmd_accountant(acc);
        if (*oracle) return cmd_oracle(orc, oracle_c);
        if (*outlier) return cmd_panel_outlier(outlier_c);
        if (*imbalance) return cmd_panel_imbalance(imbalance_c, p0);
        if (*bnd_cmd) return cmd_oracle(bnd, bound_c);
    } catch (const dpsc::CalibrationError& e) {
        emit(Json{{"error", "calibration"}, {"message", e.what()}});
        return 2;
    } catch (const std::exception& e) {
        emit(Json{{"error", "failed"}, {"message", e.what()}});
        return 2;
    }
    return 1;
}
