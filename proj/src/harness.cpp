#include "dpsc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <optional>
#include <stdexcept>

#include "dpsc/errors.hpp"
#include "dpsc/evaluation.hpp"
#include "dpsc/parallel.hpp"
#include "dpsc/persist.hpp"
#include "dpsc/rng.hpp"
#include "dpsc/selection.hpp"

namespace dpsc {

namespace fs = std::filesystem;

CellData make_cell_data(const DatasetConfig& cfg, std::uint64_t seed) {
    CellData cell;
    const auto train_seed = derive_seed({seed, tag("train")});
    const auto test_seed = derive_seed({seed, tag("test")});
    if (cfg.generator == "gaussian_outlier") {
        cell.train = gen_gaussian_outlier(cfg.n_major, cfg.outlier_mean, train_seed);
        cell.test = gen_gaussian_outlier(cfg.n_major, cfg.outlier_mean, test_seed);
    } else if (cfg.generator == "mixture") {
        cell.train = gen_mixture(cfg.mixture, train_seed);
        cell.test = gen_mixture(cfg.mixture, test_seed);
    } else if (cfg.generator == "csv") {
        LabelColumn col;
        if (!cfg.label_column.empty()) {
            const bool digits = std::all_of(cfg.label_column.begin(), cfg.label_column.end(),
                                            [](char c) { return c >= '0' && c <= '9'; });
            if (digits)
                col = static_cast<std::size_t>(std::stoul(cfg.label_column));
            else
                col = cfg.label_column;
        }
        auto loaded = load_csv(cfg.csv_path, col);
        std::tie(cell.train, cell.test) = split(loaded.data, cfg.train_fraction, seed);
    } else {
        throw std::invalid_argument("unknown dataset generator '" + cfg.generator + "'");
    }
    if (cfg.p0 < 1.0)
        cell.train = subsample_class(cell.train, cfg.minority_class, cfg.p0,
                                     derive_seed({seed, tag("imbalance")}));
    if (cfg.standardize) {
        auto ref = cell.train;
        cell.train = standardize(cell.train, ref);
        cell.test = standardize(cell.test, ref);
    }
    cell.train.validate();
    cell.test.validate();
    return cell;
}

ModelSpec resolve_model(const ExperimentConfig& cfg, const LabeledDataset& train) {
    ModelSpec spec = cfg.model;
    spec.input_dim = train.dim;
    spec.num_classes = train.num_classes;
    spec.validate();
    return spec;
}

PrivacyConfig resolve_privacy(const ExperimentConfig& cfg, double epsilon, std::size_t n_train) {
    PrivacyConfig p;
    p.epsilon_target = epsilon;
    p.delta = cfg.delta ? *cfg.delta : 1.0 / static_cast<double>(n_train);
    p.clip_norm = cfg.clip_norm;
    p.noise_multiplier = cfg.noise_multiplier;
    p.sampling_rate = cfg.sampling_rate;
    p.steps = cfg.steps;
    return p;
}

bool RunSummary::all_ok() const {
    return std::all_of(records.begin(), records.end(),
                       [](const RunRecord& r) { return r.status != "failed"; });
}

Json RunSummary::to_json() const {
    Json cells = Json::array();
    for (const auto& r : records) {
        cells.push_back({{"config_hash", r.config_hash},
                         {"seed", r.seed},
                         {"epsilon", epsilon_label(r.epsilon_target)},
                         {"method", r.method},
                         {"status", r.status},
                         {"error", r.error},
                         {"realized_epsilon", epsilon_label(r.realized.epsilon)},
                         {"runs", r.runs},
                         {"metrics", r.metrics},
                         {"dir", r.dir.string()}});
    }
    return Json{{"ok", all_ok()}, {"trainings", trainings}, {"cells", cells}};
}

namespace {

// Budget shared by `runs` training runs of one method in one cell.
struct GroupBudget {
    bool is_private = false;
    double sigma = 0.0;
    double delta_total = 0.0;
    PrivacyReport total;
    PrivacyReport per_run;
    double heuristic = 0.0;
};

GroupBudget group_budget(const PrivacyConfig& priv, std::size_t runs) {
    GroupBudget g;
    g.is_private = priv.is_private();
    if (!g.is_private) {
        g.total.epsilon = g.per_run.epsilon = g.heuristic = kInfinity;
        g.total.steps = runs * priv.steps;
        g.per_run.steps = priv.steps;
        g.total.sampling_rate = g.per_run.sampling_rate = priv.sampling_rate;
        return g;
    }
    g.delta_total = priv.delta;
    g.sigma = priv.noise_multiplier
                  ? *priv.noise_multiplier
                  : split_budget(priv.epsilon_target, priv.delta, runs, priv.sampling_rate,
                                 priv.steps)
                        .sigma;
    g.total = account(g.sigma, priv.sampling_rate, runs * priv.steps, priv.delta);
    g.per_run = account(g.sigma, priv.sampling_rate, priv.steps,
                        priv.delta / static_cast<double>(runs));
    g.heuristic = priv.epsilon_target / std::sqrt(static_cast<double>(runs));
    if (g.total.epsilon > priv.epsilon_target)
        throw CalibrationError("realized epsilon " + format_double(g.total.epsilon) +
                                   " exceeds the target " + format_double(priv.epsilon_target),
                               g.sigma, g.sigma);
    return g;
}

PrivacyConfig run_privacy(const PrivacyConfig& priv, const GroupBudget& g, std::size_t runs) {
    PrivacyConfig p = priv;
    if (g.is_private) {
        p.noise_multiplier = g.sigma;
        p.delta = priv.delta / static_cast<double>(runs);
    }
    return p;
}

Json privacy_json(const PrivacyConfig& priv, const GroupBudget& g, std::size_t runs) {
    return Json{{"epsilon_target", epsilon_label(priv.epsilon_target)},
                {"delta", g.is_private ? priv.delta : 0.0},
                {"runs", runs},
                {"sigma", g.sigma},
                {"clip_norm", priv.clip_norm},
                {"realized", to_json(g.total)},
                {"per_run", to_json(g.per_run)},
                {"heuristic_per_run_epsilon", epsilon_label(g.heuristic)}};
}

TrainConfig make_train_config(const ExperimentConfig& cfg, LossSpec loss, std::uint64_t seed) {
    TrainConfig t;
    t.learning_rate = cfg.learning_rate;
    loss.entropy_beta = cfg.entropy_beta;
    t.loss = loss;
    t.checkpoint_interval = cfg.checkpoint_interval;
    t.seed = seed;
    return t;
}

std::vector<bool> correctness(const std::vector<int>& predicted, const LabeledDataset& test) {
    std::vector<bool> c(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) c[i] = predicted[i] == test.labels[i];
    return c;
}

std::vector<int> argmax_rows(const ProbMatrix& probs, int num_classes) {
    std::vector<int> out;
    out.reserve(probs.size());
    for (const auto& p : probs) out.push_back(argmax(p, num_classes));
    return out;
}

void append_rows(std::vector<ScoreRow>& rows, const std::string& tag_name,
                 const SelectionScores& s, const std::vector<int>& predicted,
                 const LabeledDataset& test) {
    for (std::size_t i = 0; i < s.size(); ++i)
        rows.push_back({i, tag_name, s.scores[i], predicted[i], test.labels[i]});
}

bool method_complete(const fs::path& dir) {
    return fs::exists(dir / "metrics.json") && fs::exists(dir / "privacy.json");
}

void save_run(const fs::path& dir, const ModelSpec& spec, const TrainResult& r) {
    save_params(dir / "params.json", spec, r.params);
    save_checkpoint_log(dir / "checkpoints", r.log);
    write_json(dir / "privacy.json", to_json(r.privacy));
}

// SN curve built from the per-target curves: at coverage c the model with
// the smallest target coverage >= c is used (the largest target beyond it).
RiskCoverageCurve composite_curve(const std::vector<double>& targets,
                                  const std::vector<RiskCoverageCurve>& curves) {
    RiskCoverageCurve out;
    const std::size_t n = curves.front().size();
    out.coverage = curves.front().coverage;
    out.accuracy.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t pick = 0;
        double best = kInfinity;
        double largest = -1.0;
        std::size_t largest_idx = 0;
        for (std::size_t j = 0; j < targets.size(); ++j) {
            if (targets[j] >= out.coverage[i] && targets[j] < best) {
                best = targets[j];
                pick = j;
            }
            if (targets[j] > largest) {
                largest = targets[j];
                largest_idx = j;
            }
        }
        if (best == kInfinity) pick = largest_idx;
        out.accuracy[i] = curves[pick].accuracy[i];
    }
    out.a_full = out.accuracy.back();
    return out;
}

class CellRunner {
public:
    CellRunner(const ExperimentConfig& cfg, std::uint64_t seed, double eps)
        : cfg_(cfg), seed_(seed), eps_(eps), hash_(cell_hash(cfg, eps)) {
        root_ = fs::path(cfg.output_dir) / hash_;
        seed_dir_ = root_ / std::to_string(seed);
    }

    std::vector<RunRecord> execute(std::atomic<std::size_t>& trainings) {
        {
            Json cell = to_json(cfg_);
            cell.erase("seeds");
            cell["privacy"]["epsilons"] = Json::array({epsilon_label(eps_)});
            static std::mutex mu;
            std::lock_guard lock(mu);
            if (!fs::exists(root_ / "config.json")) write_json(root_ / "config.json", cell);
        }
        std::vector<RunRecord> records;
        for (auto m : cfg_.methods.methods) {
            RunRecord rec;
            rec.config_hash = hash_;
            rec.seed = seed_;
            rec.epsilon_target = eps_;
            rec.method = std::string(method_name(m));
            rec.dir = seed_dir_ / rec.method;
            try {
                if (method_complete(rec.dir)) {
                    rec.status = "skipped";
                } else {
                    rec.status = "ok";
                    trainings += compute(m, rec.dir);
                }
                rec.metrics = read_json(rec.dir / "metrics.json");
                const auto pj = read_json(rec.dir / "privacy.json");
                rec.realized = privacy_report_from_json(pj.at("realized"));
                rec.runs = pj.at("runs").get<std::size_t>();
                if (rec.realized.epsilon > eps_)
                    throw CalibrationError("persisted realized epsilon exceeds the target",
                                           kSigmaMin, kSigmaMax);
            } catch (const std::exception& e) {
                rec.status = "failed";
                rec.error = e.what();
            }
            records.push_back(std::move(rec));
        }
        return records;
    }

private:
    const CellData& data() {
        if (!data_) {
            data_ = make_cell_data(cfg_.dataset, seed_);
            spec_ = resolve_model(cfg_, data_->train);
            priv_ = resolve_privacy(cfg_, eps_, data_->train.size());
        }
        return *data_;
    }

    // Returns the number of training runs executed.
    std::size_t compute(Method m, const fs::path& dir) {
        const auto& d = data();
        switch (m) {
            case Method::SR:
            case Method::SCTD:
            case Method::MCDO: return compute_base_method(m, dir, d);
            case Method::SAT: return compute_sat(dir, d);
            case Method::DE: return compute_de(dir, d);
            case Method::SN: return compute_sn(dir, d);
        }
        return 0;
    }

    std::size_t ensure_base(const CellData& d) {
        if (base_) return 0;
        const fs::path dir = seed_dir_ / "base";
        if (fs::exists(dir / "params.json") && fs::exists(dir / "checkpoints" / "header.json") &&
            fs::exists(dir / "budget.json")) {
            auto [spec, params] = load_params(dir / "params.json");
            TrainResult r;
            r.params = std::move(params);
            r.log = load_checkpoint_log(dir / "checkpoints");
            r.privacy = privacy_report_from_json(read_json(dir / "privacy.json"));
            base_ = std::move(r);
            base_budget_json_ = read_json(dir / "budget.json");
            return 0;
        }
        const auto g = group_budget(priv_, 1);
        const auto tc = make_train_config(cfg_, LossSpec{CrossEntropyLoss{}},
                                          derive_seed({seed_, epsilon_key(eps_), tag("base")}));
        base_ = train(d.train, spec_, tc, run_privacy(priv_, g, 1), d.test);
        base_budget_json_ = privacy_json(priv_, g, 1);
        save_run(dir, spec_, *base_);
        write_json(dir / "budget.json", base_budget_json_);
        return 1;
    }

    void finish(const fs::path& dir, const RiskCoverageCurve& curve, const std::vector<ScoreRow>& rows,
                const Json& privacy, Json extra = Json::object()) {
        save_scores(dir / "scores.csv", rows);
        save_curve(dir / "curves.csv", curve);
        Json metrics = metrics_json(curve, cfg_.coverage_at);
        for (auto& [k, v] : extra.items()) metrics[k] = v;
        write_json(dir / "privacy.json", privacy);
        write_json(dir / "metrics.json", metrics);
    }

    std::size_t compute_base_method(Method m, const fs::path& dir, const CellData& d) {
        const std::size_t trained = ensure_base(d);
        const auto& base = *base_;
        const auto predicted = base.log.predictions.back();
        SelectionScores s;
        if (m == Method::SR) {
            s = score_sr(base.log.final_probs);
        } else if (m == Method::SCTD) {
            s = score_sctd(base.log, cfg_.methods.sctd_k);
        } else {
            s = score_mcdo(base.params, spec_, d.test, cfg_.methods.mcdo_passes, spec_.dropout_rate,
                           derive_seed({seed_, epsilon_key(eps_), tag("mcdo")}));
        }
        std::vector<ScoreRow> rows;
        append_rows(rows, std::string(method_name(m)), s, predicted, d.test);
        finish(dir, build_curve(s, correctness(predicted, d.test)), rows, base_budget_json_);
        return trained;
    }

    std::size_t compute_sat(const fs::path& dir, const CellData& d) {
        ModelSpec spec = spec_;
        spec.abstention_head = true;
        const auto g = group_budget(priv_, 1);
        const auto tc = make_train_config(
            cfg_, LossSpec{SatLoss{cfg_.methods.sat_momentum, cfg_.methods.sat_burn_in_epochs}},
            derive_seed({seed_, epsilon_key(eps_), tag("sat")}));
        const auto r = train(d.train, spec, tc, run_privacy(priv_, g, 1), d.test);
        save_run(dir / "run", spec, r);
        const auto& probs = r.log.final_probs;
        const auto predicted = r.log.predictions.back();
        const auto s = cfg_.methods.sat_native ? score_sat(probs)
                                               : score_sr_of(probs, spec.num_classes, Method::SAT);
        std::vector<ScoreRow> rows;
        append_rows(rows, "sat", s, predicted, d.test);
        finish(dir, build_curve(s, correctness(predicted, d.test)), rows, privacy_json(priv_, g, 1));
        return 1;
    }

    std::size_t compute_de(const fs::path& dir, const CellData& d) {
        const std::size_t members = cfg_.methods.de_members;
        const auto g = group_budget(priv_, members);
        const auto p = run_privacy(priv_, g, members);
        std::vector<ProbMatrix> member_probs;
        for (std::size_t m = 0; m < members; ++m) {
            const auto tc = make_train_config(
                cfg_, LossSpec{CrossEntropyLoss{}}, derive_seed({seed_, epsilon_key(eps_), tag("de"), m}));
            const auto r = train(d.train, spec_, tc, p, d.test);
            save_run(dir / "members" / std::to_string(m), spec_, r);
            member_probs.push_back(r.log.final_probs);
        }
        const auto s = score_de(member_probs);
        ProbMatrix mean(d.test.size());
        for (std::size_t i = 0; i < d.test.size(); ++i) {
            mean[i].assign(member_probs.front()[i].size(), 0.0);
            for (const auto& mp : member_probs)
                for (std::size_t j = 0; j < mean[i].size(); ++j) mean[i][j] += mp[i][j];
        }
        const auto predicted = argmax_rows(mean, spec_.num_classes);
        std::vector<ScoreRow> rows;
        append_rows(rows, "de", s, predicted, d.test);
        finish(dir, build_curve(s, correctness(predicted, d.test)), rows,
               privacy_json(priv_, g, members));
        return members;
    }

    std::size_t compute_sn(const fs::path& dir, const CellData& d) {
        const auto& targets = cfg_.methods.sn_coverages;
        const std::size_t runs = targets.size();
        const auto g = group_budget(priv_, runs);
        const auto p = run_privacy(priv_, g, runs);
        ModelSpec spec = spec_;
        spec.selectivenet_heads = true;

        std::vector<RiskCoverageCurve> curves;
        std::vector<ScoreRow> rows;
        Json per_target = Json::object();
        for (std::size_t k = 0; k < runs; ++k) {
            const auto tc = make_train_config(
                cfg_,
                LossSpec{SelectiveNetLoss{targets[k], cfg_.methods.sn_lambda, cfg_.methods.sn_alpha}},
                derive_seed({seed_, epsilon_key(eps_), tag("sn"), k}));
            const auto r = train(d.train, spec, tc, p, d.test);
            const std::string name = "c" + format_double(targets[k]);
            save_run(dir / "runs" / name, spec, r);
            const auto predicted = r.log.predictions.back();
            SelectionScores s;
            if (cfg_.methods.sn_native) {
                std::vector<double> sel(d.test.size());
                for (std::size_t i = 0; i < d.test.size(); ++i)
                    sel[i] = forward(r.params, spec, d.test.row(i)).selection;
                s = score_sn(sel);
            } else {
                s = score_sr_of(r.log.final_probs, spec.num_classes, Method::SN);
            }
            append_rows(rows, "sn@" + format_double(targets[k]), s, predicted, d.test);
            curves.push_back(build_curve(s, correctness(predicted, d.test)));
            per_target[format_double(targets[k])] = metrics_json(curves.back(), cfg_.coverage_at);
        }
        finish(dir, composite_curve(targets, curves), rows, privacy_json(priv_, g, runs),
               Json{{"per_target", per_target}});
        return runs;
    }

    const ExperimentConfig& cfg_;
    std::uint64_t seed_;
    double eps_;
    std::string hash_;
    fs::path root_;
    fs::path seed_dir_;
    std::optional<CellData> data_;
    ModelSpec spec_;
    PrivacyConfig priv_;
    std::optional<TrainResult> base_;
    Json base_budget_json_;
};

}  // namespace

RunSummary run(const ExperimentConfig& cfg, std::size_t jobs) {
    cfg.validate();
    struct Cell {
        std::uint64_t seed;
        double eps;
    };
    std::vector<Cell> cells;
    for (auto s : cfg.seeds)
        for (double e : cfg.epsilons) cells.push_back({s, e});

    std::vector<std::vector<RunRecord>> results(cells.size());
    std::atomic<std::size_t> trainings{0};
    parallel_for(cells.size(), jobs, [&](std::size_t i) {
        try {
            results[i] = CellRunner(cfg, cells[i].seed, cells[i].eps).execute(trainings);
        } catch (const std::exception& e) {
            RunRecord r;
            r.seed = cells[i].seed;
            r.epsilon_target = cells[i].eps;
            r.method = "*";
            r.status = "failed";
            r.error = e.what();
            results[i].push_back(std::move(r));
        }
    });

    RunSummary summary;
    for (auto& r : results)
        for (auto& rec : r) summary.records.push_back(std::move(rec));
    summary.trainings = trainings.load();
    return summary;
}

TrainResult train_base(const ExperimentConfig& cfg, std::uint64_t seed, double epsilon,
                       const fs::path& out_dir) {
    const auto d = make_cell_data(cfg.dataset, seed);
    const auto spec = resolve_model(cfg, d.train);
    const auto priv = resolve_privacy(cfg, epsilon, d.train.size());
    const auto g = group_budget(priv, 1);
    const auto tc =
        make_train_config(cfg, LossSpec{CrossEntropyLoss{}},
                          derive_seed({seed, epsilon_key(epsilon), tag("base")}));
    auto r = train(d.train, spec, tc, run_privacy(priv, g, 1), d.test);
    save_run(out_dir, spec, r);
    write_json(out_dir / "budget.json", privacy_json(priv, g, 1));
    return r;
}

}  // namespace dpsc
