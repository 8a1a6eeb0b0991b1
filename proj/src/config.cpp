#include "dpsc/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string_view>

#include "dpsc/errors.hpp"
#include "dpsc/persist.hpp"

namespace dpsc {

bool MethodConfig::has(Method m) const {
    return std::find(methods.begin(), methods.end(), m) != methods.end();
}

double parse_epsilon(const std::string& text) {
    if (text == "inf" || text == "infinity" || text == "Inf")
        return std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("bad epsilon '" + text + "'");
    }
    if (used != text.size() || !(v >= 0.0)) throw std::invalid_argument("bad epsilon '" + text + "'");
    return v;
}

std::string epsilon_label(double eps) { return std::isinf(eps) ? "inf" : format_double(eps); }

namespace {

void check_keys(const Json& obj, std::initializer_list<std::string_view> allowed, const char* where) {
    if (!obj.is_object()) throw std::invalid_argument(std::string("config: ") + where + " must be an object");
    for (const auto& [key, _] : obj.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw std::invalid_argument(std::string("config: unknown key '") + key + "' in " + where);
}

double eps_from_json(const Json& j) {
    if (j.is_string()) return parse_epsilon(j.get<std::string>());
    return j.get<double>();
}

Json eps_to_json(double e) {
    if (std::isinf(e)) return "inf";
    return e;
}

MixtureSpec mixture_from_json(const Json& j) {
    MixtureSpec m;
    check_keys(j, {"num_classes", "components"}, "mixture");
    m.num_classes = j.value("num_classes", 0);
    for (const auto& c : j.at("components")) {
        check_keys(c, {"mean", "scale", "covariance", "count", "label"}, "mixture component");
        MixtureComponent comp;
        comp.mean = c.at("mean").get<std::vector<double>>();
        comp.scale = c.value("scale", 1.0);
        comp.covariance = c.value("covariance", std::vector<double>{});
        comp.count = c.at("count").get<std::size_t>();
        comp.label = c.at("label").get<int>();
        m.components.push_back(std::move(comp));
    }
    return m;
}

Json mixture_to_json(const MixtureSpec& m) {
    Json comps = Json::array();
    for (const auto& c : m.components) {
        Json jc{{"mean", c.mean}, {"scale", c.scale}, {"count", c.count}, {"label", c.label}};
        if (!c.covariance.empty()) jc["covariance"] = c.covariance;
        comps.push_back(jc);
    }
    return Json{{"num_classes", m.num_classes}, {"components", comps}};
}

}  // namespace

void ExperimentConfig::validate() const {
    if (version != 1) throw std::invalid_argument("config: unsupported version");
    const auto& g = dataset.generator;
    if (g != "gaussian_outlier" && g != "mixture" && g != "csv")
        throw std::invalid_argument("config: unknown dataset generator '" + g + "'");
    if (g == "csv" && dataset.csv_path.empty())
        throw std::invalid_argument("config: csv dataset needs a path");
    if (g == "mixture" && dataset.mixture.components.empty())
        throw std::invalid_argument("config: mixture dataset needs components");
    if (!(dataset.p0 >= 0.0 && dataset.p0 <= 1.0))
        throw std::invalid_argument("config: p0 must lie in [0, 1]");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning rate must be > 0");
    if (!(entropy_beta >= 0.0)) throw std::invalid_argument("config: entropy beta must be >= 0");
    if (checkpoint_interval == 0 || checkpoint_interval > steps)
        throw std::invalid_argument("config: checkpoint interval must lie in [1, steps]");
    if (!(sampling_rate > 0.0 && sampling_rate <= 1.0))
        throw std::invalid_argument("config: sampling rate must lie in (0, 1]");
    if (epsilons.empty()) throw std::invalid_argument("config: no epsilon values");
    for (double e : epsilons)
        if (!(e > 0.0)) throw std::invalid_argument("config: epsilon must be > 0 or inf");
    if (delta && !(*delta > 0.0 && *delta < 1.0))
        throw std::invalid_argument("config: delta must lie in (0, 1)");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("config: clip norm must be > 0");
    if (seeds.empty()) throw std::invalid_argument("config: no seeds");
    if (methods.methods.empty()) throw std::invalid_argument("config: no selection methods");
    if (methods.has(Method::DE) && methods.de_members < 1)
        throw std::invalid_argument("config: de.members must be >= 1");
    if (methods.has(Method::MCDO)) {
        if (methods.mcdo_passes < 1) throw std::invalid_argument("config: mcdo.passes must be >= 1");
        if (model.architecture != Architecture::Mlp || !(model.dropout_rate > 0.0))
            throw std::invalid_argument("config: mcdo needs an MLP with dropout_rate > 0");
    }
    if (methods.has(Method::SCTD) && !(methods.sctd_k >= 0.0))
        throw std::invalid_argument("config: sctd.k must be >= 0");
    if (methods.has(Method::SN)) {
        if (methods.sn_coverages.empty())
            throw std::invalid_argument("config: sn.coverages must not be empty");
        for (double c : methods.sn_coverages)
            if (!(c > 0.0 && c <= 1.0)) throw std::invalid_argument("config: sn coverage in (0, 1]");
    }
    if (methods.has(Method::SAT) && !(methods.sat_momentum >= 0.0 && methods.sat_momentum < 1.0))
        throw std::invalid_argument("config: sat.momentum must lie in [0, 1)");
}

ExperimentConfig config_from_json(const Json& j) {
    ExperimentConfig c;
    check_keys(j, {"version", "dataset", "model", "training", "privacy", "methods", "seeds", "coverage_at", "output"},
               "config");
    c.version = j.value("version", 1);

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        check_keys(d, {"generator", "n_major", "outlier_mean", "mixture", "csv_path", "label_column", "train_fraction",
                       "p0", "minority_class", "standardize"},
                   "dataset");
        auto& ds = c.dataset;
        ds.generator = d.value("generator", ds.generator);
        ds.n_major = d.value("n_major", ds.n_major);
        ds.outlier_mean = d.value("outlier_mean", ds.outlier_mean);
        if (d.contains("mixture")) ds.mixture = mixture_from_json(d.at("mixture"));
        ds.csv_path = d.value("csv_path", ds.csv_path);
        ds.label_column = d.value("label_column", ds.label_column);
        ds.train_fraction = d.value("train_fraction", ds.train_fraction);
        ds.p0 = d.value("p0", ds.p0);
        ds.minority_class = d.value("minority_class", ds.minority_class);
        ds.standardize = d.value("standardize", ds.standardize);
    }
    if (j.contains("model")) {
        check_keys(j.at("model"), {"architecture", "hidden_sizes", "dropout_rate", "abstention_head",
                                   "selectivenet_heads", "input_dim", "num_classes"},
                   "model");
        c.model = model_spec_from_json(j.at("model"));
    }

    if (j.contains("training")) {
        const auto& t = j.at("training");
        check_keys(t, {"learning_rate", "entropy_beta", "checkpoint_interval", "steps", "sampling_rate"}, "training");
        c.learning_rate = t.value("learning_rate", c.learning_rate);
        c.entropy_beta = t.value("entropy_beta", c.entropy_beta);
        c.checkpoint_interval = t.value("checkpoint_interval", c.checkpoint_interval);
        c.steps = t.value("steps", c.steps);
        c.sampling_rate = t.value("sampling_rate", c.sampling_rate);
    }
    if (j.contains("privacy")) {
        const auto& p = j.at("privacy");
        check_keys(p, {"epsilons", "delta", "clip_norm", "noise_multiplier"}, "privacy");
        if (p.contains("epsilons")) {
            c.epsilons.clear();
            for (const auto& e : p.at("epsilons")) c.epsilons.push_back(eps_from_json(e));
        }
        if (p.contains("delta") && !p.at("delta").is_null() && p.at("delta") != "auto")
            c.delta = p.at("delta").get<double>();
        c.clip_norm = p.value("clip_norm", c.clip_norm);
        if (p.contains("noise_multiplier") && !p.at("noise_multiplier").is_null() &&
            p.at("noise_multiplier") != "auto")
            c.noise_multiplier = p.at("noise_multiplier").get<double>();
    }
    if (j.contains("methods")) {
        const auto& m = j.at("methods");
        auto& mc = c.methods;
        mc.methods.clear();
        // Canonical order regardless of key order in the file.
        for (auto method : {Method::SR, Method::MCDO, Method::DE, Method::SAT, Method::SN, Method::SCTD}) {
            const std::string key(method_name(method));
            if (!m.contains(key)) continue;
            mc.methods.push_back(method);
            const auto& s = m.at(key);
            switch (method) {
                case Method::DE:
                    check_keys(s, {"members"}, "methods.de");
                    mc.de_members = s.value("members", mc.de_members);
                    break;
                case Method::MCDO:
                    check_keys(s, {"passes"}, "methods.mcdo");
                    mc.mcdo_passes = s.value("passes", mc.mcdo_passes);
                    break;
                case Method::SCTD:
                    check_keys(s, {"k"}, "methods.sctd");
                    mc.sctd_k = s.value("k", mc.sctd_k);
                    break;
                case Method::SN:
                    check_keys(s, {"coverages", "alpha", "lambda", "native"}, "methods.sn");
                    mc.sn_coverages = s.value("coverages", mc.sn_coverages);
                    mc.sn_alpha = s.value("alpha", mc.sn_alpha);
                    mc.sn_lambda = s.value("lambda", mc.sn_lambda);
                    mc.sn_native = s.value("native", mc.sn_native);
                    break;
                case Method::SAT:
                    check_keys(s, {"momentum", "burn_in_epochs", "native"}, "methods.sat");
                    mc.sat_momentum = s.value("momentum", mc.sat_momentum);
                    mc.sat_burn_in_epochs = s.value("burn_in_epochs", mc.sat_burn_in_epochs);
                    mc.sat_native = s.value("native", mc.sat_native);
                    break;
                case Method::SR: check_keys(s, {}, "methods.sr"); break;
            }
        }
        for (const auto& [key, _] : m.items()) parse_method(key);
    }
    c.seeds = j.value("seeds", c.seeds);
    c.coverage_at = j.value("coverage_at", c.coverage_at);
    c.output_dir = j.value("output", c.output_dir);
    c.validate();
    return c;
}

Json to_json(const ExperimentConfig& c) {
    const auto& ds = c.dataset;
    Json dataset{{"generator", ds.generator}, {"p0", ds.p0}, {"minority_class", ds.minority_class},
                 {"standardize", ds.standardize}};
    if (ds.generator == "gaussian_outlier") {
        dataset["n_major"] = ds.n_major;
        dataset["outlier_mean"] = ds.outlier_mean;
    } else if (ds.generator == "mixture") {
        dataset["mixture"] = mixture_to_json(ds.mixture);
    } else {
        dataset["csv_path"] = ds.csv_path;
        dataset["label_column"] = ds.label_column;
        dataset["train_fraction"] = ds.train_fraction;
    }

    Json eps = Json::array();
    for (double e : c.epsilons) eps.push_back(eps_to_json(e));
    Json privacy{{"epsilons", eps},
                 {"delta", c.delta ? Json(*c.delta) : Json("auto")},
                 {"clip_norm", c.clip_norm},
                 {"noise_multiplier", c.noise_multiplier ? Json(*c.noise_multiplier) : Json("auto")}};

    const auto& mc = c.methods;
    Json methods = Json::object();
    for (auto m : mc.methods) {
        Json s = Json::object();
        switch (m) {
            case Method::DE: s["members"] = mc.de_members; break;
            case Method::MCDO: s["passes"] = mc.mcdo_passes; break;
            case Method::SCTD: s["k"] = mc.sctd_k; break;
            case Method::SN:
                s = {{"coverages", mc.sn_coverages}, {"alpha", mc.sn_alpha},
                     {"lambda", mc.sn_lambda}, {"native", mc.sn_native}};
                break;
            case Method::SAT:
                s = {{"momentum", mc.sat_momentum}, {"burn_in_epochs", mc.sat_burn_in_epochs},
                     {"native", mc.sat_native}};
                break;
            case Method::SR: break;
        }
        methods[std::string(method_name(m))] = s;
    }

    Json model = to_json(c.model);
    model.erase("input_dim");
    model.erase("num_classes");

    return Json{{"version", c.version},
                {"dataset", dataset},
                {"model", model},
                {"training", {{"learning_rate", c.learning_rate},
                              {"entropy_beta", c.entropy_beta},
                              {"checkpoint_interval", c.checkpoint_interval},
                              {"steps", c.steps},
                              {"sampling_rate", c.sampling_rate}}},
                {"privacy", privacy},
                {"methods", methods},
                {"seeds", c.seeds},
                {"coverage_at", c.coverage_at},
                {"output", c.output_dir}};
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    return config_from_json(read_json(path));
}

std::string json_hash(const Json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string cell_hash(const ExperimentConfig& cfg, double epsilon) {
    Json j = to_json(cfg);
    j.erase("seeds");
    j.erase("output");
    j["privacy"]["epsilons"] = Json::array({eps_to_json(epsilon)});
    return json_hash(j);
}

}  // namespace dpsc
