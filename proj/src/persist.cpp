#include "dpsc/persist.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "dpsc/errors.hpp"

namespace dpsc {

namespace fs = std::filesystem;

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

namespace {

double parse_double(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError("bad number '" + s + "'");
    return v;
}

long long parse_int(const std::string& s) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError("bad integer '" + s + "'");
    return v;
}

std::vector<std::string> cells(const std::string& line) {
    std::vector<std::string> out;
    std::string c;
    std::istringstream ss(line);
    while (std::getline(ss, c, ',')) out.push_back(c);
    return out;
}

std::vector<std::string> lines_of(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

// JSON has no infinity; infinite reals are stored as the string "inf".
Json real(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double real_from(const Json& j) {
    if (j.is_string()) return parse_double(j.get<std::string>());
    return j.get<double>();
}

}  // namespace

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    // Unique per thread: concurrent cells may write siblings in one directory.
    const fs::path tmp =
        path.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Json read_json(const fs::path& path) {
    try {
        return Json::parse(read_text(path));
    } catch (const Json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

Json to_json(const ModelSpec& spec) {
    return Json{{"architecture", spec.architecture == Architecture::Mlp ? "mlp" : "linear"},
                {"hidden_sizes", spec.hidden_sizes},
                {"input_dim", spec.input_dim},
                {"num_classes", spec.num_classes},
                {"abstention_head", spec.abstention_head},
                {"selectivenet_heads", spec.selectivenet_heads},
                {"dropout_rate", spec.dropout_rate}};
}

ModelSpec model_spec_from_json(const Json& j) {
    ModelSpec s;
    const auto arch = j.value("architecture", std::string("linear"));
    if (arch == "mlp")
        s.architecture = Architecture::Mlp;
    else if (arch == "linear")
        s.architecture = Architecture::Linear;
    else
        throw std::invalid_argument("unknown architecture '" + arch + "'");
    s.hidden_sizes = j.value("hidden_sizes", std::vector<std::size_t>{});
    s.input_dim = j.value("input_dim", std::size_t{2});
    s.num_classes = j.value("num_classes", 2);
    s.abstention_head = j.value("abstention_head", false);
    s.selectivenet_heads = j.value("selectivenet_heads", false);
    s.dropout_rate = j.value("dropout_rate", 0.0);
    return s;
}

Json to_json(const PrivacyReport& r) {
    return Json{{"epsilon", real(r.epsilon)}, {"delta", r.delta},
                {"optimal_order", r.optimal_order}, {"sigma", r.sigma},
                {"sampling_rate", r.sampling_rate}, {"steps", r.steps}};
}

PrivacyReport privacy_report_from_json(const Json& j) {
    PrivacyReport r;
    r.epsilon = real_from(j.at("epsilon"));
    r.delta = j.at("delta").get<double>();
    r.optimal_order = j.at("optimal_order").get<double>();
    r.sigma = j.at("sigma").get<double>();
    r.sampling_rate = j.at("sampling_rate").get<double>();
    r.steps = j.at("steps").get<std::size_t>();
    return r;
}

void save_params(const fs::path& path, const ModelSpec& spec, const ParamVector& p) {
    Json layout = Json::array();
    for (const auto& b : p.layout)
        layout.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}, {"offset", b.offset}});
    write_json(path, Json{{"format", "dpsc-params"},
                          {"version", kFormatVersion},
                          {"spec", to_json(spec)},
                          {"layout", layout},
                          {"values", p.values}});
}

std::pair<ModelSpec, ParamVector> load_params(const fs::path& path) {
    const auto j = read_json(path);
    if (j.value("format", std::string{}) != "dpsc-params" || j.value("version", 0) != kFormatVersion)
        throw ParseError(path.string() + ": not a version-1 parameter file");
    auto spec = model_spec_from_json(j.at("spec"));
    ParamVector p;
    for (const auto& b : j.at("layout"))
        p.layout.push_back({b.at("name").get<std::string>(), b.at("rows").get<std::size_t>(),
                            b.at("cols").get<std::size_t>(), b.at("offset").get<std::size_t>()});
    p.values = j.at("values").get<std::vector<double>>();
    if (p.layout != param_layout(spec) || p.values.size() != param_count(spec))
        throw ParseError(path.string() + ": layout does not match the stored spec");
    return {spec, p};
}

void save_checkpoint_log(const fs::path& dir, const CheckpointLog& log) {
    fs::create_directories(dir);
    const std::size_t width = log.final_probs.empty() ? 0 : log.final_probs.front().size();
    write_json(dir / "header.json", Json{{"format", "dpsc-checkpoints"},
                                         {"version", kFormatVersion},
                                         {"times", log.times},
                                         {"eval_set_id", log.eval_set_id},
                                         {"num_classes", log.num_classes},
                                         {"n_eval", log.num_eval()},
                                         {"prob_columns", width}});
    std::ostringstream preds;
    for (const auto& row : log.predictions) {
        for (std::size_t i = 0; i < row.size(); ++i) preds << (i ? "," : "") << row[i];
        preds << '\n';
    }
    write_text(dir / "predictions.csv", preds.str());
    std::ostringstream probs;
    for (const auto& row : log.final_probs) {
        for (std::size_t i = 0; i < row.size(); ++i) probs << (i ? "," : "") << format_double(row[i]);
        probs << '\n';
    }
    write_text(dir / "final_probs.csv", probs.str());
}

CheckpointLog load_checkpoint_log(const fs::path& dir) {
    const auto h = read_json(dir / "header.json");
    if (h.value("format", std::string{}) != "dpsc-checkpoints" ||
        h.value("version", 0) != kFormatVersion)
        throw ParseError((dir / "header.json").string() + ": not a version-1 checkpoint header");
    CheckpointLog log;
    log.times = h.at("times").get<std::vector<std::size_t>>();
    log.eval_set_id = h.at("eval_set_id").get<std::string>();
    log.num_classes = h.at("num_classes").get<int>();
    const auto n_eval = h.at("n_eval").get<std::size_t>();
    for (const auto& line : lines_of(dir / "predictions.csv")) {
        std::vector<int> row;
        for (const auto& c : cells(line)) row.push_back(static_cast<int>(parse_int(c)));
        if (row.size() != n_eval) throw ParseError("predictions.csv: wrong row width");
        log.predictions.push_back(std::move(row));
    }
    for (const auto& line : lines_of(dir / "final_probs.csv")) {
        std::vector<double> row;
        for (const auto& c : cells(line)) row.push_back(parse_double(c));
        log.final_probs.push_back(std::move(row));
    }
    if (log.predictions.size() != log.times.size() || log.final_probs.size() != n_eval)
        throw ParseError(dir.string() + ": checkpoint files disagree with the header");
    return log;
}

void save_scores(const fs::path& path, const std::vector<ScoreRow>& rows) {
    std::ostringstream out;
    out << "point_index,method,score,predicted_label,true_label\n";
    for (const auto& r : rows)
        out << r.point_index << ',' << r.method << ',' << format_double(r.score) << ','
            << r.predicted_label << ',' << r.true_label << '\n';
    write_text(path, out.str());
}

std::vector<ScoreRow> load_scores(const fs::path& path) {
    auto lines = lines_of(path);
    if (lines.empty()) throw EmptyDataError(path.string() + " is empty");
    std::vector<ScoreRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto c = cells(lines[i]);
        if (c.size() != 5) throw ParseError(path.string() + ": expected 5 columns");
        rows.push_back({static_cast<std::size_t>(parse_int(c[0])), c[1], parse_double(c[2]),
                        static_cast<int>(parse_int(c[3])), static_cast<int>(parse_int(c[4]))});
    }
    return rows;
}

void save_curve(const fs::path& path, const RiskCoverageCurve& curve) {
    std::ostringstream out;
    out << "coverage,accuracy,bound,gap\n";
    for (std::size_t i = 0; i < curve.size(); ++i) {
        const double b = bound(curve.a_full, curve.coverage[i]);
        out << format_double(curve.coverage[i]) << ',' << format_double(curve.accuracy[i]) << ','
            << format_double(b) << ',' << format_double(b - curve.accuracy[i]) << '\n';
    }
    write_text(path, out.str());
}

Json metrics_json(const RiskCoverageCurve& curve, const std::vector<double>& coverage_refs) {
    Json cov = Json::object();
    for (double a : coverage_refs) cov[format_double(a)] = coverage_at_accuracy(curve, a);
    return Json{{"a_full", curve.a_full},
                {"auc", auc(curve)},
                {"normalized_score", normalized_score(curve)},
                {"coverage_at", cov}};
}

}  // namespace dpsc
