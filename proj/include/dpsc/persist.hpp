#pragma once

// On-disk formats.
//
// params.json       {"format":"dpsc-params","version":1,"spec":{...},
//                    "layout":[{"name","rows","cols","offset"}...],"values":[...]}
// checkpoints/      header.json      {"format":"dpsc-checkpoints","version":1,
//                                     "times":[...],"eval_set_id","num_classes",
//                                     "n_eval","prob_columns"}
//                   predictions.csv  one row per checkpoint, one column per eval point
//                   final_probs.csv  one row per eval point
// scores.csv        point_index,method,score,predicted_label,true_label
// curves.csv        coverage,accuracy,bound,gap
// metrics.json      {"a_full","auc","normalized_score","coverage_at":{a_ref: c}}
// privacy.json      PrivacyReport fields plus run-specific extras
//
// Reals are written with 17 significant digits so they read back exactly.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpsc/accountant.hpp"
#include "dpsc/evaluation.hpp"
#include "dpsc/model.hpp"
#include "dpsc/selection.hpp"
#include "dpsc/trainer.hpp"

namespace dpsc {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

Json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const Json& j);

Json to_json(const PrivacyReport& r);
PrivacyReport privacy_report_from_json(const Json& j);

void save_params(const std::filesystem::path& path, const ModelSpec& spec, const ParamVector& p);
std::pair<ModelSpec, ParamVector> load_params(const std::filesystem::path& path);

void save_checkpoint_log(const std::filesystem::path& dir, const CheckpointLog& log);
CheckpointLog load_checkpoint_log(const std::filesystem::path& dir);

struct ScoreRow {
    std::size_t point_index = 0;
    std::string method;
    double score = 0.0;
    int predicted_label = 0;
    int true_label = 0;
};

void save_scores(const std::filesystem::path& path, const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> load_scores(const std::filesystem::path& path);

void save_curve(const std::filesystem::path& path, const RiskCoverageCurve& curve);

Json metrics_json(const RiskCoverageCurve& curve, const std::vector<double>& coverage_refs);

// Shortest round-trip decimal text for a double.
std::string format_double(double v);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

}  // namespace dpsc
