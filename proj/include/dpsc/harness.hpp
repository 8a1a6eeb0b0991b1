#pragma once

// Experiment orchestration.
//
// run() expands a config into cells, one per (seed, epsilon), and writes
//   <output>/<cell-hash>/config.json
//   <output>/<cell-hash>/<seed>/<method>/{scores.csv,curves.csv,metrics.json,privacy.json}
//   <output>/<cell-hash>/<seed>/<run>/{params.json,checkpoints/}
// A method whose metrics.json and privacy.json already exist is not
// recomputed, which makes re-running a config resumable.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpsc/accountant.hpp"
#include "dpsc/config.hpp"
#include "dpsc/dataset.hpp"
#include "dpsc/trainer.hpp"

namespace dpsc {

struct CellData {
    LabeledDataset train;
    LabeledDataset test;
};

// Training and evaluation sets for one seed. Generated datasets draw the
// test set from the same process with an independent stream; CSV data is
// split by train_fraction. Imbalance subsampling touches only the training set.
CellData make_cell_data(const DatasetConfig& cfg, std::uint64_t seed);

// Model spec with input_dim and num_classes filled from the data.
ModelSpec resolve_model(const ExperimentConfig& cfg, const LabeledDataset& train);

PrivacyConfig resolve_privacy(const ExperimentConfig& cfg, double epsilon, std::size_t n_train);

struct RunRecord {
    std::string config_hash;
    std::uint64_t seed = 0;
    double epsilon_target = 0.0;
    std::string method;
    std::string status;  // ok | skipped | failed
    std::string error;
    PrivacyReport realized;
    std::size_t runs = 0;  // training runs charged to this method's budget
    Json metrics;
    std::filesystem::path dir;
};

struct RunSummary {
    std::vector<RunRecord> records;
    std::size_t trainings = 0;  // training runs actually executed
    bool all_ok() const;
    Json to_json() const;
};

RunSummary run(const ExperimentConfig& cfg, std::size_t jobs = 1);

// Trains the shared cross-entropy model for one (seed, epsilon) and writes
// params.json, checkpoints/ and privacy.json into out_dir.
TrainResult train_base(const ExperimentConfig& cfg, std::uint64_t seed, double epsilon,
                       const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// Replication panels

struct OutlierRow {
    double epsilon = 0.0;
    std::uint64_t seed = 0;
    int predicted = 0;
    double correct_class_prob = 0.0;  // probability of the outlier's own class
    bool correct = false;
    double test_accuracy = 0.0;
    PrivacyReport privacy;
};

struct OutlierSummary {
    double epsilon = 0.0;
    std::size_t seeds = 0;
    std::size_t correct = 0;
    double mean_correct_class_prob = 0.0;
};

struct OutlierReport {
    std::vector<OutlierRow> rows;
    std::vector<OutlierSummary> summary;  // one per epsilon, in input order
    Json to_json() const;
};

ExperimentConfig default_outlier_config();

// Logistic regression on the single-outlier dataset for every epsilon and seed.
OutlierReport panel_outlier(const ExperimentConfig& cfg, std::span<const double> epsilons,
                            std::span<const std::uint64_t> seeds, std::size_t jobs = 1);

struct ImbalanceRow {
    double p0 = 1.0;
    double epsilon = 0.0;
    std::uint64_t seed = 0;
    std::size_t n_train = 0;
    std::size_t n_minority_train = 0;
    double a_full = 0.0;
    double auc = 0.0;
    double normalized_score = 0.0;
    double minority_accuracy = 0.0;
    // Coverage at which each minority test point is accepted under SR, and
    // whether the model got it right.
    std::vector<double> minority_positions;
    std::vector<bool> minority_correct;
    double minority_mean_position = 0.0;
    double overall_mean_position = 0.0;
    PrivacyReport privacy;
};

struct ImbalanceReport {
    std::vector<ImbalanceRow> rows;
    Json to_json() const;
};

ExperimentConfig default_imbalance_config();

ImbalanceReport panel_imbalance(const ExperimentConfig& cfg, std::span<const double> p0_list,
                                std::span<const double> epsilons,
                                std::span<const std::uint64_t> seeds, std::size_t jobs = 1);

struct BoundRow {
    double a_full = 0.0;
    std::size_t n = 0;
    double max_deviation = 0.0;
    double normalized_score = 0.0;
};

std::vector<BoundRow> panel_bound(std::span<const double> a_list, std::size_t n,
                                  std::uint64_t seed = 0);
Json to_json(const std::vector<BoundRow>& rows);

}  // namespace dpsc
