#pragma once

// Experiment configuration (JSON, schema version 1). See configs/ for
// complete examples and README.md for the key reference.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpsc/dataset.hpp"
#include "dpsc/model.hpp"
#include "dpsc/selection.hpp"

namespace dpsc {

struct DatasetConfig {
    std::string generator = "mixture";  // gaussian_outlier | mixture | csv
    std::size_t n_major = 1000;
    std::vector<double> outlier_mean{10.0, 0.0};
    MixtureSpec mixture;
    std::string csv_path;
    std::string label_column;  // empty: last column
    double train_fraction = 0.8;
    // Class-imbalance subsampling applied to the training split only.
    double p0 = 1.0;
    int minority_class = 0;
    bool standardize = false;
};

struct MethodConfig {
    std::vector<Method> methods{Method::SR};
    std::size_t de_members = 5;
    std::size_t mcdo_passes = 50;
    double sctd_k = 3.0;
    std::vector<double> sn_coverages{0.1, 0.25, 0.5, 0.75, 1.0};
    double sn_alpha = 0.5;
    double sn_lambda = 32.0;
    bool sn_native = false;
    double sat_momentum = 0.9;
    double sat_burn_in_epochs = 100.0;
    bool sat_native = false;

    bool has(Method m) const;
};

struct ExperimentConfig {
    int version = 1;
    DatasetConfig dataset;
    ModelSpec model;  // input_dim and num_classes are taken from the data

    double learning_rate = 0.1;
    double entropy_beta = 0.01;
    std::size_t checkpoint_interval = 50;
    std::size_t steps = 1000;
    double sampling_rate = 0.01;

    std::vector<double> epsilons{std::numeric_limits<double>::infinity()};
    std::optional<double> delta;  // nullopt: 1 / N_train
    double clip_norm = 1.0;
    std::optional<double> noise_multiplier;  // nullopt: calibrated

    MethodConfig methods;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::vector<double> coverage_at{0.9, 0.95, 0.99};
    std::string output_dir = "out";

    void validate() const;
};

using Json = nlohmann::json;

ExperimentConfig config_from_json(const Json& j);
Json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

// "inf" (or "infinity") or a non-negative real.
double parse_epsilon(const std::string& text);
std::string epsilon_label(double eps);

// FNV-1a over the canonical serialization (sorted keys, compact).
std::string json_hash(const Json& j);

// Hash identifying one (config, epsilon) cell; seeds and output location
// are excluded.
std::string cell_hash(const ExperimentConfig& cfg, double epsilon);

}  // namespace dpsc
