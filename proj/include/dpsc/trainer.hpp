#pragma once

// SGD / DP-SGD training with checkpoint logging.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpsc/accountant.hpp"
#include "dpsc/dataset.hpp"
#include "dpsc/loss.hpp"
#include "dpsc/model.hpp"

namespace dpsc {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct PrivacyConfig {
    double epsilon_target = kInfinity;
    double delta = 1e-5;
    double clip_norm = 1.0;
    std::optional<double> noise_multiplier;  // nullopt: calibrate from epsilon_target
    double sampling_rate = 0.01;
    std::size_t steps = 1000;

    bool is_private() const { return std::isfinite(epsilon_target); }
    void validate() const;
};

struct TrainConfig {
    double learning_rate = 0.1;
    LossSpec loss;
    std::size_t checkpoint_interval = 50;
    std::uint64_t seed = 0;
};

struct CheckpointLog {
    std::vector<std::size_t> times;
    std::vector<std::vector<int>> predictions;  // [checkpoint][eval point]
    // Softmax of the primary head at the final step: C columns, or C+1 when
    // the model has an abstention output.
    std::vector<std::vector<double>> final_probs;
    std::string eval_set_id;
    int num_classes = 2;

    std::size_t num_checkpoints() const { return times.size(); }
    std::size_t num_eval() const { return final_probs.size(); }
};

// Indices of `data` making up one step's batch, plus per-example state.
struct Batch {
    const LabeledDataset* data = nullptr;
    std::vector<std::size_t> indices;
    // Row-major N x C SAT soft targets for the whole dataset, or null.
    const std::vector<double>* sat_targets = nullptr;
    // Per-example dropout masks are keyed by (dropout_seed, row index).
    std::optional<std::uint64_t> dropout_seed;
};

// One exact gradient per batch example. For losses that couple the batch
// (SelectiveNet coverage), example m's gradient is |B| times its chain-rule
// contribution to the batch-objective gradient, so the mean always equals
// the batch gradient.
std::vector<std::vector<double>> per_sample_grad(const ParamVector& params, const ModelSpec& spec,
                                                 const Batch& batch, const LossSpec& loss);

// Gradient of the batch-mean objective in a single accumulation pass.
std::vector<double> batch_gradient(const ParamVector& params, const ModelSpec& spec,
                                   const Batch& batch, const LossSpec& loss);

double l2_norm(std::span<const double> v);

// Scales g in place so that ||g|| <= c; returns the applied factor.
double clip_to_norm(std::span<double> g, double c);

// theta - eta * (sum of clipped grads + N(0, (sigma c)^2 I)) / max(|B|, 1)
ParamVector dpsgd_step(const ParamVector& params, const ModelSpec& spec, const Batch& batch,
                       const LossSpec& loss, double clip_norm, double sigma, double eta,
                       std::uint64_t noise_seed);

// Plain mini-batch step theta - eta * batch_gradient; unchanged on an empty batch.
ParamVector sgd_step(const ParamVector& params, const ModelSpec& spec, const Batch& batch,
                     const LossSpec& loss, double eta);

std::vector<std::size_t> poisson_sample(std::size_t n, double q, std::uint64_t seed,
                                        std::size_t step);

struct TrainResult {
    ParamVector params;
    CheckpointLog log;
    PrivacyReport privacy;
    std::size_t empty_batches = 0;
};

// Stable identifier of a dataset's contents.
std::string dataset_fingerprint(const LabeledDataset& data);

CheckpointLog make_checkpoint_log(const ModelSpec& spec, const LabeledDataset& eval_set);
void append_checkpoint(CheckpointLog& log, std::size_t time, const ParamVector& params,
                       const ModelSpec& spec, const LabeledDataset& eval_set);

// Runs privacy.steps steps. Non-private configs use SGD without clipping or
// noise; private ones use DP-SGD with the configured or calibrated sigma.
TrainResult train(const LabeledDataset& data, const ModelSpec& spec, const TrainConfig& cfg,
                  const PrivacyConfig& privacy, const LabeledDataset& eval_set);

}  // namespace dpsc
