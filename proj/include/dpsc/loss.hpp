#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "dpsc/model.hpp"

namespace dpsc {

// Probabilities are clamped here before every logarithm.
inline constexpr double kProbFloor = 1e-12;
// Lower bound on a batch's empirical SelectiveNet coverage.
inline constexpr double kCoverageFloor = 1e-6;

struct CrossEntropyLoss {};

// Self-adaptive training over C+1 outputs with EMA soft targets.
struct SatLoss {
    double momentum = 0.9;
    double burn_in_epochs = 100.0;
};

struct SelectiveNetLoss {
    double target_coverage = 1.0;
    double lambda = 32.0;
    double alpha = 0.5;
};

struct LossSpec {
    std::variant<CrossEntropyLoss, SatLoss, SelectiveNetLoss> kind;
    // Weight of the predictive-entropy bonus subtracted from the loss.
    double entropy_beta = 0.0;

    void validate() const;
    bool is_sat() const { return std::holds_alternative<SatLoss>(kind); }
    bool is_selectivenet() const { return std::holds_alternative<SelectiveNetLoss>(kind); }
};

double entropy(std::span<const double> probs);

// -log p_y - beta * H(p)
double loss_ce_entropy(std::span<const double> probs, int y, double beta);

// probs has C+1 entries (last is abstention); target is the length-C soft target row.
double loss_sat(std::span<const double> probs, int y, std::span<const double> target);

// Batch SelectiveNet objective:
//   alpha * (mean(g * CE_f) / cov + lambda * max(0, c - cov)^2) + (1 - alpha) * mean(CE_h)
// with cov = max(mean(g), kCoverageFloor).
double loss_selectivenet(std::span<const std::vector<double>> f_probs,
                         std::span<const double> g_sel,
                         std::span<const std::vector<double>> h_probs, std::span<const int> y,
                         const SelectiveNetLoss& cfg);

// EMA target update; a no-op while epoch < burn_in.
void sat_update_targets(std::span<double> target, std::span<const double> probs, double momentum,
                        double epoch, double burn_in);

// Gradient of the batch-mean objective with respect to every example's head
// outputs, plus its value. targets[m] is example m's SAT row (SAT only).
struct OutputGradients {
    double value = 0.0;
    std::vector<HeadOutputs> d_outputs;
};

OutputGradients objective_gradients(const LossSpec& loss, std::span<const HeadOutputs> outputs,
                                    std::span<const int> labels,
                                    std::span<const std::span<const double>> targets = {});

}  // namespace dpsc
