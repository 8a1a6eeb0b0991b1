#pragma once

// Reference computations shared by the unit and acceptance suites. They go
// through the scalar loss functions and forward() only, never through the
// analytic gradient code they are used to check.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dpsc/loss.hpp"
#include "dpsc/model.hpp"
#include "dpsc/rng.hpp"
#include "dpsc/trainer.hpp"

namespace dpsc::oracle {

// Batch objective where example i is evaluated with params[i].
inline double batch_objective(const std::vector<const ParamVector*>& params, const ModelSpec& spec,
                              const Batch& batch, const LossSpec& loss) {
    const auto& data = *batch.data;
    const std::size_t m = batch.indices.size();
    const double beta = loss.entropy_beta;
    std::vector<std::vector<double>> f_probs(m), h_probs(m);
    std::vector<double> g(m);
    std::vector<int> y(m);
    double value = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const auto row = batch.indices[i];
        ForwardMode mode = Deterministic{};
        if (batch.dropout_seed) mode = DropoutPass{derive_seed({*batch.dropout_seed, row})};
        const auto out = forward(*params[i], spec, data.row(row), mode);
        y[i] = data.labels[row];
        f_probs[i] = softmax(out.logits);
        value -= beta * entropy(f_probs[i]) / static_cast<double>(m);
        if (loss.is_sat()) {
            const auto c = static_cast<std::size_t>(spec.num_classes);
            std::span<const double> t(batch.sat_targets->data() + row * c, c);
            value += loss_sat(f_probs[i], y[i], t) / static_cast<double>(m);
        } else if (!loss.is_selectivenet()) {
            value += loss_ce_entropy(f_probs[i], y[i], 0.0) / static_cast<double>(m);
        } else {
            g[i] = sigmoid(out.selection);
            h_probs[i] = softmax(out.auxiliary);
        }
    }
    if (loss.is_selectivenet())
        value += loss_selectivenet(f_probs, g, h_probs, y, std::get<SelectiveNetLoss>(loss.kind));
    return value;
}

// Central difference of |B| * d(batch objective)/d(theta) along example m's
// own parameter path, i.e. the per-sample gradient definition.
inline std::vector<double> fd_per_sample(const ParamVector& params, const ModelSpec& spec,
                                         const Batch& batch, const LossSpec& loss, std::size_t m,
                                         double h = 1e-5) {
    const std::size_t b = batch.indices.size();
    std::vector<const ParamVector*> ptrs(b, &params);
    ParamVector moved = params;
    ptrs[m] = &moved;
    std::vector<double> g(params.size());
    for (std::size_t j = 0; j < params.size(); ++j) {
        const double x0 = params.values[j];
        moved.values[j] = x0 + h;
        const double up = batch_objective(ptrs, spec, batch, loss);
        moved.values[j] = x0 - h;
        const double down = batch_objective(ptrs, spec, batch, loss);
        moved.values[j] = x0;
        g[j] = static_cast<double>(b) * (up - down) / (2.0 * h);
    }
    return g;
}

// Relative error with a 1e-4 floor on the magnitude, so coordinates whose
// true value is ~0 are judged on an absolute 1e-8 scale.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

inline double max_rel_err(std::span<const double> a, std::span<const double> b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i]));
    return worst;
}

// Smallest |pre-activation| of any hidden unit over the batch; finite
// differences across a ReLU kink are meaningless, so callers skip draws
// where this falls below the step size.
inline double min_hidden_margin(const ParamVector& p, const ModelSpec& spec, const Batch& batch) {
    if (spec.architecture != Architecture::Mlp) return INFINITY;
    double margin = INFINITY;
    for (auto row : batch.indices) {
        std::vector<double> in(batch.data->row(row).begin(), batch.data->row(row).end());
        for (const auto& blk : p.layout) {
            if (!blk.name.starts_with("hidden") || !blk.name.ends_with(".weight")) continue;
            const auto* bias = &p.layout[&blk - p.layout.data() + 1];
            std::vector<double> next(blk.rows);
            for (std::size_t r = 0; r < blk.rows; ++r) {
                double z = p.values[bias->offset + r];
                for (std::size_t c = 0; c < blk.cols; ++c) z += p.values[blk.offset + r * blk.cols + c] * in[c];
                margin = std::min(margin, std::abs(z));
                next[r] = std::max(0.0, z);
            }
            in = std::move(next);
        }
    }
    return margin;
}

}  // namespace dpsc::oracle
