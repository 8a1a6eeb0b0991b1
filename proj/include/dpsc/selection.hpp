#pragma once

// Abstention scores for the six gating mechanisms. Every score follows one
// orientation: lower means more confident, so points are accepted in
// ascending score order.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpsc/dataset.hpp"
#include "dpsc/model.hpp"
#include "dpsc/trainer.hpp"

namespace dpsc {

enum class Method { SR, MCDO, DE, SAT, SN, SCTD };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

struct SelectionScores {
    Method method = Method::SR;
    std::vector<double> scores;
    std::size_t size() const { return scores.size(); }
};

using ProbMatrix = std::vector<std::vector<double>>;

// 1 - max_c p(x)
SelectionScores score_sr(const ProbMatrix& probs);

// 1 - max of the mean softmax over `passes` dropout passes at rate `dropout`.
SelectionScores score_mcdo(const ParamVector& params, const ModelSpec& spec,
                           const LabeledDataset& eval_set, std::size_t passes, double dropout,
                           std::uint64_t seed);

// member_probs[m][i] is member m's softmax on eval point i.
SelectionScores score_de(std::span<const ProbMatrix> member_probs);

// sum over checkpoints t of (t/T)^k * [f_t(x) != f_T(x)], t the 1-based rank.
SelectionScores score_sctd(const CheckpointLog& log, double k = 3.0);

// Abstention mass p_{C+1}; probs carry C+1 columns.
SelectionScores score_sat(const ProbMatrix& probs);

// 1 - sigmoid(selection head logit)
SelectionScores score_sn(std::span<const double> selection_logits);

// Softmax response over the first num_classes columns, renormalized.
SelectionScores score_sr_of(const ProbMatrix& probs, int num_classes, Method tag = Method::SR);

// Softmax of the primary head on every eval point.
ProbMatrix predict_probs(const ParamVector& params, const ModelSpec& spec,
                         const LabeledDataset& eval_set);

}  // namespace dpsc
