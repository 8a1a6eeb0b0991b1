#include "dpsc/selection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dpsc/rng.hpp"

namespace dpsc {

namespace {

double max_of(std::span<const double> v) { return *std::max_element(v.begin(), v.end()); }

}  // namespace

std::string_view method_name(Method m) {
    switch (m) {
        case Method::SR: return "sr";
        case Method::MCDO: return "mcdo";
        case Method::DE: return "de";
        case Method::SAT: return "sat";
        case Method::SN: return "sn";
        case Method::SCTD: return "sctd";
    }
    return "unknown";
}

Method parse_method(std::string_view name) {
    for (auto m : {Method::SR, Method::MCDO, Method::DE, Method::SAT, Method::SN, Method::SCTD})
        if (method_name(m) == name) return m;
    throw std::invalid_argument("unknown selection method: " + std::string(name));
}

SelectionScores score_sr(const ProbMatrix& probs) {
    SelectionScores s{Method::SR, {}};
    s.scores.reserve(probs.size());
    for (const auto& p : probs) s.scores.push_back(1.0 - max_of(p));
    return s;
}

ProbMatrix predict_probs(const ParamVector& params, const ModelSpec& spec,
                         const LabeledDataset& eval_set) {
    ProbMatrix out(eval_set.size());
    for (std::size_t i = 0; i < eval_set.size(); ++i)
        out[i] = softmax(forward(params, spec, eval_set.row(i)).logits);
    return out;
}

SelectionScores score_mcdo(const ParamVector& params, const ModelSpec& spec,
                           const LabeledDataset& eval_set, std::size_t passes, double dropout,
                           std::uint64_t seed) {
    if (passes < 1) throw std::invalid_argument("score_mcdo: need at least one pass");
    ModelSpec s = spec;
    s.dropout_rate = dropout;
    s.validate();
    const auto c = static_cast<std::size_t>(spec.num_classes);
    SelectionScores out{Method::MCDO, {}};
    out.scores.reserve(eval_set.size());
    std::vector<double> mean(c);
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        std::fill(mean.begin(), mean.end(), 0.0);
        for (std::size_t q = 0; q < passes; ++q) {
            const auto o = forward(params, s, eval_set.row(i), DropoutPass{derive_seed({seed, q, i})});
            const auto p = softmax(std::span<const double>(o.logits).first(c));
            for (std::size_t j = 0; j < c; ++j) mean[j] += p[j];
        }
        out.scores.push_back(1.0 - max_of(mean) / static_cast<double>(passes));
    }
    return out;
}

SelectionScores score_de(std::span<const ProbMatrix> member_probs) {
    if (member_probs.empty()) throw std::invalid_argument("score_de: no members");
    const std::size_t n = member_probs.front().size();
    for (const auto& m : member_probs)
        if (m.size() != n) throw std::invalid_argument("score_de: members disagree on eval size");
    SelectionScores out{Method::DE, {}};
    out.scores.reserve(n);
    const double inv = 1.0 / static_cast<double>(member_probs.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> mean(member_probs.front()[i].size(), 0.0);
        for (const auto& m : member_probs)
            for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += m[i][j];
        out.scores.push_back(1.0 - max_of(mean) * inv);
    }
    return out;
}

SelectionScores score_sctd(const CheckpointLog& log, double k) {
    if (log.predictions.empty()) throw std::invalid_argument("score_sctd: empty checkpoint log");
    if (!(k >= 0.0)) throw std::invalid_argument("score_sctd: k must be >= 0");
    const std::size_t T = log.predictions.size();
    const auto& last = log.predictions.back();
    std::vector<double> weight(T);
    for (std::size_t t = 0; t < T; ++t)
        weight[t] = std::pow(static_cast<double>(t + 1) / static_cast<double>(T), k);

    SelectionScores out{Method::SCTD, std::vector<double>(last.size(), 0.0)};
    for (std::size_t t = 0; t + 1 < T; ++t) {
        const auto& row = log.predictions[t];
        if (row.size() != last.size()) throw std::invalid_argument("score_sctd: ragged log");
        for (std::size_t i = 0; i < row.size(); ++i)
            if (row[i] != last[i]) out.scores[i] += weight[t];
    }
    return out;
}

SelectionScores score_sat(const ProbMatrix& probs) {
    SelectionScores out{Method::SAT, {}};
    out.scores.reserve(probs.size());
    for (const auto& p : probs) out.scores.push_back(p.back());
    return out;
}

SelectionScores score_sn(std::span<const double> selection_logits) {
    SelectionScores out{Method::SN, {}};
    out.scores.reserve(selection_logits.size());
    for (double z : selection_logits) out.scores.push_back(1.0 - sigmoid(z));
    return out;
}

SelectionScores score_sr_of(const ProbMatrix& probs, int num_classes, Method tag) {
    const auto c = static_cast<std::size_t>(num_classes);
    SelectionScores out{tag, {}};
    out.scores.reserve(probs.size());
    for (const auto& p : probs) {
        if (p.size() < c) throw std::invalid_argument("score_sr_of: too few probability columns");
        double total = 0.0, best = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            total += p[j];
            best = std::max(best, p[j]);
        }
        out.scores.push_back(1.0 - best / total);
    }
    return out;
}

}  // namespace dpsc
