#include "dpsc/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dpsc/errors.hpp"

namespace dpsc {

namespace {

const double kLogFloor = std::log(kProbFloor);

double clamped_log(double p) { return std::log(std::max(p, kProbFloor)); }

// d(-beta * H(softmax(z))) / dz_j = beta * p_j * (log p_j + H)
void add_entropy_grad(std::span<const double> probs, std::span<const double> logp, double beta,
                      double weight, std::span<double> dz) {
    if (beta == 0.0) return;
    double h = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j)
        if (probs[j] > 0.0) h -= probs[j] * logp[j];
    for (std::size_t j = 0; j < probs.size(); ++j)
        if (probs[j] > 0.0) dz[j] += weight * beta * probs[j] * (logp[j] + h);
}

double entropy_from(std::span<const double> probs, std::span<const double> logp) {
    double h = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j)
        if (probs[j] > 0.0) h -= probs[j] * logp[j];
    return h;
}

// -log p_y on log-softmax with the clamp; gradient (p - e_y) unless clamped.
double ce_term(std::span<const double> probs, std::span<const double> logp, int y, double weight,
               std::span<double> dz) {
    const auto uy = static_cast<std::size_t>(y);
    if (logp[uy] < kLogFloor) return -kLogFloor;
    for (std::size_t j = 0; j < probs.size(); ++j) dz[j] += weight * probs[j];
    dz[uy] -= weight;
    return -logp[uy];
}

}  // namespace

void LossSpec::validate() const {
    if (!(entropy_beta >= 0.0)) throw std::invalid_argument("loss: entropy beta must be >= 0");
    if (const auto* s = std::get_if<SatLoss>(&kind)) {
        if (!(s->momentum >= 0.0 && s->momentum < 1.0))
            throw std::invalid_argument("loss: SAT momentum must lie in [0, 1)");
        if (!(s->burn_in_epochs >= 0.0))
            throw std::invalid_argument("loss: SAT burn-in must be >= 0");
    }
    if (const auto* s = std::get_if<SelectiveNetLoss>(&kind)) {
        if (!(s->target_coverage > 0.0 && s->target_coverage <= 1.0))
            throw std::invalid_argument("loss: target coverage must lie in (0, 1]");
        if (!(s->alpha >= 0.0 && s->alpha <= 1.0))
            throw std::invalid_argument("loss: alpha must lie in [0, 1]");
        if (!(s->lambda >= 0.0)) throw std::invalid_argument("loss: lambda must be >= 0");
    }
}

double entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

double loss_ce_entropy(std::span<const double> probs, int y, double beta) {
    if (y < 0 || static_cast<std::size_t>(y) >= probs.size())
        throw std::invalid_argument("loss_ce_entropy: label out of range");
    return -clamped_log(probs[static_cast<std::size_t>(y)]) - beta * entropy(probs);
}

double loss_sat(std::span<const double> probs, int y, std::span<const double> target) {
    if (probs.size() != target.size() + 1)
        throw std::invalid_argument("loss_sat: probs must have one more entry than target");
    const auto uy = static_cast<std::size_t>(y);
    const double t = target[uy];
    return -(t * clamped_log(probs[uy]) + (1.0 - t) * clamped_log(probs.back()));
}

double loss_selectivenet(std::span<const std::vector<double>> f_probs,
                         std::span<const double> g_sel,
                         std::span<const std::vector<double>> h_probs, std::span<const int> y,
                         const SelectiveNetLoss& cfg) {
    const std::size_t m = y.size();
    if (m == 0 || f_probs.size() != m || g_sel.size() != m || h_probs.size() != m)
        throw std::invalid_argument("loss_selectivenet: batch size mismatch");
    double sel = 0.0, cov = 0.0, aux = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const auto uy = static_cast<std::size_t>(y[i]);
        sel += g_sel[i] * -clamped_log(f_probs[i][uy]);
        aux += -clamped_log(h_probs[i][uy]);
        cov += g_sel[i];
    }
    const double n = static_cast<double>(m);
    sel /= n;
    aux /= n;
    cov = std::max(cov / n, kCoverageFloor);
    const double gap = std::max(0.0, cfg.target_coverage - cov);
    return cfg.alpha * (sel / cov + cfg.lambda * gap * gap) + (1.0 - cfg.alpha) * aux;
}

void sat_update_targets(std::span<double> target, std::span<const double> probs, double momentum,
                        double epoch, double burn_in) {
    if (target.size() != probs.size())
        throw std::invalid_argument("sat_update_targets: size mismatch");
    if (epoch < burn_in) return;
    for (std::size_t j = 0; j < target.size(); ++j)
        target[j] = momentum * target[j] + (1.0 - momentum) * probs[j];
}

OutputGradients objective_gradients(const LossSpec& loss, std::span<const HeadOutputs> outputs,
                                    std::span<const int> labels,
                                    std::span<const std::span<const double>> targets) {
    const std::size_t m = outputs.size();
    if (m == 0 || labels.size() != m) throw std::invalid_argument("objective: empty or ragged batch");
    const double n = static_cast<double>(m);
    const double beta = loss.entropy_beta;

    OutputGradients out;
    out.d_outputs.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        out.d_outputs[i].logits.assign(outputs[i].logits.size(), 0.0);
        out.d_outputs[i].auxiliary.assign(outputs[i].auxiliary.size(), 0.0);
    }

    std::vector<std::vector<double>> probs(m), logp(m);
    for (std::size_t i = 0; i < m; ++i) {
        probs[i] = softmax(outputs[i].logits);
        logp[i] = log_softmax(outputs[i].logits);
        const double h = entropy_from(probs[i], logp[i]);
        out.value -= beta * h / n;
        add_entropy_grad(probs[i], logp[i], beta, 1.0 / n, out.d_outputs[i].logits);
    }

    if (std::holds_alternative<CrossEntropyLoss>(loss.kind)) {
        for (std::size_t i = 0; i < m; ++i)
            out.value += ce_term(probs[i], logp[i], labels[i], 1.0 / n, out.d_outputs[i].logits) / n;
    } else if (std::holds_alternative<SatLoss>(loss.kind)) {
        if (targets.size() != m) throw std::invalid_argument("objective: SAT needs target rows");
        for (std::size_t i = 0; i < m; ++i) {
            const auto& p = probs[i];
            const auto& lp = logp[i];
            const auto uy = static_cast<std::size_t>(labels[i]);
            const std::size_t abst = p.size() - 1;
            if (targets[i].size() != abst)
                throw std::invalid_argument("objective: SAT target row has wrong width");
            const double t = targets[i][uy];
            auto& dz = out.d_outputs[i].logits;
            // -(t log p_y + (1 - t) log p_abst), each log clamped independently.
            for (auto [k, w] : {std::pair{uy, t}, std::pair{abst, 1.0 - t}}) {
                if (lp[k] < kLogFloor) {
                    out.value += -w * kLogFloor / n;
                    continue;
                }
                out.value += -w * lp[k] / n;
                for (std::size_t j = 0; j < p.size(); ++j) dz[j] += w * p[j] / n;
                dz[k] -= w / n;
            }
        }
    } else {
        const auto& cfg = std::get<SelectiveNetLoss>(loss.kind);
        std::vector<double> s(m), ce_f(m);
        double sel = 0.0, cov_raw = 0.0;
        // CE gradients w.r.t. f logits are accumulated unscaled into a scratch
        // buffer; their weight depends on the batch coverage.
        std::vector<std::vector<double>> dce(m);
        for (std::size_t i = 0; i < m; ++i) {
            s[i] = sigmoid(outputs[i].selection);
            dce[i].assign(probs[i].size(), 0.0);
            ce_f[i] = ce_term(probs[i], logp[i], labels[i], 1.0, dce[i]);
            sel += s[i] * ce_f[i] / n;
            cov_raw += s[i] / n;

            auto aux_p = softmax(outputs[i].auxiliary);
            auto aux_lp = log_softmax(outputs[i].auxiliary);
            out.value += (1.0 - cfg.alpha) *
                         ce_term(aux_p, aux_lp, labels[i], (1.0 - cfg.alpha) / n,
                                 out.d_outputs[i].auxiliary) /
                         n;
        }
        const bool floored = cov_raw < kCoverageFloor;
        const double cov = floored ? kCoverageFloor : cov_raw;
        const double gap = std::max(0.0, cfg.target_coverage - cov);
        out.value += cfg.alpha * (sel / cov + cfg.lambda * gap * gap);

        const double dcov_ds = floored ? 0.0 : 1.0 / n;
        for (std::size_t i = 0; i < m; ++i) {
            const double w = cfg.alpha * s[i] / (n * cov);
            for (std::size_t j = 0; j < dce[i].size(); ++j) out.d_outputs[i].logits[j] += w * dce[i][j];
            const double dl_ds = cfg.alpha * (ce_f[i] / (n * cov) - sel / (cov * cov) * dcov_ds -
                                              2.0 * cfg.lambda * gap * dcov_ds);
            out.d_outputs[i].selection = dl_ds * s[i] * (1.0 - s[i]);
        }
    }
    if (!std::isfinite(out.value)) throw NumericError("objective: non-finite loss");
    return out;
}

}  // namespace dpsc
