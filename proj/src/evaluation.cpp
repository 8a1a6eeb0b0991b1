#include "dpsc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dpsc/rng.hpp"

namespace dpsc {

RiskCoverageCurve build_curve(std::span<const double> scores, const std::vector<bool>& correct) {
    const std::size_t n = scores.size();
    if (n == 0) throw std::invalid_argument("build_curve: empty input");
    if (correct.size() != n) throw std::invalid_argument("build_curve: length mismatch");
    for (double s : scores)
        if (std::isnan(s)) throw std::invalid_argument("build_curve: NaN score");

    RiskCoverageCurve curve;
    curve.order.resize(n);
    std::iota(curve.order.begin(), curve.order.end(), std::size_t{0});
    std::sort(curve.order.begin(), curve.order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] < scores[b] || (scores[a] == scores[b] && a < b);
    });
    curve.coverage.resize(n);
    curve.accuracy.resize(n);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        hits += correct[curve.order[i]] ? 1 : 0;
        curve.coverage[i] = static_cast<double>(i + 1) / static_cast<double>(n);
        curve.accuracy[i] = static_cast<double>(hits) / static_cast<double>(i + 1);
    }
    curve.coverage.back() = 1.0;
    curve.a_full = curve.accuracy.back();
    return curve;
}

RiskCoverageCurve build_curve(const SelectionScores& scores, const std::vector<bool>& correct) {
    return build_curve(scores.scores, correct);
}

double auc(const RiskCoverageCurve& curve) {
    double s = 0.0;
    for (double a : curve.accuracy) s += a;
    return s / static_cast<double>(curve.size());
}

double bound(double a_full, double c) {
    if (!(a_full >= 0.0 && a_full <= 1.0)) throw std::invalid_argument("bound: a_full in [0, 1]");
    if (!(c > 0.0 && c <= 1.0)) throw std::invalid_argument("bound: c in (0, 1]");
    return c <= a_full ? 1.0 : a_full / c;
}

double bound_mean(const RiskCoverageCurve& curve) {
    double s = 0.0;
    for (double c : curve.coverage) s += bound(curve.a_full, c);
    return s / static_cast<double>(curve.size());
}

double normalized_score(const RiskCoverageCurve& curve) {
    double s = 0.0;
    for (std::size_t i = 0; i < curve.size(); ++i)
        s += bound(curve.a_full, curve.coverage[i]) - curve.accuracy[i];
    return s / static_cast<double>(curve.size());
}

double coverage_at_accuracy(const RiskCoverageCurve& curve, double a_ref) {
    if (curve.a_full >= a_ref) return 1.0;
    for (std::size_t i = curve.size(); i-- > 0;)
        if (curve.accuracy[i] >= a_ref) return curve.coverage[i];
    return 0.0;
}

double max_bound_deviation(const RiskCoverageCurve& curve) {
    double worst = 0.0;
    for (std::size_t i = 0; i < curve.size(); ++i)
        worst = std::max(worst, std::abs(curve.accuracy[i] - bound(curve.a_full, curve.coverage[i])));
    return worst;
}

OracleSample ideal_score_oracle(double a_full, std::size_t n, std::uint64_t seed) {
    if (!(a_full >= 0.0 && a_full <= 1.0)) throw std::invalid_argument("oracle: a_full in [0, 1]");
    if (n == 0) throw std::invalid_argument("oracle: n must be >= 1");
    // Snap products like 0.7 * 10000 that land a hair below an integer.
    const double target = a_full * static_cast<double>(n);
    const double snapped = std::round(target);
    const auto n_correct = static_cast<std::size_t>(
        std::abs(target - snapped) < 1e-9 * std::max(1.0, target) ? snapped : std::floor(target));

    OracleSample out;
    out.correct.assign(n, false);
    std::fill(out.correct.begin(), out.correct.begin() + static_cast<std::ptrdiff_t>(n_correct), true);
    Rng rng{seed, tag("oracle")};
    std::shuffle(out.correct.begin(), out.correct.end(), rng.engine());
    out.scores.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.scores[i] = out.correct[i] ? rng.uniform(0.0, 0.5) : rng.uniform(0.5, 1.0);
    return out;
}

}  // namespace dpsc
