#pragma once

// Risk-coverage curves and the metrics derived from them.
//
// The coverage grid has one point per example: after sorting by score
// (ascending, ties by index), coverage c_i = i/N accepts the first i points
// and acc_i is their accuracy. Every integral over coverage is taken as a
// mean over this grid, i.e. a Riemann sum with dc = 1/N.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dpsc/selection.hpp"

namespace dpsc {

struct RiskCoverageCurve {
    std::vector<double> coverage;
    std::vector<double> accuracy;
    double a_full = 0.0;
    // order[i] is the index of the i-th accepted point.
    std::vector<std::size_t> order;

    std::size_t size() const { return coverage.size(); }
};

RiskCoverageCurve build_curve(std::span<const double> scores, const std::vector<bool>& correct);
RiskCoverageCurve build_curve(const SelectionScores& scores, const std::vector<bool>& correct);

// Mean selective accuracy over the grid.
double auc(const RiskCoverageCurve& curve);

// Best achievable selective accuracy: 1 up to c = a_full, a_full / c beyond.
double bound(double a_full, double c);

// Mean gap between bound(a_full, c_i) and acc_i; lower is better.
double normalized_score(const RiskCoverageCurve& curve);

// Mean of bound(a_full, c_i) over the curve's grid.
double bound_mean(const RiskCoverageCurve& curve);

// Largest grid coverage whose selective accuracy is >= a_ref; 0 if none.
double coverage_at_accuracy(const RiskCoverageCurve& curve, double a_ref);

// max_i |acc_i - bound(a_full, c_i)|
double max_bound_deviation(const RiskCoverageCurve& curve);

struct OracleSample {
    std::vector<double> scores;
    std::vector<bool> correct;
};

// floor(a_full * n) correct points scored U[0, 0.5), the rest U[0.5, 1),
// in shuffled order.
OracleSample ideal_score_oracle(double a_full, std::size_t n, std::uint64_t seed);

}  // namespace dpsc
