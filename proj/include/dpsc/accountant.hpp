#pragma once

// Renyi-DP accounting for the Poisson-subsampled Gaussian mechanism.

#include <cstddef>
#include <optional>
#include <vector>

namespace dpsc {

struct RdpCurve {
    std::vector<double> orders;
    std::vector<double> values;
};

struct PrivacyReport {
    double epsilon = 0.0;
    double delta = 0.0;
    double optimal_order = 0.0;  // 0 when no accounting applies (non-private run)
    double sigma = 0.0;
    double sampling_rate = 1.0;
    std::size_t steps = 0;
};

// Integer orders 2..256; the fractional orders 1.25, 1.5, 1.75 are appended
// only when q == 1, where the closed form applies.
std::vector<double> default_orders(double q);

double rdp_gaussian(double sigma, double alpha);

// Integer-order bound
//   1/(alpha-1) * log sum_k C(alpha,k) (1-q)^(alpha-k) q^k exp(k(k-1)/(2 sigma^2))
// evaluated in log space. Throws NumericError when the result is not finite.
double rdp_subsampled_gaussian(double q, double sigma, int alpha);

// Per-step curve over `orders` (default grid when empty). Orders whose bound
// is not finite are dropped.
RdpCurve rdp_curve(double q, double sigma, const std::vector<double>& orders = {});

RdpCurve compose(const RdpCurve& curve, std::size_t steps);

// eps = min_alpha [ eps_rdp(alpha) + log(1/delta) / (alpha - 1) ], floored at 0.
PrivacyReport rdp_to_dp(const RdpCurve& curve, double delta);

// Realized (eps, delta) after `steps` subsampled Gaussian steps.
PrivacyReport account(double sigma, double q, std::size_t steps, double delta);

inline constexpr double kSigmaMin = 0.3;
inline constexpr double kSigmaMax = 100.0;
inline constexpr double kCalibrationTolerance = 1e-3;

// Smallest sigma in [kSigmaMin, kSigmaMax] (to the bisection tolerance) whose
// realized epsilon does not exceed epsilon_target; the realized value lies in
// [target * (1 - kCalibrationTolerance), target] unless sigma sits at the
// lower bracket edge. Throws CalibrationError when even kSigmaMax overshoots.
double calibrate_sigma(double epsilon_target, double delta, double q, std::size_t steps);

struct BudgetSplit {
    double sigma = 0.0;
    std::size_t members = 1;
    PrivacyReport total;       // all members * steps_each compositions at delta_total
    PrivacyReport per_member;  // one member's steps at delta_total / members
    double heuristic_epsilon = 0.0;  // epsilon_total / sqrt(members)
};

BudgetSplit split_budget(double epsilon_total, double delta_total, std::size_t members, double q,
                         std::size_t steps_each);

}  // namespace dpsc
