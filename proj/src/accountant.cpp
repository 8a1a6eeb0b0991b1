#include "dpsc/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "dpsc/errors.hpp"

namespace dpsc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_binomial(int n, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

bool is_integer(double a) { return std::floor(a) == a; }

}  // namespace

std::vector<double> default_orders(double q) {
    std::vector<double> out;
    if (q == 1.0) out = {1.25, 1.5, 1.75};
    for (int a = 2; a <= 256; ++a) out.push_back(a);
    return out;
}

double rdp_gaussian(double sigma, double alpha) {
    if (!(sigma > 0.0)) throw std::invalid_argument("rdp_gaussian: sigma must be > 0");
    if (!(alpha > 1.0)) throw std::invalid_argument("rdp_gaussian: alpha must be > 1");
    return alpha / (2.0 * sigma * sigma);
}

double rdp_subsampled_gaussian(double q, double sigma, int alpha) {
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("rdp_subsampled_gaussian: q in (0, 1]");
    if (!(sigma > 0.0)) throw std::invalid_argument("rdp_subsampled_gaussian: sigma must be > 0");
    if (alpha < 2) throw std::invalid_argument("rdp_subsampled_gaussian: alpha must be >= 2");

    const double log_q = std::log(q);
    const double log_1mq = q == 1.0 ? -kInf : std::log1p(-q);
    const double inv_2s2 = 1.0 / (2.0 * sigma * sigma);

    std::vector<double> terms;
    terms.reserve(static_cast<std::size_t>(alpha) + 1);
    double peak = -kInf;
    for (int k = 0; k <= alpha; ++k) {
        const int rest = alpha - k;
        const double lt_1mq = rest == 0 ? 0.0 : rest * log_1mq;
        if (lt_1mq == -kInf) continue;
        const double t = log_binomial(alpha, k) + lt_1mq + k * log_q +
                         static_cast<double>(k) * (k - 1) * inv_2s2;
        terms.push_back(t);
        peak = std::max(peak, t);
    }
    double s = 0.0;
    for (double t : terms) s += std::exp(t - peak);
    const double value = (peak + std::log(s)) / (alpha - 1);
    if (!std::isfinite(value))
        throw NumericError("rdp_subsampled_gaussian: non-finite bound at order " +
                           std::to_string(alpha));
    return std::max(value, 0.0);
}

RdpCurve rdp_curve(double q, double sigma, const std::vector<double>& orders) {
    const auto& grid = orders.empty() ? default_orders(q) : orders;
    RdpCurve curve;
    for (double a : grid) {
        double v = 0.0;
        if (q == 1.0) {
            v = rdp_gaussian(sigma, a);
        } else if (is_integer(a) && a >= 2.0) {
            try {
                v = rdp_subsampled_gaussian(q, sigma, static_cast<int>(a));
            } catch (const NumericError&) {
                continue;
            }
        } else {
            continue;  // fractional orders need the closed form
        }
        curve.orders.push_back(a);
        curve.values.push_back(v);
    }
    return curve;
}

RdpCurve compose(const RdpCurve& curve, std::size_t steps) {
    RdpCurve out = curve;
    for (auto& v : out.values) v *= static_cast<double>(steps);
    return out;
}

PrivacyReport rdp_to_dp(const RdpCurve& curve, double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("rdp_to_dp: delta in (0, 1)");
    if (curve.orders.empty()) throw std::invalid_argument("rdp_to_dp: empty curve");
    PrivacyReport r;
    r.delta = delta;
    r.epsilon = kInf;
    const double log_inv_delta = -std::log(delta);
    for (std::size_t i = 0; i < curve.orders.size(); ++i) {
        const double a = curve.orders[i];
        const double eps = curve.values[i] + log_inv_delta / (a - 1.0);
        if (eps < r.epsilon) {
            r.epsilon = eps;
            r.optimal_order = a;
        }
    }
    r.epsilon = std::max(r.epsilon, 0.0);
    return r;
}

PrivacyReport account(double sigma, double q, std::size_t steps, double delta) {
    auto r = rdp_to_dp(compose(rdp_curve(q, sigma), steps), delta);
    r.sigma = sigma;
    r.sampling_rate = q;
    r.steps = steps;
    return r;
}

double calibrate_sigma(double epsilon_target, double delta, double q, std::size_t steps) {
    if (!(epsilon_target > 0.0)) throw std::invalid_argument("calibrate_sigma: target must be > 0");
    auto eps_at = [&](double sigma) { return account(sigma, q, steps, delta).epsilon; };

    double eps_hi = eps_at(kSigmaMax);
    if (eps_hi > epsilon_target)
        throw CalibrationError("calibrate_sigma: epsilon " + std::to_string(epsilon_target) +
                                   " unreachable with sigma in [" + std::to_string(kSigmaMin) +
                                   ", " + std::to_string(kSigmaMax) + "]",
                               kSigmaMin, kSigmaMax);
    if (eps_at(kSigmaMin) <= epsilon_target) return kSigmaMin;

    // Invariant: eps(lo) > target >= eps(hi).
    double lo = kSigmaMin, hi = kSigmaMax;
    for (int it = 0; it < 200 && eps_hi < epsilon_target * (1.0 - kCalibrationTolerance); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double e = eps_at(mid);
        if (e > epsilon_target) {
            lo = mid;
        } else {
            hi = mid;
            eps_hi = e;
        }
    }
    return hi;
}

BudgetSplit split_budget(double epsilon_total, double delta_total, std::size_t members, double q,
                         std::size_t steps_each) {
    if (members < 1) throw std::invalid_argument("split_budget: need at least one member");
    BudgetSplit out;
    out.members = members;
    out.sigma = calibrate_sigma(epsilon_total, delta_total, q, members * steps_each);
    out.total = account(out.sigma, q, members * steps_each, delta_total);
    out.per_member =
        account(out.sigma, q, steps_each, delta_total / static_cast<double>(members));
    out.heuristic_epsilon = epsilon_total / std::sqrt(static_cast<double>(members));
    return out;
}

}  // namespace dpsc
