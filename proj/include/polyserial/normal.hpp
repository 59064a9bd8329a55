#pragma once

// Standard normal density, distribution function, and quantile.
//
// The CDF is built on std::erfc so both tails keep full relative accuracy;
// interval probabilities switch between lower- and upper-tail differences to
// avoid cancellation when both endpoints sit in the same tail.  The quantile
// uses Acklam's rational approximation polished with one Halley step.

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace polyserial {

inline constexpr double inv_sqrt_2pi = 0.3989422804014326779399461;
inline constexpr double sqrt_2 = std::numbers::sqrt2;

inline double std_normal_pdf(double v) {
    return inv_sqrt_2pi * std::exp(-0.5 * v * v);
}

inline double std_normal_log_pdf(double v) {
    return -0.5 * v * v - 0.91893853320467274178032973640562;  // log sqrt(2*pi)
}

/// Lower-tail probability P(Z <= v).  v may be +-infinity.
inline double std_normal_cdf(double v) {
    if (std::isnan(v)) throw std::invalid_argument("std_normal_cdf: NaN argument");
    return 0.5 * std::erfc(-v / sqrt_2);
}

/// Upper-tail probability P(Z > v), accurate for large positive v.
inline double std_normal_sf(double v) {
    if (std::isnan(v)) throw std::invalid_argument("std_normal_sf: NaN argument");
    return 0.5 * std::erfc(v / sqrt_2);
}

/// P(a < Z <= b) for a <= b, either endpoint possibly infinite.
///
/// Computed as a difference of lower tails when the interval sits left of the
/// origin and as a difference of upper tails otherwise, so that two endpoints
/// deep in the same tail do not cancel each other to zero relative accuracy.
inline double std_normal_interval(double a, double b) {
    if (std::isnan(a) || std::isnan(b)) throw std::invalid_argument("std_normal_interval: NaN endpoint");
    if (a > b) throw std::invalid_argument("std_normal_interval: endpoints out of order");
    double p = (a + b > 0.0) ? std_normal_sf(a) - std_normal_sf(b)
                             : std_normal_cdf(b) - std_normal_cdf(a);
    return p < 0.0 ? 0.0 : p;
}

namespace detail {

// Acklam's inverse normal CDF approximation (relative error < 1.15e-9).
inline double acklam_quantile(double p) {
    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double q, x;
    if (p < p_low) {
        q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    return x;
}

}  // namespace detail

/// Quantile of the standard normal.  p in [0, 1]; the endpoints map to -+inf.
inline double std_normal_quantile(double p) {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("std_normal_quantile: p must lie in [0, 1]");
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    double x = detail::acklam_quantile(p);
    // One Halley refinement; skipped far in the tails where exp(x^2/2)
    // would overflow and the raw approximation is already ample.
    if (std::abs(x) < 37.0) {
        double e = std_normal_cdf(x) - p;
        double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

}  // namespace polyserial
