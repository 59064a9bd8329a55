#pragma once

// Clayton and Gumbel copula samplers with standard-normal marginals, plus the
// calibration that finds the dependence parameter reproducing a requested
// normal-scores correlation.  Both families are sampled through their frailty
// representations, so a single positive random effect drives the dependence.

#include <cmath>
#include <numbers>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <polyserial/normal.hpp>
#include <polyserial/rng.hpp>

namespace polyserial {

enum class CopulaFamily { clayton, gumbel };

inline const char* copula_family_name(CopulaFamily family) {
    return family == CopulaFamily::clayton ? "clayton" : "gumbel";
}

// Joint distribution function C(u, v).  Clayton requires theta > 0, Gumbel
// theta >= 1; theta = 1 makes Gumbel the independence copula.
inline double copula_cdf(CopulaFamily family, double theta, double u, double v) {
    if (u <= 0.0 || v <= 0.0) return 0.0;
    if (u >= 1.0 && v >= 1.0) return 1.0;
    if (u >= 1.0) return v;
    if (v >= 1.0) return u;
    if (family == CopulaFamily::clayton) {
        if (!(theta > 0.0)) throw std::invalid_argument("copula_cdf: clayton needs theta > 0");
        return std::pow(std::pow(u, -theta) + std::pow(v, -theta) - 1.0, -1.0 / theta);
    }
    if (!(theta >= 1.0)) throw std::invalid_argument("copula_cdf: gumbel needs theta >= 1");
    const double a = std::pow(-std::log(u), theta);
    const double b = std::pow(-std::log(v), theta);
    return std::exp(-std::pow(a + b, 1.0 / theta));
}

namespace detail {

// Positive stable variate with Laplace transform exp(-t^a), 0 < a <= 1,
// drawn by the trigonometric construction from one uniform angle and one
// exponential variate.
inline double positive_stable(double a, Rng& rng) {
    if (a >= 1.0) return 1.0;
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double w = rng.exponential();
    const double num = std::sin(a * theta);
    const double den = std::pow(std::sin(theta), 1.0 / a);
    return (num / den) * std::pow(std::sin((1.0 - a) * theta) / w, (1.0 - a) / a);
}

// Gauss-Legendre nodes and weights on [-1, 1], by Newton refinement of the
// Chebyshev initial guesses.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(static_cast<std::size_t>(n), 0.0);
    w.assign(static_cast<std::size_t>(n), 0.0);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = 1.0, p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
            }
            pp = n * (z * p1 - p2) / (z * z - 1.0);
            const double step = p1 / pp;
            z -= step;
            if (std::abs(step) < 1e-15) break;
        }
        x[static_cast<std::size_t>(i)] = -z;
        x[static_cast<std::size_t>(n - 1 - i)] = z;
        w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[static_cast<std::size_t>(n - 1 - i)] = w[static_cast<std::size_t>(i)];
    }
}

}  // namespace detail

// One dependent pair (U, V) with uniform marginals.
inline std::pair<double, double> sample_copula_pair(CopulaFamily family, double theta, Rng& rng) {
    if (family == CopulaFamily::clayton) {
        if (!(theta > 0.0))
            throw std::invalid_argument("sample_copula_pair: clayton needs theta > 0");
        const double v = rng.gamma(1.0 / theta);
        const double u1 = std::pow(1.0 + rng.exponential() / v, -1.0 / theta);
        const double u2 = std::pow(1.0 + rng.exponential() / v, -1.0 / theta);
        return {u1, u2};
    }
    if (!(theta >= 1.0)) throw std::invalid_argument("sample_copula_pair: gumbel needs theta >= 1");
    const double s = detail::positive_stable(1.0 / theta, rng);
    const double u1 = std::exp(-std::pow(rng.exponential() / s, 1.0 / theta));
    const double u2 = std::exp(-std::pow(rng.exponential() / s, 1.0 / theta));
    return {u1, u2};
}

// Pearson correlation of (quantile(U), quantile(V)) under the copula with
// standard-normal marginals, evaluated through the covariance identity
// cov = integral of [C(F(x), F(y)) - F(x)F(y)] over the plane, on a tensor
// Gauss-Legendre grid.  With unit-variance marginals the covariance is the
// correlation.
inline double normal_scores_correlation(CopulaFamily family, double theta, int nodes = 200) {
    static thread_local std::vector<double> gx, gw, cdf;
    static thread_local int cached_nodes = 0;
    if (cached_nodes != nodes) {
        detail::gauss_legendre(nodes, gx, gw);
        const double half = 8.0;  // integrate over [-8, 8]^2; the tails are below resolution
        cdf.resize(gx.size());
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] *= half;
            gw[i] *= half;
            cdf[i] = std_normal_cdf(gx[i]);
        }
        cached_nodes = nodes;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < gx.size(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < gx.size(); ++j)
            row += gw[j] * (copula_cdf(family, theta, cdf[i], cdf[j]) - cdf[i] * cdf[j]);
        acc += gw[i] * row;
    }
    return acc;
}

// Dependence parameter that makes the normal-scores correlation match
// rho_target.  The correlation is monotone in the parameter for both families,
// so bisection on a wide bracket suffices.  Results are cached because the
// simulation studies request the same target repeatedly.
inline double calibrate_copula(CopulaFamily family, double rho_target) {
    static std::mutex cache_mutex;
    static std::map<std::pair<int, long long>, double> cache;
    const std::pair<int, long long> key{static_cast<int>(family),
                                        std::llround(rho_target * 1e12)};
    {
        std::lock_guard<std::mutex> lock(cache_mutex);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }

    double lo = family == CopulaFamily::clayton ? 1e-5 : 1.0 + 1e-9;
    double hi = 80.0;
    const double f_lo = normal_scores_correlation(family, lo);
    const double f_hi = normal_scores_correlation(family, hi);
    if (!(rho_target > f_lo && rho_target < f_hi))
        throw std::invalid_argument(std::string("calibrate_copula: correlation ") +
                                    std::to_string(rho_target) + " is not attainable by the " +
                                    copula_family_name(family) + " family");
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double f = normal_scores_correlation(family, mid);
        if (std::abs(f - rho_target) < 1e-9 || hi - lo < 1e-11 * std::max(1.0, mid)) {
            lo = hi = mid;
            break;
        }
        (f < rho_target ? lo : hi) = mid;
    }
    const double theta = 0.5 * (lo + hi);
    std::lock_guard<std::mutex> lock(cache_mutex);
    cache.emplace(key, theta);
    return theta;
}

}  // namespace polyserial
