#pragma once

// The polyserial correlation model.
//
// An observed continuous X and a latent standard-normal trait together follow
// a bivariate normal with correlation rho; an ordinal Y with r categories is
// produced by cutting the latent trait at thresholds tau_1 < ... < tau_{r-1}
// (tau_0 = -inf, tau_r = +inf).  The parameter vector is ordered
// (rho, mu, sigma2, tau_1, ..., tau_{r-1}), dimension r + 2.
//
// The joint density factorizes as marginal(x) * P(Y = y | X = x), where the
// conditional category probability is a difference of normal CDFs at the
// standardized thresholds tau*_y = (tau_y - rho (x - mu)/sigma) / sqrt(1 - rho^2).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "normal.hpp"
#include "quadrature.hpp"

namespace polyserial {

/// Conditional category probabilities are clamped below at this value before
/// logarithms or divisions, so far-tail observations degrade gracefully.
inline constexpr double cond_density_floor = 1e-300;

struct ParamVector {
    double rho = 0.0;
    double mu = 0.0;
    double sigma2 = 1.0;
    std::vector<double> tau;  // strictly increasing interior thresholds

    int r() const { return static_cast<int>(tau.size()) + 1; }
    int dim() const { return static_cast<int>(tau.size()) + 3; }
    double sigma() const { return std::sqrt(sigma2); }

    bool is_legal() const {
        if (!std::isfinite(rho) || !std::isfinite(mu) || !std::isfinite(sigma2)) return false;
        if (!(std::abs(rho) < 1.0) || !(sigma2 > 0.0)) return false;
        if (tau.empty()) return false;
        for (std::size_t k = 0; k < tau.size(); ++k) {
            if (!std::isfinite(tau[k])) return false;
            if (k > 0 && !(tau[k] > tau[k - 1])) return false;
        }
        return true;
    }

    void validate() const {
        if (!is_legal())
            throw std::invalid_argument(
                "ParamVector: need |rho| < 1, sigma2 > 0 and strictly increasing finite thresholds");
    }

    Eigen::VectorXd as_vector() const {
        Eigen::VectorXd v(dim());
        v[0] = rho;
        v[1] = mu;
        v[2] = sigma2;
        for (std::size_t k = 0; k < tau.size(); ++k) v[3 + static_cast<Eigen::Index>(k)] = tau[k];
        return v;
    }

    static ParamVector from_vector(const Eigen::VectorXd& v) {
        if (v.size() < 4) throw std::invalid_argument("ParamVector: need at least 4 components");
        ParamVector theta;
        theta.rho = v[0];
        theta.mu = v[1];
        theta.sigma2 = v[2];
        theta.tau.assign(v.data() + 3, v.data() + v.size());
        return theta;
    }
};

struct Dataset {
    std::vector<double> x;
    std::vector<int> y;  // categories coded 1..r
    int r = 0;

    Dataset() = default;
    Dataset(std::vector<double> x_in, std::vector<int> y_in, int r_in)
        : x(std::move(x_in)), y(std::move(y_in)), r(r_in) {
        if (x.empty() || x.size() != y.size())
            throw std::invalid_argument("Dataset: x and y must be non-empty and equally long");
        if (r < 2) throw std::invalid_argument("Dataset: need at least two categories");
        for (double v : x)
            if (!std::isfinite(v)) throw std::invalid_argument("Dataset: non-finite x value");
        for (int v : y)
            if (v < 1 || v > r)
                throw std::invalid_argument("Dataset: y value outside 1.." + std::to_string(r));
    }

    int n() const { return static_cast<int>(x.size()); }

    std::vector<int> category_counts() const {
        std::vector<int> counts(static_cast<std::size_t>(r), 0);
        for (int v : y) ++counts[static_cast<std::size_t>(v - 1)];
        return counts;
    }
};

/// Scoring values attached to the ordinal categories (consecutive integers by
/// default), used by the point polyserial correlation.
struct ScoreSystem {
    std::vector<double> values;

    static ScoreSystem integers(int r) {
        ScoreSystem s;
        s.values.resize(static_cast<std::size_t>(r));
        std::iota(s.values.begin(), s.values.end(), 1.0);
        return s;
    }

    void validate(int r) const {
        if (static_cast<int>(values.size()) != r)
            throw std::invalid_argument("ScoreSystem: need one score per category");
        for (std::size_t j = 1; j < values.size(); ++j)
            if (!(values[j] > values[j - 1]))
                throw std::invalid_argument("ScoreSystem: scores must be strictly increasing");
    }
};

/// Standardized threshold tau*_k at covariate value x; k in 1..r-1.
inline double tau_star(const ParamVector& theta, double x, int k) {
    if (k < 1 || k > theta.r() - 1) throw std::invalid_argument("tau_star: threshold index out of range");
    const double w = (x - theta.mu) / theta.sigma();
    return (theta.tau[static_cast<std::size_t>(k - 1)] - theta.rho * w) /
           std::sqrt(1.0 - theta.rho * theta.rho);
}

namespace detail {

// Standardized thresholds bounding category y; +-inf at the ends.
inline std::pair<double, double> tau_star_bounds(const ParamVector& theta, double x, int y) {
    const double inf = std::numeric_limits<double>::infinity();
    const double lo = (y == 1) ? -inf : tau_star(theta, x, y - 1);
    const double hi = (y == theta.r()) ? inf : tau_star(theta, x, y);
    return {lo, hi};
}

}  // namespace detail

/// P(Y = y | X = x), clamped below at cond_density_floor.
inline double cond_density(const ParamVector& theta, double x, int y) {
    if (y < 1 || y > theta.r()) throw std::invalid_argument("cond_density: category out of range");
    auto [lo, hi] = detail::tau_star_bounds(theta, x, y);
    return std::max(std_normal_interval(lo, hi), cond_density_floor);
}

inline double marginal_density(const ParamVector& theta, double x) {
    const double s = theta.sigma();
    return std_normal_pdf((x - theta.mu) / s) / s;
}

inline double log_marginal_density(const ParamVector& theta, double x) {
    const double s = theta.sigma();
    return std_normal_log_pdf((x - theta.mu) / s) - 0.5 * std::log(theta.sigma2);
}

inline double joint_density(const ParamVector& theta, double x, int y) {
    return marginal_density(theta, x) * cond_density(theta, x, y);
}

inline double log_joint_density(const ParamVector& theta, double x, int y) {
    return log_marginal_density(theta, x) + std::log(cond_density(theta, x, y));
}

/// P(X <= x, Y <= y): the bivariate normal orthant mass up to x and tau_y,
/// done as a single integral of phi(u) * Phi((tau_y - rho u)/sqrt(1 - rho^2)).
inline double joint_cdf(const ParamVector& theta, double x, int y,
                        const QuadratureSpec& spec = {}) {
    if (y < 1 || y > theta.r()) throw std::invalid_argument("joint_cdf: category out of range");
    const double xs = (x - theta.mu) / theta.sigma();
    if (y == theta.r()) return std_normal_cdf(xs);
    const double t = theta.tau[static_cast<std::size_t>(y - 1)];
    const double q = std::sqrt(1.0 - theta.rho * theta.rho);
    const double rho = theta.rho;
    auto f = [t, q, rho](double u) {
        return std_normal_pdf(u) * std_normal_cdf((t - rho * u) / q);
    };
    // Everything beyond ten standardized units carries less mass than double
    // precision resolves; clipping keeps the change-of-variable grid from
    // burying the integrand in a corner when x is numerically huge.
    QuadResult res =
        integrate_1d(f, -std::numeric_limits<double>::infinity(), std::min(xs, 10.0), spec);
    return std::clamp(res.value, 0.0, 1.0);
}

/// Population product-moment correlation between X and the scored ordinal
/// variable ("point polyserial" correlation).
inline double point_polyserial(const ParamVector& theta, const ScoreSystem& scores) {
    theta.validate();
    scores.validate(theta.r());
    const int r = theta.r();
    const auto& s = scores.values;
    std::vector<double> cdf(static_cast<std::size_t>(r) + 1, 0.0);
    cdf[0] = 0.0;
    cdf[static_cast<std::size_t>(r)] = 1.0;
    for (int k = 1; k < r; ++k)
        cdf[static_cast<std::size_t>(k)] = std_normal_cdf(theta.tau[static_cast<std::size_t>(k - 1)]);
    double mean_y = 0.0, second_y = 0.0;
    for (int j = 1; j <= r; ++j) {
        const double pj = cdf[static_cast<std::size_t>(j)] - cdf[static_cast<std::size_t>(j - 1)];
        mean_y += s[static_cast<std::size_t>(j - 1)] * pj;
        second_y += s[static_cast<std::size_t>(j - 1)] * s[static_cast<std::size_t>(j - 1)] * pj;
    }
    const double var_y = second_y - mean_y * mean_y;
    double phi_sum = 0.0, cdf_sum = 0.0;
    for (int k = 1; k < r; ++k) {
        const double gap = s[static_cast<std::size_t>(k)] - s[static_cast<std::size_t>(k - 1)];
        phi_sum += std_normal_pdf(theta.tau[static_cast<std::size_t>(k - 1)]) * gap;
        cdf_sum += cdf[static_cast<std::size_t>(k)] * gap;
    }
    const double sigma_x = theta.sigma();
    const double mean_xy =
        theta.mu * (s[static_cast<std::size_t>(r - 1)] - cdf_sum) + theta.rho * sigma_x * phi_sum;
    return (mean_xy - theta.mu * mean_y) / (sigma_x * std::sqrt(var_y));
}

// ---------------------------------------------------------------------------
// Unconstrained reparameterization used by the optimizers:
//   z = (atanh rho, mu, log sigma2, tau_1, log(tau_2 - tau_1), ...)
// Every z in R^d maps to a legal parameter vector and vice versa.
// ---------------------------------------------------------------------------

inline Eigen::VectorXd to_unconstrained(const ParamVector& theta) {
    theta.validate();
    Eigen::VectorXd z(theta.dim());
    z[0] = std::atanh(theta.rho);
    z[1] = theta.mu;
    z[2] = std::log(theta.sigma2);
    z[3] = theta.tau[0];
    for (std::size_t k = 1; k < theta.tau.size(); ++k)
        z[3 + static_cast<Eigen::Index>(k)] = std::log(theta.tau[k] - theta.tau[k - 1]);
    return z;
}

inline ParamVector from_unconstrained(const Eigen::VectorXd& z) {
    if (z.size() < 4) throw std::invalid_argument("from_unconstrained: need at least 4 components");
    ParamVector theta;
    theta.rho = std::tanh(z[0]);
    theta.mu = z[1];
    theta.sigma2 = std::exp(z[2]);
    theta.tau.resize(static_cast<std::size_t>(z.size()) - 3);
    theta.tau[0] = z[3];
    for (std::size_t k = 1; k < theta.tau.size(); ++k)
        theta.tau[k] = theta.tau[k - 1] + std::exp(z[3 + static_cast<Eigen::Index>(k)]);
    return theta;
}

/// Pull a gradient taken in the natural parameterization back to z
/// coordinates (chain rule through the transform above).
inline Eigen::VectorXd pullback_gradient(const ParamVector& theta, const Eigen::VectorXd& grad_theta) {
    if (grad_theta.size() != theta.dim())
        throw std::invalid_argument("pullback_gradient: dimension mismatch");
    Eigen::VectorXd g(theta.dim());
    g[0] = grad_theta[0] * (1.0 - theta.rho * theta.rho);
    g[1] = grad_theta[1];
    g[2] = grad_theta[2] * theta.sigma2;
    const std::size_t m = theta.tau.size();
    double tail = 0.0;  // sum of tau-gradients with index >= current gap
    for (std::size_t k = 0; k < m; ++k) tail += grad_theta[3 + static_cast<Eigen::Index>(k)];
    g[3] = tail;
    for (std::size_t k = 1; k < m; ++k) {
        tail -= grad_theta[3 + static_cast<Eigen::Index>(k - 1)];
        g[3 + static_cast<Eigen::Index>(k)] = tail * (theta.tau[k] - theta.tau[k - 1]);
    }
    return g;
}

}  // namespace polyserial
