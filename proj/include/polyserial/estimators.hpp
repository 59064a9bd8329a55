#pragma once

// Point estimation for the polyserial model.
//
//  * fit_ml        maximum likelihood
//  * fit_two_step  moment/threshold plug-ins plus a 1-D likelihood search in rho
//  * fit_dpd       minimum density power divergence with tuning constant alpha
//                  (alpha = 0 is the likelihood limit and dispatches to fit_ml)
//
// All multivariate searches run in the unconstrained parameterization with
// analytic gradients and fall back to a simplex search when the quasi-Newton
// run fails.  fit_dpd also produces the per-observation diagnostic weights
// p(x_i, y_i)^alpha rescaled by their attainable supremum M_alpha.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "derivatives.hpp"
#include "model.hpp"
#include "optimize.hpp"
#include "quadrature.hpp"

namespace polyserial {

/// Adjacent fitted thresholds at least this far apart flag a degenerate fit
/// (the gap spans more than an entire 95% latent range).
inline constexpr double threshold_instability_gap = 3.92;

/// Model integrals are truncated to mu +- this many sigmas.
inline constexpr double integral_truncation_sigmas = 10.0;

struct DpdConfig {
    double alpha = 0.5;
    OptimizerSpec optimizer{};
    QuadratureSpec quadrature{};
    std::optional<ParamVector> start{};  // overrides the default starting values
};

struct FitResult {
    ParamVector theta;
    double alpha = 0.0;
    bool converged = false;
    int iterations = 0;
    double objective = std::numeric_limits<double>::quiet_NaN();
    OptMethod method = OptMethod::quasi_newton;
    bool threshold_instability = false;
    double m_alpha = 1.0;
    std::vector<double> weights;       // rescaled diagnostic weights, in [0, 1]
    double point_polyserial = std::numeric_limits<double>::quiet_NaN();
};

struct WeightSet {
    std::vector<double> raw;        // p(x_i, y_i)^alpha
    std::vector<double> rescaled;   // raw / m_alpha, clamped into [0, 1]
    double m_alpha = 1.0;
};

namespace detail {

inline void check_fit_preconditions(const Dataset& data) {
    const int d = data.r + 2;
    if (data.n() < d)
        throw std::invalid_argument("fit: need at least as many observations as parameters");
    const auto counts = data.category_counts();
    for (int j = 0; j < data.r; ++j)
        if (counts[static_cast<std::size_t>(j)] == 0)
            throw std::invalid_argument("fit: category " + std::to_string(j + 1) +
                                        " is unobserved; merge adjacent categories");
}

inline double sample_mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_variance(const std::vector<double>& v, double mean) {
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(v.size() - 1);
}

inline double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (n % 2 == 1) return *mid;
    const double hi = *mid;
    auto lo_it = std::max_element(v.begin(), mid);
    return 0.5 * (*lo_it + hi);
}

/// Thresholds from inverse-normal transformed cumulative relative frequencies.
inline std::vector<double> threshold_start(const Dataset& data) {
    const auto counts = data.category_counts();
    std::vector<double> tau(static_cast<std::size_t>(data.r - 1));
    double cum = 0.0;
    for (int k = 0; k + 1 < data.r; ++k) {
        cum += counts[static_cast<std::size_t>(k)];
        const double freq = cum / data.n();
        if (freq <= 0.0 || freq >= 1.0)
            throw std::invalid_argument("fit: degenerate cumulative category frequency");
        tau[static_cast<std::size_t>(k)] = std_normal_quantile(freq);
    }
    return tau;
}

/// Pearson correlation of x with the integer category codes, inflated toward
/// the latent scale and clamped inside the legal range.
inline double rho_start(const Dataset& data) {
    const int n = data.n();
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        const double xi = data.x[static_cast<std::size_t>(i)];
        const double yi = data.y[static_cast<std::size_t>(i)];
        sx += xi;
        sy += yi;
        sxx += xi * xi;
        syy += yi * yi;
        sxy += xi * yi;
    }
    const double vx = sxx / n - (sx / n) * (sx / n);
    const double vy = syy / n - (sy / n) * (sy / n);
    if (vx <= 0.0 || vy <= 0.0) return 0.0;
    const double r = (sxy / n - (sx / n) * (sy / n)) / std::sqrt(vx * vy);
    return std::clamp(1.1 * r, -0.95, 0.95);
}

inline ParamVector two_step_start(const Dataset& data) {
    ParamVector theta;
    theta.mu = sample_mean(data.x);
    theta.sigma2 = sample_variance(data.x, theta.mu);
    if (!(theta.sigma2 > 0.0)) throw std::invalid_argument("fit: x has zero sample variance");
    theta.tau = threshold_start(data);
    theta.rho = rho_start(data);
    return theta;
}

/// Outlier-resistant starting values used by the divergence fits.
inline ParamVector robust_start(const Dataset& data) {
    ParamVector theta;
    theta.mu = median_of(data.x);
    std::vector<double> dev(data.x.size());
    for (std::size_t i = 0; i < data.x.size(); ++i) dev[i] = std::abs(data.x[i] - theta.mu);
    const double mad = median_of(dev);
    theta.sigma2 = (mad > 0.0) ? (1.4826 * mad) * (1.4826 * mad)
                               : sample_variance(data.x, sample_mean(data.x));
    if (!(theta.sigma2 > 0.0)) throw std::invalid_argument("fit: x has zero spread");
    theta.tau = threshold_start(data);
    theta.rho = rho_start(data);
    return theta;
}

inline bool unstable_thresholds(const ParamVector& theta) {
    for (std::size_t k = 1; k < theta.tau.size(); ++k)
        if (theta.tau[k] - theta.tau[k - 1] >= threshold_instability_gap) return true;
    return false;
}

/// Quasi-Newton in z-space with a simplex retry; illegal parameter images
/// evaluate to +inf so line searches back away from them.
inline MinimizeResult optimize_reparameterized(const ObjectiveFn& f_theta,
                                               const GradientFn& grad_theta,
                                               const ParamVector& start,
                                               const OptimizerSpec& spec) {
    auto fz = [&](const Eigen::VectorXd& z) -> double {
        ParamVector theta = from_unconstrained(z);
        if (!theta.is_legal()) return std::numeric_limits<double>::infinity();
        return f_theta(theta.as_vector());
    };
    GradientFn gz;
    if (grad_theta)
        gz = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
            ParamVector theta = from_unconstrained(z);
            return pullback_gradient(theta, grad_theta(theta.as_vector()));
        };
    const Eigen::VectorXd z0 = to_unconstrained(start);
    MinimizeResult res = minimize(fz, gz, z0, spec, OptMethod::quasi_newton);
    const bool feasible = res.x.allFinite() && from_unconstrained(res.x).is_legal() &&
                          std::isfinite(res.value);
    if (!res.converged || !feasible) {
        const Eigen::VectorXd warm = feasible ? res.x : z0;
        MinimizeResult retry = minimize(fz, nullptr, warm, spec, OptMethod::simplex);
        if (std::isfinite(retry.value) && (!std::isfinite(res.value) || retry.value <= res.value))
            res = retry;
    }
    return res;
}

}  // namespace detail

/// Density power divergence between the empirical distribution and the model,
/// up to the data-free constant; alpha must be positive.
inline double dpd_objective(const ParamVector& theta, const Dataset& data, double alpha,
                            const QuadratureSpec& quad = {}) {
    if (!(alpha > 0.0)) throw std::invalid_argument("dpd_objective: alpha must be positive");
    theta.validate();
    const double lo = theta.mu - integral_truncation_sigmas * theta.sigma();
    const double hi = theta.mu + integral_truncation_sigmas * theta.sigma();
    auto integrand = [&](double x) {
        const double px = marginal_density(theta, x);
        double acc = 0.0;
        for (int y = 1; y <= theta.r(); ++y)
            acc += std::pow(px * cond_density(theta, x, y), 1.0 + alpha);
        return acc;
    };
    const double mass = integrate_1d(integrand, lo, hi, quad).value;
    double data_term = 0.0;
    for (int i = 0; i < data.n(); ++i)
        data_term += std::exp(alpha * log_joint_density(theta, data.x[static_cast<std::size_t>(i)],
                                                        data.y[static_cast<std::size_t>(i)]));
    data_term /= data.n();
    return mass - (1.0 + 1.0 / alpha) * data_term + 1.0 / alpha;
}

/// Left-hand side of the estimating equation: the weighted mean score minus
/// its model expectation.  Zero (to optimizer tolerance) at a divergence fit;
/// at alpha = 0 it reduces to the mean score.
inline Eigen::VectorXd estimating_equation_residual(const ParamVector& theta, const Dataset& data,
                                                    double alpha, const QuadratureSpec& quad = {}) {
    theta.validate();
    if (alpha < 0.0) throw std::invalid_argument("estimating_equation_residual: negative alpha");
    const int d = theta.dim();
    Eigen::VectorXd weighted_score = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < data.n(); ++i) {
        const double x = data.x[static_cast<std::size_t>(i)];
        const int y = data.y[static_cast<std::size_t>(i)];
        const DensityDerivs dv = density_derivs(theta, x, y, false);
        const double w = (alpha == 0.0) ? 1.0 : std::exp(alpha * dv.logp);
        // When the density underflows the weight is exactly zero and the score
        // blows up; their product tends to zero, so the observation drops out.
        if (w > 0.0) weighted_score += w * dv.score;
    }
    weighted_score /= data.n();
    if (alpha == 0.0) return weighted_score;
    const double lo = theta.mu - integral_truncation_sigmas * theta.sigma();
    const double hi = theta.mu + integral_truncation_sigmas * theta.sigma();
    auto integrand = [&](double x) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
        for (int y = 1; y <= theta.r(); ++y) {
            const DensityDerivs dv = density_derivs(theta, x, y, false);
            acc += std::exp((1.0 + alpha) * dv.logp) * dv.score;
        }
        return acc;
    };
    const Eigen::VectorXd expectation =
        integrate_vector(integrand, lo, hi, d, 0.1 * quad.rel_tol, 0.1 * quad.abs_tol, 16);
    return weighted_score - expectation;
}

/// Supremum over (x, y) of the joint density raised to alpha, used to rescale
/// the diagnostic weights; equals 1 at alpha = 0 by convention.
inline double compute_m_alpha(const ParamVector& theta, double alpha) {
    theta.validate();
    if (alpha < 0.0) throw std::invalid_argument("compute_m_alpha: negative alpha");
    if (alpha == 0.0) return 1.0;
    const double sigma = theta.sigma();
    const double lo = theta.mu - 8.0 * sigma, hi = theta.mu + 8.0 * sigma;
    double best_logp = -std::numeric_limits<double>::infinity();
    for (int y = 1; y <= theta.r(); ++y) {
        auto neg_logp = [&](const Eigen::VectorXd& v) {
            return -log_joint_density(theta, v[0], y);
        };
        auto neg_grad = [&](const Eigen::VectorXd& v) {
            const double x = v[0];
            const double w = (x - theta.mu) / sigma;
            const double q = std::sqrt(1.0 - theta.rho * theta.rho);
            auto [lo_b, hi_b] = detail::tau_star_bounds(theta, x, y);
            const double dphi = (std::isfinite(hi_b) ? std_normal_pdf(hi_b) : 0.0) -
                                (std::isfinite(lo_b) ? std_normal_pdf(lo_b) : 0.0);
            const double dlog =
                -w / sigma - theta.rho / (sigma * q) * dphi / cond_density(theta, x, y);
            Eigen::VectorXd g(1);
            g[0] = -dlog;
            return g;
        };
        Eigen::VectorXd x0(1);
        x0[0] = theta.mu;
        OptimizerSpec spec;
        spec.grad_tol = 1e-10;
        MinimizeResult res = minimize(neg_logp, neg_grad, x0, spec);
        double cand = (res.converged && res.x[0] >= lo && res.x[0] <= hi)
                          ? -res.value
                          : -std::numeric_limits<double>::infinity();
        // Bracketing fallback: coarse scan plus golden-section refinement.
        int best_idx = 0;
        double best_scan = -std::numeric_limits<double>::infinity();
        constexpr int scan_points = 401;
        for (int i = 0; i < scan_points; ++i) {
            const double x = lo + (hi - lo) * i / (scan_points - 1);
            const double v = log_joint_density(theta, x, y);
            if (v > best_scan) {
                best_scan = v;
                best_idx = i;
            }
        }
        double a = lo + (hi - lo) * std::max(0, best_idx - 1) / (scan_points - 1);
        double b = lo + (hi - lo) * std::min(scan_points - 1, best_idx + 1) / (scan_points - 1);
        constexpr double gr = 0.6180339887498949;
        double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
        double f1 = log_joint_density(theta, x1, y), f2 = log_joint_density(theta, x2, y);
        while (b - a > 1e-10 * (1.0 + std::abs(a))) {
            if (f1 < f2) {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + gr * (b - a);
                f2 = log_joint_density(theta, x2, y);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - gr * (b - a);
                f1 = log_joint_density(theta, x1, y);
            }
        }
        cand = std::max(cand, std::max(f1, f2));
        best_logp = std::max(best_logp, cand);
    }
    return std::exp(alpha * best_logp);
}

/// Raw and rescaled observation weights at the given parameters.
inline WeightSet compute_weights(const ParamVector& theta, const Dataset& data, double alpha) {
    theta.validate();
    if (alpha < 0.0) throw std::invalid_argument("compute_weights: negative alpha");
    WeightSet ws;
    ws.m_alpha = compute_m_alpha(theta, alpha);
    ws.raw.resize(static_cast<std::size_t>(data.n()));
    ws.rescaled.resize(static_cast<std::size_t>(data.n()));
    for (int i = 0; i < data.n(); ++i) {
        const double lp = log_joint_density(theta, data.x[static_cast<std::size_t>(i)],
                                            data.y[static_cast<std::size_t>(i)]);
        const double raw = (alpha == 0.0) ? 1.0 : std::exp(alpha * lp);
        ws.raw[static_cast<std::size_t>(i)] = raw;
        ws.rescaled[static_cast<std::size_t>(i)] = std::clamp(raw / ws.m_alpha, 0.0, 1.0);
    }
    return ws;
}

namespace detail {

inline FitResult finalize_fit(const Dataset& data, const MinimizeResult& res, double alpha,
                              const ParamVector& fallback) {
    FitResult fit;
    fit.alpha = alpha;
    fit.converged = res.converged && res.x.allFinite();
    fit.iterations = res.iterations;
    fit.objective = res.value;
    fit.method = res.method;
    fit.theta = (res.x.allFinite() && from_unconstrained(res.x).is_legal())
                    ? from_unconstrained(res.x)
                    : fallback;
    fit.threshold_instability = unstable_thresholds(fit.theta);
    const WeightSet ws = compute_weights(fit.theta, data, alpha);
    fit.m_alpha = ws.m_alpha;
    fit.weights = ws.rescaled;
    fit.point_polyserial = point_polyserial(fit.theta, ScoreSystem::integers(data.r));
    return fit;
}

}  // namespace detail

/// Maximum likelihood fit, started from the two-step estimates.
inline FitResult fit_ml(const Dataset& data, const DpdConfig& config = DpdConfig{.alpha = 0.0});

/// Two-step fit: moments and inverse-normal threshold plug-ins, then a 1-D
/// conditional likelihood search over rho alone.
inline FitResult fit_two_step(const Dataset& data, const DpdConfig& config = DpdConfig{.alpha = 0.0}) {
    detail::check_fit_preconditions(data);
    ParamVector theta = detail::two_step_start(data);
    const int n = data.n();
    auto neg_condlik = [&](const Eigen::VectorXd& zr) -> double {
        ParamVector t = theta;
        t.rho = std::tanh(zr[0]);
        if (!t.is_legal()) return std::numeric_limits<double>::infinity();
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
            acc -= std::log(cond_density(t, data.x[static_cast<std::size_t>(i)],
                                         data.y[static_cast<std::size_t>(i)]));
        return acc / n;
    };
    auto neg_condlik_grad = [&](const Eigen::VectorXd& zr) -> Eigen::VectorXd {
        ParamVector t = theta;
        t.rho = std::tanh(zr[0]);
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd s =
                score_vector(t, data.x[static_cast<std::size_t>(i)],
                             data.y[static_cast<std::size_t>(i)]);
            acc -= s[0];  // marginal factor does not involve rho
        }
        Eigen::VectorXd g(1);
        g[0] = acc / n * (1.0 - t.rho * t.rho);
        return g;
    };
    Eigen::VectorXd z0(1);
    z0[0] = std::atanh(theta.rho);
    MinimizeResult res = minimize(neg_condlik, neg_condlik_grad, z0, config.optimizer);
    if (!res.converged)
        res = minimize(neg_condlik, nullptr, z0, config.optimizer, OptMethod::simplex);
    theta.rho = std::tanh(res.x[0]);
    FitResult fit;
    fit.alpha = 0.0;
    fit.theta = theta;
    fit.converged = res.converged && theta.is_legal();
    fit.iterations = res.iterations;
    fit.objective = res.value;
    fit.method = res.method;
    fit.threshold_instability = detail::unstable_thresholds(theta);
    fit.m_alpha = 1.0;
    fit.weights.assign(static_cast<std::size_t>(n), 1.0);
    fit.point_polyserial = point_polyserial(theta, ScoreSystem::integers(data.r));
    return fit;
}

inline FitResult fit_ml(const Dataset& data, const DpdConfig& config) {
    detail::check_fit_preconditions(data);
    const ParamVector start = config.start ? *config.start : fit_two_step(data, config).theta;
    const int n = data.n();
    auto objective = [&](const Eigen::VectorXd& v) -> double {
        const ParamVector theta = ParamVector::from_vector(v);
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
            acc -= log_joint_density(theta, data.x[static_cast<std::size_t>(i)],
                                     data.y[static_cast<std::size_t>(i)]);
        return acc / n;
    };
    auto gradient = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        const ParamVector theta = ParamVector::from_vector(v);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.dim());
        for (int i = 0; i < n; ++i)
            g -= score_vector(theta, data.x[static_cast<std::size_t>(i)],
                              data.y[static_cast<std::size_t>(i)]);
        return g / n;
    };
    MinimizeResult res =
        detail::optimize_reparameterized(objective, gradient, start, config.optimizer);
    FitResult fit = detail::finalize_fit(data, res, 0.0, start);
    return fit;
}

/// Minimum density power divergence fit.
inline FitResult fit_dpd(const Dataset& data, const DpdConfig& config = {}) {
    if (config.alpha < 0.0) throw std::invalid_argument("fit_dpd: negative alpha");
    if (config.alpha == 0.0) return fit_ml(data, config);
    detail::check_fit_preconditions(data);
    const ParamVector start = config.start ? *config.start : detail::robust_start(data);
    const double alpha = config.alpha;
    auto objective = [&](const Eigen::VectorXd& v) -> double {
        return dpd_objective(ParamVector::from_vector(v), data, alpha, config.quadrature);
    };
    auto gradient = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        const ParamVector theta = ParamVector::from_vector(v);
        return -(1.0 + alpha) *
               estimating_equation_residual(theta, data, alpha, config.quadrature);
    };
    MinimizeResult res =
        detail::optimize_reparameterized(objective, gradient, start, config.optimizer);
    FitResult fit = detail::finalize_fit(data, res, alpha, start);
    return fit;
}

}  // namespace polyserial
