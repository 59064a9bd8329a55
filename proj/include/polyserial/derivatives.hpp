#pragma once

// Closed-form first and second parameter derivatives of the joint density.
//
// Writing t_a(k) = d tau*_k / d theta_a, every derivative of the conditional
// category probability is a signed sum over the two bounding thresholds:
//
//   d   P(y|x) = sum_k +- phi(tau*_k) t_a(k)
//   d^2 P(y|x) = sum_k +- [phi'(tau*_k) t_a(k) t_b(k) + phi(tau*_k) t_ab(k)]
//
// with phi'(v) = -v phi(v) and the k = 0, r boundary terms identically zero.
// The marginal factor contributes only through (mu, sigma2).  Scores and the
// negative log-density Hessian Q = -d^2 log p then follow from the
// factorization log p = log p_X + log P(y|x).

#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "model.hpp"

namespace polyserial {

struct DensityDerivs {
    double p = 0.0;                // joint density
    double logp = 0.0;
    Eigen::VectorXd grad;          // gradient of the joint density
    Eigen::VectorXd score;         // gradient of log density
    Eigen::MatrixXd hess;          // Hessian of the joint density (if requested)
    Eigen::MatrixXd q;             // -Hessian of log density (if requested)
};

namespace detail {

// Derivatives of tau*_k with respect to (rho, mu, sigma2, tau_k) at a fixed x.
struct ThresholdTerms {
    double ts;         // tau*_k
    double phi;        // phi(tau*_k)
    double dphi;       // phi'(tau*_k)
    double t_rho, t_mu, t_s2, t_tau;
    double u_rhorho, u_rhomu, u_rhos2, u_rhotau, u_mus2, u_s2s2;
};

inline ThresholdTerms threshold_terms(const ParamVector& theta, double x, int k) {
    const double sigma = theta.sigma();
    const double w = (x - theta.mu) / sigma;
    const double rho = theta.rho;
    const double q2 = 1.0 - rho * rho;
    const double q = std::sqrt(q2);
    ThresholdTerms t;
    t.ts = (theta.tau[static_cast<std::size_t>(k - 1)] - rho * w) / q;
    t.phi = std_normal_pdf(t.ts);
    t.dphi = -t.ts * t.phi;
    t.t_rho = (rho * t.ts / q - w) / q;
    t.t_mu = rho / (sigma * q);
    t.t_s2 = rho * w / (2.0 * theta.sigma2 * q);
    t.t_tau = 1.0 / q;
    t.u_rhorho = -w * rho / (q * q2) + t.ts / q2 + 2.0 * rho * rho * t.ts / (q2 * q2) +
                 rho * t.t_rho / q2;
    t.u_rhomu = 1.0 / (sigma * q * q2);
    t.u_rhos2 = w / (2.0 * theta.sigma2 * q * q2);
    t.u_rhotau = rho / (q * q2);
    t.u_mus2 = -rho / (2.0 * theta.sigma2 * sigma * q);
    t.u_s2s2 = -3.0 * rho * w / (4.0 * theta.sigma2 * theta.sigma2 * q);
    return t;
}

}  // namespace detail

/// All requested derivatives of the joint density at one observation.
inline DensityDerivs density_derivs(const ParamVector& theta, double x, int y,
                                    bool want_second_order = false) {
    theta.validate();
    if (y < 1 || y > theta.r()) throw std::invalid_argument("density_derivs: category out of range");
    if (!std::isfinite(x)) throw std::invalid_argument("density_derivs: non-finite x");
    const int d = theta.dim();
    const double sigma = theta.sigma();
    const double w = (x - theta.mu) / sigma;

    DensityDerivs out;
    out.grad = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd grad_c = Eigen::VectorXd::Zero(d);  // gradient of P(y|x)
    Eigen::MatrixXd hess_c;
    if (want_second_order) hess_c = Eigen::MatrixXd::Zero(d, d);

    const double p_cond = cond_density(theta, x, y);
    for (int side = 0; side < 2; ++side) {
        const int k = (side == 0) ? y - 1 : y;        // lower / upper bounding threshold
        if (k < 1 || k > theta.r() - 1) continue;     // infinite boundary: zero contribution
        const double sgn = (side == 0) ? -1.0 : 1.0;
        const detail::ThresholdTerms t = detail::threshold_terms(theta, x, k);
        const int jt = 3 + k - 1;  // position of tau_k in the parameter vector
        grad_c[0] += sgn * t.phi * t.t_rho;
        grad_c[1] += sgn * t.phi * t.t_mu;
        grad_c[2] += sgn * t.phi * t.t_s2;
        grad_c[jt] += sgn * t.phi * t.t_tau;
        if (want_second_order) {
            const double tv[4] = {t.t_rho, t.t_mu, t.t_s2, t.t_tau};
            const int idx[4] = {0, 1, 2, jt};
            for (int a = 0; a < 4; ++a)
                for (int b = a; b < 4; ++b) hess_c(idx[a], idx[b]) += sgn * t.dphi * tv[a] * tv[b];
            hess_c(0, 0) += sgn * t.phi * t.u_rhorho;
            hess_c(0, 1) += sgn * t.phi * t.u_rhomu;
            hess_c(0, 2) += sgn * t.phi * t.u_rhos2;
            hess_c(0, jt) += sgn * t.phi * t.u_rhotau;
            hess_c(1, 2) += sgn * t.phi * t.u_mus2;
            hess_c(2, 2) += sgn * t.phi * t.u_s2s2;
        }
    }

    const double p_x = marginal_density(theta, x);
    Eigen::VectorXd grad_x = Eigen::VectorXd::Zero(d);
    grad_x[1] = p_x * w / sigma;
    grad_x[2] = p_x * (w * w - 1.0) / (2.0 * theta.sigma2);

    out.p = p_x * p_cond;
    out.logp = log_marginal_density(theta, x) + std::log(p_cond);
    out.grad = p_x * grad_c + p_cond * grad_x;
    out.score = grad_c / p_cond + grad_x / p_x;

    if (want_second_order) {
        Eigen::MatrixXd hess_x = Eigen::MatrixXd::Zero(d, d);
        hess_x(1, 1) = p_x * (w * w - 1.0) / theta.sigma2;
        hess_x(1, 2) = p_x * w * (w * w - 3.0) / (2.0 * theta.sigma2 * sigma);
        hess_x(2, 2) = p_x * (w * w * w * w - 6.0 * w * w + 3.0) / (4.0 * theta.sigma2 * theta.sigma2);
        hess_c.triangularView<Eigen::StrictlyLower>() = hess_c.transpose();
        hess_x.triangularView<Eigen::StrictlyLower>() = hess_x.transpose();
        out.hess = p_x * hess_c + grad_x * grad_c.transpose() + grad_c * grad_x.transpose() +
                   p_cond * hess_x;
        const Eigen::VectorXd sc = grad_c / p_cond;
        const Eigen::VectorXd sx = grad_x / p_x;
        out.q = -(hess_c / p_cond - sc * sc.transpose() + hess_x / p_x - sx * sx.transpose());
    }
    return out;
}

inline Eigen::VectorXd score_vector(const ParamVector& theta, double x, int y) {
    return density_derivs(theta, x, y, false).score;
}

inline Eigen::VectorXd density_gradient(const ParamVector& theta, double x, int y) {
    return density_derivs(theta, x, y, false).grad;
}

inline Eigen::MatrixXd density_hessian(const ParamVector& theta, double x, int y) {
    return density_derivs(theta, x, y, true).hess;
}

/// Q(x, y; theta) = -d^2/dtheta^2 log p, the observed-information kernel.
inline Eigen::MatrixXd neg_log_density_hessian(const ParamVector& theta, double x, int y) {
    return density_derivs(theta, x, y, true).q;
}

}  // namespace polyserial
