#pragma once

// Shared test oracles, kept deliberately independent of the library's own
// computational paths: densities are integrated from the raw bivariate normal
// exponential formula, derivatives are approximated by central differences.

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include <polyserial/model.hpp>
#include <polyserial/rng.hpp>

namespace oracle {

inline constexpr double pi = 3.14159265358979323846;

/// Standard bivariate normal density with correlation rho at (u, v).
inline double binormal_pdf(double u, double v, double rho) {
    const double q2 = 1.0 - rho * rho;
    return std::exp(-0.5 * (u * u - 2.0 * rho * u * v + v * v) / q2) / (2.0 * pi * std::sqrt(q2));
}

/// Composite Simpson rule with n panels (n even forced).
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    if (n % 2 == 1) ++n;
    const double h = (b - a) / n;
    double acc = f(a) + f(b);
    for (int i = 1; i < n; ++i) acc += f(a + i * h) * ((i % 2 == 1) ? 4.0 : 2.0);
    return acc * h / 3.0;
}

/// P(Y = y | X = x) integrated from the exponential formula: the latent
/// strip mass under the conditional-normal slice of the bivariate density.
inline double cond_density_by_quadrature(const polyserial::ParamVector& theta, double x, int y) {
    const double w = (x - theta.mu) / theta.sigma();
    const double m = theta.rho * w;
    const double s = std::sqrt(1.0 - theta.rho * theta.rho);
    const double lo_raw = (y == 1) ? m - 10.0 * s : theta.tau[static_cast<std::size_t>(y - 2)];
    const double hi_raw =
        (y == theta.r()) ? m + 10.0 * s : theta.tau[static_cast<std::size_t>(y - 1)];
    const double lo = std::max(lo_raw, m - 10.0 * s);
    const double hi = std::min(hi_raw, m + 10.0 * s);
    if (hi <= lo) return 0.0;
    auto f = [&](double v) {
        const double z = (v - m) / s;
        return std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * pi));
    };
    return simpson(f, lo, hi, 4000);
}

/// P(X <= x, Y <= y) by brute-force tensor quadrature of the bivariate
/// normal over (-inf, x] x (-inf, tau_y].
inline double joint_cdf_by_quadrature(const polyserial::ParamVector& theta, double x, int y) {
    const double xs = (x - theta.mu) / theta.sigma();
    const double vmax =
        (y == theta.r()) ? 9.0 : std::min(9.0, theta.tau[static_cast<std::size_t>(y - 1)]);
    const double rho = theta.rho;
    auto inner = [&](double u) {
        auto f = [&](double v) { return binormal_pdf(u, v, rho); };
        return simpson(f, -9.0, vmax, 1200);
    };
    return simpson(inner, -9.0, std::min(xs, 9.0), 1200);
}

/// Central finite-difference gradient of a scalar function of the parameter
/// vector, componentwise steps scaled to the parameter magnitude.
inline Eigen::VectorXd fd_gradient(const std::function<double(const polyserial::ParamVector&)>& f,
                                   const polyserial::ParamVector& theta, double h0 = 1e-5) {
    const Eigen::VectorXd v = theta.as_vector();
    Eigen::VectorXd g(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double h = h0 * std::max(1.0, std::abs(v[i]));
        Eigen::VectorXd vp = v, vm = v;
        vp[i] += h;
        vm[i] -= h;
        g[i] = (f(polyserial::ParamVector::from_vector(vp)) -
                f(polyserial::ParamVector::from_vector(vm))) /
               (2.0 * h);
    }
    return g;
}

/// Central finite-difference Jacobian of a vector function of the parameters.
inline Eigen::MatrixXd fd_jacobian(
    const std::function<Eigen::VectorXd(const polyserial::ParamVector&)>& f,
    const polyserial::ParamVector& theta, double h0 = 1e-6) {
    const Eigen::VectorXd v = theta.as_vector();
    Eigen::MatrixXd j;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double h = h0 * std::max(1.0, std::abs(v[i]));
        Eigen::VectorXd vp = v, vm = v;
        vp[i] += h;
        vm[i] -= h;
        Eigen::VectorXd diff = (f(polyserial::ParamVector::from_vector(vp)) -
                                f(polyserial::ParamVector::from_vector(vm))) /
                               (2.0 * h);
        if (j.size() == 0) j.resize(diff.size(), v.size());
        j.col(i) = diff;
    }
    return j;
}

/// Random legal parameter vector for property tests.
inline polyserial::ParamVector random_theta(polyserial::Rng& rng, int r) {
    polyserial::ParamVector theta;
    theta.rho = rng.uniform(-0.85, 0.85);
    theta.mu = rng.uniform(-2.0, 2.0);
    theta.sigma2 = rng.uniform(0.4, 3.0);
    theta.tau.resize(static_cast<std::size_t>(r - 1));
    double t = rng.uniform(-2.0, -0.5);
    for (auto& tk : theta.tau) {
        tk = t;
        t += rng.uniform(0.35, 1.2);
    }
    return theta;
}

}  // namespace oracle
