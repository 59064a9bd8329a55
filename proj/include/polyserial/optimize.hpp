#pragma once

// Unconstrained minimization: BFGS with backtracking line search (analytic or
// central-difference gradients) and a Nelder-Mead simplex used as the
// fallback when the quasi-Newton run fails.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace polyserial {

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

enum class OptMethod { quasi_newton, simplex };

struct OptimizerSpec {
    double grad_tol = 1e-7;    // infinity norm of the gradient at convergence
    double step_tol = 1e-10;   // relative step size regarded as a stall
    int max_iterations = 500;
};

struct MinimizeResult {
    Eigen::VectorXd x;
    double value = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    bool converged = false;
    OptMethod method = OptMethod::quasi_newton;
};

/// Central finite-difference gradient with per-coordinate steps.
inline Eigen::VectorXd finite_difference_gradient(const ObjectiveFn& f, const Eigen::VectorXd& x) {
    const double base = std::cbrt(std::numeric_limits<double>::epsilon());
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = base * std::max(1.0, std::abs(x[i]));
        xp[i] = x[i] + h;
        const double fp = f(xp);
        xp[i] = x[i] - h;
        const double fm = f(xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

namespace detail {

inline MinimizeResult bfgs(const ObjectiveFn& f, const GradientFn& grad_in,
                           const Eigen::VectorXd& x0, const OptimizerSpec& spec) {
    const Eigen::Index d = x0.size();
    GradientFn grad = grad_in ? grad_in
                              : GradientFn([&f](const Eigen::VectorXd& x) {
                                    return finite_difference_gradient(f, x);
                                });
    MinimizeResult res;
    res.method = OptMethod::quasi_newton;
    Eigen::VectorXd x = x0;
    double fx = f(x);
    if (!std::isfinite(fx)) {
        res.x = x0;
        res.value = fx;
        return res;
    }
    Eigen::VectorXd g = grad(x);
    Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(d, d);
    bool first_update = true;
    constexpr double c1 = 1e-4;
    for (int iter = 1; iter <= spec.max_iterations; ++iter) {
        res.iterations = iter;
        if (!g.allFinite()) break;
        if (g.lpNorm<Eigen::Infinity>() <= spec.grad_tol) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd p = -(h_inv * g);
        double slope = g.dot(p);
        if (!(slope < 0.0)) {  // bad curvature model; reset to steepest descent
            h_inv.setIdentity();
            p = -g;
            slope = g.dot(p);
            first_update = true;
        }
        double t = 1.0;
        double f_new = std::numeric_limits<double>::infinity();
        Eigen::VectorXd x_new;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = x + t * p;
            f_new = f(x_new);
            if (std::isfinite(f_new) && f_new <= fx + c1 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;  // line search exhausted
        Eigen::VectorXd g_new = grad(x_new);
        Eigen::VectorXd s = x_new - x;
        Eigen::VectorXd yv = g_new - g;
        const double sy = s.dot(yv);
        if (sy > 1e-10 * s.norm() * yv.norm()) {
            if (first_update) {
                h_inv = (sy / yv.squaredNorm()) * Eigen::MatrixXd::Identity(d, d);
                first_update = false;
            }
            const double rho = 1.0 / sy;
            Eigen::MatrixXd left = Eigen::MatrixXd::Identity(d, d) - rho * s * yv.transpose();
            h_inv = left * h_inv * left.transpose() + rho * s * s.transpose();
        }
        const double step = s.lpNorm<Eigen::Infinity>();
        x = x_new;
        fx = f_new;
        g = g_new;
        if (step <= spec.step_tol * (1.0 + x.lpNorm<Eigen::Infinity>())) {
            res.converged = g.lpNorm<Eigen::Infinity>() <= 1e3 * spec.grad_tol;
            break;
        }
    }
    res.x = x;
    res.value = fx;
    return res;
}

inline MinimizeResult nelder_mead(const ObjectiveFn& f, const Eigen::VectorXd& x0,
                                  const OptimizerSpec& spec) {
    const Eigen::Index d = x0.size();
    const int max_iter = std::max(spec.max_iterations, 400 * static_cast<int>(d));
    std::vector<Eigen::VectorXd> v(d + 1, x0);
    std::vector<double> fv(d + 1);
    for (Eigen::Index i = 0; i < d; ++i) {
        double delta = 0.05 * std::abs(x0[i]);
        if (delta < 1e-4) delta = 0.1;
        v[static_cast<std::size_t>(i) + 1][i] += delta;
    }
    for (std::size_t i = 0; i < v.size(); ++i) fv[i] = f(v[i]);
    auto worse = [&](std::size_t i, std::size_t j) {
        const bool fi = std::isfinite(fv[i]), fj = std::isfinite(fv[j]);
        if (fi != fj) return fi;
        return fv[i] < fv[j];
    };
    std::vector<std::size_t> order(v.size());
    MinimizeResult res;
    res.method = OptMethod::simplex;
    int iter = 0;
    for (; iter < max_iter; ++iter) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), worse);
        const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
        double diam = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i)
            diam = std::max(diam, (v[i] - v[best]).lpNorm<Eigen::Infinity>());
        const double fspread = std::abs(fv[worst] - fv[best]);
        if (diam <= 1e-7 * (1.0 + v[best].lpNorm<Eigen::Infinity>()) &&
            fspread <= 1e-9 * (1.0 + std::abs(fv[best]))) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
        for (std::size_t i = 0; i < v.size(); ++i)
            if (i != worst) centroid += v[i];
        centroid /= static_cast<double>(d);
        auto eval = [&](double coef) { return (centroid + coef * (centroid - v[worst])).eval(); };
        Eigen::VectorXd xr = eval(1.0);
        double fr = f(xr);
        if (fr < fv[best]) {
            Eigen::VectorXd xe = eval(2.0);
            double fe = f(xe);
            if (fe < fr) {
                v[worst] = xe;
                fv[worst] = fe;
            } else {
                v[worst] = xr;
                fv[worst] = fr;
            }
        } else if (fr < fv[second]) {
            v[worst] = xr;
            fv[worst] = fr;
        } else {
            const bool outside = fr < fv[worst];
            Eigen::VectorXd xc = eval(outside ? 0.5 : -0.5);
            double fc = f(xc);
            if (fc < std::min(fr, fv[worst])) {
                v[worst] = xc;
                fv[worst] = fc;
            } else {  // shrink toward the best vertex
                for (std::size_t i = 0; i < v.size(); ++i) {
                    if (i == best) continue;
                    v[i] = v[best] + 0.5 * (v[i] - v[best]);
                    fv[i] = f(v[i]);
                }
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (worse(i, best)) best = i;
    res.x = v[best];
    res.value = fv[best];
    res.iterations = iter;
    return res;
}

}  // namespace detail

/// Minimize f from x0.  grad may be empty, in which case central differences
/// are used for the quasi-Newton path.
inline MinimizeResult minimize(const ObjectiveFn& f, const GradientFn& grad,
                               const Eigen::VectorXd& x0, const OptimizerSpec& spec = {},
                               OptMethod method = OptMethod::quasi_newton) {
    if (x0.size() == 0 || !x0.allFinite())
        throw std::invalid_argument("minimize: starting point must be finite and non-empty");
    return method == OptMethod::quasi_newton ? detail::bfgs(f, grad, x0, spec)
                                             : detail::nelder_mead(f, x0, spec);
}

}  // namespace polyserial
