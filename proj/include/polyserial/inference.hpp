#pragma once

// Asymptotic inference for the fitted correlation model: Fisher information,
// sandwich covariance of the minimum-divergence estimators, normal-theory
// confidence intervals, and the relative-efficiency calculator that compares a
// down-weighted estimator against maximum likelihood at a hypothetical truth.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <polyserial/derivatives.hpp>
#include <polyserial/estimators.hpp>
#include <polyserial/model.hpp>
#include <polyserial/normal.hpp>
#include <polyserial/quadrature.hpp>

namespace polyserial {

// Reciprocal-condition-number cutoff below which a symmetric matrix is treated
// as numerically singular and no standard errors are reported.
inline constexpr double rcond_singular_threshold = 1e-12;

struct CovarianceBundle {
    // Asymptotic covariance of sqrt(N) * (estimate - truth); empty when singular.
    Eigen::MatrixXd sigma;
    // Per-coordinate standard errors sqrt(sigma_jj / N); empty when singular.
    std::vector<double> se;
    bool singular = false;
    double rcond = 0.0;      // reciprocal condition number of the inverted matrix
    bool quadrature_ok = true;
    Eigen::MatrixXd j_hat;   // matrix that was inverted (curvature, or score outer product)
    Eigen::MatrixXd k_hat;   // centered weighted score covariance
    Eigen::MatrixXd a_mat;   // integral curvature correction (zero in the likelihood case)
    Eigen::VectorXd xi_hat;  // weighted mean score
};

struct ConfidenceInterval {
    double lower = 0.0;
    double upper = 0.0;

    double length() const { return upper - lower; }
    bool contains(double v) const { return lower <= v && v <= upper; }
};

// Two-sided normal interval: estimate -/+ q_{1-gamma/2} * se.
inline ConfidenceInterval confidence_interval(double estimate, double se, double gamma) {
    if (!(se >= 0.0)) throw std::invalid_argument("confidence_interval: se must be nonnegative");
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("confidence_interval: gamma must lie in (0, 1)");
    const double q = std_normal_quantile(1.0 - gamma / 2.0);
    return {estimate - q * se, estimate + q * se};
}

namespace detail {

struct SymmetricInverse {
    Eigen::MatrixXd inverse;
    double rcond = 0.0;
    bool singular = true;
};

// Inverts a symmetric matrix through its eigendecomposition, refusing when the
// reciprocal condition number falls below rcond_singular_threshold or when
// the input is not finite.
inline SymmetricInverse invert_symmetric(const Eigen::MatrixXd& m) {
    SymmetricInverse out;
    if (!m.allFinite()) return out;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) return out;
    const Eigen::VectorXd& lam = es.eigenvalues();
    const double amax = lam.cwiseAbs().maxCoeff();
    const double amin = lam.cwiseAbs().minCoeff();
    out.rcond = amax > 0.0 ? amin / amax : 0.0;
    if (!(out.rcond >= rcond_singular_threshold)) return out;
    out.inverse = es.eigenvectors() * lam.cwiseInverse().asDiagonal() *
                  es.eigenvectors().transpose();
    out.singular = false;
    return out;
}

// Integrates a symmetric-matrix-valued function over [lo, hi], one adaptive
// quadrature per unique upper-triangle entry; the lower triangle is mirrored so
// symmetry is exact by construction. entry(x, i, j) returns one component.
template <class EntryFn>
Eigen::MatrixXd integrate_symmetric(int dim, double lo, double hi, EntryFn&& entry,
                                    const QuadratureSpec& quad, bool& all_converged) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = i; j < dim; ++j) {
            const QuadResult r =
                integrate_1d([&](double x) { return entry(x, i, j); }, lo, hi, quad);
            all_converged = all_converged && r.converged;
            out(i, j) = r.value;
        }
    }
    out.triangularView<Eigen::StrictlyLower>() = out.transpose();
    return out;
}

// Sums density_derivs over all categories at one abscissa.
inline std::vector<DensityDerivs> all_category_derivs(const ParamVector& theta, double x,
                                                      bool second_order) {
    std::vector<DensityDerivs> out;
    out.reserve(static_cast<std::size_t>(theta.r()));
    for (int y = 1; y <= theta.r(); ++y)
        out.push_back(density_derivs(theta, x, y, second_order));
    return out;
}

}  // namespace detail

// Expected outer product of the score under the model, integrated over the
// truncated support of the continuous coordinate.
inline Eigen::MatrixXd fisher_information(const ParamVector& theta,
                                          const QuadratureSpec& quad = QuadratureSpec{},
                                          bool* converged = nullptr) {
    theta.validate();
    const double lo = theta.mu - integral_truncation_sigmas * theta.sigma();
    const double hi = theta.mu + integral_truncation_sigmas * theta.sigma();
    bool ok = true;
    Eigen::MatrixXd info = detail::integrate_symmetric(
        theta.dim(), lo, hi,
        [&](double x, int i, int j) {
            double acc = 0.0;
            for (int y = 1; y <= theta.r(); ++y) {
                const DensityDerivs dd = density_derivs(theta, x, y, false);
                acc += dd.p * dd.score[i] * dd.score[j];
            }
            return acc;
        },
        quad, ok);
    if (converged) *converged = ok;
    return info;
}

// Curvature correction of the estimating equation: the outer integral of
// p^{1+alpha} * ((1+alpha) s s' - Q).  Vanishes when alpha = 0 because the
// expected outer score product and the expected negative log-density Hessian
// coincide; that cancellation is computed, not short-circuited.
inline Eigen::MatrixXd matrix_a(const ParamVector& theta, double alpha,
                                const QuadratureSpec& quad = QuadratureSpec{},
                                bool* converged = nullptr) {
    theta.validate();
    if (alpha < 0.0) throw std::invalid_argument("matrix_a: alpha must be nonnegative");
    const double lo = theta.mu - integral_truncation_sigmas * theta.sigma();
    const double hi = theta.mu + integral_truncation_sigmas * theta.sigma();
    bool ok = true;
    Eigen::MatrixXd a = detail::integrate_symmetric(
        theta.dim(), lo, hi,
        [&](double x, int i, int j) {
            double acc = 0.0;
            for (int y = 1; y <= theta.r(); ++y) {
                const DensityDerivs dd = density_derivs(theta, x, y, true);
                const double w = std::exp((1.0 + alpha) * dd.logp);
                acc += w * ((1.0 + alpha) * dd.score[i] * dd.score[j] - dd.q(i, j));
            }
            return acc;
        },
        quad, ok);
    if (converged) *converged = ok;
    return a;
}

// Plug-in covariance of the fitted parameters.  For alpha > 0 the middle and
// bread matrices are empirical means of down-weighted score products; for
// alpha = 0 the covariance is the inverted score outer-product matrix, the
// usual large-sample likelihood recipe.
inline CovarianceBundle sandwich_covariance(const ParamVector& theta, const Dataset& data,
                                            double alpha,
                                            const QuadratureSpec& quad = QuadratureSpec{}) {
    theta.validate();
    if (alpha < 0.0) throw std::invalid_argument("sandwich_covariance: alpha must be nonnegative");
    if (data.r != theta.r())
        throw std::invalid_argument("sandwich_covariance: category count mismatch");
    const int d = theta.dim();
    const int n = data.n();
    const bool ml = alpha == 0.0;

    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd weighted_outer = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd xi = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n; ++i) {
        const DensityDerivs dd = density_derivs(theta, data.x[static_cast<std::size_t>(i)],
                                                data.y[static_cast<std::size_t>(i)], !ml);
        const double w = ml ? 1.0 : std::exp(alpha * dd.logp);
        // A density underflow sends the weight to exactly zero while the score
        // and curvature blow up; the weighted products all tend to zero, so
        // such observations contribute nothing.
        if (w <= 0.0) continue;
        const Eigen::MatrixXd outer = dd.score * dd.score.transpose();
        if (!ml) b += w * (dd.q - alpha * outer);
        weighted_outer += (w * w) * outer;
        xi += w * dd.score;
    }
    b /= n;
    weighted_outer /= n;
    xi /= n;

    CovarianceBundle out;
    out.xi_hat = xi;
    out.k_hat = weighted_outer - xi * xi.transpose();
    if (ml) {
        out.a_mat = Eigen::MatrixXd::Zero(d, d);
        out.j_hat = weighted_outer;
        const detail::SymmetricInverse inv = detail::invert_symmetric(out.j_hat);
        out.rcond = inv.rcond;
        if (inv.singular) {
            out.singular = true;
            return out;
        }
        out.sigma = inv.inverse;
    } else {
        out.a_mat = matrix_a(theta, alpha, quad, &out.quadrature_ok);
        out.j_hat = out.a_mat + b;
        const detail::SymmetricInverse inv = detail::invert_symmetric(out.j_hat);
        out.rcond = inv.rcond;
        if (inv.singular) {
            out.singular = true;
            return out;
        }
        out.sigma = inv.inverse * out.k_hat * inv.inverse;
    }
    out.sigma = ((out.sigma + out.sigma.transpose()) / 2.0).eval();
    out.se.resize(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j)
        out.se[static_cast<std::size_t>(j)] = std::sqrt(std::max(0.0, out.sigma(j, j)) / n);
    return out;
}

// Model-implied moments of the estimating equation, with the data-generating
// law set to the model itself.  These drive the efficiency calculator and the
// large-sample identities exercised by the tests.
struct PopulationMoments {
    Eigen::MatrixXd a;      // curvature correction
    Eigen::MatrixXd b;      // expected down-weighted curvature
    Eigen::MatrixXd j;      // a + b
    Eigen::VectorXd xi;     // expected down-weighted score
    Eigen::MatrixXd k;      // centered expected down-weighted score product
    Eigen::MatrixXd sigma;  // j^{-1} k j^{-1}
    bool singular = false;
    double rcond = 0.0;
    bool quadrature_ok = true;
};

inline PopulationMoments population_moments(const ParamVector& theta, double alpha,
                                            const QuadratureSpec& quad = QuadratureSpec{}) {
    theta.validate();
    if (alpha < 0.0) throw std::invalid_argument("population_moments: alpha must be nonnegative");
    const int d = theta.dim();
    const double lo = theta.mu - integral_truncation_sigmas * theta.sigma();
    const double hi = theta.mu + integral_truncation_sigmas * theta.sigma();

    PopulationMoments out;
    out.a = matrix_a(theta, alpha, quad, &out.quadrature_ok);
    out.b = detail::integrate_symmetric(
        d, lo, hi,
        [&](double x, int i, int j) {
            double acc = 0.0;
            for (int y = 1; y <= theta.r(); ++y) {
                const DensityDerivs dd = density_derivs(theta, x, y, true);
                const double w = std::exp((1.0 + alpha) * dd.logp);
                acc += w * (dd.q(i, j) - alpha * dd.score[i] * dd.score[j]);
            }
            return acc;
        },
        quad, out.quadrature_ok);
    out.j = out.a + out.b;

    out.xi = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) {
        const QuadResult r = integrate_1d(
            [&](double x) {
                double acc = 0.0;
                for (int y = 1; y <= theta.r(); ++y) {
                    const DensityDerivs dd = density_derivs(theta, x, y, false);
                    acc += std::exp((1.0 + alpha) * dd.logp) * dd.score[i];
                }
                return acc;
            },
            lo, hi, quad);
        out.quadrature_ok = out.quadrature_ok && r.converged;
        out.xi[i] = r.value;
    }

    Eigen::MatrixXd raw_k = detail::integrate_symmetric(
        d, lo, hi,
        [&](double x, int i, int j) {
            double acc = 0.0;
            for (int y = 1; y <= theta.r(); ++y) {
                const DensityDerivs dd = density_derivs(theta, x, y, false);
                acc += std::exp((1.0 + 2.0 * alpha) * dd.logp) * dd.score[i] * dd.score[j];
            }
            return acc;
        },
        quad, out.quadrature_ok);
    out.k = raw_k - out.xi * out.xi.transpose();

    const detail::SymmetricInverse inv = detail::invert_symmetric(out.j);
    out.rcond = inv.rcond;
    if (inv.singular) {
        out.singular = true;
        return out;
    }
    out.sigma = inv.inverse * out.k * inv.inverse;
    out.sigma = ((out.sigma + out.sigma.transpose()) / 2.0).eval();
    return out;
}

// Asymptotic variance ratio for the correlation coordinate: likelihood variance
// over down-weighted-estimator variance at the supplied truth.  Exactly one at
// alpha = 0, where the two estimators coincide.
inline double relative_efficiency(const ParamVector& theta, double alpha,
                                  const QuadratureSpec& quad = QuadratureSpec{}) {
    theta.validate();
    if (alpha < 0.0) throw std::invalid_argument("relative_efficiency: alpha must be nonnegative");
    if (alpha == 0.0) return 1.0;
    const Eigen::MatrixXd info = fisher_information(theta, quad);
    const detail::SymmetricInverse inv = detail::invert_symmetric(info);
    if (inv.singular)
        throw std::runtime_error("relative_efficiency: information matrix is singular");
    const PopulationMoments pop = population_moments(theta, alpha, quad);
    if (pop.singular)
        throw std::runtime_error("relative_efficiency: estimating-equation curvature is singular");
    return inv.inverse(0, 0) / pop.sigma(0, 0);
}

// Convenience overload sharing one information-matrix computation across a
// whole tuning-constant grid.
inline std::vector<double> relative_efficiency(const ParamVector& theta,
                                               const std::vector<double>& alphas,
                                               const QuadratureSpec& quad = QuadratureSpec{}) {
    theta.validate();
    double info_var = 0.0;
    bool have_info = false;
    std::vector<double> out;
    out.reserve(alphas.size());
    for (double alpha : alphas) {
        if (alpha < 0.0)
            throw std::invalid_argument("relative_efficiency: alpha must be nonnegative");
        if (alpha == 0.0) {
            out.push_back(1.0);
            continue;
        }
        if (!have_info) {
            const Eigen::MatrixXd info = fisher_information(theta, quad);
            const detail::SymmetricInverse inv = detail::invert_symmetric(info);
            if (inv.singular)
                throw std::runtime_error("relative_efficiency: information matrix is singular");
            info_var = inv.inverse(0, 0);
            have_info = true;
        }
        const PopulationMoments pop = population_moments(theta, alpha, quad);
        if (pop.singular)
            throw std::runtime_error("relative_efficiency: estimating-equation curvature is singular");
        out.push_back(info_var / pop.sigma(0, 0));
    }
    return out;
}

}  // namespace polyserial
