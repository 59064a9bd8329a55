#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <polyserial/derivatives.hpp>
#include <polyserial/model.hpp>
#include <polyserial/rng.hpp>

#include "oracles.hpp"

using Catch::Approx;
using namespace polyserial;

namespace {

ParamVector reference_theta() {
    ParamVector theta;
    theta.rho = 0.5;
    theta.mu = 0.0;
    theta.sigma2 = 1.0;
    theta.tau = {-1.5, -0.5, 0.5, 1.5};
    return theta;
}

}  // namespace

TEST_CASE("parameter vector legality", "[model]") {
    ParamVector theta = reference_theta();
    CHECK(theta.is_legal());
    CHECK(theta.r() == 5);
    CHECK(theta.dim() == 7);

    SECTION("round trip through flat vector") {
        ParamVector back = ParamVector::from_vector(theta.as_vector());
        CHECK(back.rho == theta.rho);
        CHECK(back.tau == theta.tau);
    }
    SECTION("violations rejected") {
        ParamVector bad = theta;
        bad.rho = 1.0;
        CHECK_FALSE(bad.is_legal());
        bad = theta;
        bad.sigma2 = 0.0;
        CHECK_FALSE(bad.is_legal());
        bad = theta;
        bad.tau = {0.5, 0.5};
        CHECK_FALSE(bad.is_legal());
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }
}

TEST_CASE("dataset validation", "[model]") {
    CHECK_THROWS_AS(Dataset({1.0, 2.0}, {1}, 2), std::invalid_argument);
    CHECK_THROWS_AS(Dataset({1.0}, {3}, 2), std::invalid_argument);
    CHECK_THROWS_AS(Dataset({std::nan("")}, {1}, 2), std::invalid_argument);
    Dataset ds({0.1, -0.5, 2.0}, {1, 2, 2}, 2);
    CHECK(ds.n() == 3);
    CHECK(ds.category_counts() == std::vector<int>{1, 2});
}

TEST_CASE("standardized thresholds", "[model]") {
    ParamVector theta = reference_theta();

    SECTION("rho = 0 leaves thresholds untouched for any x") {
        ParamVector indep = theta;
        indep.rho = 0.0;
        for (double x : {-3.0, 0.0, 1.7}) {
            CHECK(tau_star(indep, x, 1) == Approx(-1.5).margin(1e-15));
            CHECK(tau_star(indep, x, 4) == Approx(1.5).margin(1e-15));
        }
    }
    SECTION("hand value") {
        // (tau_1 - rho w)/sqrt(1-rho^2) with w = 1: (-1.5 - 0.5)/sqrt(0.75)
        CHECK(tau_star(theta, 1.0, 1) == Approx(-2.0 / std::sqrt(0.75)).epsilon(1e-14));
    }
    CHECK_THROWS_AS(tau_star(theta, 0.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(tau_star(theta, 0.0, 5), std::invalid_argument);
}

TEST_CASE("conditional density against strip quadrature", "[model][oracle]") {
    Rng rng(111);
    for (int trial = 0; trial < 60; ++trial) {
        const int r = (trial % 3 == 0) ? 2 : (trial % 3 == 1) ? 3 : 5;
        ParamVector theta = oracle::random_theta(rng, r);
        const double x = theta.mu + theta.sigma() * rng.uniform(-2.5, 2.5);
        const int y = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(r)));
        const double got = cond_density(theta, x, y);
        const double ref = oracle::cond_density_by_quadrature(theta, x, y);
        if (ref > 1e-12) CHECK(got == Approx(ref).epsilon(1e-8));
    }
}

TEST_CASE("conditional densities sum to one and factorize", "[model][property]") {
    Rng rng(222);
    for (int trial = 0; trial < 40; ++trial) {
        ParamVector theta = oracle::random_theta(rng, 2 + static_cast<int>(rng.index(5)));
        const double x = theta.mu + theta.sigma() * rng.uniform(-4.0, 4.0);
        double total = 0.0;
        for (int y = 1; y <= theta.r(); ++y) {
            total += cond_density(theta, x, y);
            CHECK(joint_density(theta, x, y) ==
                  Approx(marginal_density(theta, x) * cond_density(theta, x, y)).epsilon(1e-14));
        }
        CHECK(total == Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("log joint density matches log of density away from the floor", "[model]") {
    ParamVector theta = reference_theta();
    for (double x : {-2.0, 0.0, 0.8}) {
        for (int y : {1, 3, 5}) {
            CHECK(log_joint_density(theta, x, y) ==
                  Approx(std::log(joint_density(theta, x, y))).epsilon(1e-12));
        }
    }
    // Far in the tail the conditional mass underflows; the floor keeps the
    // log finite instead of -inf.
    ParamVector steep = theta;
    steep.rho = 0.95;
    CHECK(std::isfinite(log_joint_density(steep, steep.mu + 40.0, 1)));
}

TEST_CASE("joint cdf against tensor quadrature", "[model][oracle]") {
    ParamVector theta = reference_theta();
    struct Case {
        double x;
        int y;
    };
    for (Case c : {Case{0.0, 2}, Case{1.0, 4}, Case{-0.7, 1}}) {
        const double got = joint_cdf(theta, c.x, c.y);
        const double ref = oracle::joint_cdf_by_quadrature(theta, c.x, c.y);
        CHECK(got == Approx(ref).margin(1e-7));
    }
    SECTION("limits recover the marginals") {
        CHECK(joint_cdf(theta, 1e8, 5) == Approx(1.0).margin(1e-12));
        CHECK(joint_cdf(theta, 0.3, 5) == Approx(std_normal_cdf(0.3)).epsilon(1e-12));
        // x -> +inf with y fixed gives the category cdf P(Y <= y).
        double prob = 0.0;
        ParamVector indep = theta;
        for (int y = 1; y <= 2; ++y) prob += std_normal_interval(
            y == 1 ? -std::numeric_limits<double>::infinity() : indep.tau[0], indep.tau[y - 1]);
        CHECK(joint_cdf(theta, 1e8, 2) == Approx(prob).margin(1e-7));
    }
}

TEST_CASE("point polyserial correlation", "[model]") {
    ParamVector theta = reference_theta();

    SECTION("reference value with integer scores") {
        CHECK(point_polyserial(theta, ScoreSystem::integers(5)) == Approx(0.477).margin(5e-4));
    }
    SECTION("zero at independence, sign follows rho") {
        ParamVector t0 = theta;
        t0.rho = 0.0;
        CHECK(point_polyserial(t0, ScoreSystem::integers(5)) == Approx(0.0).margin(1e-14));
        t0.rho = -0.4;
        CHECK(point_polyserial(t0, ScoreSystem::integers(5)) < 0.0);
    }
    SECTION("Monte Carlo oracle, integer scores") {
        Rng rng(3334);
        const int n = 10'000'000;
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < n; ++i) {
            const double z1 = rng.normal(), z2 = rng.normal();
            const double x = theta.mu + theta.sigma() * z1;
            const double eta = theta.rho * z1 + std::sqrt(1 - theta.rho * theta.rho) * z2;
            int y = 1;
            for (double t : theta.tau) y += eta > t;
            sx += x;
            sy += y;
            sxx += x * x;
            syy += static_cast<double>(y) * y;
            sxy += x * y;
        }
        const double cxy = sxy / n - (sx / n) * (sy / n);
        const double mc = cxy / std::sqrt((sxx / n - sx / n * sx / n) * (syy / n - sy / n * sy / n));
        // 3 Monte Carlo standard errors at n = 1e7.
        CHECK(point_polyserial(theta, ScoreSystem::integers(5)) == Approx(mc).margin(8e-4));
    }
    SECTION("non-integer scores") {
        ScoreSystem scores;
        scores.values = {0.0, 1.0, 4.0, 9.0, 16.0};
        Rng rng(3335);
        const int n = 2'000'000;
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < n; ++i) {
            const double z1 = rng.normal(), z2 = rng.normal();
            const double x = theta.mu + theta.sigma() * z1;
            const double eta = theta.rho * z1 + std::sqrt(1 - theta.rho * theta.rho) * z2;
            int y = 1;
            for (double t : theta.tau) y += eta > t;
            const double s = scores.values[static_cast<std::size_t>(y - 1)];
            sx += x;
            sy += s;
            sxx += x * x;
            syy += s * s;
            sxy += x * s;
        }
        const double cxy = sxy / n - (sx / n) * (sy / n);
        const double mc = cxy / std::sqrt((sxx / n - sx / n * sx / n) * (syy / n - sy / n * sy / n));
        CHECK(point_polyserial(theta, scores) == Approx(mc).margin(2.5e-3));
    }
    SECTION("score validation") {
        ScoreSystem bad;
        bad.values = {1.0, 1.0, 2.0, 3.0, 4.0};
        CHECK_THROWS_AS(point_polyserial(theta, bad), std::invalid_argument);
    }
}

TEST_CASE("score vector against finite differences", "[derivatives][oracle]") {
    Rng rng(444);
    for (int trial = 0; trial < 50; ++trial) {
        const int r = 2 + static_cast<int>(rng.index(4));
        ParamVector theta = oracle::random_theta(rng, r);
        const double x = theta.mu + theta.sigma() * rng.uniform(-2.5, 2.5);
        // Cycle through all categories including both boundary ones.
        const int y = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(r)));
        const Eigen::VectorXd s = score_vector(theta, x, y);
        const Eigen::VectorXd fd = oracle::fd_gradient(
            [&](const ParamVector& t) { return log_joint_density(t, x, y); }, theta);
        for (Eigen::Index i = 0; i < s.size(); ++i)
            CHECK(s[i] == Approx(fd[i]).margin(1e-5 * std::max(1.0, std::abs(s[i]))));
    }
}

TEST_CASE("density gradient and hessian against finite differences", "[derivatives][oracle]") {
    Rng rng(555);
    for (int trial = 0; trial < 30; ++trial) {
        const int r = 2 + static_cast<int>(rng.index(4));
        ParamVector theta = oracle::random_theta(rng, r);
        const double x = theta.mu + theta.sigma() * rng.uniform(-2.0, 2.0);
        const int y = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(r)));

        const Eigen::VectorXd g = density_gradient(theta, x, y);
        const Eigen::VectorXd gfd = oracle::fd_gradient(
            [&](const ParamVector& t) { return joint_density(t, x, y); }, theta);
        for (Eigen::Index i = 0; i < g.size(); ++i)
            CHECK(g[i] == Approx(gfd[i]).margin(1e-6 * std::max(1.0, std::abs(g[i]))));

        const Eigen::MatrixXd h = density_hessian(theta, x, y);
        const Eigen::MatrixXd hfd = oracle::fd_jacobian(
            [&](const ParamVector& t) { return density_gradient(t, x, y); }, theta);
        for (Eigen::Index a = 0; a < h.rows(); ++a)
            for (Eigen::Index b = 0; b < h.cols(); ++b)
                CHECK(h(a, b) ==
                      Approx(hfd(a, b)).margin(1e-4 * std::max(1.0, std::abs(h(a, b)))));
        CHECK((h - h.transpose()).lpNorm<Eigen::Infinity>() < 1e-12);
    }
}

TEST_CASE("negative log-density hessian against score differences", "[derivatives][oracle]") {
    Rng rng(666);
    for (int trial = 0; trial < 30; ++trial) {
        const int r = 2 + static_cast<int>(rng.index(4));
        ParamVector theta = oracle::random_theta(rng, r);
        const double x = theta.mu + theta.sigma() * rng.uniform(-2.0, 2.0);
        const int y = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(r)));
        const Eigen::MatrixXd q = neg_log_density_hessian(theta, x, y);
        const Eigen::MatrixXd qfd = -oracle::fd_jacobian(
            [&](const ParamVector& t) { return score_vector(t, x, y); }, theta);
        for (Eigen::Index a = 0; a < q.rows(); ++a)
            for (Eigen::Index b = 0; b < q.cols(); ++b)
                CHECK(q(a, b) ==
                      Approx(qfd(a, b)).margin(1e-4 * std::max(1.0, std::abs(q(a, b)))));
    }
}

TEST_CASE("marginal density derivative block", "[derivatives]") {
    // Only (mu, sigma2) touch the marginal factor; with r = 2 and rho = 0 the
    // conditional part does not vary with x, isolating the marginal block.
    ParamVector theta;
    theta.rho = 0.0;
    theta.mu = 0.4;
    theta.sigma2 = 1.7;
    theta.tau = {0.3};
    const double x = 1.1;
    const DensityDerivs d = density_derivs(theta, x, 1, true);
    const double w = (x - theta.mu) / theta.sigma();
    const double px = marginal_density(theta, x);
    const double pc = cond_density(theta, x, 1);
    CHECK(d.grad[1] == Approx(pc * px * w / theta.sigma()).epsilon(1e-12));
    CHECK(d.grad[2] ==
          Approx(pc * px * (w * w - 1.0) / (2.0 * theta.sigma2)).epsilon(1e-12));
    CHECK(d.hess(1, 1) == Approx(pc * px * (w * w - 1.0) / theta.sigma2).epsilon(1e-10));
}

TEST_CASE("unconstrained transform", "[model][transform]") {
    Rng rng(777);

    SECTION("round trip") {
        for (int trial = 0; trial < 30; ++trial) {
            ParamVector theta = oracle::random_theta(rng, 2 + static_cast<int>(rng.index(5)));
            ParamVector back = from_unconstrained(to_unconstrained(theta));
            CHECK(back.rho == Approx(theta.rho).margin(1e-10));
            CHECK(back.mu == Approx(theta.mu).margin(1e-10));
            CHECK(back.sigma2 == Approx(theta.sigma2).margin(1e-10));
            for (std::size_t k = 0; k < theta.tau.size(); ++k)
                CHECK(back.tau[k] == Approx(theta.tau[k]).margin(1e-10));
        }
    }
    SECTION("every z maps to a legal parameter vector") {
        for (int trial = 0; trial < 50; ++trial) {
            Eigen::VectorXd z(6);
            for (int i = 0; i < 6; ++i) z[i] = rng.uniform(-4.0, 4.0);
            CHECK(from_unconstrained(z).is_legal());
        }
    }
    SECTION("gradient pullback matches finite differences in z") {
        ParamVector theta = reference_theta();
        auto g = [](const ParamVector& t) {
            double acc = std::sin(t.rho) + t.mu * t.mu + std::log(t.sigma2);
            for (double tk : t.tau) acc += tk * tk * 0.5;
            return acc;
        };
        Eigen::VectorXd grad_theta = oracle::fd_gradient(g, theta, 1e-6);
        Eigen::VectorXd pulled = pullback_gradient(theta, grad_theta);
        const Eigen::VectorXd z0 = to_unconstrained(theta);
        for (Eigen::Index i = 0; i < z0.size(); ++i) {
            const double h = 1e-6 * std::max(1.0, std::abs(z0[i]));
            Eigen::VectorXd zp = z0, zm = z0;
            zp[i] += h;
            zm[i] -= h;
            const double fd = (g(from_unconstrained(zp)) - g(from_unconstrained(zm))) / (2.0 * h);
            CHECK(pulled[i] == Approx(fd).margin(1e-5 * std::max(1.0, std::abs(fd))));
        }
    }
    SECTION("non-finite input rejected") {
        ParamVector bad = reference_theta();
        bad.mu = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(to_unconstrained(bad), std::invalid_argument);
    }
}
