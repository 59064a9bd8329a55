#pragma once

// One-dimensional quadrature.
//
// integrate_1d: globally adaptive Gauss-Kronrod (7, 15) with bisection of the
// segment carrying the largest error estimate.  Infinite or semi-infinite
// ranges are mapped onto (0, 1) first.  Non-convergence within the
// subdivision budget is flagged, never silently ignored.
//
// integrate_vector: fixed composite Gauss-Kronrod rule with panel doubling,
// for smooth vector-valued integrands (moment integrals evaluated many times
// inside optimizer loops, where adaptivity per component would be wasteful).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <vector>

#include <Eigen/Dense>

namespace polyserial {

struct QuadratureSpec {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    int max_subdivisions = 200;
};

struct QuadResult {
    double value = 0.0;
    double error = 0.0;        // estimated absolute error
    int subdivisions = 0;
    bool converged = false;
};

namespace detail {

// 15-point Kronrod abscissae/weights and the embedded 7-point Gauss weights.
inline constexpr double gk_x[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double gk_wk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double gk_wg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
    double a, b, value, error;
};

inline bool operator<(const Segment& s1, const Segment& s2) { return s1.error < s2.error; }

template <class F>
Segment gk15(const F& f, double a, double b) {
    const double hlgth = 0.5 * (b - a);
    const double centr = 0.5 * (a + b);
    double fv[15];
    for (int j = 0; j < 7; ++j) {
        fv[j] = f(centr - hlgth * gk_x[j]);
        fv[14 - j] = f(centr + hlgth * gk_x[j]);
    }
    fv[7] = f(centr);
    double resk = 0.0, resabs = 0.0;
    for (int j = 0; j < 7; ++j) {
        resk += gk_wk[j] * (fv[j] + fv[14 - j]);
        resabs += gk_wk[j] * (std::abs(fv[j]) + std::abs(fv[14 - j]));
    }
    resk += gk_wk[7] * fv[7];
    resabs += gk_wk[7] * std::abs(fv[7]);
    double resg = gk_wg[3] * fv[7];
    for (int j = 0; j < 3; ++j) resg += gk_wg[j] * (fv[2 * j + 1] + fv[13 - 2 * j]);
    const double reskh = 0.5 * resk;
    double resasc = gk_wk[7] * std::abs(fv[7] - reskh);
    for (int j = 0; j < 7; ++j)
        resasc += gk_wk[j] * (std::abs(fv[j] - reskh) + std::abs(fv[14 - j] - reskh));
    resasc *= std::abs(hlgth);
    resabs *= std::abs(hlgth);
    double abserr = std::abs((resk - resg) * hlgth);
    if (resasc != 0.0 && abserr != 0.0)
        abserr = resasc * std::min(1.0, std::pow(200.0 * abserr / resasc, 1.5));
    const double eps = std::numeric_limits<double>::epsilon();
    if (resabs > std::numeric_limits<double>::min() / (50.0 * eps))
        abserr = std::max(abserr, 50.0 * eps * resabs);
    return Segment{a, b, resk * hlgth, abserr};
}

template <class F>
QuadResult adaptive_finite(const F& f, double a, double b, const QuadratureSpec& spec) {
    std::priority_queue<Segment> heap;
    heap.push(gk15(f, a, b));
    double total_value = heap.top().value;
    double total_error = heap.top().error;
    int n_seg = 1;
    auto tolerance = [&](double v) { return std::max(spec.abs_tol, spec.rel_tol * std::abs(v)); };
    while (total_error > tolerance(total_value) && n_seg < spec.max_subdivisions) {
        Segment worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        Segment left = gk15(f, worst.a, mid);
        Segment right = gk15(f, mid, worst.b);
        total_value += left.value + right.value - worst.value;
        total_error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        ++n_seg;
        if (!std::isfinite(total_value)) break;
    }
    // Re-accumulate in a fixed order so the result does not depend on the
    // incremental update path.
    std::vector<Segment> segs;
    segs.reserve(static_cast<std::size_t>(n_seg));
    while (!heap.empty()) {
        segs.push_back(heap.top());
        heap.pop();
    }
    std::sort(segs.begin(), segs.end(), [](const Segment& u, const Segment& v) { return u.a < v.a; });
    double value = 0.0, error = 0.0;
    for (const Segment& s : segs) {
        value += s.value;
        error += s.error;
    }
    QuadResult res;
    res.value = value;
    res.error = error;
    res.subdivisions = n_seg;
    res.converged = std::isfinite(value) && error <= tolerance(value);
    return res;
}

}  // namespace detail

/// Integrate f over (a, b); either bound may be infinite.  The integrand must
/// be finite on the open interval.
template <class F>
QuadResult integrate_1d(const F& f, double a, double b, const QuadratureSpec& spec = {}) {
    if (std::isnan(a) || std::isnan(b) || a > b)
        throw std::invalid_argument("integrate_1d: invalid interval");
    if (a == b) return QuadResult{0.0, 0.0, 0, true};
    const bool inf_a = std::isinf(a), inf_b = std::isinf(b);
    if (!inf_a && !inf_b) return detail::adaptive_finite(f, a, b, spec);
    if (inf_a && inf_b) {
        // x = log(t/(1-t)) maps (0,1) onto the whole line.
        auto g = [&f](double t) {
            const double x = std::log(t / (1.0 - t));
            return f(x) / (t * (1.0 - t));
        };
        return detail::adaptive_finite(g, 0.0, 1.0, spec);
    }
    if (inf_b) {
        // x = a + t/(1-t) maps (0,1) onto (a, inf).
        auto g = [&f, a](double t) {
            const double u = 1.0 - t;
            return f(a + t / u) / (u * u);
        };
        return detail::adaptive_finite(g, 0.0, 1.0, spec);
    }
    // x = b - t/(1-t) maps (0,1) onto (-inf, b).
    auto g = [&f, b](double t) {
        const double u = 1.0 - t;
        return f(b - t / u) / (u * u);
    };
    return detail::adaptive_finite(g, 0.0, 1.0, spec);
}

/// Composite 15-point Kronrod rule over [a, b] for a smooth vector-valued
/// integrand, doubling the panel count until the result stabilizes.
template <class F>
Eigen::VectorXd integrate_vector(const F& f, double a, double b, int dim,
                                 double rel_tol = 1e-9, double abs_tol = 1e-12,
                                 int initial_panels = 8, int max_panels = 256) {
    auto composite = [&](int panels) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
        const double h = (b - a) / panels;
        for (int p = 0; p < panels; ++p) {
            const double lo = a + p * h;
            const double centr = lo + 0.5 * h;
            const double hlgth = 0.5 * h;
            Eigen::VectorXd panel = Eigen::VectorXd::Zero(dim);
            for (int j = 0; j < 7; ++j)
                panel += detail::gk_wk[j] *
                         (f(centr - hlgth * detail::gk_x[j]) + f(centr + hlgth * detail::gk_x[j]));
            panel += detail::gk_wk[7] * f(centr);
            acc += panel * hlgth;
        }
        return acc;
    };
    int panels = initial_panels;
    Eigen::VectorXd prev = composite(panels);
    while (panels < max_panels) {
        panels *= 2;
        Eigen::VectorXd next = composite(panels);
        const double diff = (next - prev).template lpNorm<Eigen::Infinity>();
        const double scale = std::max(1e-30, next.template lpNorm<Eigen::Infinity>());
        prev = next;
        if (diff <= std::max(abs_tol, rel_tol * scale)) break;
    }
    return prev;
}

}  // namespace polyserial
