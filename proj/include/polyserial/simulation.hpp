#pragma once

// Monte Carlo machinery: samplers for the model and for every contamination
// design the estimators are benchmarked against, and a repetition harness that
// aggregates the usual performance metrics into a serializable report.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include <Eigen/Dense>

#include <polyserial/copula.hpp>
#include <polyserial/estimators.hpp>
#include <polyserial/inference.hpp>
#include <polyserial/model.hpp>
#include <polyserial/rng.hpp>

namespace polyserial {

enum class ContaminationFamily {
    none,
    shifted_t,
    gross_error,
    correlation_shift,
    clayton_copula,
    gumbel_copula,
};

inline const char* family_name(ContaminationFamily family) {
    switch (family) {
        case ContaminationFamily::none: return "none";
        case ContaminationFamily::shifted_t: return "shifted-t";
        case ContaminationFamily::gross_error: return "gross-error";
        case ContaminationFamily::correlation_shift: return "correlation-shift";
        case ContaminationFamily::clayton_copula: return "clayton-copula";
        case ContaminationFamily::gumbel_copula: return "gumbel-copula";
    }
    return "none";
}

// Bivariate t contamination component: location shift plus a scaled and
// heavy-tailed spread around it.
struct ShiftedTParams {
    Eigen::Vector2d noncentrality{10.0, -2.0};
    Eigen::Matrix2d scale = (Eigen::Matrix2d() << 0.25, 0.0, 0.0, 0.25).finished();
    double df = 10.0;
};

struct SimDesign {
    ParamVector theta_star;
    int n = 500;
    double epsilon = 0.0;  // contaminated fraction, in [0, 0.5)
    ContaminationFamily family = ContaminationFamily::none;
    ShiftedTParams shifted_t{};
    double gross_offset = 1e6;   // gross-error rows sit at (+offset, -offset)
    double copula_rho = 0.7;     // normal-scores correlation targeted by copula designs
    // Thresholds used to discretize the latent coordinate of contaminated rows;
    // empty means the model thresholds.
    std::vector<double> contamination_thresholds{};
    std::uint64_t seed = 0;
    int repetitions = 200;

    bool whole_sample_family() const {
        return family == ContaminationFamily::clayton_copula ||
               family == ContaminationFamily::gumbel_copula;
    }

    void validate() const {
        theta_star.validate();
        if (n < 1) throw std::invalid_argument("SimDesign: n must be at least 1");
        if (!(epsilon >= 0.0 && epsilon < 0.5))
            throw std::invalid_argument("SimDesign: epsilon must lie in [0, 0.5)");
        if (repetitions < 1) throw std::invalid_argument("SimDesign: repetitions must be at least 1");
        if (family == ContaminationFamily::none && epsilon > 0.0)
            throw std::invalid_argument("SimDesign: positive epsilon requires a contamination family");
        if (std::adjacent_find(contamination_thresholds.begin(), contamination_thresholds.end(),
                               [](double a, double b) { return a >= b; }) !=
            contamination_thresholds.end())
            throw std::invalid_argument("SimDesign: contamination thresholds must be strictly increasing");
        if (family == ContaminationFamily::shifted_t) {
            if (!(shifted_t.df > 0.0)) throw std::invalid_argument("SimDesign: t degrees of freedom must be positive");
            Eigen::LLT<Eigen::Matrix2d> llt(shifted_t.scale);
            if (llt.info() != Eigen::Success)
                throw std::invalid_argument("SimDesign: t scale matrix must be positive definite");
        }
    }
};

// A generated sample with its latent coordinate and per-row provenance flags
// (1 = drawn from the contamination or replacement law).
struct DrawnSample {
    Dataset data;
    std::vector<double> latent;
    std::vector<std::uint8_t> contaminated;
};

inline int category_of(double eta, const std::vector<double>& thresholds) {
    int cat = 1;
    for (double t : thresholds) cat += eta > t;
    return cat;
}

// Clean draws from the model: X normal, the latent coordinate standard normal
// with correlation rho to the standardized X, discretized by the thresholds.
inline DrawnSample sample_polyserial(const ParamVector& theta, int n, Rng& rng) {
    theta.validate();
    if (n < 1) throw std::invalid_argument("sample_polyserial: n must be at least 1");
    const std::size_t un = static_cast<std::size_t>(n);
    std::vector<double> x(un), latent(un);
    std::vector<int> y(un);
    const double q = std::sqrt(1.0 - theta.rho * theta.rho);
    for (std::size_t i = 0; i < un; ++i) {
        const double z1 = rng.normal(), z2 = rng.normal();
        x[i] = theta.mu + theta.sigma() * z1;
        latent[i] = theta.rho * z1 + q * z2;
        y[i] = category_of(latent[i], theta.tau);
    }
    return {Dataset(std::move(x), std::move(y), theta.r()), std::move(latent),
            std::vector<std::uint8_t>(un, 0)};
}

// Copula-generated data with standard-normal marginals: (U, V) from the
// dependence family, mapped through the normal quantile, latent coordinate
// discretized by the supplied thresholds.
inline DrawnSample sample_copula_model(CopulaFamily family, double rho_target,
                                       const std::vector<double>& thresholds, int n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_copula_model: n must be at least 1");
    if (thresholds.empty()) throw std::invalid_argument("sample_copula_model: thresholds required");
    const double theta_c = calibrate_copula(family, rho_target);
    const std::size_t un = static_cast<std::size_t>(n);
    std::vector<double> x(un), latent(un);
    std::vector<int> y(un);
    for (std::size_t i = 0; i < un; ++i) {
        auto [u, v] = sample_copula_pair(family, theta_c, rng);
        u = std::clamp(u, 1e-300, 1.0 - 1.1e-16);
        v = std::clamp(v, 1e-300, 1.0 - 1.1e-16);
        x[i] = std_normal_quantile(u);
        latent[i] = std_normal_quantile(v);
        y[i] = category_of(latent[i], thresholds);
    }
    const int r = static_cast<int>(thresholds.size()) + 1;
    return {Dataset(std::move(x), std::move(y), r), std::move(latent),
            std::vector<std::uint8_t>(un, 1)};
}

namespace detail {

// Number of contaminated rows.  The tiny nudge keeps decimal fractions whose
// binary representation falls just below the exact product (0.15 * 10000,
// for instance) from losing a row to floor().
inline int contamination_count(double epsilon, int n) {
    return static_cast<int>(std::floor(epsilon * n + 1e-9));
}

// One (x, latent) draw from the design's contamination component.
inline std::pair<double, double> contamination_draw(const SimDesign& design, Rng& rng) {
    switch (design.family) {
        case ContaminationFamily::shifted_t: {
            const Eigen::Matrix2d l = Eigen::LLT<Eigen::Matrix2d>(design.shifted_t.scale).matrixL();
            const Eigen::Vector2d z{rng.normal(), rng.normal()};
            const double w = rng.chi_square(design.shifted_t.df);
            const Eigen::Vector2d t =
                design.shifted_t.noncentrality + l * z / std::sqrt(w / design.shifted_t.df);
            return {t[0], t[1]};
        }
        case ContaminationFamily::gross_error:
            return {design.gross_offset + rng.normal(), -design.gross_offset + rng.normal()};
        case ContaminationFamily::correlation_shift: {
            const ParamVector& theta = design.theta_star;
            const double z1 = rng.normal(), z2 = rng.normal();
            const double flipped = -theta.rho;
            return {theta.mu + theta.sigma() * z1,
                    flipped * z1 + std::sqrt(1.0 - flipped * flipped) * z2};
        }
        default:
            throw std::logic_error("contamination_draw: family has no contamination component");
    }
}

}  // namespace detail

// Sample under the design: either the two-component mixture with a
// deterministic contaminated-row count at random positions, or — for the
// copula families — a whole-sample replacement where epsilon plays no role.
inline DrawnSample sample_contaminated(const SimDesign& design, Rng& rng) {
    design.validate();
    if (design.family == ContaminationFamily::clayton_copula)
        return sample_copula_model(CopulaFamily::clayton, design.copula_rho,
                                   design.theta_star.tau, design.n, rng);
    if (design.family == ContaminationFamily::gumbel_copula)
        return sample_copula_model(CopulaFamily::gumbel, design.copula_rho,
                                   design.theta_star.tau, design.n, rng);

    DrawnSample sample = sample_polyserial(design.theta_star, design.n, rng);
    const int m = detail::contamination_count(design.epsilon, design.n);
    if (m == 0) return sample;

    std::vector<int> positions(static_cast<std::size_t>(design.n));
    std::iota(positions.begin(), positions.end(), 0);
    for (int k = 0; k < m; ++k) {
        const int j = k + static_cast<int>(rng.index(static_cast<std::uint64_t>(design.n - k)));
        std::swap(positions[static_cast<std::size_t>(k)], positions[static_cast<std::size_t>(j)]);
    }
    const std::vector<double>& thresholds = design.contamination_thresholds.empty()
                                                ? design.theta_star.tau
                                                : design.contamination_thresholds;
    for (int k = 0; k < m; ++k) {
        const std::size_t i = static_cast<std::size_t>(positions[static_cast<std::size_t>(k)]);
        const auto [x, eta] = detail::contamination_draw(design, rng);
        sample.data.x[i] = x;
        sample.latent[i] = eta;
        sample.data.y[i] = category_of(eta, thresholds);
        sample.contaminated[i] = 1;
    }
    return sample;
}

// Acute angle between the directions spanned by two parameter vectors, in
// degrees; invariant to scaling and sign of either argument.
inline double angle_degrees(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw std::invalid_argument("angle_degrees: size mismatch");
    const double na = a.norm(), nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0))
        throw std::invalid_argument("angle_degrees: zero vector has no direction");
    const double c = std::min(1.0, std::abs(a.dot(b)) / (na * nb));
    return std::acos(c) * (180.0 / std::numbers::pi);
}

struct EstimatorSummary {
    std::string label;
    double alpha = 0.0;
    double estimate_mean = 0.0;
    double bias = 0.0;
    double sd = 0.0;
    double se_mean = 0.0;
    double se_bias = 0.0;
    double coverage = 0.0;
    double ci_length = 0.0;
    double angle_rmse = 0.0;
    double nonconv_frac = 0.0;
    double se_fail_frac = 0.0;
    int valid_estimates = 0;  // repetitions entering the estimate metrics
    int valid_se = 0;         // repetitions additionally entering the SE metrics
};

struct SimReport {
    std::string family;
    int n = 0;
    double epsilon = 0.0;
    double rho_star = 0.0;
    std::uint64_t seed = 0;
    int repetitions = 0;
    double gamma = 0.05;
    std::vector<EstimatorSummary> estimators;

    std::string to_csv() const;
    nlohmann::ordered_json to_json() const;
};

namespace detail {

struct RepOutcome {
    bool valid_estimate = false;
    bool singular = false;
    double rho = 0.0;
    double se = 0.0;
    double angle = 0.0;
};

inline std::string format_g6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace detail

inline std::string SimReport::to_csv() const {
    std::string out =
        "estimator,alpha,estimate-mean,bias,sd,se-mean,se-bias,coverage,ci-length,"
        "nonconv-frac,se-fail-frac\n";
    for (const EstimatorSummary& e : estimators) {
        out += e.label;
        for (double v : {e.alpha, e.estimate_mean, e.bias, e.sd, e.se_mean, e.se_bias, e.coverage,
                         e.ci_length, e.nonconv_frac, e.se_fail_frac})
            out += "," + detail::format_g6(v);
        out += "\n";
    }
    return out;
}

inline nlohmann::ordered_json SimReport::to_json() const {
    nlohmann::ordered_json j;
    j["design"] = {{"family", family},     {"n", n},
                   {"epsilon", epsilon},   {"rho-star", rho_star},
                   {"seed", seed},         {"repetitions", repetitions},
                   {"gamma", gamma}};
    j["estimators"] = nlohmann::ordered_json::array();
    for (const EstimatorSummary& e : estimators) {
        j["estimators"].push_back({{"label", e.label},
                                   {"alpha", e.alpha},
                                   {"estimate-mean", e.estimate_mean},
                                   {"bias", e.bias},
                                   {"sd", e.sd},
                                   {"se-mean", e.se_mean},
                                   {"se-bias", e.se_bias},
                                   {"coverage", e.coverage},
                                   {"ci-length", e.ci_length},
                                   {"angle-rmse", e.angle_rmse},
                                   {"nonconv-frac", e.nonconv_frac},
                                   {"se-fail-frac", e.se_fail_frac},
                                   {"valid-estimates", e.valid_estimates},
                                   {"valid-se", e.valid_se}});
    }
    return j;
}

// Runs the repetition study: per repetition an independent RNG stream, one
// sample, and one fit per estimator configuration.  Repetitions that fail to
// converge or trip the threshold-instability screen are excluded from the
// estimate metrics; repetitions whose covariance is singular are additionally
// excluded from the SE metrics.  Aggregation always walks repetitions in index
// order, so any thread count produces the identical report.
inline SimReport run_study(const SimDesign& design, const std::vector<DpdConfig>& configs,
                           double gamma = 0.05, int threads = 1) {
    design.validate();
    if (configs.empty()) throw std::invalid_argument("run_study: no estimator configurations");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("run_study: gamma must lie in (0, 1)");
    if (threads < 1) throw std::invalid_argument("run_study: threads must be at least 1");

    const int reps = design.repetitions;
    const std::size_t m = configs.size();
    std::vector<detail::RepOutcome> grid(static_cast<std::size_t>(reps) * m);
    const Eigen::VectorXd target = design.theta_star.as_vector();

    auto run_range = [&](int lo, int hi) {
        for (int rep = lo; rep < hi; ++rep) {
            Rng rng = Rng::stream(design.seed, static_cast<std::uint64_t>(rep));
            DrawnSample sample = sample_contaminated(design, rng);
            for (std::size_t c = 0; c < m; ++c) {
                detail::RepOutcome& out = grid[static_cast<std::size_t>(rep) * m + c];
                try {
                    const FitResult fit = fit_dpd(sample.data, configs[c]);
                    out.valid_estimate = fit.converged && !fit.threshold_instability;
                    if (!out.valid_estimate) continue;
                    out.rho = fit.theta.rho;
                    out.angle = angle_degrees(fit.theta.as_vector(), target);
                    const CovarianceBundle cov = sandwich_covariance(
                        fit.theta, sample.data, configs[c].alpha, configs[c].quadrature);
                    out.singular = cov.singular;
                    if (!cov.singular) out.se = cov.se[0];
                } catch (const std::exception&) {
                    out.valid_estimate = false;  // counted as nonconvergence
                }
            }
        }
    };

    const int workers = std::min(threads, reps);
    if (workers <= 1) {
        run_range(0, reps);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        const int chunk = (reps + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const int lo = w * chunk;
            const int hi = std::min(reps, lo + chunk);
            if (lo < hi) pool.emplace_back(run_range, lo, hi);
        }
        for (std::thread& t : pool) t.join();
    }

    SimReport report;
    report.family = family_name(design.family);
    report.n = design.n;
    report.epsilon = design.epsilon;
    report.rho_star = design.theta_star.rho;
    report.seed = design.seed;
    report.repetitions = reps;
    report.gamma = gamma;
    const double q = std_normal_quantile(1.0 - gamma / 2.0);

    for (std::size_t c = 0; c < m; ++c) {
        EstimatorSummary s;
        s.alpha = configs[c].alpha;
        s.label = s.alpha == 0.0 ? "ml" : "dpd-" + detail::format_g6(s.alpha);

        std::vector<double> rho_est, angles, rho_se, se_vals;
        int singular_count = 0, covered = 0;
        for (int rep = 0; rep < reps; ++rep) {
            const detail::RepOutcome& out = grid[static_cast<std::size_t>(rep) * m + c];
            if (!out.valid_estimate) continue;
            rho_est.push_back(out.rho);
            angles.push_back(out.angle * out.angle);
            if (out.singular) {
                ++singular_count;
                continue;
            }
            rho_se.push_back(out.rho);
            se_vals.push_back(out.se);
            const ConfidenceInterval ci = {out.rho - q * out.se, out.rho + q * out.se};
            covered += ci.contains(design.theta_star.rho);
        }

        s.valid_estimates = static_cast<int>(rho_est.size());
        s.valid_se = static_cast<int>(rho_se.size());
        s.estimate_mean = detail::mean_of(rho_est);
        s.bias = s.estimate_mean - design.theta_star.rho;
        s.sd = detail::sd_of(rho_est);
        s.angle_rmse = std::sqrt(detail::mean_of(angles));
        s.se_mean = detail::mean_of(se_vals);
        s.se_bias = s.se_mean - detail::sd_of(rho_se);
        s.coverage = rho_se.empty() ? std::numeric_limits<double>::quiet_NaN()
                                    : static_cast<double>(covered) / static_cast<double>(rho_se.size());
        double len = 0.0;
        for (double se : se_vals) len += 2.0 * q * se;
        s.ci_length = se_vals.empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : len / static_cast<double>(se_vals.size());
        s.nonconv_frac = 1.0 - static_cast<double>(s.valid_estimates) / static_cast<double>(reps);
        s.se_fail_frac = static_cast<double>(singular_count) / static_cast<double>(reps);
        report.estimators.push_back(std::move(s));
    }
    return report;
}

}  // namespace polyserial
