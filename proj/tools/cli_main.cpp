// Command-line front end: fit estimators to CSV data, export per-observation
// diagnostic weights, tabulate relative efficiency, and drive simulation
// studies from config files.
//
// Exit codes: 0 clean fit / success, 1 input or config error, 2 the fit
// completed but carries a flag (nonconvergence, threshold instability, or a
// singular covariance when standard errors were requested).

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <polyserial/estimators.hpp>
#include <polyserial/inference.hpp>
#include <polyserial/simulation.hpp>

namespace {

using nlohmann::ordered_json;
using namespace polyserial;

// Errors that should surface as exit code 1 with a one-line diagnostic.
struct CliError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, sep)) out.push_back(trim(field));
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double parse_double(const std::string& token, const std::string& context) {
    const std::string t = trim(token);
    if (t.empty()) throw CliError(context + ": empty numeric field");
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size() || !std::isfinite(v))
        throw CliError(context + ": '" + t + "' is not a finite number");
    return v;
}

long long parse_int(const std::string& token, const std::string& context) {
    const std::string t = trim(token);
    if (t.empty()) throw CliError(context + ": empty integer field");
    char* end = nullptr;
    const long long v = std::strtoll(t.c_str(), &end, 10);
    if (end != t.c_str() + t.size()) throw CliError(context + ": '" + t + "' is not an integer");
    return v;
}

std::vector<double> parse_double_list(const std::string& csv, const std::string& context) {
    std::vector<double> out;
    for (const std::string& tok : split(csv, ','))
        out.push_back(parse_double(tok, context));
    if (out.empty()) throw CliError(context + ": expected a comma-separated list of numbers");
    return out;
}

std::string format_g6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// CSV ingestion

struct LoadedData {
    std::vector<double> x;
    std::vector<int> y;                  // recoded to 1..r
    int r = 0;
    std::vector<std::string> labels;     // original label for code k at index k-1

    Dataset dataset() const { return Dataset(x, y, r); }
};

bool parses_as_integer(const std::string& token, long long& out) {
    const std::string t = trim(token);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtoll(t.c_str(), &end, 10);
    return end == t.c_str() + t.size();
}

LoadedData load_csv(const std::string& path, const std::string& x_column,
                    const std::string& y_column) {
    std::ifstream in(path);
    if (!in) throw CliError("cannot open input file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw CliError("input file '" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const std::vector<std::string> header = split(line, ',');
    auto column_of = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw CliError("column '" + name + "' not found in header of '" + path + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t xi = column_of(x_column);
    const std::size_t yi = column_of(y_column);

    std::vector<double> x;
    std::vector<std::string> y_raw;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const std::vector<std::string> fields = split(line, ',');
        if (fields.size() <= std::max(xi, yi))
            throw CliError("row " + std::to_string(row) + ": expected at least " +
                           std::to_string(std::max(xi, yi) + 1) + " fields");
        x.push_back(parse_double(fields[xi], "row " + std::to_string(row) + ", column '" +
                                                x_column + "'"));
        y_raw.push_back(trim(fields[yi]));
    }
    if (x.empty()) throw CliError("input file '" + path + "' has no data rows");

    // Integer labels keep their numeric order and must form a gap-free range;
    // any other labels are ranked by sorted order.
    LoadedData out;
    out.x = std::move(x);
    bool all_int = true;
    std::vector<long long> y_int(y_raw.size());
    for (std::size_t i = 0; i < y_raw.size() && all_int; ++i)
        all_int = parses_as_integer(y_raw[i], y_int[i]);

    if (all_int) {
        const auto [mn, mx] = std::minmax_element(y_int.begin(), y_int.end());
        const long long span = *mx - *mn + 1;
        if (span < 2) throw CliError("y-column must contain at least two distinct values");
        if (span > 200)
            throw CliError("y-column spans " + std::to_string(span) +
                           " integer levels; that looks continuous, not ordinal");
        out.r = static_cast<int>(span);
        std::vector<int> counts(static_cast<std::size_t>(out.r), 0);
        out.y.reserve(y_int.size());
        for (long long v : y_int) {
            const int code = static_cast<int>(v - *mn) + 1;
            ++counts[static_cast<std::size_t>(code - 1)];
            out.y.push_back(code);
        }
        for (int k = 0; k < out.r; ++k) {
            out.labels.push_back(std::to_string(*mn + k));
            if (counts[static_cast<std::size_t>(k)] == 0)
                throw CliError("empty category: no observations with y = " +
                               std::to_string(*mn + k) +
                               "; merge adjacent categories or recode");
        }
    } else {
        std::vector<std::string> uniq = y_raw;
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        if (uniq.size() < 2) throw CliError("y-column must contain at least two distinct values");
        if (uniq.size() > 200) throw CliError("y-column has more than 200 distinct labels");
        out.r = static_cast<int>(uniq.size());
        out.labels = uniq;
        out.y.reserve(y_raw.size());
        for (const std::string& v : y_raw) {
            const auto it = std::lower_bound(uniq.begin(), uniq.end(), v);
            out.y.push_back(static_cast<int>(it - uniq.begin()) + 1);
        }
    }
    return out;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CliError("cannot write to '" + path + "'");
    f << content;
    if (!f) throw CliError("write to '" + path + "' failed");
}

void emit(const std::string& out_path, const std::string& content) {
    if (out_path.empty())
        std::cout << content;
    else
        write_text(out_path, content);
}

// ---------------------------------------------------------------------------
// fit / weights

struct FitOptions {
    std::string input;
    std::string x_column = "x";
    std::string y_column = "y";
    std::string estimator = "dpd";
    double alpha = 0.5;
    std::string scores_csv;
    double gamma = 0.05;
    std::string format = "json";
    std::string out;
    std::string weights_out;
    bool sort_weights = false;
};

struct FitPipeline {
    LoadedData loaded;
    FitResult fit;
    CovarianceBundle cov;
    bool have_cov = false;
    std::string method_used;
    double point_polyserial = std::numeric_limits<double>::quiet_NaN();
    bool flagged = false;
};

FitPipeline run_fit_pipeline(const FitOptions& opt, const CLI::App* sub) {
    if (!(opt.alpha >= 0.0 && opt.alpha <= 1.0))
        throw CliError("--alpha must lie in [0, 1]");
    if (!(opt.gamma > 0.0 && opt.gamma < 1.0))
        throw CliError("--gamma must lie in (0, 1)");

    FitPipeline p;
    p.loaded = load_csv(opt.input, opt.x_column, opt.y_column);
    const Dataset data = p.loaded.dataset();

    double effective_alpha = opt.alpha;
    if (opt.estimator == "ml") {
        if (sub->count("--alpha") > 0 && opt.alpha != 0.0)
            std::cerr << "warning: --estimator ml ignores --alpha " << format_g6(opt.alpha)
                      << "\n";
        effective_alpha = 0.0;
        p.fit = fit_ml(data);
        p.have_cov = true;
    } else if (opt.estimator == "two-step") {
        p.fit = fit_two_step(data);
    } else {
        p.fit = fit_dpd(data, DpdConfig{.alpha = opt.alpha});
        p.have_cov = true;
    }
    p.method_used = opt.estimator == "two-step" ? "two-step"
                    : effective_alpha == 0.0    ? "ml"
                                                : "dpd";
    if (p.have_cov) p.cov = sandwich_covariance(p.fit.theta, data, effective_alpha);

    p.point_polyserial = p.fit.point_polyserial;
    if (!opt.scores_csv.empty()) {
        ScoreSystem scores;
        scores.values = parse_double_list(opt.scores_csv, "--scores");
        if (static_cast<int>(scores.values.size()) != p.loaded.r)
            throw CliError("--scores lists " + std::to_string(scores.values.size()) +
                           " values but the data has " + std::to_string(p.loaded.r) +
                           " categories");
        try {
            p.point_polyserial = point_polyserial(p.fit.theta, scores);
        } catch (const std::invalid_argument& e) {
            throw CliError(std::string("--scores: ") + e.what());
        }
    }

    p.flagged = !p.fit.converged || p.fit.threshold_instability ||
                (p.have_cov && p.cov.singular);
    return p;
}

ordered_json fit_report_json(const FitOptions& opt, const FitPipeline& p,
                             const std::string& weights_path) {
    const ParamVector& theta = p.fit.theta;
    ordered_json j;
    j["theta"] = {{"rho", theta.rho}, {"mu", theta.mu}, {"sigma2", theta.sigma2},
                  {"tau", theta.tau}};
    if (p.have_cov && !p.cov.singular) {
        const std::vector<double>& se = p.cov.se;
        std::vector<double> tau_se(se.begin() + 3, se.end());
        j["se"] = {{"rho", se[0]}, {"mu", se[1]}, {"sigma2", se[2]}, {"tau", tau_se}};
        const ConfidenceInterval ci = confidence_interval(theta.rho, se[0], opt.gamma);
        j["ci"] = {ci.lower, ci.upper};
    } else {
        j["se"] = nullptr;
        j["ci"] = nullptr;
    }
    j["point_polyserial"] = p.point_polyserial;
    j["weights_path"] = weights_path.empty() ? ordered_json(nullptr) : ordered_json(weights_path);
    j["converged"] = p.fit.converged;
    j["method_used"] = p.method_used;
    j["threshold_instability"] = p.fit.threshold_instability;
    j["alpha"] = p.fit.alpha;
    j["gamma"] = opt.gamma;
    j["n"] = static_cast<int>(p.loaded.x.size());
    j["r"] = p.loaded.r;
    ordered_json mapping;
    for (int k = 0; k < p.loaded.r; ++k)
        mapping[p.loaded.labels[static_cast<std::size_t>(k)]] = k + 1;
    j["y_mapping"] = mapping;
    j["se_singular"] = p.have_cov ? ordered_json(p.cov.singular) : ordered_json(nullptr);
    j["m_alpha"] = p.fit.m_alpha;
    j["optimizer"] = p.fit.method == OptMethod::quasi_newton ? "quasi-newton" : "simplex";
    j["iterations"] = p.fit.iterations;
    return j;
}

std::string fit_report_csv(const FitOptions& opt, const FitPipeline& p) {
    const ParamVector& theta = p.fit.theta;
    std::string header = "rho,mu,sigma2";
    std::string row = format_g6(theta.rho) + "," + format_g6(theta.mu) + "," +
                      format_g6(theta.sigma2);
    for (std::size_t k = 0; k < theta.tau.size(); ++k) {
        header += ",tau-" + std::to_string(k + 1);
        row += "," + format_g6(theta.tau[k]);
    }
    header += ",se-rho,ci-lower,ci-upper";
    if (p.have_cov && !p.cov.singular) {
        const ConfidenceInterval ci = confidence_interval(theta.rho, p.cov.se[0], opt.gamma);
        row += "," + format_g6(p.cov.se[0]) + "," + format_g6(ci.lower) + "," +
               format_g6(ci.upper);
    } else {
        row += ",,,";
    }
    header += ",point-polyserial,alpha,converged,threshold-instability,se-singular,method";
    row += "," + format_g6(p.point_polyserial) + "," + format_g6(p.fit.alpha) + "," +
           (p.fit.converged ? "1" : "0") + "," + (p.fit.threshold_instability ? "1" : "0") + "," +
           (p.have_cov ? (p.cov.singular ? "1" : "0") : "") + "," + p.method_used;
    return header + "\n" + row + "\n";
}

std::string weights_csv(const FitOptions& opt, const FitPipeline& p) {
    const std::size_t n = p.loaded.x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (opt.sort_weights)
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return p.fit.weights[a] < p.fit.weights[b];
        });
    std::string out = "row-index,x,y,weight\n";
    for (std::size_t i : order) {
        out += std::to_string(i + 1) + "," + format_g6(p.loaded.x[i]) + "," +
               p.loaded.labels[static_cast<std::size_t>(p.loaded.y[i] - 1)] + "," +
               format_g6(p.fit.weights[i]) + "\n";
    }
    return out;
}

int run_fit(const FitOptions& opt, const CLI::App* sub) {
    const FitPipeline p = run_fit_pipeline(opt, sub);
    std::string weights_path;
    if (!opt.weights_out.empty()) {
        write_text(opt.weights_out, weights_csv(opt, p));
        weights_path = opt.weights_out;
    }
    if (opt.format == "json")
        emit(opt.out, fit_report_json(opt, p, weights_path).dump(2) + "\n");
    else
        emit(opt.out, fit_report_csv(opt, p));
    return p.flagged ? 2 : 0;
}

int run_weights(const FitOptions& opt, const CLI::App* sub) {
    const FitPipeline p = run_fit_pipeline(opt, sub);
    emit(opt.out, weights_csv(opt, p));
    return p.flagged ? 2 : 0;
}

// ---------------------------------------------------------------------------
// efficiency

struct EfficiencyOptions {
    double rho = 0.0;
    double mu = 0.0;
    double sigma2 = 1.0;
    std::string tau_csv;
    std::string alphas_csv = "0,0.1,0.25,0.5,0.75,1";
    std::string format = "table";
    std::string out;
};

int run_efficiency(const EfficiencyOptions& opt) {
    ParamVector theta;
    theta.rho = opt.rho;
    theta.mu = opt.mu;
    theta.sigma2 = opt.sigma2;
    theta.tau = parse_double_list(opt.tau_csv, "--tau");
    try {
        theta.validate();
    } catch (const std::invalid_argument& e) {
        throw CliError(std::string("illegal parameter vector: ") + e.what());
    }

    std::vector<double> alphas;
    for (double a : parse_double_list(opt.alphas_csv, "--alphas")) {
        if (a < 0.0) throw CliError("--alphas must be nonnegative");
        if (std::find(alphas.begin(), alphas.end(), a) != alphas.end()) {
            std::cerr << "warning: duplicate alpha " << format_g6(a) << " ignored\n";
            continue;
        }
        alphas.push_back(a);
    }
    const std::vector<double> eff = relative_efficiency(theta, alphas);

    std::string content;
    if (opt.format == "json") {
        ordered_json j;
        j["theta"] = {{"rho", theta.rho}, {"mu", theta.mu}, {"sigma2", theta.sigma2},
                      {"tau", theta.tau}};
        j["alphas"] = alphas;
        j["efficiency"] = eff;
        content = j.dump(2) + "\n";
    } else if (opt.format == "csv") {
        content = "alpha,efficiency\n";
        for (std::size_t i = 0; i < alphas.size(); ++i)
            content += format_g6(alphas[i]) + "," + format_g6(eff[i]) + "\n";
    } else {
        char buf[64];
        std::string row1 = "alpha      ", row2 = "efficiency ";
        for (std::size_t i = 0; i < alphas.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%9.6g", alphas[i]);
            row1 += buf;
            std::snprintf(buf, sizeof buf, "%9.3f", eff[i]);
            row2 += buf;
        }
        content = row1 + "\n" + row2 + "\n";
    }
    emit(opt.out, content);
    return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
    std::string config_path;
    std::string out_override;
    int threads_override = 0;
    std::optional<std::uint64_t> seed_override;
};

struct SimulateSettings {
    SimDesign design;
    std::vector<double> alphas = {0.0, 0.1, 0.25, 0.5, 0.75, 1.0};
    double gamma = 0.05;
    std::string out = "study";
    int threads = 0;  // 0 = unset; resolved against the environment later
};

ContaminationFamily family_from_name(const std::string& name) {
    static const std::map<std::string, ContaminationFamily> names = {
        {"none", ContaminationFamily::none},
        {"shifted-t", ContaminationFamily::shifted_t},
        {"gross-error", ContaminationFamily::gross_error},
        {"correlation-shift", ContaminationFamily::correlation_shift},
        {"clayton-copula", ContaminationFamily::clayton_copula},
        {"gumbel-copula", ContaminationFamily::gumbel_copula},
    };
    const auto it = names.find(name);
    if (it == names.end())
        throw CliError("unknown family '" + name +
                       "' (expected none, shifted-t, gross-error, correlation-shift, "
                       "clayton-copula, or gumbel-copula)");
    return it->second;
}

SimulateSettings parse_sim_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CliError("cannot open config file '" + path + "'");

    SimulateSettings s;
    s.design.theta_star.rho = 0.5;
    s.design.theta_star.mu = 0.0;
    s.design.theta_star.sigma2 = 1.0;
    s.design.theta_star.tau = {-1.5, -0.5, 0.5, 1.5};
    s.design.seed = 1;

    std::vector<std::string> unknown;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw CliError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string ctx = "config key '" + key + "'";

        if (key == "rho") s.design.theta_star.rho = parse_double(value, ctx);
        else if (key == "mu") s.design.theta_star.mu = parse_double(value, ctx);
        else if (key == "sigma2") s.design.theta_star.sigma2 = parse_double(value, ctx);
        else if (key == "tau") s.design.theta_star.tau = parse_double_list(value, ctx);
        else if (key == "n") s.design.n = static_cast<int>(parse_int(value, ctx));
        else if (key == "epsilon") s.design.epsilon = parse_double(value, ctx);
        else if (key == "family") s.design.family = family_from_name(value);
        else if (key == "t-noncentrality") {
            const std::vector<double> v = parse_double_list(value, ctx);
            if (v.size() != 2) throw CliError(ctx + ": expected exactly 2 values");
            s.design.shifted_t.noncentrality << v[0], v[1];
        } else if (key == "t-scale") {
            const std::vector<double> v = parse_double_list(value, ctx);
            if (v.size() == 2)
                s.design.shifted_t.scale << v[0], 0.0, 0.0, v[1];
            else if (v.size() == 3)
                s.design.shifted_t.scale << v[0], v[1], v[1], v[2];
            else
                throw CliError(ctx + ": expected 2 (diagonal) or 3 (s11,s12,s22) values");
        } else if (key == "t-df") s.design.shifted_t.df = parse_double(value, ctx);
        else if (key == "gross-offset") s.design.gross_offset = parse_double(value, ctx);
        else if (key == "copula-rho") s.design.copula_rho = parse_double(value, ctx);
        else if (key == "contamination-tau")
            s.design.contamination_thresholds = parse_double_list(value, ctx);
        else if (key == "seed")
            s.design.seed = static_cast<std::uint64_t>(parse_int(value, ctx));
        else if (key == "repetitions") s.design.repetitions = static_cast<int>(parse_int(value, ctx));
        else if (key == "alphas") s.alphas = parse_double_list(value, ctx);
        else if (key == "gamma") s.gamma = parse_double(value, ctx);
        else if (key == "out") s.out = value;
        else if (key == "threads") s.threads = static_cast<int>(parse_int(value, ctx));
        else unknown.push_back(key);
    }
    if (!unknown.empty()) {
        std::string msg = "unknown config keys:";
        for (const std::string& k : unknown) msg += " " + k;
        throw CliError(msg);
    }
    return s;
}

int resolve_threads(int flag_value, int config_value) {
    if (flag_value > 0) return flag_value;
    if (config_value > 0) return config_value;
    if (const char* env = std::getenv("POLYSERIAL_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

int run_simulate(const SimulateOptions& opt) {
    SimulateSettings s = parse_sim_config(opt.config_path);
    if (!opt.out_override.empty()) s.out = opt.out_override;
    if (opt.seed_override) s.design.seed = *opt.seed_override;
    const int threads = resolve_threads(opt.threads_override, s.threads);

    for (double a : s.alphas)
        if (!(a >= 0.0 && a <= 1.0)) throw CliError("config key 'alphas': values must lie in [0, 1]");
    if (!(s.gamma > 0.0 && s.gamma < 1.0)) throw CliError("config key 'gamma': must lie in (0, 1)");
    try {
        s.design.validate();
    } catch (const std::invalid_argument& e) {
        throw CliError(std::string("invalid design: ") + e.what());
    }

    std::vector<DpdConfig> configs;
    configs.reserve(s.alphas.size());
    for (double a : s.alphas) configs.push_back(DpdConfig{.alpha = a});

    const SimReport report = run_study(s.design, configs, s.gamma, threads);

    const std::string json_path = s.out + ".json";
    const std::string csv_path = s.out + ".csv";
    write_text(json_path, report.to_json().dump(2) + "\n");
    write_text(csv_path, report.to_csv());

    std::cout << "family " << report.family << "  n " << report.n << "  epsilon "
              << format_g6(report.epsilon) << "  repetitions " << report.repetitions << "  seed "
              << report.seed << "  gamma " << format_g6(report.gamma) << "  threads " << threads
              << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-10s", "estimator");
    std::string header = buf;
    for (const char* name : {"alpha", "est-mean", "bias", "sd", "se-mean", "coverage",
                             "ci-length", "nonconv", "se-fail"}) {
        std::snprintf(buf, sizeof buf, "%11s", name);
        header += buf;
    }
    std::cout << header << "\n";
    for (const EstimatorSummary& e : report.estimators) {
        std::snprintf(buf, sizeof buf, "%-10s", e.label.c_str());
        std::string row = buf;
        for (double v : {e.alpha, e.estimate_mean, e.bias, e.sd, e.se_mean, e.coverage,
                         e.ci_length, e.nonconv_frac, e.se_fail_frac}) {
            std::snprintf(buf, sizeof buf, "%11.4g", v);
            row += buf;
        }
        std::cout << row << "\n";
    }
    std::cout << "report written to " << json_path << " and " << csv_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Polyserial correlation estimation with maximum likelihood and "
                 "density-power-divergence fits"};
    app.require_subcommand(1);

    FitOptions fit_opt;
    CLI::App* fit_cmd = app.add_subcommand("fit", "Fit the correlation model to a CSV file");
    fit_cmd->add_option("input", fit_opt.input, "CSV file with a header row")->required();
    fit_cmd->add_option("--x-column", fit_opt.x_column, "continuous column name (default x)");
    fit_cmd->add_option("--y-column", fit_opt.y_column, "ordinal column name (default y)");
    fit_cmd->add_option("--estimator", fit_opt.estimator, "ml, two-step, or dpd (default dpd)")
        ->check(CLI::IsMember({"ml", "two-step", "dpd"}));
    fit_cmd->add_option("--alpha", fit_opt.alpha, "down-weighting exponent in [0, 1] (default 0.5)");
    fit_cmd->add_option("--scores", fit_opt.scores_csv,
                        "comma-separated category scores for the point polyserial correlation");
    fit_cmd->add_option("--gamma", fit_opt.gamma, "two-sided CI miss probability (default 0.05)");
    fit_cmd->add_option("--format", fit_opt.format, "json or csv (default json)")
        ->check(CLI::IsMember({"json", "csv"}));
    fit_cmd->add_option("--out", fit_opt.out, "write the report here instead of stdout");
    fit_cmd->add_option("--weights-out", fit_opt.weights_out,
                        "also write per-observation weights to this CSV");

    FitOptions w_opt;
    CLI::App* w_cmd = app.add_subcommand("weights", "Fit, then export per-observation weights");
    w_cmd->add_option("input", w_opt.input, "CSV file with a header row")->required();
    w_cmd->add_option("--x-column", w_opt.x_column, "continuous column name (default x)");
    w_cmd->add_option("--y-column", w_opt.y_column, "ordinal column name (default y)");
    w_cmd->add_option("--estimator", w_opt.estimator, "ml, two-step, or dpd (default dpd)")
        ->check(CLI::IsMember({"ml", "two-step", "dpd"}));
    w_cmd->add_option("--alpha", w_opt.alpha, "down-weighting exponent in [0, 1] (default 0.5)");
    w_cmd->add_option("--gamma", w_opt.gamma, "two-sided CI miss probability (default 0.05)");
    w_cmd->add_flag("--sort", w_opt.sort_weights, "sort rows by ascending weight");
    w_cmd->add_option("--out", w_opt.out, "write the CSV here instead of stdout");

    EfficiencyOptions e_opt;
    CLI::App* e_cmd = app.add_subcommand(
        "efficiency", "Relative efficiency of the down-weighted estimator at a parameter point");
    e_cmd->add_option("--rho", e_opt.rho, "latent correlation")->required();
    e_cmd->add_option("--mu", e_opt.mu, "mean of x (default 0)");
    e_cmd->add_option("--sigma2", e_opt.sigma2, "variance of x (default 1)");
    e_cmd->add_option("--tau", e_opt.tau_csv, "comma-separated increasing thresholds")->required();
    e_cmd->add_option("--alphas", e_opt.alphas_csv,
                      "comma-separated exponents (default 0,0.1,0.25,0.5,0.75,1)");
    e_cmd->add_option("--format", e_opt.format, "table, json, or csv (default table)")
        ->check(CLI::IsMember({"table", "json", "csv"}));
    e_cmd->add_option("--out", e_opt.out, "write the table here instead of stdout");

    SimulateOptions s_opt;
    CLI::App* s_cmd = app.add_subcommand("simulate", "Run a repetition study from a config file");
    s_cmd->add_option("config", s_opt.config_path, "key = value design file")->required();
    s_cmd->add_option("--out", s_opt.out_override, "report path prefix (overrides config)");
    s_cmd->add_option("--threads", s_opt.threads_override,
                      "worker threads (overrides config and POLYSERIAL_THREADS)");
    std::uint64_t seed_val = 0;
    CLI::Option* seed_flag =
        s_cmd->add_option("--seed", seed_val, "RNG seed (overrides config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (fit_cmd->parsed()) return run_fit(fit_opt, fit_cmd);
        if (w_cmd->parsed()) return run_weights(w_opt, w_cmd);
        if (e_cmd->parsed()) return run_efficiency(e_opt);
        if (s_cmd->parsed()) {
            if (seed_flag->count() > 0) s_opt.seed_override = seed_val;
            return run_simulate(s_opt);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
