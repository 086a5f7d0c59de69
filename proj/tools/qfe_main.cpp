// qfe-lab command line: risk evaluation, worst-case sweeps, rate curves,
// bound audits, and detection calibration, emitting CSV/JSON.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qfe/analytics.hpp"
#include "qfe/bounds.hpp"
#include "qfe/detect.hpp"
#include "qfe/estimators.hpp"
#include "qfe/model.hpp"
#include "qfe/risklab.hpp"
#include "qfe/rng.hpp"

using json = nlohmann::json;
using namespace qfe;

namespace {

// Shortest decimal that round-trips to the same double.
std::string fmt(double x) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

double parse_number(const std::string& s) {
    // Accepts plain decimals and 2^E power notation.
    if (s.rfind("2^", 0) == 0) return std::ldexp(1.0, std::stoi(s.substr(2)));
    return std::stod(s);
}

// "A:B:K" -> K log-spaced points from A to B; or a comma list.
std::vector<double> parse_n_grid(const std::string& s) {
    std::vector<double> out;
    if (s.find(':') != std::string::npos) {
        std::stringstream ss(s);
        std::string a, b, k;
        std::getline(ss, a, ':');
        std::getline(ss, b, ':');
        std::getline(ss, k, ':');
        const double lo = parse_number(a), hi = parse_number(b);
        const int cnt = std::stoi(k);
        if (cnt < 1) throw std::invalid_argument("n grid needs at least one point");
        for (int i = 0; i < cnt; ++i) {
            const double t = (cnt == 1) ? 0.0 : static_cast<double>(i) / (cnt - 1);
            out.push_back(std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo))));
        }
        return out;
    }
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(parse_number(tok));
    if (out.empty()) throw std::invalid_argument("empty n grid");
    return out;
}

// "A:B:STEP" arithmetic grid, inclusive.
std::vector<double> parse_step_grid(const std::string& s) {
    std::stringstream ss(s);
    std::string a, b, st;
    std::getline(ss, a, ':');
    std::getline(ss, b, ':');
    std::getline(ss, st, ':');
    const double lo = std::stod(a), hi = std::stod(b), step = std::stod(st);
    if (step <= 0.0 || hi < lo) throw std::invalid_argument("bad grid spec");
    const auto count = static_cast<long>(std::lround((hi - lo) / step)) + 1;
    std::vector<double> out;
    out.reserve(count);
    for (long i = 0; i < count; ++i) out.push_back(lo + static_cast<double>(i) * step);
    return out;
}

struct BallOpts {
    double p = 1.25;
    double alpha = 0.5;
    double q = std::numeric_limits<double>::infinity();
    double M = 1.0;
    bool besov = false;

    model::BallSpec spec() const {
        return besov ? model::BallSpec::besov(p, q, alpha, M) : model::BallSpec::lp(p, alpha, M);
    }
    void add_options(CLI::App* app) {
        app->add_option("--p", p, "ball shape parameter p");
        app->add_option("--alpha", alpha, "ball smoothness alpha");
        app->add_option("--q", q, "Besov fine index q (default infinity)");
        app->add_option("--M", M, "ball radius M");
        app->add_flag("--besov", besov, "use a Besov ball instead of Lp");
    }
};

model::CoefficientVector parse_theta(const std::string& s, const BallOpts& ball) {
    if (s == "zero") return model::CoefficientVector::zero(1);
    if (s.rfind("spike:", 0) == 0) {
        std::stringstream ss(s.substr(6));
        std::string idx, h;
        std::getline(ss, idx, ':');
        std::getline(ss, h, ':');
        const auto i = static_cast<std::uint64_t>(std::stoull(idx));
        if (h.empty()) return model::spike_config(ball.spec(), i);
        return model::CoefficientVector::from_entries(i, {{i, std::stod(h)}});
    }
    if (s == "dense") {
        const auto family =
            model::adversarial_family(ball.spec(), model::ScheduleView{1, 0}, model::NoiseLevel(4.0));
        return family.back();
    }
    if (s.rfind("file:", 0) == 0) {
        std::ifstream in(s.substr(5));
        if (!in) throw std::invalid_argument("theta file not found");
        json j;
        in >> j;
        std::vector<double> v = j.get<std::vector<double>>();
        return model::CoefficientVector(v);
    }
    throw std::invalid_argument("theta spec must be zero | spike:I[:H] | dense | file:PATH");
}

estimators::Name parse_estimator_name(const std::string& s) {
    if (s == "q1") return estimators::Name::q1;
    if (s == "q2") return estimators::Name::q2;
    if (s == "q3") return estimators::Name::q3;
    if (s == "q4") return estimators::Name::q4;
    if (s == "q5") return estimators::Name::q5;
    if (s == "q6") return estimators::Name::q6;
    if (s == "qtilde") return estimators::Name::qtilde;
    throw std::invalid_argument("unknown estimator: " + s);
}

struct OutFile {
    std::ofstream file;
    std::ostream* os = &std::cout;
    void open(const std::string& path) {
        if (path.empty()) return;
        file.open(path);
        if (!file) throw std::invalid_argument("cannot open output file");
        os = &file;
    }
};

unsigned resolve_workers(unsigned flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("QFE_WORKERS")) {
        const int v = std::atoi(env);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return 0;  // library picks hardware concurrency
}

json report_to_json(const risklab::RiskReport& rep) {
    json j{{"bias", rep.bias},
           {"variance", rep.variance},
           {"risk", rep.risk},
           {"std_error", rep.std_error},
           {"replicates", rep.replicates},
           {"truncation_bias_bound", rep.truncation_bias_bound}};
    json blocks = json::array();
    for (const auto& b : rep.per_block)
        blocks.push_back({{"block", b.block}, {"bias", b.bias}, {"variance", b.variance}});
    j["per_block"] = blocks;
    return j;
}

// Inject --key=value pairs from a JSON config file right after the
// subcommand token, ahead of the explicit flags (flags win: the last
// occurrence is kept).
std::vector<std::string> merge_config(int argc, char** argv) {
    static const std::vector<std::string> kSubcommands = {
        "risk", "sweep", "rates", "lemma-check", "hull-check", "lower-bound", "detect", "fit"};
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    std::size_t sub_pos = args.size();
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
        if (sub_pos == args.size() &&
            std::find(kSubcommands.begin(), kSubcommands.end(), args[i]) != kSubcommands.end())
            sub_pos = i;
    }
    if (config_path.empty() || sub_pos == args.size()) return args;
    std::ifstream in(config_path);
    if (!in) throw std::invalid_argument("config file not found: " + config_path);
    json j;
    in >> j;
    std::vector<std::string> merged(args.begin(), args.begin() + sub_pos + 1);
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.value().is_boolean()) {
            if (it.value().get<bool>()) merged.push_back("--" + it.key());
        } else if (it.value().is_string()) {
            merged.push_back("--" + it.key() + "=" + it.value().get<std::string>());
        } else {
            merged.push_back("--" + it.key() + "=" + it.value().dump());
        }
    }
    merged.insert(merged.end(), args.begin() + sub_pos + 1, args.end());
    return merged;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qfe-lab: quadratic-functional estimation laboratory"};
    app.require_subcommand(1);
    // Later occurrences win, so explicit flags override config-injected ones.
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    unsigned workers_flag = 0;
    std::string out_path;
    std::string config_path;
    app.add_option("--workers", workers_flag, "worker threads (env QFE_WORKERS, default: all)");
    app.add_option("--out", out_path, "output file (default stdout)");
    app.add_option("--config", config_path, "JSON config file; flags override")
        ->expected(1);

    // ---- risk ----------------------------------------------------------
    auto* c_risk = app.add_subcommand("risk", "one exact or Monte Carlo risk report");
    BallOpts risk_ball;
    risk_ball.add_options(c_risk);
    std::string risk_est = "q1", risk_theta = "spike:1:1.0";
    double risk_n = 100.0;
    bool risk_exact = false;
    std::uint64_t risk_reps = 100000, risk_seed = 1;
    std::optional<double> risk_gamma, risk_r;
    std::optional<std::uint64_t> risk_m;
    c_risk->add_option("--estimator", risk_est, "q1|q2|q3|q4|q5|q6|qtilde");
    c_risk->add_option("--n", risk_n, "noise calibration n");
    c_risk->add_option("--theta", risk_theta, "zero | spike:I[:H] | dense | file:PATH");
    c_risk->add_flag("--exact", risk_exact, "deterministic risk instead of Monte Carlo");
    c_risk->add_option("--replicates", risk_reps, "Monte Carlo replicates");
    c_risk->add_option("--seed", risk_seed, "master seed");
    c_risk->add_option("--gamma", risk_gamma, "q4 truncation exponent");
    c_risk->add_option("--r", risk_r, "q6 rate parameter");
    c_risk->add_option("--m", risk_m, "override the quadratic-part length m");

    // ---- sweep ---------------------------------------------------------
    auto* c_sweep = app.add_subcommand("sweep", "worst-case risk over an n grid (CSV)");
    BallOpts sweep_ball;
    sweep_ball.add_options(c_sweep);
    std::string sweep_est = "q3", sweep_grid = "2^10:2^16:4";
    std::optional<double> sweep_gamma, sweep_r;
    std::optional<std::uint64_t> sweep_m;
    c_sweep->add_option("--estimator", sweep_est, "q1|q2|q3|q4|q5|q6|qtilde");
    c_sweep->add_option("--n-grid", sweep_grid, "A:B:K log-spaced or comma list (2^E ok)");
    c_sweep->add_option("--gamma", sweep_gamma, "q4 truncation exponent");
    c_sweep->add_option("--r", sweep_r, "q6 rate parameter");
    c_sweep->add_option("--m", sweep_m, "override m");

    // ---- rates ---------------------------------------------------------
    auto* c_rates = app.add_subcommand("rates", "minimax rate exponent curves (CSV)");
    double rates_p = 1.25;
    std::string rates_alpha = "0.05:0.80:0.01";
    c_rates->add_option("--p", rates_p, "ball shape parameter p");
    c_rates->add_option("--alpha", rates_alpha, "A:B:STEP inclusive alpha grid");

    // ---- lemma-check ---------------------------------------------------
    auto* c_lemma = app.add_subcommand("lemma-check", "audit the threshold-moment bounds");

    // ---- hull-check ----------------------------------------------------
    auto* c_hull = app.add_subcommand("hull-check", "grid test of the hull risk equality");
    BallOpts hull_ball;
    hull_ball.p = 1.0;
    hull_ball.alpha = 1.2;
    hull_ball.add_options(c_hull);
    unsigned hull_rules = 10, hull_dim = 3;
    double hull_grid = 1e-3, hull_n = 100.0;
    std::uint64_t hull_seed = 1;
    c_hull->add_option("--rules", hull_rules, "number of random diagonal rules");
    c_hull->add_option("--dim", hull_dim, "grid dimension (<= 6)");
    c_hull->add_option("--grid", hull_grid, "grid step (<= 1e-2)");
    c_hull->add_option("--n", hull_n, "noise calibration n");
    c_hull->add_option("--seed", hull_seed, "rule seed");

    // ---- lower-bound ---------------------------------------------------
    auto* c_lower = app.add_subcommand("lower-bound", "mixture affinity and CRI values (JSON)");
    std::uint64_t lb_m = 100;
    std::optional<std::uint64_t> lb_k;
    double lb_n = 100.0, lb_c = 1e-3;
    c_lower->add_option("--m", lb_m, "first-block length m");
    c_lower->add_option("--k", lb_k, "spike count (default ceil(sqrt(m)))");
    c_lower->add_option("--n", lb_n, "noise calibration n");
    c_lower->add_option("--c", lb_c, "null-risk constant c");

    // ---- detect --------------------------------------------------------
    auto* c_detect = app.add_subcommand("detect", "calibrate a_n(gamma) over an n grid (CSV)");
    BallOpts det_ball;
    det_ball.p = 1.5;
    det_ball.alpha = 0.25;
    det_ball.add_options(c_detect);
    std::string det_grid = "2^10:2^16:7";
    double det_gamma = 0.1, det_mexp = 0.8;
    std::uint64_t det_reps = 10000, det_seed = 1;
    std::optional<std::uint64_t> det_blocks;
    c_detect->add_option("--n-grid", det_grid, "A:B:K log-spaced n grid");
    c_detect->add_option("--gamma", det_gamma, "target error sum");
    c_detect->add_option("--replicates", det_reps, "replicates per error estimate");
    c_detect->add_option("--seed", det_seed, "master seed");
    c_detect->add_option("--m-exp", det_mexp, "quadratic length m = floor(n^m_exp)");
    c_detect->add_option("--blocks", det_blocks, "threshold blocks (default auto)");

    // ---- fit -----------------------------------------------------------
    auto* c_fit = app.add_subcommand("fit", "log-log slope of a (n, risk) CSV (JSON)");
    std::string fit_input = "-";
    c_fit->add_option("--input", fit_input, "CSV path or - for stdin");

    // Global flags may appear after the subcommand.
    for (auto* sub : {c_risk, c_sweep, c_rates, c_lemma, c_hull, c_lower, c_detect, c_fit})
        sub->fallthrough();

    std::vector<std::string> merged;
    try {
        merged = merge_config(argc, argv);
    } catch (const std::exception& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return 2;
    }
    std::vector<const char*> cargs;
    cargs.push_back(argv[0]);
    for (const auto& s : merged) cargs.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    }

    OutFile out;
    try {
        out.open(out_path);
        const unsigned workers = resolve_workers(workers_flag);

        if (c_risk->parsed()) {
            const model::NoiseLevel n(risk_n);
            estimators::MakeParams params;
            params.gamma = risk_gamma;
            params.r = risk_r;
            params.m_override = risk_m;
            const auto spec = estimators::make_estimator(parse_estimator_name(risk_est),
                                                         risk_ball.spec(), n, params);
            const auto theta = parse_theta(risk_theta, risk_ball);
            json j;
            if (risk_exact) {
                const auto ball = risk_ball.spec();
                j = report_to_json(risklab::exact_risk(spec, theta, n, &ball));
            } else {
                j = report_to_json(risklab::mc_risk(spec, theta, n, risk_reps, risk_seed, workers));
                j["seed"] = risk_seed;
            }
            j["estimator"] = spec.provenance;
            *out.os << j.dump(2) << "\n";
            return 0;
        }

        if (c_sweep->parsed()) {
            const auto ball = sweep_ball.spec();
            estimators::MakeParams params;
            params.gamma = sweep_gamma;
            params.r = sweep_r;
            params.m_override = sweep_m;
            *out.os << "# qfe-lab v1, exact sweep\n";
            *out.os << "n,risk,bias,variance,theta_id\n";
            for (double nn : parse_n_grid(sweep_grid)) {
                const model::NoiseLevel n(nn);
                const auto spec = estimators::make_estimator(parse_estimator_name(sweep_est),
                                                             ball, n, params);
                const auto family = estimators::adversarial_family(ball, spec, n);
                const auto wc = risklab::worst_case_risk_over(spec, family, n);
                *out.os << fmt(nn) << ',' << fmt(wc.report.risk) << ',' << fmt(wc.report.bias)
                        << ',' << fmt(wc.report.variance) << ',' << wc.family_index << "\n";
            }
            return 0;
        }

        if (c_rates->parsed()) {
            *out.os << "# qfe-lab v1, rate exponents, p=" << fmt(rates_p) << "\n";
            *out.os << "alpha,r_star,r_q_star\n";
            for (double alpha : parse_step_grid(rates_alpha)) {
                const double s = alpha + 0.5 - 1.0 / rates_p;
                if (rates_p < 2.0 && s <= 0.0) {
                    *out.os << fmt(alpha) << ",nan,nan\n";
                    continue;
                }
                const auto e = risklab::table1_exponents(rates_p, alpha);
                *out.os << fmt(alpha) << ',' << fmt(e.r_star) << ',' << fmt(e.r_q_star) << "\n";
            }
            return 0;
        }

        if (c_lemma->parsed()) {
            *out.os << "# qfe-lab v1, threshold-moment bound audit\n";
            *out.os << "tau,n,points,worst_slack,ok\n";
            bool all_ok = true;
            for (double tau : {1.0, 2.0, 4.0, 8.0, 16.0}) {
                for (double nn : {1.0, 1e2, 1e4}) {
                    const model::NoiseLevel n(nn);
                    bool ok = true;
                    double worst = 0.0;
                    for (int k = 0; k <= 50; ++k) {
                        const auto rep = analytics::lemma1_check(0.1 * k / std::sqrt(nn), n, tau);
                        ok = ok && rep.all_bounds_hold;
                        worst = std::max({worst, std::fabs(rep.mu0) - rep.bound_mu0,
                                          std::fabs(rep.bias) - rep.bound_bias,
                                          rep.variance - rep.bound_var});
                    }
                    all_ok = all_ok && ok;
                    *out.os << fmt(tau) << ',' << fmt(nn) << ",51," << fmt(worst) << ','
                            << (ok ? "pass" : "FAIL") << "\n";
                }
            }
            return all_ok ? 0 : 1;
        }

        if (c_hull->parsed()) {
            const auto ball = hull_ball.spec();
            rng::Stream s(rng::key2(hull_seed, 0x68756c6cull));
            *out.os << "# qfe-lab v1, hull equality grid test, seed=" << hull_seed << "\n";
            *out.os << "rule,sup_ball,sup_hull,sup_vertices,tolerance,ok\n";
            bool all_ok = true;
            for (unsigned r = 0; r < hull_rules; ++r) {
                std::vector<double> a(hull_dim);
                for (auto& x : a) x = 2.0 * s.next_unit_open();
                const double c = 0.5 * (s.next_unit_open() - 0.5);
                const auto res = risklab::hull_sup_equality(a, c, ball, hull_dim, hull_grid,
                                                            model::NoiseLevel(hull_n));
                const bool ok = std::fabs(res.sup_hull - res.sup_ball) <= res.tolerance &&
                                res.sup_vertices >= res.sup_hull - 1e-12 &&
                                res.sup_vertices >= res.sup_ball - 1e-12;
                all_ok = all_ok && ok;
                *out.os << r << ',' << fmt(res.sup_ball) << ',' << fmt(res.sup_hull) << ','
                        << fmt(res.sup_vertices) << ',' << fmt(res.tolerance) << ','
                        << (ok ? "pass" : "FAIL") << "\n";
            }
            return all_ok ? 0 : 1;
        }

        if (c_lower->parsed()) {
            const std::uint64_t k =
                lb_k.value_or(static_cast<std::uint64_t>(std::ceil(std::sqrt(double(lb_m)))));
            const double aff = bounds::chi_square_affinity(lb_m, k);
            const double limit = 4.0 * std::exp(std::exp(1.0) - 1.0);
            json j{{"m", lb_m},        {"k", k},
                   {"n", lb_n},        {"c", lb_c},
                   {"affinity", aff},  {"affinity_limit", limit}};
            try {
                j["affinity_bound"] = bounds::affinity_bound(lb_m, k);
            } catch (const std::exception&) {
                j["affinity_bound"] = nullptr;  // k != ceil(sqrt(m)) or m < 4
            }
            const double delta = static_cast<double>(k) / lb_n;
            const double eps2 = lb_c * static_cast<double>(lb_m) / (lb_n * lb_n);
            j["cri"] = bounds::cri_lower_bound(delta, eps2, aff);
            j["cri_at_limit"] = bounds::cri_lower_bound(delta, eps2, limit);
            *out.os << j.dump(2) << "\n";
            return 0;
        }

        if (c_detect->parsed()) {
            const auto ball = det_ball.spec();
            *out.os << "# qfe-lab v1, seed=" << det_seed << ", replicates=" << det_reps
                    << ", gamma=" << fmt(det_gamma) << ", m_exp=" << fmt(det_mexp)
                    << ", bisection=20 over [n^-2, M^2]\n";
            *out.os << "n,m,blocks,a,error_sum\n";
            for (double nn : parse_n_grid(det_grid)) {
                const model::NoiseLevel n(nn);
                const auto m = static_cast<std::uint64_t>(
                    std::max(1.0, std::floor(std::pow(nn, det_mexp))));
                // Default depth keeps unobservable family spikes below the
                // sparse configurations' detection level.
                const double need =
                    std::pow(0.2 * std::pow(nn, -0.35), -0.5 / ball.s());
                const std::uint64_t blocks = det_blocks.value_or(
                    static_cast<std::uint64_t>(std::clamp(
                        std::ceil(std::log2(need / static_cast<double>(m))), 8.0, 48.0)));
                const estimators::EstimatorSpec spec{
                    estimators::ThresholdSchedule{m, blocks, estimators::Tail::soft}, "detect"};
                const double a =
                    detect::calibrate_a(spec, n, det_gamma, ball, det_reps, det_seed, workers);
                const auto rates =
                    detect::calibration_error_rates(spec, n, a, ball, det_reps, det_seed, workers);
                *out.os << fmt(nn) << ',' << m << ',' << blocks << ',' << fmt(a) << ','
                        << fmt(rates.sum) << "\n";
            }
            return 0;
        }

        if (c_fit->parsed()) {
            std::istream* in = &std::cin;
            std::ifstream file;
            if (fit_input != "-") {
                file.open(fit_input);
                if (!file) throw std::invalid_argument("fit: cannot open input");
                in = &file;
            }
            std::vector<std::pair<double, double>> pts;
            std::string line;
            while (std::getline(*in, line)) {
                if (line.empty() || line[0] == '#') continue;
                std::stringstream ss(line);
                std::string a, b;
                std::getline(ss, a, ',');
                std::getline(ss, b, ',');
                try {
                    pts.push_back({std::stod(a), std::stod(b)});
                } catch (const std::exception&) {
                    continue;  // header row
                }
            }
            const auto fitres = risklab::rate_fit(pts);
            json j{{"slope", fitres.slope},
                   {"intercept", fitres.intercept},
                   {"r_squared", fitres.r_squared},
                   {"points", fitres.points.size()}};
            *out.os << j.dump(2) << "\n";
            return 0;
        }
    } catch (const std::invalid_argument& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 2;
}
