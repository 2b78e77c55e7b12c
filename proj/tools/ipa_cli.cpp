// Command-line front end: global optimization of built-in and user-supplied
// potentials with the amplitude-amplification engine, machine-readable JSON
// results and CSV iteration traces.

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ipa/engine.hpp"

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Options {
    std::string workload;
    std::string n_decimal;
    std::int64_t p_max = 0;
    double beta = 0.0; // 0: workload default
    double ramp_beta = 0.5;
    int depth = 0;
    int dims = 0;
    std::vector<double> domain;
    double tol = 1e-10;
    int max_rank = 64;
    int max_iters = 0;
    std::uint64_t seed = 0x1234abcd;
    std::string out_path;
    std::string trace_path;
    std::string measure = "auto";
    std::string expr_path;
    std::string dump_potential_path;
    bool emit_timing = false;
};

ipa::IpaConfig make_config(const Options& opt, double beta, int max_iters) {
    ipa::IpaConfig cfg;
    cfg.beta = beta;
    cfg.max_iterations = max_iters;
    cfg.rounding = {opt.tol, opt.max_rank};
    cfg.cross.target_tolerance = opt.tol;
    cfg.cross.max_rank = opt.max_rank;
    cfg.cross.random_seed = opt.seed;
    return cfg;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ipa::ConfigError("cannot open output file: " + path);
    f << text;
}

void write_trace(const std::string& path, const ipa::RunResult& res) {
    if (path.empty()) return;
    std::ostringstream os;
    os.precision(17);
    const std::size_t dims = res.trace.empty() ? 0 : res.trace.front().expectation.size();
    os << "iteration,eta";
    for (std::size_t i = 0; i < dims; ++i) os << ",expectation_" << i;
    os << ",max_rank\n";
    for (const auto& rec : res.trace) {
        os << rec.iteration << "," << rec.eta;
        for (double e : rec.expectation) os << "," << e;
        os << "," << rec.max_rank << "\n";
    }
    write_text(path, os.str());
}

void dump_potential_csv(const std::string& path, const ipa::ProductGrid& grid,
                        const ipa::PotentialOracle& pot) {
    if (path.empty()) return;
    if (grid.physical_dims() != 1)
        throw ipa::ConfigError("--dump-potential supports one physical dimension");
    const std::int64_t n = grid.point_count(0);
    if (n > (std::int64_t(1) << 22))
        throw ipa::ConfigError("--dump-potential: grid exceeds the dense size cap");
    std::ostringstream os;
    os.precision(17);
    os << "slot,coordinate,potential,log1p_potential\n";
    for (std::int64_t j = 0; j < n; ++j) {
        const double v = pot.separable(0, j);
        os << j << "," << grid.coord(0, j) << "," << v << "," << std::log1p(v) << "\n";
    }
    write_text(path, os.str());
}

json run_summary(const ipa::RunResult& res) {
    json j;
    j["converged"] = res.converged;
    j["iterations"] = res.state.iteration;
    j["eta_history"] = res.state.eta_history;
    j["final_expectation"] = res.state.expectation_trace.back();
    json crosses = json::array();
    for (const auto& c : res.cross_reports) {
        crosses.push_back({{"validation_error", c.validation_error},
                           {"tolerance_met", c.tolerance_met},
                           {"oracle_evals", c.oracle_evals},
                           {"construction_evals", c.construction_evals},
                           {"sweeps", c.sweeps},
                           {"max_rank", c.max_rank_used}});
    }
    j["cross_reports"] = crosses;
    return j;
}

int finish(const Options& opt, json& result, bool converged) {
    result["status_code"] = converged ? 0 : 2;
    const std::string text = result.dump(2) + "\n";
    if (!opt.out_path.empty()) write_text(opt.out_path, text);
    else std::cout << text;
    return converged ? 0 : 2;
}

// ---------------------------------------------------------------------------

int cmd_dna_like(const Options& opt, const ipa::PotentialOracle& pot,
                 const ipa::ProductGrid& grid, double beta, const std::string& workload,
                 const json& config_echo) {
    const auto t0 = Clock::now();
    ipa::IpaConfig cfg = make_config(opt, beta, opt.max_iters > 0 ? opt.max_iters : 200);
    dump_potential_csv(opt.dump_potential_path, grid, pot);

    const auto t_run = Clock::now();
    const ipa::RunResult res = ipa::run(pot, grid, cfg);
    const double run_s = seconds_since(t_run);
    write_trace(opt.trace_path, res);

    json result;
    result["workload"] = workload;
    result["config"] = config_echo;
    result.update(run_summary(res));
    result["minima"] = {res.state.expectation_trace.back()};
    if (opt.emit_timing)
        result["timing"] = {{"iterations_s", run_s}, {"total_s", seconds_since(t0)}};
    return finish(opt, result, res.converged);
}

int cmd_dna(const Options& opt) {
    const int depth = opt.depth > 0 ? opt.depth : 8;
    const std::size_t dims = opt.dims > 0 ? static_cast<std::size_t>(opt.dims) : 50;
    const double a = opt.domain.size() == 2 ? opt.domain[0] : -1.5;
    const double b = opt.domain.size() == 2 ? opt.domain[1] : 2.5;
    const double beta = opt.beta > 0 ? opt.beta : 10.0;

    const ipa::ProductGrid grid = ipa::ProductGrid::shared(ipa::GridSpec(a, b, depth), dims);
    ipa::DnaPotential dna;
    dna.physical_dims = dims;
    json echo = {{"depth", depth}, {"dims", dims},     {"domain", {a, b}},
                 {"beta", beta},   {"seed", opt.seed}, {"tol", opt.tol}};
    return cmd_dna_like(opt, make_dna_oracle(dna, grid), grid, beta, "dna", echo);
}

json parse_expression_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ipa::ConfigError("cannot open expression file: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
        std::size_t line = 1;
        for (std::size_t i = 0; i < byte && i < text.size(); ++i)
            if (text[i] == '\n') ++line;
        throw ipa::ConfigError("expression file parse error at line " + std::to_string(line) +
                               ": " + e.what());
    }
}

int cmd_custom(const Options& opt) {
    if (opt.expr_path.empty())
        throw ipa::ConfigError("custom workload requires --expr FILE");
    const json expr = parse_expression_file(opt.expr_path);
    if (!expr.contains("coefficients"))
        throw ipa::ConfigError("expression file: missing 'coefficients'");

    ipa::PolynomialPotential poly;
    const json& coeffs = expr["coefficients"];
    if (!coeffs.is_array() || coeffs.empty())
        throw ipa::ConfigError("expression file: 'coefficients' must be a non-empty array");
    std::size_t dims = opt.dims > 0 ? static_cast<std::size_t>(opt.dims) : 0;
    if (coeffs[0].is_array()) {
        for (const auto& c : coeffs) poly.coefficients.push_back(c.get<std::vector<double>>());
        if (dims == 0) dims = poly.coefficients.size();
    } else {
        const auto shared = coeffs.get<std::vector<double>>();
        if (dims == 0) dims = expr.value("dims", 1);
        poly.coefficients.assign(dims, shared);
    }
    if (poly.coefficients.size() != dims)
        throw ipa::ConfigError("expression file: coefficient rows do not match dims");

    const int depth = opt.depth > 0 ? opt.depth : expr.value("depth", 8);
    std::vector<double> dom = opt.domain.size() == 2
                                  ? opt.domain
                                  : expr.value("domain", std::vector<double>{-2.0, 2.0});
    if (dom.size() != 2) throw ipa::ConfigError("expression file: 'domain' must be [a, b]");
    const double beta = opt.beta > 0 ? opt.beta : expr.value("beta", 10.0);

    const ipa::ProductGrid grid =
        ipa::ProductGrid::shared(ipa::GridSpec(dom[0], dom[1], depth), dims);
    json echo = {{"depth", depth}, {"dims", dims},     {"domain", dom},
                 {"beta", beta},   {"seed", opt.seed}, {"tol", opt.tol},
                 {"expr", opt.expr_path}};
    return cmd_dna_like(opt, make_polynomial_oracle(poly, grid), grid, beta, "custom", echo);
}

int cmd_factor(const Options& opt) {
    if (opt.n_decimal.empty())
        throw ipa::ConfigError("factor workload requires --N");
    const auto t0 = Clock::now();

    mpz_class n;
    if (n.set_str(opt.n_decimal, 10) != 0 || n < 2)
        throw ipa::ConfigError("--N must be a decimal integer >= 2");
    std::int64_t p_max = opt.p_max;
    if (p_max <= 0) {
        // default search space: primes up to ceil(sqrt(N))
        mpz_class root, rem;
        mpz_sqrtrem(root.get_mpz_t(), rem.get_mpz_t(), n.get_mpz_t());
        if (rem != 0) root += 1;
        if (!root.fits_slong_p() || root.get_si() > (std::int64_t(1) << 26))
            throw ipa::ConfigError("--p-max required: derived prime bound is too large");
        p_max = std::max<std::int64_t>(2, root.get_si());
    }
    const double beta = opt.beta > 0 ? opt.beta : 30.0;

    const auto t_sieve = Clock::now();
    const ipa::PrimeGrid pg = ipa::PrimeGrid::build(p_max);
    const ipa::ModPotential pot(n, pg);
    const double sieve_s = seconds_since(t_sieve);
    const ipa::ProductGrid grid({ipa::AxisSpec(pg.coord_table())});

    ipa::IpaConfig cfg = make_config(opt, beta, opt.max_iters > 0 ? opt.max_iters : 100);
    dump_potential_csv(opt.dump_potential_path, grid, make_mod_oracle(pot, grid));

    const auto t_run = Clock::now();
    const ipa::RunResult res = ipa::run(make_mod_oracle(pot, grid), grid, cfg);
    const double run_s = seconds_since(t_run);
    write_trace(opt.trace_path, res);

    // measurement: resolve the comb into candidate slots
    const auto t_meas = Clock::now();
    std::vector<std::int64_t> slots;
    bool measurement_complete = true;
    if (opt.measure == "pair") {
        const auto [lo, hi] = ipa::split_pair(res.state.density, grid, 0);
        slots.push_back(grid.nearest_slot(0, lo[0]));
        slots.push_back(grid.nearest_slot(0, hi[0]));
    } else {
        const ipa::MinimaReport rep =
            ipa::resolve_all_minima(res.state.density, grid, opt.ramp_beta, cfg);
        measurement_complete = rep.complete;
        for (const auto& pos : rep.positions) slots.push_back(grid.nearest_slot(0, pos[0]));
    }
    const double meas_s = seconds_since(t_meas);

    // exact verification and multiplicity recovery
    std::vector<std::int64_t> factors;
    std::vector<int> exponents;
    std::vector<std::int64_t> non_divisors;
    for (std::int64_t s : slots) {
        if (pg.is_padded(s)) continue;
        const std::int64_t p = pg.primes[static_cast<std::size_t>(s)];
        if (mpz_divisible_ui_p(n.get_mpz_t(), static_cast<unsigned long>(p))) {
            if (factors.empty() || factors.back() != p) {
                factors.push_back(p);
                exponents.push_back(pot.multiplicity(p));
            }
        } else {
            non_divisors.push_back(p);
        }
    }

    json result;
    result["workload"] = "factor";
    result["config"] = {{"N", opt.n_decimal},         {"p_max", p_max},
                        {"beta", beta},               {"ramp_beta", opt.ramp_beta},
                        {"seed", opt.seed},           {"tol", opt.tol},
                        {"measure", opt.measure}};
    result.update(run_summary(res));
    result["factors"] = factors;
    result["exponents"] = exponents;

    bool ok = measurement_complete && !factors.empty();
    if (factors.empty()) {
        // the global minima are not at zero: report the best remainders seen
        result["status"] = "no_minima_at_zero";
        result["minimal_remainder_primes"] = non_divisors;
        ok = measurement_complete;
    } else {
        mpz_class rebuilt = 1;
        for (std::size_t i = 0; i < factors.size(); ++i)
            for (int e = 0; e < exponents[i]; ++e) rebuilt *= static_cast<unsigned long>(factors[i]);
        result["fully_factored"] = rebuilt == n;
        result["status"] = "ok";
        if (!non_divisors.empty()) result["non_divisor_minima"] = non_divisors;
    }
    if (opt.emit_timing)
        result["timing"] = {{"sieve_s", sieve_s},
                            {"iterations_s", run_s},
                            {"measurement_s", meas_s},
                            {"total_s", seconds_since(t0)}};
    return finish(opt, result, ok);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tensor-train global optimization by iterated amplitude amplification"};
    Options opt;

    app.add_option("--workload", opt.workload, "one of: dna, factor, custom")
        ->required()
        ->check(CLI::IsMember({"dna", "factor", "custom"}));
    app.add_option("--N", opt.n_decimal, "integer to factor (decimal, any length)");
    app.add_option("--p-max", opt.p_max, "largest prime in the search space");
    app.add_option("--beta", opt.beta, "scaling parameter of exp(-beta V)")
        ->check(CLI::PositiveNumber);
    app.add_option("--ramp-beta", opt.ramp_beta, "ramp scaling for the degeneracy sweep")
        ->check(CLI::PositiveNumber);
    app.add_option("--depth", opt.depth, "quantics depth d per physical dimension");
    app.add_option("--dims", opt.dims, "physical dimensions D");
    app.add_option("--domain", opt.domain, "grid interval: a b")->expected(2);
    app.add_option("--tol", opt.tol, "cross/rounding relative tolerance");
    app.add_option("--max-rank", opt.max_rank, "rank cap for rounding and cross");
    app.add_option("--max-iters", opt.max_iters, "iteration cap");
    app.add_option("--seed", opt.seed, "random seed (pivots, checks)");
    app.add_option("--out", opt.out_path, "result JSON path (default: stdout)");
    app.add_option("--trace", opt.trace_path, "iteration trace CSV path");
    app.add_option("--measure", opt.measure, "factor measurement: auto, pair, ramp")
        ->check(CLI::IsMember({"auto", "pair", "ramp"}));
    app.add_option("--expr", opt.expr_path, "custom potential expression file (JSON)");
    app.add_flag("--emit-timing", opt.emit_timing, "include wall-clock timings in the JSON");
    app.add_option("--dump-potential", opt.dump_potential_path,
                   "write slot,coord,V,log1p(V) CSV for 1-D workloads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (opt.workload == "dna") return cmd_dna(opt);
        if (opt.workload == "factor") return cmd_factor(opt);
        return cmd_custom(opt);
    } catch (const ipa::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
