#include "fixtures.hpp"
#include "gbsde/gexp.hpp"
#include "gbsde/harness.hpp"
#include "gbsde/io.hpp"
#include "gbsde/obstacle_pde.hpp"
#include "gbsde/picard.hpp"
#include "gbsde/sde.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace gbsde;
using namespace gbsde::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

double rel_err(double value, double ref) { return std::abs(value - ref) / std::abs(ref); }

double oracle_put(double strike, double T, double vol, double rate, OracleKind kind)
{
    OracleParams p;
    p.spot = 1.0;
    p.strike = strike;
    p.maturity = T;
    p.volatility = vol;
    p.rate = rate;
    p.steps = 4000;
    return classical_oracle(kind, p);
}

double value_at(const ValueField& u, const Grid& grid, int i, double x) { return u.at(i, 0, x, grid); }

// G-heat closed forms on [-12, 12], 401 x 4000, band [1, 4].
Outcome criterion1()
{
    const GParams gp(1.0, 4.0);
    const Grid grid(-12.0, 12.0, 401, 4000, 1.0, gp);
    const double sq = evaluate_cylinder(CylinderFunctional::squared_increment({1.0}), gp, grid);
    const double neg = evaluate_cylinder(CylinderFunctional::squared_increment({1.0}, -1.0), gp, grid);
    const double lin = evaluate_cylinder(CylinderFunctional::linear({1.0}, 0.0, {1.0}), gp, grid);
    const bool ok = rel_err(sq, 4.0) <= 0.005 && rel_err(neg, -1.0) <= 0.005 && std::abs(lin) <= 1e-6;
    return {ok, "E[B1^2] = " + fmt(sq) + " (4), E[-B1^2] = " + fmt(neg) + " (-1), E[B1] = " + fmt(lin)};
}

// Scenario lower bounds never exceed the PDE value; the constant extreme attains it.
Outcome criterion2()
{
    const GParams gp(1.0, 4.0);
    const Grid grid(-12.0, 12.0, 401, 4000, 1.0, gp);
    const auto controls = default_control_family(gp, 1.0);
    struct Case {
        std::string name;
        CylinderFunctional func;
        int extreme; // index of the constant control expected to attain the value
    };
    const std::vector<Case> cases = {
        {"B1^2", CylinderFunctional::squared_increment({1.0}), 1},
        {"-B1^2", CylinderFunctional::squared_increment({1.0}, -1.0), 0},
        {"put(0)", CylinderFunctional::legs({1.0}, {PayoffLeg{true, 0.0}}), 1},
        {"put(0.5)", CylinderFunctional::legs({1.0}, {PayoffLeg{true, 0.5}}), 1},
        {"call(0.5)", CylinderFunctional::legs({1.0}, {PayoffLeg{false, 0.5}}), 1},
    };
    bool ok = true;
    std::ostringstream detail;
    for (const auto& c : cases) {
        const double value = evaluate_cylinder(c.func, gp, grid);
        const ScenarioTable table = sup_over_scenarios(c.func, gp, controls, 10000, 1);
        const auto& attain = table.rows[static_cast<std::size_t>(c.extreme)];
        const bool below = table.best_mean() <= value + 0.005 * std::abs(value) + 3.0 * table.best_std_error();
        const bool attained = std::abs(attain.mean - value) <= 0.005 * std::abs(value) + 3.0 * attain.std_error;
        ok = ok && below && attained;
        detail << c.name << ": pde " << fmt(value) << " mc " << fmt(attain.mean) << "+-" << fmt(attain.std_error)
               << (below && attained ? "" : " <-") << "; ";
    }
    return {ok, detail.str()};
}

// Degenerate band: American put corpus against the binomial tree.
Outcome criterion3()
{
    bool ok = true;
    double worst = 0.0;
    for (double strike : {0.9, 1.0, 1.1}) {
        for (double T : {0.5, 1.0}) {
            const ProblemSpec spec = put_spec(strike, T);
            const Grid grid = make_grid(spec, 0.0, 2.5, 301, 1, 4096.0);
            const SolveResult r = solve_obstacle(spec, grid, PenaltySchedule::doubling(12, default_stop_tolerance(spec, grid)));
            const double ref = oracle_put(strike, T, 0.2, 0.0, OracleKind::binomial_american);
            const double err = rel_err(value_at(r.u, grid, 0, 1.0), ref);
            worst = std::max(worst, err);
            ok = ok && err <= 0.01;
        }
    }
    const ProblemSpec spec = rate_put_spec();
    const Grid grid = make_grid(spec, 0.0, 2.5, 301, 1, 4096.0);
    const SolveResult r = solve_obstacle(spec, grid, PenaltySchedule::doubling(12, default_stop_tolerance(spec, grid)));
    const double rate_err = rel_err(value_at(r.u, grid, 0, 1.0), oracle_put(1.0, 1.0, 0.2, 0.05, OracleKind::binomial_american));
    ok = ok && rate_err <= 0.01;
    return {ok, "worst relative error " + fmt(worst) + " over 6 puts; rate put " + fmt(rate_err)};
}

// Band [0.01, 0.04], convex put, no obstacle: Black-Scholes at sigma_hi.
Outcome criterion4()
{
    const ProblemSpec spec = unreflected(put_spec(1.0, 1.0, 0.01, 0.04));
    const Grid grid = make_grid(spec, 0.0, 2.5, 301, 1);
    const ValueField u = solve_penalized(spec, 0.0, grid);
    const double value = value_at(u, grid, 0, 1.0);
    const double ref = oracle_put(1.0, 1.0, 0.2, 0.0, OracleKind::bs_european);
    const double err = rel_err(value, ref);

    ProblemSpec call = unreflected(put_spec(1.0, 1.0, 0.01, 0.04));
    call.phi = {CoefficientFn::call(1.0)};
    const ValueField uc = solve_penalized(call, 0.0, make_grid(call, 0.0, 4.0, 401, 1));
    OracleParams p;
    p.put = false;
    const double ref_call = classical_oracle(OracleKind::bs_european, p);
    const double err_call = rel_err(value_at(uc, make_grid(call, 0.0, 4.0, 401, 1), 0, 1.0), ref_call);
    return {err <= 0.01 && err_call <= 0.01,
            "put " + fmt(value) + " vs " + fmt(ref) + " (rel " + fmt(err) + "), call rel " + fmt(err_call)};
}

// Penalty schedule m = 1..256 on the American put with rate.
Outcome criterion5()
{
    const ProblemSpec spec = rate_put_spec();
    const Grid grid = make_grid(spec, 0.0, 2.5, 201, 1, 256.0);
    const SolveResult r = solve_obstacle(spec, grid, PenaltySchedule::doubling(8, 1e-300));
    const auto& tr = r.trace;
    bool mono = tr.size() == 9;
    bool neg_decreasing = mono;
    bool delta_decreasing = mono;
    double min_inc = 0.0;
    for (std::size_t n = 0; n < tr.size(); ++n) {
        min_inc = std::min(min_inc, tr[n].min_increment);
        mono = mono && tr[n].min_increment >= -10.0 * grid.dt();
        if (n > 0) {
            neg_decreasing = neg_decreasing && tr[n].sup_neg_part < tr[n - 1].sup_neg_part;
            delta_decreasing = delta_decreasing && tr[n].sup_delta < tr[n - 1].sup_delta;
        }
    }
    const bool tenfold = !tr.empty() && tr.back().sup_neg_part < tr.front().sup_neg_part / 10.0;
    return {mono && neg_decreasing && tenfold && delta_decreasing,
            "min increment " + fmt(min_inc) + " (>= " + fmt(-10.0 * grid.dt()) + "), neg part "
                + fmt(tr.front().sup_neg_part) + " -> " + fmt(tr.back().sup_neg_part) + ", deltas "
                + fmt(tr.front().sup_delta) + " -> " + fmt(tr.back().sup_delta)};
}

// Ordered pairs: u_hi >= u_lo - 10 stop tolerance everywhere.
Outcome criterion6()
{
    struct Pair {
        std::string name;
        ProblemSpec hi;
        ProblemSpec lo;
    };
    std::vector<Pair> pairs;
    {
        ProblemSpec hi = rate_put_spec();
        hi.phi = {CoefficientFn::put(1.0, 1.0, 0.05)};
        pairs.push_back({"terminal", hi, rate_put_spec()});
    }
    {
        ProblemSpec lo = rate_put_spec();
        lo.l = {CoefficientFn::put(1.0, 1.0, -0.05)};
        pairs.push_back({"obstacle", rate_put_spec(), lo});
    }
    {
        ProblemSpec hi = rate_put_spec();
        hi.f = {GeneratorFn(0, {{GeneratorTermKind::linear_y, -0.05, 0}, {GeneratorTermKind::constant, 0.02, 0}})};
        pairs.push_back({"generator", hi, rate_put_spec()});
    }
    {
        ProblemSpec hi = put_spec(1.0, 1.0, 0.01, 0.04);
        hi.g = {GeneratorFn(0, {{GeneratorTermKind::abs_z, 0.5, 0}})};
        pairs.push_back({"z-generator", hi, put_spec(1.0, 1.0, 0.01, 0.04)});
    }
    {
        ProblemSpec hi = coupled_spec();
        hi.phi[0] = CoefficientFn::put(1.0, 1.0, 0.03);
        pairs.push_back({"k=2 coupling", hi, coupled_spec()});
    }
    bool ok = true;
    std::ostringstream detail;
    for (const auto& pair : pairs) {
        const Grid grid = make_grid(pair.hi, 0.0, 2.5, 151, 1, 256.0);
        const ComparisonReport rep = comparison_check(pair.hi, pair.lo, grid,
                                                      PenaltySchedule::doubling(8, default_stop_tolerance(pair.hi, grid)));
        ok = ok && rep.ordered && rep.violations == 0;
        detail << pair.name << ": " << rep.violations << " violations, worst " << fmt(rep.worst_violation) << "; ";
    }
    return {ok, detail.str()};
}

// Picard stitching against the penalty solver, k = 1 and k = 2.
Outcome criterion7()
{
    struct Case {
        std::string name;
        ProblemSpec spec;
        int nx;
        int j_max;
    };
    const std::vector<Case> cases = {{"k=1", rate_put_spec(), 151, 8}, {"k=2", coupled_spec(), 101, 6}};
    bool ok = true;
    std::ostringstream detail;
    for (const auto& c : cases) {
        const Grid grid = make_grid(c.spec, 0.0, 2.5, c.nx, 1, std::ldexp(1.0, c.j_max));
        const SolveResult ref =
            solve_obstacle(c.spec, grid, PenaltySchedule::doubling(c.j_max, default_stop_tolerance(c.spec, grid)));
        PicardConfig cfg;
        cfg.penalty_m = ref.final_m;
        const PicardResult r = picard_global_solve(c.spec, grid, cfg);
        const double dist = r.u.sup_distance(ref.u);
        const double bound = 2.0 * (ref.stop_tolerance + cfg.inner_tolerance);
        ok = ok && ref.converged && r.converged && dist <= bound && r.max_certificate() <= 0.5;
        detail << c.name << ": sup diff " << fmt(dist) << " (<= " << fmt(bound) << "), certificate "
               << fmt(r.max_certificate()) << "; ";
    }
    return {ok, detail.str()};
}

// Reconstructed (Y, Z, A) along 1000 paths under the upper extreme control.
Outcome criterion8()
{
    struct Case {
        std::string name;
        ProblemSpec spec;
    };
    const std::vector<Case> cases = {{"rate put", rate_put_spec()}, {"k=2 coupled", coupled_spec()}};
    bool ok = true;
    std::ostringstream detail;
    for (const auto& c : cases) {
        const Grid grid = make_grid(c.spec, 0.0, 2.5, 201, 1, 256.0);
        const SolveResult r = solve_obstacle(c.spec, grid, PenaltySchedule::doubling(8, default_stop_tolerance(c.spec, grid)));
        const ScenarioControl control = ScenarioControl::constant(c.spec.T, c.spec.g_params.sigma_hi_sq());
        const PathEnsemble ens = simulate_gsde(c.spec, control, c.spec.x0, grid.nt(), 1000, 1);
        const PathSolution ps = reconstruct_paths(r.u, c.spec, grid, ens, control);
        ok = ok && ps.min_obstacle_gap >= -ps.tol_path && ps.min_a_increment >= -ps.tol_path;
        detail << c.name << ": min gap " << fmt(ps.min_obstacle_gap) << ", min dA " << fmt(ps.min_a_increment)
               << ", tol_path " << fmt(ps.tol_path) << ", Skorohod mean " << fmt(ps.skorohod_mean) << " +- "
               << fmt(ps.skorohod_stderr) << " (reported); ";
    }
    return {ok, detail.str()};
}

// Unreflected residual under dx / 2, dt / 4 over three refinements.
Outcome criterion9()
{
    const ProblemSpec spec = unreflected(put_spec(1.0, 1.0, 0.01, 0.04));
    const double scale = max_sigma_sq(spec, 0.0, 2.5, 101);
    double previous = 0.0;
    bool ok = true;
    std::ostringstream detail;
    detail << "ratios";
    for (int level = 0; level <= 3; ++level) {
        const int nx = 100 * (1 << level) + 1;
        const int nt = 800 * (1 << (2 * level));
        const Grid grid(0.0, 2.5, nx, nt, 1.0, spec.g_params, scale);
        const double res = complementarity_residual(solve_penalized(spec, 0.0, grid), spec, grid)
                               .window_sup(grid, 0.625, 1.875, 0.0, 0.5);
        if (level > 0) {
            const double ratio = previous / res;
            ok = ok && ratio >= 3.0 && ratio <= 5.0;
            detail << " " << fmt(ratio);
        }
        previous = res;
    }
    return {ok, detail.str()};
}

std::string paths_csv(const PathEnsemble& ens)
{
    CsvWriter csv({"path", "step", "t", "x"});
    for (int p = 0; p < ens.n_paths(); ++p) {
        for (int j = 0; j <= ens.n_steps(); ++j) {
            csv.cell(static_cast<long long>(p)).cell(static_cast<long long>(j)).cell(ens.times(j)).cell(ens.states(p, j)).end_row();
        }
    }
    return csv.str();
}

// Fixed seeds give byte-identical CSVs.
Outcome criterion10()
{
    const ProblemSpec spec = rate_put_spec();
    const Grid grid = make_grid(spec, 0.0, 2.5, 101, 1, 256.0);
    auto run = [&] {
        const SolveResult r = solve_obstacle(spec, grid, PenaltySchedule::doubling(8, default_stop_tolerance(spec, grid)));
        const ScenarioControl control = ScenarioControl::constant(1.0, 0.04);
        const PathEnsemble ens = simulate_gsde(spec, control, 1.0, grid.nt(), 50, 42);
        const GParams gp(1.0, 4.0);
        const ScenarioTable table = sup_over_scenarios(CylinderFunctional::squared_increment({1.0}), gp,
                                                       default_control_family(gp, 1.0), 1000, 42);
        return std::vector<std::string>{field_csv(r.u, &r.residual, spec, grid, 1), r.trace_csv(), paths_csv(ens),
                                        table.to_csv(), reconstruct_paths(r.u, spec, grid, ens, control).extrema_csv()};
    };
    const auto a = run();
    const auto b = run();
    return {a == b, std::to_string(a.size()) + " CSV outputs compared byte for byte"};
}

} // namespace

int main()
{
    const std::vector<std::function<Outcome()>> criteria = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                                           criterion6, criterion7, criterion8, criterion9, criterion10};
    int failures = 0;
    for (std::size_t n = 0; n < criteria.size(); ++n) {
        Outcome out;
        try {
            out = criteria[n]();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        failures += out.pass ? 0 : 1;
        std::printf("%s criterion %zu: %s\n", out.pass ? "PASS" : "FAIL", n + 1, out.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
