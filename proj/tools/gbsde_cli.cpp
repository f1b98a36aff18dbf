// Batch front end: gbsde <command> [options]. Exit codes: 0 ok, 1 usage, 2 validation, 3 non-convergence.

#include "gbsde/core.hpp"
#include "gbsde/gexp.hpp"
#include "gbsde/harness.hpp"
#include "gbsde/io.hpp"
#include "gbsde/obstacle_pde.hpp"
#include "gbsde/picard.hpp"
#include "gbsde/sde.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace gbsde;

namespace {

constexpr const char* kVersion = "0.1.0";

enum ExitCode { kOk = 0, kUsage = 1, kInvalid = 2, kNotConverged = 3 };

struct NotConverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string command;
    std::string problem;
    std::string problem_hi;
    std::string problem_lo;
    std::string out_dir;

    // grid
    int nx = 401;
    int nt = 1;
    std::optional<double> x_min;
    std::optional<double> x_max;

    // schedule
    int j_max = 8;
    std::optional<double> stop_tol;

    // output
    int time_stride = 0;  // 0: automatic
    bool full_field = false;

    std::uint64_t seed = 1;
    int paths = 1000;

    // picard
    double h = 0.0;  // 0: T
    double rho = 0.5;
    int max_inner = 60;
    double inner_tol = 1e-7;
    int halving_limit = 8;
    std::optional<double> penalty_m;
    std::string guess = "terminal";

    // cylinder functionals (gexp, mc-bound)
    double sigma_lo_sq = 1.0;
    double sigma_hi_sq = 1.0;
    std::string payoff = "squared-increment";
    std::vector<double> times{1.0};
    std::vector<double> coeffs;
    std::vector<double> strikes;
    std::vector<std::string> legs;
    double scale = 1.0;
    double clip_lo = -1.0;
    double clip_hi = 1.0;

    // simulate
    std::optional<double> x0;
    int steps = 200;
    std::optional<double> variance;
    std::optional<double> switch_time;
    std::optional<double> variance_after;
    bool reconstruct = false;
    bool moments = false;
    std::vector<double> deltas{0.1, 0.05, 0.025, 0.0125};
    std::vector<double> x0s;
    int path_stride = 0;

    // study
    int refine = 3;
};

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v)
{
    if (v) {
        j[key] = *v;
    } else {
        j[key] = nullptr;
    }
}

template <typename T>
void get_optional(const json& j, const char* key, std::optional<T>& v)
{
    if (j.contains(key) && !j.at(key).is_null()) {
        v = j.at(key).get<T>();
    }
}

json to_json(const RunConfig& c)
{
    json j;
    j["command"] = c.command;
    j["problem"] = c.problem;
    j["problem_hi"] = c.problem_hi;
    j["problem_lo"] = c.problem_lo;
    j["nx"] = c.nx;
    j["nt"] = c.nt;
    put_optional(j, "x_min", c.x_min);
    put_optional(j, "x_max", c.x_max);
    j["j_max"] = c.j_max;
    put_optional(j, "stop_tol", c.stop_tol);
    j["time_stride"] = c.time_stride;
    j["full_field"] = c.full_field;
    j["seed"] = c.seed;
    j["paths"] = c.paths;
    j["h"] = c.h;
    j["rho"] = c.rho;
    j["max_inner"] = c.max_inner;
    j["inner_tol"] = c.inner_tol;
    j["halving_limit"] = c.halving_limit;
    put_optional(j, "penalty_m", c.penalty_m);
    j["guess"] = c.guess;
    j["sigma_lo_sq"] = c.sigma_lo_sq;
    j["sigma_hi_sq"] = c.sigma_hi_sq;
    j["payoff"] = c.payoff;
    j["times"] = c.times;
    j["coeffs"] = c.coeffs;
    j["strikes"] = c.strikes;
    j["legs"] = c.legs;
    j["scale"] = c.scale;
    j["clip_lo"] = c.clip_lo;
    j["clip_hi"] = c.clip_hi;
    put_optional(j, "x0", c.x0);
    j["steps"] = c.steps;
    put_optional(j, "variance", c.variance);
    put_optional(j, "switch_time", c.switch_time);
    put_optional(j, "variance_after", c.variance_after);
    j["reconstruct"] = c.reconstruct;
    j["moments"] = c.moments;
    j["deltas"] = c.deltas;
    j["x0s"] = c.x0s;
    j["path_stride"] = c.path_stride;
    j["refine"] = c.refine;
    return j;
}

RunConfig from_json(const json& j)
{
    RunConfig c;
    c.command = j.at("command").get<std::string>();
    c.problem = j.value("problem", "");
    c.problem_hi = j.value("problem_hi", "");
    c.problem_lo = j.value("problem_lo", "");
    c.nx = j.value("nx", c.nx);
    c.nt = j.value("nt", c.nt);
    get_optional(j, "x_min", c.x_min);
    get_optional(j, "x_max", c.x_max);
    c.j_max = j.value("j_max", c.j_max);
    get_optional(j, "stop_tol", c.stop_tol);
    c.time_stride = j.value("time_stride", c.time_stride);
    c.full_field = j.value("full_field", c.full_field);
    c.seed = j.value("seed", c.seed);
    c.paths = j.value("paths", c.paths);
    c.h = j.value("h", c.h);
    c.rho = j.value("rho", c.rho);
    c.max_inner = j.value("max_inner", c.max_inner);
    c.inner_tol = j.value("inner_tol", c.inner_tol);
    c.halving_limit = j.value("halving_limit", c.halving_limit);
    get_optional(j, "penalty_m", c.penalty_m);
    c.guess = j.value("guess", c.guess);
    c.sigma_lo_sq = j.value("sigma_lo_sq", c.sigma_lo_sq);
    c.sigma_hi_sq = j.value("sigma_hi_sq", c.sigma_hi_sq);
    c.payoff = j.value("payoff", c.payoff);
    c.times = j.value("times", c.times);
    c.coeffs = j.value("coeffs", c.coeffs);
    c.strikes = j.value("strikes", c.strikes);
    c.legs = j.value("legs", c.legs);
    c.scale = j.value("scale", c.scale);
    c.clip_lo = j.value("clip_lo", c.clip_lo);
    c.clip_hi = j.value("clip_hi", c.clip_hi);
    get_optional(j, "x0", c.x0);
    c.steps = j.value("steps", c.steps);
    get_optional(j, "variance", c.variance);
    get_optional(j, "switch_time", c.switch_time);
    get_optional(j, "variance_after", c.variance_after);
    c.reconstruct = j.value("reconstruct", c.reconstruct);
    c.moments = j.value("moments", c.moments);
    c.deltas = j.value("deltas", c.deltas);
    c.x0s = j.value("x0s", c.x0s);
    c.path_stride = j.value("path_stride", c.path_stride);
    c.refine = j.value("refine", c.refine);
    return c;
}

class Runner {
public:
    Runner(RunConfig cfg, std::map<std::string, std::string> embedded)
        : cfg_(std::move(cfg)), embedded_(std::move(embedded))
    {
        manifest_["tool"] = "gbsde";
        manifest_["version"] = kVersion;
        manifest_["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "."
                                   + std::to_string(EIGEN_MINOR_VERSION);
        manifest_["config"] = to_json(cfg_);
        manifest_["problems"] = json::object();
    }

    int run()
    {
        fs::create_directories(cfg_.out_dir);
        try {
            dispatch();
        } catch (const NotConverged& err) {
            write_manifest();
            std::cerr << "gbsde: " << err.what() << '\n';
            return kNotConverged;
        } catch (const std::invalid_argument& err) {
            write_manifest();
            std::cerr << "gbsde: " << err.what() << '\n';
            return kInvalid;
        }
        write_manifest();
        return kOk;
    }

private:
    void dispatch()
    {
        const std::string& c = cfg_.command;
        if (c == "solve") {
            cmd_solve();
        } else if (c == "picard") {
            cmd_picard();
        } else if (c == "gexp") {
            cmd_gexp();
        } else if (c == "mc-bound") {
            cmd_mc_bound();
        } else if (c == "simulate") {
            cmd_simulate();
        } else if (c == "compare") {
            cmd_compare();
        } else if (c == "study") {
            cmd_study();
        } else {
            throw ValidationError("unknown command '" + c + "'");
        }
    }

    fs::path out(const std::string& name) const { return fs::path(cfg_.out_dir) / name; }

    void write(const std::string& name, const std::string& text)
    {
        write_text(out(name), text);
        manifest_["outputs"].push_back(name);
    }

    void write_manifest() { write_text(out("manifest.json"), manifest_.dump(2) + "\n"); }

    ProblemSpec load(const std::string& role, const std::string& path)
    {
        if (path.empty() && !embedded_.count(role)) {
            throw ValidationError("--" + role + " is required for '" + cfg_.command + "'");
        }
        std::string text;
        if (auto it = embedded_.find(role); it != embedded_.end()) {
            text = it->second;
        } else {
            text = read_text(path);
        }
        manifest_["problems"][role] = json{{"path", path}, {"toml", text}};
        return parse_problem_toml(text);
    }

    Grid grid_for(const ProblemSpec& spec, double m_max, const std::string& key = "grid")
    {
        auto [lo, hi] = default_bounds(spec);
        const Grid grid = make_grid(spec, cfg_.x_min.value_or(lo), cfg_.x_max.value_or(hi), cfg_.nx, cfg_.nt, m_max);
        manifest_[key] = grid_json(grid);
        return grid;
    }

    static json grid_json(const Grid& grid)
    {
        return json{{"x_min", grid.x_min()}, {"x_max", grid.x_max()}, {"nx", grid.nx()}, {"nt", grid.nt()},
                    {"T", grid.T()},         {"dx", grid.dx()},       {"dt", grid.dt()}};
    }

    PenaltySchedule schedule_for(const ProblemSpec& spec, const Grid& grid)
    {
        const double tol = cfg_.stop_tol.value_or(default_stop_tolerance(spec, grid));
        PenaltySchedule schedule = PenaltySchedule::doubling(cfg_.j_max, tol);
        manifest_["schedule"] = json{{"m_values", schedule.m_values}, {"stop_tolerance", schedule.stop_tolerance},
                                     {"j_max", schedule.j_max}};
        return schedule;
    }

    void validate(const ProblemSpec& spec, const Grid& grid, const std::string& name = "validation.json")
    {
        const ValidationReport report = validate_problem(spec, grid, 257);
        write(name, report.to_json() + "\n");
        if (!report.ok()) {
            for (const auto& check : report.checks) {
                if (check.status == CheckStatus::fail) {
                    throw ValidationError("problem fails check '" + check.name + "': " + check.detail);
                }
            }
        }
    }

    int stride_for(const Grid& grid) const
    {
        if (cfg_.full_field) {
            return 1;
        }
        if (cfg_.time_stride > 0) {
            return cfg_.time_stride;
        }
        return std::max(1, grid.nt() / 200);
    }

    double m_max() const { return std::ldexp(1.0, cfg_.j_max); }

    void cmd_solve()
    {
        const ProblemSpec spec = load("problem", cfg_.problem);
        const Grid grid = grid_for(spec, m_max());
        validate(spec, grid);
        const PenaltySchedule schedule = schedule_for(spec, grid);
        const SolveResult result = solve_obstacle(spec, grid, schedule);
        const int stride = stride_for(grid);
        manifest_["time_stride"] = stride;
        write("field.csv", field_csv(result.u, &result.residual, spec, grid, stride));
        write("residual.csv", residual_csv(result.residual, grid, stride));
        write("trace.csv", result.trace_csv());
        write("diagnostics.json", result.diagnostics_json(grid, spec) + "\n");
        std::cout << "value at (0, " << format_double(spec.x0) << "): " << format_double(result.u.at(0, 0, spec.x0, grid))
                  << "\n";
        if (!result.converged) {
            throw NotConverged("penalty schedule exhausted before the stop tolerance was met");
        }
    }

    static std::string residual_csv(const ResidualField& residual, const Grid& grid, int stride)
    {
        CsvWriter csv({"i", "t", "x", "residual"});
        for (std::size_t i = 0; i < residual.components.size(); ++i) {
            const auto& r = residual.components[i];
            for (int j = 0; j <= grid.nt(); ++j) {
                if (j % stride != 0 && j != grid.nt()) {
                    continue;
                }
                for (int n = 0; n < grid.nx(); ++n) {
                    csv.cell(static_cast<int>(i) + 1).cell(grid.t(j)).cell(grid.x(n)).cell(r(j, n)).end_row();
                }
            }
        }
        return csv.str();
    }

    PicardConfig picard_config(const ProblemSpec& spec)
    {
        PicardConfig pc;
        pc.h = cfg_.h > 0.0 ? cfg_.h : spec.T;
        pc.rho = cfg_.rho;
        pc.max_inner = cfg_.max_inner;
        pc.inner_tolerance = cfg_.inner_tol;
        pc.halving_limit = cfg_.halving_limit;
        pc.penalty_m = cfg_.penalty_m.value_or(m_max());
        if (cfg_.guess == "terminal") {
            pc.guess = PicardGuess::terminal_propagated;
        } else if (cfg_.guess == "zeros") {
            pc.guess = PicardGuess::zeros;
        } else {
            throw ValidationError("--guess must be 'terminal' or 'zeros'");
        }
        manifest_["picard"] = json{{"h", pc.h},
                                   {"rho", pc.rho},
                                   {"max_inner", pc.max_inner},
                                   {"inner_tolerance", pc.inner_tolerance},
                                   {"halving_limit", pc.halving_limit},
                                   {"penalty_m", pc.penalty_m},
                                   {"guess", cfg_.guess}};
        return pc;
    }

    void cmd_picard()
    {
        const ProblemSpec spec = load("problem", cfg_.problem);
        const PicardConfig pc = picard_config(spec);
        const Grid grid = grid_for(spec, pc.penalty_m);
        validate(spec, grid);
        const PicardResult result = picard_global_solve(spec, grid, pc);
        const int stride = stride_for(grid);
        manifest_["time_stride"] = stride;
        write("field.csv", field_csv(result.u, nullptr, spec, grid, stride));
        write("slabs.csv", result.slab_csv());
        json summary{{"converged", result.converged},       {"final_h", result.final_h},
                     {"halvings", result.halvings},         {"last_factor", result.last_factor},
                     {"max_certificate", result.max_certificate()},
                     {"value", result.u.at(0, 0, spec.x0, grid)}};
        write("picard.json", summary.dump(2) + "\n");
        std::cout << "value at (0, " << format_double(spec.x0) << "): " << format_double(result.u.at(0, 0, spec.x0, grid))
                  << "\n";
        if (!result.converged) {
            throw NotConverged("halving limit exhausted; last contraction factor " + format_double(result.last_factor));
        }
    }

    CylinderFunctional functional() const
    {
        const std::string& p = cfg_.payoff;
        if (p == "linear") {
            if (cfg_.coeffs.empty()) {
                throw ValidationError("--coeffs needs c0 followed by one coefficient per time");
            }
            return CylinderFunctional::linear(cfg_.times, cfg_.coeffs.front(),
                                              std::vector<double>(cfg_.coeffs.begin() + 1, cfg_.coeffs.end()));
        }
        if (p == "squared-increment") {
            return CylinderFunctional::squared_increment(cfg_.times, cfg_.scale);
        }
        if (p == "legs") {
            if (cfg_.legs.size() != cfg_.strikes.size()) {
                throw ValidationError("--legs and --strikes must have the same length");
            }
            std::vector<PayoffLeg> legs;
            for (std::size_t n = 0; n < cfg_.legs.size(); ++n) {
                if (cfg_.legs[n] != "put" && cfg_.legs[n] != "call") {
                    throw ValidationError("--legs entries must be 'put' or 'call'");
                }
                legs.push_back({cfg_.legs[n] == "put", cfg_.strikes[n]});
            }
            return CylinderFunctional::legs(cfg_.times, legs, cfg_.scale);
        }
        if (p == "poly-clip") {
            return CylinderFunctional::poly_clip(cfg_.times, cfg_.coeffs, cfg_.clip_lo, cfg_.clip_hi);
        }
        throw ValidationError("unknown --payoff '" + p + "' (linear, squared-increment, legs, poly-clip)");
    }

    void cmd_gexp()
    {
        const GParams gp(cfg_.sigma_lo_sq, cfg_.sigma_hi_sq);
        const CylinderFunctional func = functional();
        const double horizon = func.times().back();
        double reach = 6.0 * std::sqrt(gp.sigma_hi_sq() * horizon);
        for (double k : cfg_.strikes) {
            reach = std::max(reach, std::abs(k) + 3.0 * std::sqrt(gp.sigma_hi_sq() * horizon));
        }
        ProblemSpec shell;
        shell.g_params = gp;
        shell.T = horizon;
        const Grid grid = make_grid(shell, cfg_.x_min.value_or(-reach), cfg_.x_max.value_or(reach), cfg_.nx, cfg_.nt);
        manifest_["grid"] = grid_json(grid);
        const CylinderValue value = evaluate_cylinder_field(func, gp, grid);
        CsvWriter csv({"t", "x", "u"});
        const int levels = static_cast<int>(value.outer.rows());
        const int stride = cfg_.full_field ? 1 : (cfg_.time_stride > 0 ? cfg_.time_stride : std::max(1, (levels - 1) / 200));
        manifest_["time_stride"] = stride;
        for (int j = 0; j < levels; ++j) {
            if (j % stride != 0 && j != levels - 1) {
                continue;
            }
            for (int n = 0; n < grid.nx(); ++n) {
                csv.cell(grid.t(j)).cell(grid.x(n)).cell(value.outer(j, n)).end_row();
            }
        }
        write("field.csv", csv.str());
        write("gexp.json", json{{"value", value.value}}.dump(2) + "\n");
        std::cout << "G-expectation: " << format_double(value.value) << "\n";
    }

    void cmd_mc_bound()
    {
        const GParams gp(cfg_.sigma_lo_sq, cfg_.sigma_hi_sq);
        const CylinderFunctional func = functional();
        const auto controls = default_control_family(gp, func.times().back());
        json ctl = json::array();
        for (const auto& c : controls) {
            ctl.push_back(json{{"breakpoints", c.breakpoints()}, {"variances", c.variances()}});
        }
        manifest_["controls"] = ctl;
        const ScenarioTable table = sup_over_scenarios(func, gp, controls, cfg_.paths, cfg_.seed);
        write("scenarios.csv", table.to_csv());
        write("mc_bound.json", json{{"best_control", table.best},
                                    {"lower_bound", table.best_mean()},
                                    {"std_error", table.best_std_error()}}
                                       .dump(2)
                                   + "\n");
        std::cout << "Monte-Carlo lower bound: " << format_double(table.best_mean()) << " (stderr "
                  << format_double(table.best_std_error()) << ")\n";
    }

    ScenarioControl control_for(const ProblemSpec& spec) const
    {
        const double v = cfg_.variance.value_or(spec.g_params.sigma_hi_sq());
        if (cfg_.switch_time) {
            return ScenarioControl::switching(spec.T, *cfg_.switch_time, v, cfg_.variance_after.value_or(v));
        }
        return ScenarioControl::constant(spec.T, v);
    }

    void cmd_simulate()
    {
        ProblemSpec spec = load("problem", cfg_.problem);
        const double x0 = cfg_.x0.value_or(spec.x0);
        const ScenarioControl control = control_for(spec);
        control.check_band(spec.g_params);
        manifest_["control"] = json{{"breakpoints", control.breakpoints()}, {"variances", control.variances()}};
        manifest_["x0"] = x0;

        if (cfg_.moments) {
            const std::vector<double> x0s = cfg_.x0s.empty() ? std::vector<double>{x0} : cfg_.x0s;
            write("moments.csv", moment_diagnostics(spec, x0s, cfg_.deltas, cfg_.paths, cfg_.seed).to_csv());
        }

        if (cfg_.reconstruct) {
            const Grid grid = grid_for(spec, m_max());
            validate(spec, grid);
            const PenaltySchedule schedule = schedule_for(spec, grid);
            const SolveResult result = solve_obstacle(spec, grid, schedule);
            const PathEnsemble ensemble = simulate_gsde(spec, control, x0, grid.nt(), cfg_.paths, cfg_.seed);
            const PathSolution paths = reconstruct_paths(result.u, spec, grid, ensemble, control);
            write("path_summary.json", paths.summary_json() + "\n");
            write("path_extrema.csv", paths.extrema_csv());
            if (!result.converged) {
                throw NotConverged("penalty schedule exhausted before the stop tolerance was met");
            }
            return;
        }

        const PathEnsemble ensemble = simulate_gsde(spec, control, x0, cfg_.steps, cfg_.paths, cfg_.seed);
        const int stride = cfg_.path_stride > 0 ? cfg_.path_stride : std::max(1, cfg_.steps / 100);
        manifest_["path_stride"] = stride;
        CsvWriter csv({"path", "j", "t", "x"});
        for (int p = 0; p < ensemble.n_paths(); ++p) {
            for (int j = 0; j <= ensemble.n_steps(); ++j) {
                if (j % stride != 0 && j != ensemble.n_steps()) {
                    continue;
                }
                csv.cell(p).cell(j).cell(ensemble.times(j)).cell(ensemble.states(p, j)).end_row();
            }
        }
        write("paths.csv", csv.str());
    }

    void cmd_compare()
    {
        const ProblemSpec hi = load("problem-hi", cfg_.problem_hi);
        const ProblemSpec lo = load("problem-lo", cfg_.problem_lo);
        if (hi.T != lo.T) {
            throw ValidationError("compare: the two problems must share T");
        }
        // One grid fitting both problems.
        auto [lo_a, hi_a] = default_bounds(hi);
        auto [lo_b, hi_b] = default_bounds(lo);
        const double x_min = cfg_.x_min.value_or(std::min(lo_a, lo_b));
        const double x_max = cfg_.x_max.value_or(std::max(hi_a, hi_b));
        const Grid ga = make_grid(hi, x_min, x_max, cfg_.nx, cfg_.nt, m_max());
        const Grid grid = make_grid(lo, x_min, x_max, cfg_.nx, ga.nt(), m_max());
        manifest_["grid"] = grid_json(grid);
        validate(hi, grid, "validation_hi.json");
        validate(lo, grid, "validation_lo.json");
        const double tol = cfg_.stop_tol.value_or(
            std::max(default_stop_tolerance(hi, grid), default_stop_tolerance(lo, grid)));
        const PenaltySchedule schedule = PenaltySchedule::doubling(cfg_.j_max, tol);
        manifest_["schedule"] = json{{"m_values", schedule.m_values}, {"stop_tolerance", schedule.stop_tolerance},
                                     {"j_max", schedule.j_max}};
        const ComparisonReport report = comparison_check(hi, lo, grid, schedule);
        write("comparison.json", report.to_json() + "\n");
        std::cout << (report.ordered ? "ordered" : "NOT ordered") << ": worst violation "
                  << format_double(report.worst_violation) << " (tolerance " << format_double(report.tolerance)
                  << ")\n";
        if (!report.ordered) {
            throw NotConverged("comparison failed at " + std::to_string(report.violations) + " nodes");
        }
    }

    void cmd_study()
    {
        const ProblemSpec spec = load("problem", cfg_.problem);
        if (cfg_.refine < 1) {
            throw ValidationError("--refine must be at least 1");
        }
        const Grid base = grid_for(spec, m_max(), "base_grid");
        validate(spec, base);
        const double tol = cfg_.stop_tol.value_or(default_stop_tolerance(spec, base));
        const double width = base.x_max() - base.x_min();
        const double x_lo = std::max(base.x_min() + 0.25 * width, spec.x0 - 0.25 * width);
        const double x_hi = std::min(base.x_max() - 0.25 * width, spec.x0 + 0.25 * width);
        manifest_["residual_window"] = json{{"x_lo", x_lo}, {"x_hi", x_hi}, {"t_lo", 0.0}, {"t_hi", 0.5 * spec.T}};
        const double sigma_scale = max_sigma_sq(spec, base.x_min(), base.x_max(), base.nx());

        CsvWriter csv({"level", "nx", "nt", "dx", "dt", "value", "residual_sup", "residual_window", "ratio",
                       "delta_prev"});
        double prev_window = 0.0;
        double prev_value = 0.0;
        bool all_converged = true;
        for (int level = 0; level <= cfg_.refine; ++level) {
            const int nx = (base.nx() - 1) * (1 << level) + 1;
            const int nt = base.nt() * (1 << (2 * level));
            const Grid grid(base.x_min(), base.x_max(), nx, nt, spec.T, spec.g_params, sigma_scale);
            const SolveResult result = solve_obstacle(spec, grid, PenaltySchedule::doubling(cfg_.j_max, tol));
            all_converged = all_converged && result.converged;
            const double value = result.u.at(0, 0, spec.x0, grid);
            const double window = result.residual.window_sup(grid, x_lo, x_hi, 0.0, 0.5 * spec.T);
            csv.cell(level).cell(nx).cell(nt).cell(grid.dx()).cell(grid.dt()).cell(value).cell(result.residual.sup_norm)
                .cell(window);
            if (level == 0) {
                csv.cell(std::string_view("")).cell(std::string_view(""));
            } else {
                csv.cell(prev_window / window).cell(std::abs(value - prev_value));
            }
            csv.end_row();
            std::cout << "level " << level << ": nx " << nx << ", nt " << nt << ", value " << format_double(value)
                      << ", window residual " << format_double(window) << "\n";
            prev_window = window;
            prev_value = value;
        }
        write("study.csv", csv.str());
        if (!all_converged) {
            throw NotConverged("penalty schedule exhausted on at least one level");
        }
    }

    RunConfig cfg_;
    std::map<std::string, std::string> embedded_;
    json manifest_;
};

std::string default_out_dir()
{
    if (const char* env = std::getenv("GBSDE_OUT_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
    return "gbsde_out";
}

void add_grid_options(CLI::App* sub, RunConfig& c)
{
    sub->add_option("--nx", c.nx, "spatial nodes")->capture_default_str();
    sub->add_option("--nt", c.nt, "minimum number of time steps (raised to satisfy CFL)")->capture_default_str();
    sub->add_option("--x-min", c.x_min, "left edge of the spatial domain");
    sub->add_option("--x-max", c.x_max, "right edge of the spatial domain");
}

void add_output_options(CLI::App* sub, RunConfig& c)
{
    sub->add_option("--time-stride", c.time_stride, "write every n-th time level (0: automatic)");
    sub->add_flag("--full-field", c.full_field, "write every time level");
}

void add_schedule_options(CLI::App* sub, RunConfig& c)
{
    sub->add_option("--j-max", c.j_max, "penalty schedule m = 1, 2, ..., 2^j_max")->capture_default_str();
    sub->add_option("--stop-tol", c.stop_tol, "stop tolerance (default 1e-4 (1 + sup|phi|))");
}

void add_functional_options(CLI::App* sub, RunConfig& c)
{
    sub->add_option("--sigma-lo-sq", c.sigma_lo_sq)->capture_default_str();
    sub->add_option("--sigma-hi-sq", c.sigma_hi_sq)->capture_default_str();
    sub->add_option("--payoff", c.payoff, "linear | squared-increment | legs | poly-clip")->capture_default_str();
    sub->add_option("--times", c.times, "observation times (at most two)")->delimiter(',');
    sub->add_option("--coeffs", c.coeffs, "linear: c0,c1[,c2]; poly-clip: polynomial coefficients")->delimiter(',');
    sub->add_option("--strikes", c.strikes, "strikes of the legs")->delimiter(',');
    sub->add_option("--legs", c.legs, "put/call per time")->delimiter(',');
    sub->add_option("--scale", c.scale)->capture_default_str();
    sub->add_option("--clip-lo", c.clip_lo)->capture_default_str();
    sub->add_option("--clip-hi", c.clip_hi)->capture_default_str();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Numerical engine for reflected G-BSDE systems"};
    app.set_version_flag("--version", kVersion);
    RunConfig cfg;
    std::string out_dir;
    std::string manifest_path;
    app.add_option("--from-manifest", manifest_path, "re-run the command recorded in a manifest.json");
    app.add_option("--out", out_dir, "output directory (default $GBSDE_OUT_DIR or ./gbsde_out)");
    app.require_subcommand(0, 1);
    app.fallthrough();

    auto* solve = app.add_subcommand("solve", "penalized obstacle solve along the penalty schedule");
    solve->add_option("--problem", cfg.problem, "problem TOML");
    add_grid_options(solve, cfg);
    add_schedule_options(solve, cfg);
    add_output_options(solve, cfg);

    auto* picard = app.add_subcommand("picard", "Picard iteration with backward slab stitching");
    picard->add_option("--problem", cfg.problem, "problem TOML");
    add_grid_options(picard, cfg);
    add_output_options(picard, cfg);
    picard->add_option("--j-max", cfg.j_max, "default penalty m = 2^j_max")->capture_default_str();
    picard->add_option("--slab-width", cfg.h, "initial slab width (default T)");
    picard->add_option("--rho", cfg.rho)->capture_default_str();
    picard->add_option("--max-inner", cfg.max_inner)->capture_default_str();
    picard->add_option("--inner-tol", cfg.inner_tol)->capture_default_str();
    picard->add_option("--halving-limit", cfg.halving_limit)->capture_default_str();
    picard->add_option("--penalty-m", cfg.penalty_m, "penalty of the frozen solves");
    picard->add_option("--guess", cfg.guess, "terminal | zeros")->capture_default_str();

    auto* gexp = app.add_subcommand("gexp", "G-expectation of a cylinder functional via the G-heat equation");
    add_functional_options(gexp, cfg);
    add_grid_options(gexp, cfg);
    add_output_options(gexp, cfg);

    auto* mc = app.add_subcommand("mc-bound", "Monte-Carlo lower bound over scenario controls");
    add_functional_options(mc, cfg);
    mc->add_option("--paths", cfg.paths)->capture_default_str();
    mc->add_option("--seed", cfg.seed)->capture_default_str();

    auto* sim = app.add_subcommand("simulate", "simulate the forward G-SDE under one scenario");
    sim->add_option("--problem", cfg.problem, "problem TOML");
    sim->add_option("--x0", cfg.x0, "initial state (default: problem x0)");
    sim->add_option("--steps", cfg.steps)->capture_default_str();
    sim->add_option("--paths", cfg.paths)->capture_default_str();
    sim->add_option("--seed", cfg.seed)->capture_default_str();
    sim->add_option("--variance", cfg.variance, "scenario variance (default sigma_hi_sq)");
    sim->add_option("--switch-time", cfg.switch_time);
    sim->add_option("--variance-after", cfg.variance_after);
    sim->add_option("--path-stride", cfg.path_stride);
    sim->add_flag("--moments", cfg.moments, "write moment scaling diagnostics");
    sim->add_option("--deltas", cfg.deltas)->delimiter(',');
    sim->add_option("--x0s", cfg.x0s)->delimiter(',');
    sim->add_flag("--reconstruct", cfg.reconstruct, "solve, then reconstruct (Y, Z, A) along the paths");
    add_grid_options(sim, cfg);
    add_schedule_options(sim, cfg);

    auto* cmp = app.add_subcommand("compare", "check the comparison theorem on an ordered pair");
    cmp->add_option("--problem-hi", cfg.problem_hi, "problem expected to dominate");
    cmp->add_option("--problem-lo", cfg.problem_lo, "problem expected to be dominated");
    add_grid_options(cmp, cfg);
    add_schedule_options(cmp, cfg);

    auto* study = app.add_subcommand("study", "refinement study halving dx and dt/4 per level");
    study->add_option("--problem", cfg.problem, "problem TOML");
    study->add_option("--refine", cfg.refine, "number of refinements")->capture_default_str();
    add_grid_options(study, cfg);
    add_schedule_options(study, cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "gbsde: " << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    std::map<std::string, std::string> embedded;
    try {
        if (!manifest_path.empty()) {
            const json manifest = json::parse(read_text(manifest_path));
            cfg = from_json(manifest.at("config"));
            for (const auto& [role, entry] : manifest.at("problems").items()) {
                embedded[role] = entry.at("toml").get<std::string>();
            }
        } else {
            const auto subs = app.get_subcommands();
            if (subs.empty()) {
                std::cerr << "gbsde: a command is required\n\n" << app.help();
                return kUsage;
            }
            cfg.command = subs.front()->get_name();
            if (cfg.command == "study" && study->count("--nx") == 0) {
                cfg.nx = 101;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "gbsde: cannot read manifest: " << e.what() << "\n";
        return kInvalid;
    }
    cfg.out_dir = out_dir.empty() ? default_out_dir() : out_dir;

    try {
        return Runner(cfg, embedded).run();
    } catch (const std::exception& e) {
        std::cerr << "gbsde: " << e.what() << "\n";
        return kInvalid;
    }
}
