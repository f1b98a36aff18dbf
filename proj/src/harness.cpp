#include "gbsde/harness.hpp"

#include "gbsde/io.hpp"
#include "gbsde/stencil.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace gbsde {

namespace {

struct Weights {
    int cell = 0;
    double theta = 0.0;
    bool clamped = false;

    double operator()(const Eigen::ArrayXd& v) const { return (1.0 - theta) * v(cell) + theta * v(cell + 1); }
};

Weights weights_at(const Grid& grid, double x)
{
    const double raw = (x - grid.x_min()) / grid.dx();
    const double pos = std::clamp(raw, 0.0, static_cast<double>(grid.nx() - 1));
    Weights w;
    w.clamped = raw != pos;
    w.cell = std::min(static_cast<int>(pos), grid.nx() - 2);
    w.theta = pos - w.cell;
    return w;
}

} // namespace

PathSolution reconstruct_paths(const ValueField& u, const ProblemSpec& spec, const Grid& grid,
                               const PathEnsemble& ensemble, const ScenarioControl& control, bool store_ledger)
{
    const ExplicitScheme scheme(spec, grid);
    control.check_band(spec.g_params);
    if (u.k() != spec.k) {
        throw DomainError("reconstruct_paths: field/spec component mismatch");
    }
    if (ensemble.n_steps() != grid.nt()) {
        throw DomainError("reconstruct_paths: ensemble has " + std::to_string(ensemble.n_steps())
                          + " steps, grid has nt = " + std::to_string(grid.nt()));
    }
    for (int j = 0; j <= grid.nt(); ++j) {
        if (std::abs(ensemble.times(j) - grid.t(j)) > 1e-9 * grid.T()) {
            throw DomainError("reconstruct_paths: ensemble time " + format_double(ensemble.times(j))
                              + " does not match grid level " + std::to_string(j));
        }
    }

    const int k = spec.k;
    const int n_paths = ensemble.n_paths();
    const int nt = grid.nt();
    const double dt = grid.dt();

    PathSolution out;
    out.k = k;
    out.n_paths = n_paths;
    out.n_steps = nt;
    out.ledger_stored = store_ledger;
    if (store_ledger) {
        out.Y.assign(static_cast<std::size_t>(k), RowMatrix(n_paths, nt));
        out.Z.assign(static_cast<std::size_t>(k), RowMatrix(n_paths, nt));
        out.dA.assign(static_cast<std::size_t>(k), RowMatrix(n_paths, nt));
        out.obstacle.assign(static_cast<std::size_t>(k), RowMatrix(n_paths, nt));
    }

    double sup_u = 0.0;
    for (int i = 0; i < k; ++i) {
        sup_u = std::max(sup_u, u[i].cwiseAbs().maxCoeff());
        const double neg = (u[i].array().rowwise() - scheme.obstacle(i).transpose()).minCoeff();
        out.nodal_violation = std::max(out.nodal_violation, std::max(0.0, -neg));
    }

    out.min_obstacle_gap = std::numeric_limits<double>::infinity();
    out.min_a_increment = std::numeric_limits<double>::infinity();
    out.path_min_gap = Eigen::ArrayXd::Constant(n_paths, std::numeric_limits<double>::infinity());
    out.path_min_da = Eigen::ArrayXd::Constant(n_paths, std::numeric_limits<double>::infinity());
    out.path_total_a = Eigen::ArrayXd::Zero(n_paths);
    Eigen::ArrayXd skorohod = Eigen::ArrayXd::Zero(n_paths);
    Eigen::ArrayXd push_total = Eigen::ArrayXd::Zero(n_paths);
    long long active = 0;

    std::vector<Eigen::ArrayXd> level(static_cast<std::size_t>(k));
    std::vector<Eigen::ArrayXd> current(static_cast<std::size_t>(k));
    std::vector<Eigen::ArrayXd> d1(static_cast<std::size_t>(k));
    std::vector<Eigen::ArrayXd> d2(static_cast<std::size_t>(k));
    std::vector<Eigen::ArrayXd> ham(static_cast<std::size_t>(k));
    std::vector<Eigen::ArrayXd> push(static_cast<std::size_t>(k));
    std::vector<double> r(static_cast<std::size_t>(k));
    const GParams& gp = spec.g_params;

    for (int j = 0; j < nt; ++j) {
        const double t = grid.t(j);
        const double t_next = grid.t(j + 1);
        const double v = ensemble.dqv(j) / dt;
        for (int i = 0; i < k; ++i) {
            level[static_cast<std::size_t>(i)] = u[i].row(j + 1).transpose();
            current[static_cast<std::size_t>(i)] = u[i].row(j).transpose();
        }
        for (int i = 0; i < k; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            d1[idx] = first_difference(level[idx], grid.dx());
            d2[idx] = second_difference(level[idx], grid.dx());
            scheme.hamiltonian(i, t_next, level, ham[idx]);
            push[idx] = current[idx] - level[idx] - dt * ham[idx];
        }

        for (int p = 0; p < n_paths; ++p) {
            const double x = ensemble.states(p, j);
            const double x_next = ensemble.states(p, j + 1);
            const Weights w = weights_at(grid, x);
            const Weights w_next = weights_at(grid, x_next);
            if (w.clamped || w_next.clamped) {
                ++out.clamped_steps;
            }
            for (int c = 0; c < k; ++c) {
                r[static_cast<std::size_t>(c)] = w(level[static_cast<std::size_t>(c)]);
            }
            const double sigma = spec.sigma(t, x);
            const double b = spec.b(t, x);
            const double h = spec.h(t, x);
            const double dx_path = x_next - x;
            const double db = ensemble.db(p, j);

            for (int i = 0; i < k; ++i) {
                const auto idx = static_cast<std::size_t>(i);
                const double y = w(current[idx]);
                const double y_next = w_next(level[idx]);
                const double y_shift = r[idx];
                const double grad = w(d1[idx]);
                const double curv = w(d2[idx]);
                const double z = sigma * grad;
                const double f_val = spec.f[idx](t_next, x, r, z);
                const double g_val = spec.g[idx](t_next, x, r, z);

                const double da = y - y_next - f_val * dt - g_val * v * dt + z * db
                                + 0.5 * curv * (dx_path * dx_path - sigma * sigma * v * dt);
                const double remainder = y_next - y_shift - grad * dx_path - 0.5 * curv * dx_path * dx_path;
                const double ham_point = g_apply(gp, sigma * sigma * curv + 2.0 * h * grad + 2.0 * g_val) + b * grad + f_val;
                const double op_gap = dt * std::abs(w(ham[idx]) - ham_point);
                const double l_point = spec.l[idx](t, x);
                const double l_interp = std::abs(w(scheme.obstacle(i)) - l_point);
                const double gap = y - l_point;
                const double push_here = w(push[idx]);

                out.taylor_remainder = std::max(out.taylor_remainder, std::abs(remainder) + op_gap);
                out.operator_gap = std::max(out.operator_gap, op_gap);
                out.obstacle_interp = std::max(out.obstacle_interp, l_interp);
                out.min_obstacle_gap = std::min(out.min_obstacle_gap, gap);
                out.min_a_increment = std::min(out.min_a_increment, da);
                if (i == 0) {
                    out.path_min_gap(p) = std::min(out.path_min_gap(p), gap);
                    out.path_min_da(p) = std::min(out.path_min_da(p), da);
                    out.path_total_a(p) += da;
                    skorohod(p) += gap * da;
                    push_total(p) += push_here;
                    if (push_here > 1e-13 * (1.0 + std::abs(y))) {
                        ++active;
                    }
                }
                if (store_ledger) {
                    out.Y[idx](p, j) = y;
                    out.Z[idx](p, j) = z;
                    out.dA[idx](p, j) = da;
                    out.obstacle[idx](p, j) = l_point;
                }
            }
        }
    }

    const double roundoff = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + sup_u);
    out.tol_path = out.taylor_remainder + out.obstacle_interp + out.nodal_violation + roundoff;
    out.active_fraction = static_cast<double>(active) / (static_cast<double>(n_paths) * nt);
    out.mean_push = push_total.mean();
    auto mean_stderr = [n_paths](const Eigen::ArrayXd& a, double& mean, double& se) {
        mean = a.mean();
        se = n_paths > 1 ? std::sqrt((a - mean).square().sum() / (n_paths - 1) / n_paths) : 0.0;
    };
    mean_stderr(skorohod, out.skorohod_mean, out.skorohod_stderr);
    mean_stderr(out.path_total_a, out.mean_total_a, out.mean_total_a_stderr);
    return out;
}

std::string PathSolution::summary_json() const
{
    nlohmann::ordered_json doc;
    doc["paths"] = n_paths;
    doc["steps"] = n_steps;
    doc["min_obstacle_gap"] = min_obstacle_gap;
    doc["min_a_increment"] = min_a_increment;
    doc["tol_path"] = tol_path;
    doc["taylor_remainder"] = taylor_remainder;
    doc["operator_gap"] = operator_gap;
    doc["obstacle_interpolation"] = obstacle_interp;
    doc["nodal_violation"] = nodal_violation;
    doc["active_fraction"] = active_fraction;
    doc["mean_push"] = mean_push;
    doc["mean_total_a"] = mean_total_a;
    doc["mean_total_a_stderr"] = mean_total_a_stderr;
    doc["skorohod_mean"] = skorohod_mean;
    doc["skorohod_stderr"] = skorohod_stderr;
    doc["clamped_steps"] = clamped_steps;
    return doc.dump(2);
}

std::string PathSolution::extrema_csv() const
{
    CsvWriter csv({"path", "min_gap", "min_a_increment", "total_a"});
    for (int p = 0; p < n_paths; ++p) {
        csv.cell(p).cell(path_min_gap(p)).cell(path_min_da(p)).cell(path_total_a(p)).end_row();
    }
    return csv.str();
}

std::string ComparisonReport::to_json() const
{
    nlohmann::ordered_json doc;
    doc["ordered"] = ordered;
    doc["worst_violation"] = worst_violation;
    doc["max_gap"] = max_gap;
    doc["tolerance"] = tolerance;
    doc["violations"] = violations;
    doc["value_hi"] = value_hi;
    doc["value_lo"] = value_lo;
    return doc.dump(2);
}

ComparisonReport comparison_check(const ProblemSpec& spec_hi, const ProblemSpec& spec_lo, const Grid& grid,
                                  const PenaltySchedule& schedule, int n_samples)
{
    spec_hi.check_structure();
    spec_lo.check_structure();
    if (spec_hi.k != spec_lo.k) {
        throw ValidationError("comparison_check: the two problems have different k");
    }
    const int n = std::max(n_samples, 2);
    for (int i = 0; i < spec_hi.k; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        for (int s = 0; s < n; ++s) {
            const double x = grid.x_min() + (grid.x_max() - grid.x_min()) * s / (n - 1);
            const double t = grid.T() * std::fmod(s * 0.6180339887498949, 1.0);
            const double xi_gap = spec_hi.phi[idx](spec_hi.T, x) - spec_lo.phi[idx](spec_lo.T, x);
            if (xi_gap < -kValidationEps) {
                throw OrderingError("condition (ii) violated: terminal of the upper problem lies below the lower one for component "
                                    + std::to_string(i + 1) + " at x = " + format_double(x) + " (by "
                                    + format_double(-xi_gap) + ")");
            }
            const double l_gap = spec_hi.l[idx](t, x) - spec_lo.l[idx](t, x);
            if (l_gap < -kValidationEps) {
                throw OrderingError("condition (iii) violated: obstacle of the upper problem lies below the lower one for component "
                                    + std::to_string(i + 1) + " at (t, x) = (" + format_double(t) + ", "
                                    + format_double(x) + ") (by " + format_double(-l_gap) + ")");
            }
        }
    }

    const SolveResult hi = solve_obstacle(spec_hi, grid, schedule);
    const SolveResult lo = solve_obstacle(spec_lo, grid, schedule);
    ComparisonReport report;
    report.tolerance = 10.0 * schedule.stop_tolerance;
    report.worst_violation = -std::numeric_limits<double>::infinity();
    report.max_gap = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < spec_hi.k; ++i) {
        const RowMatrix diff = hi.u[i] - lo.u[i];
        report.worst_violation = std::max(report.worst_violation, -diff.minCoeff());
        report.max_gap = std::max(report.max_gap, diff.maxCoeff());
        report.violations += (diff.array() < -report.tolerance).count();
    }
    report.ordered = report.violations == 0;
    report.value_hi = hi.u.at(0, 0, spec_hi.x0, grid);
    report.value_lo = lo.u.at(0, 0, spec_lo.x0, grid);
    return report;
}

double normal_cdf(double x)
{
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double classical_oracle(OracleKind kind, const OracleParams& params)
{
    if (!(params.volatility > 0.0) || !(params.maturity > 0.0)) {
        throw ValidationError("classical_oracle needs positive volatility and maturity");
    }
    if (!(params.spot > 0.0) || !(params.strike > 0.0)) {
        throw ValidationError("classical_oracle needs positive spot and strike");
    }
    const double S = params.spot;
    const double K = params.strike;
    const double T = params.maturity;
    const double vol = params.volatility;
    const double r = params.rate;

    if (kind == OracleKind::bs_european) {
        const double sd = vol * std::sqrt(T);
        const double d1 = (std::log(S / K) + (r + 0.5 * vol * vol) * T) / sd;
        const double d2 = d1 - sd;
        const double disc = std::exp(-r * T);
        if (params.put) {
            return K * disc * normal_cdf(-d2) - S * normal_cdf(-d1);
        }
        return S * normal_cdf(d1) - K * disc * normal_cdf(d2);
    }

    if (params.steps < 1) {
        throw ValidationError("classical_oracle: binomial tree needs at least one step");
    }
    const int n = params.steps;
    const double dt = T / n;
    const double up = std::exp(vol * std::sqrt(dt));
    const double down = 1.0 / up;
    const double growth = std::exp(r * dt);
    const double prob = (growth - down) / (up - down);
    const double disc = 1.0 / growth;
    auto payoff = [&](double s) { return params.put ? std::max(K - s, 0.0) : std::max(s - K, 0.0); };

    Eigen::ArrayXd values(n + 1);
    for (int i = 0; i <= n; ++i) {
        values(i) = payoff(S * std::pow(up, 2 * i - n));
    }
    for (int step = n - 1; step >= 0; --step) {
        for (int i = 0; i <= step; ++i) {
            const double cont = disc * (prob * values(i + 1) + (1.0 - prob) * values(i));
            values(i) = std::max(cont, payoff(S * std::pow(up, 2 * i - step)));
        }
    }
    return values(0);
}

} // namespace gbsde
