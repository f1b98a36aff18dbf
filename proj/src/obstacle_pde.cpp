#include "gbsde/obstacle_pde.hpp"

#include "gbsde/io.hpp"
#include "gbsde/stencil.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace gbsde {

PenaltySchedule PenaltySchedule::doubling(int j_max, double stop_tolerance)
{
    if (j_max < 0) {
        throw ValidationError("penalty schedule needs j_max >= 0");
    }
    if (!(stop_tolerance > 0.0)) {
        throw ValidationError("penalty schedule needs a positive stop tolerance");
    }
    PenaltySchedule out;
    out.j_max = j_max;
    out.stop_tolerance = stop_tolerance;
    for (int j = 0; j <= j_max; ++j) {
        out.m_values.push_back(std::ldexp(1.0, j));
    }
    return out;
}

double default_stop_tolerance(const ProblemSpec& spec, const Grid& grid)
{
    double sup = 0.0;
    for (const auto& phi : spec.phi) {
        for (int n = 0; n < grid.nx(); ++n) {
            sup = std::max(sup, std::abs(phi(grid.T(), grid.x(n))));
        }
    }
    return 1e-4 * (1.0 + sup);
}

PenaltySchedule default_schedule(const ProblemSpec& spec, const Grid& grid)
{
    const int cap = static_cast<int>(std::floor(std::log2(1.0 / grid.dt()) + 1e-12));
    return PenaltySchedule::doubling(std::clamp(cap, 0, 12), default_stop_tolerance(spec, grid));
}

namespace {

inline double f_operator_at(const ProblemSpec& spec, int i, double A, double p, std::span<const double> r, double x,
                            double t, double sigma, double b, double h)
{
    const double z = sigma * p;
    const double inner = sigma * sigma * A + 2.0 * p * h + 2.0 * spec.g[static_cast<std::size_t>(i)](t, x, r, z);
    return g_apply(spec.g_params, inner) + b * p + spec.f[static_cast<std::size_t>(i)](t, x, r, z);
}

} // namespace

double f_operator(const ProblemSpec& spec, int i, double A, double p, std::span<const double> r, double x, double t)
{
    return f_operator_at(spec, i, A, p, r, x, t, spec.sigma(t, x), spec.b(t, x), spec.h(t, x));
}

ExplicitScheme::ExplicitScheme(const ProblemSpec& spec, const Grid& grid) : spec_(spec), grid_(grid)
{
    spec_.check_structure();
    nodes_ = grid_.nodes();
    const int nx = grid_.nx();
    sigma_.resize(nx);
    b_.resize(nx);
    h_.resize(nx);
    for (int n = 0; n < nx; ++n) {
        sigma_(n) = spec_.sigma(0.0, nodes_(n));
        b_(n) = spec_.b(0.0, nodes_(n));
        h_(n) = spec_.h(0.0, nodes_(n));
    }
    const double ratio = grid_.dt() * spec_.g_params.sigma_hi_sq() * sigma_.square().maxCoeff() / (grid_.dx() * grid_.dx());
    if (ratio > 0.5 * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "CFL violated for this problem: dt * sigma_hi_sq * max sigma(x)^2 / dx^2 = " << ratio
            << " > 1/2; increase nt (currently " << grid_.nt() << ")";
        throw CflError(msg.str());
    }
    for (int i = 0; i < spec_.k; ++i) {
        Eigen::ArrayXd obstacle(nx);
        Eigen::ArrayXd terminal(nx);
        for (int n = 0; n < nx; ++n) {
            obstacle(n) = spec_.l[static_cast<std::size_t>(i)](0.0, nodes_(n));
            terminal(n) = spec_.phi[static_cast<std::size_t>(i)](grid_.T(), nodes_(n));
        }
        obstacle_.push_back(std::move(obstacle));
        terminal_.push_back(std::move(terminal));
    }
}

void ExplicitScheme::check_penalty(double m) const
{
    if (m < 0.0) {
        throw ValidationError("penalty parameter must be non-negative");
    }
    if (grid_.dt() * m > 1.0 + 1e-12) {
        std::ostringstream msg;
        msg << "penalty CFL violated: dt * m = " << grid_.dt() * m << " > 1; refine the time grid to nt >= "
            << static_cast<long long>(std::ceil(grid_.T() * m));
        throw CflError(msg.str());
    }
}

void ExplicitScheme::hamiltonian(int i, double t, const std::vector<Eigen::ArrayXd>& level, Eigen::ArrayXd& out) const
{
    const auto& own = level[static_cast<std::size_t>(i)];
    const Eigen::ArrayXd d2 = second_difference(own, grid_.dx());
    const Eigen::ArrayXd d1 = first_difference(own, grid_.dx());
    const int nx = grid_.nx();
    out.resize(nx);
    std::vector<double> r(static_cast<std::size_t>(spec_.k));
    for (int n = 0; n < nx; ++n) {
        for (int c = 0; c < spec_.k; ++c) {
            r[static_cast<std::size_t>(c)] = level[static_cast<std::size_t>(c)](n);
        }
        out(n) = f_operator_at(spec_, i, d2(n), d1(n), r, nodes_(n), t, sigma_(n), b_(n), h_(n));
    }
}

void ExplicitScheme::step(int i, double t, const std::vector<Eigen::ArrayXd>& level, double m, Eigen::ArrayXd& out) const
{
    Eigen::ArrayXd ham;
    hamiltonian(i, t, level, ham);
    out = level[static_cast<std::size_t>(i)] + grid_.dt() * ham;
    if (m > 0.0) {
        out += grid_.dt() * m * (obstacle(i) - out).max(0.0);
    }
}

ValueField solve_penalized(const ProblemSpec& spec, double m, const Grid& grid)
{
    const ExplicitScheme scheme(spec, grid);
    scheme.check_penalty(m);
    ValueField u(spec.k, grid);
    const int nt = grid.nt();
    std::vector<Eigen::ArrayXd> level(static_cast<std::size_t>(spec.k));
    for (int i = 0; i < spec.k; ++i) {
        level[static_cast<std::size_t>(i)] = scheme.terminal(i);
        u[i].row(nt) = scheme.terminal(i).transpose();
    }
    std::vector<Eigen::ArrayXd> next(level.size());
    for (int j = nt - 1; j >= 0; --j) {
        const double t = grid.t(j + 1);
        for (int i = 0; i < spec.k; ++i) {
            scheme.step(i, t, level, m, next[static_cast<std::size_t>(i)]);
        }
        std::swap(level, next);
        for (int i = 0; i < spec.k; ++i) {
            u[i].row(j) = level[static_cast<std::size_t>(i)].transpose();
        }
    }
    return u;
}

double ResidualField::window_sup(const Grid& grid, double x_lo, double x_hi, double t_lo, double t_hi) const
{
    double best = 0.0;
    for (const auto& comp : components) {
        for (int j = 0; j <= grid.nt(); ++j) {
            const double t = grid.t(j);
            if (t < t_lo - 1e-12 || t > t_hi + 1e-12) {
                continue;
            }
            for (int n = 0; n < grid.nx(); ++n) {
                const double x = grid.x(n);
                if (x < x_lo - 1e-12 || x > x_hi + 1e-12) {
                    continue;
                }
                best = std::max(best, std::abs(comp(j, n)));
            }
        }
    }
    return best;
}

ResidualField complementarity_residual(const ValueField& u, const ProblemSpec& spec, const Grid& grid)
{
    const ExplicitScheme scheme(spec, grid);
    if (u.k() != spec.k) {
        throw DomainError("complementarity_residual: field has " + std::to_string(u.k()) + " components, spec has k = "
                          + std::to_string(spec.k));
    }
    const int nt = grid.nt();
    const int nx = grid.nx();
    ResidualField out;
    out.components.assign(static_cast<std::size_t>(spec.k), RowMatrix::Zero(nt + 1, nx));
    std::vector<Eigen::ArrayXd> level(static_cast<std::size_t>(spec.k));
    Eigen::ArrayXd ham;
    for (int j = 0; j < nt; ++j) {
        for (int c = 0; c < spec.k; ++c) {
            level[static_cast<std::size_t>(c)] = u[c].row(j).transpose();
        }
        for (int i = 0; i < spec.k; ++i) {
            scheme.hamiltonian(i, grid.t(j), level, ham);
            for (int n = 1; n < nx - 1; ++n) {
                const double gap = u[i](j, n) - scheme.obstacle(i)(n);
                const double pde = (u[i](j, n) - u[i](j + 1, n)) / grid.dt() - ham(n);
                const double r = std::min(gap, pde);
                out.components[static_cast<std::size_t>(i)](j, n) = r;
                out.sup_norm = std::max(out.sup_norm, std::abs(r));
            }
        }
    }
    return out;
}

SolveResult solve_obstacle(const ProblemSpec& spec, const Grid& grid, const PenaltySchedule& schedule)
{
    if (schedule.m_values.empty()) {
        throw ValidationError("solve_obstacle needs a non-empty penalty schedule");
    }
    for (std::size_t j = 0; j < schedule.m_values.size(); ++j) {
        if (!(schedule.m_values[j] > 0.0) || (j > 0 && !(schedule.m_values[j] > schedule.m_values[j - 1]))) {
            throw ValidationError("penalty schedule must be positive and strictly increasing");
        }
    }
    const ExplicitScheme scheme(spec, grid);
    scheme.check_penalty(schedule.m_values.back());

    const auto start = std::chrono::steady_clock::now();
    SolveResult result;
    result.stop_tolerance = schedule.stop_tolerance;
    ValueField prev = solve_penalized(spec, 0.0, grid);
    for (double m : schedule.m_values) {
        ValueField cur = solve_penalized(spec, m, grid);
        PenaltyTraceEntry entry;
        entry.m = m;
        entry.sup_delta = 0.0;
        entry.min_increment = std::numeric_limits<double>::infinity();
        for (int i = 0; i < spec.k; ++i) {
            const RowMatrix diff = cur[i] - prev[i];
            entry.sup_delta = std::max(entry.sup_delta, diff.cwiseAbs().maxCoeff());
            entry.min_increment = std::min(entry.min_increment, diff.minCoeff());
            const Eigen::ArrayXd obstacle = scheme.obstacle(i);
            const double neg = (cur[i].array().rowwise() - obstacle.transpose()).minCoeff();
            entry.sup_neg_part = std::max(entry.sup_neg_part, std::max(0.0, -neg));
        }
        result.trace.push_back(entry);
        ++result.iterations;
        result.final_m = m;
        prev = std::move(cur);
        if (entry.sup_delta < schedule.stop_tolerance) {
            result.converged = true;
            break;
        }
    }
    result.u = std::move(prev);
    result.residual = complementarity_residual(result.u, spec, grid);
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::string SolveResult::trace_csv() const
{
    CsvWriter csv({"m", "sup_delta", "sup_neg_part", "min_increment"});
    for (const auto& e : trace) {
        csv.cell(e.m).cell(e.sup_delta).cell(e.sup_neg_part).cell(e.min_increment).end_row();
    }
    return csv.str();
}

std::string SolveResult::diagnostics_json(const Grid& grid, const ProblemSpec& spec) const
{
    nlohmann::ordered_json doc;
    doc["converged"] = converged;
    doc["iterations"] = iterations;
    doc["final_m"] = final_m;
    doc["stop_tolerance"] = stop_tolerance;
    doc["residual_sup_norm"] = residual.sup_norm;
    doc["wall_seconds"] = wall_seconds;
    doc["dt_times_final_m"] = grid.dt() * final_m;
    auto& values = doc["value_at_x0"] = nlohmann::ordered_json::array();
    for (int i = 0; i < u.k(); ++i) {
        values.push_back(u.at(i, 0, spec.x0, grid));
    }
    return doc.dump(2);
}

std::string field_csv(const ValueField& u, const ResidualField* residual, const ProblemSpec& spec, const Grid& grid,
                      int time_stride)
{
    const int stride = std::max(1, time_stride);
    CsvWriter csv({"i", "t", "x", "u", "l", "residual"});
    for (int i = 0; i < u.k(); ++i) {
        for (int j = 0; j <= grid.nt(); ++j) {
            if (j % stride != 0 && j != grid.nt()) {
                continue;
            }
            const double t = grid.t(j);
            for (int n = 0; n < grid.nx(); ++n) {
                const double x = grid.x(n);
                const double res = residual ? residual->components[static_cast<std::size_t>(i)](j, n) : 0.0;
                csv.cell(i + 1).cell(t).cell(x).cell(u[i](j, n)).cell(spec.l[static_cast<std::size_t>(i)](t, x)).cell(res).end_row();
            }
        }
    }
    return csv.str();
}

} // namespace gbsde
