#include "gbsde/gexp.hpp"

#include "gbsde/io.hpp"
#include "gbsde/stencil.hpp"

#include <algorithm>
#include <cmath>

namespace gbsde {

CylinderFunctional::CylinderFunctional(CylinderKind kind, std::vector<double> times)
    : kind_(kind), times_(std::move(times))
{
    if (times_.empty()) {
        throw ValidationError("cylinder functional needs at least one time");
    }
    for (std::size_t j = 0; j < times_.size(); ++j) {
        if (!(times_[j] > 0.0) || (j > 0 && !(times_[j] > times_[j - 1]))) {
            throw ValidationError("cylinder functional times must be positive and strictly increasing");
        }
    }
}

CylinderFunctional CylinderFunctional::linear(std::vector<double> times, double c0, std::vector<double> coeffs)
{
    CylinderFunctional out(CylinderKind::linear, std::move(times));
    if (coeffs.size() != out.times_.size()) {
        throw ValidationError("linear cylinder functional needs one coefficient per time");
    }
    out.c0_ = c0;
    out.coeffs_ = std::move(coeffs);
    return out;
}

CylinderFunctional CylinderFunctional::squared_increment(std::vector<double> times, double scale)
{
    CylinderFunctional out(CylinderKind::squared_increment, std::move(times));
    out.scale_ = scale;
    return out;
}

CylinderFunctional CylinderFunctional::legs(std::vector<double> times, std::vector<PayoffLeg> legs, double scale)
{
    CylinderFunctional out(CylinderKind::leg_product, std::move(times));
    if (legs.size() != out.times_.size()) {
        throw ValidationError("leg-product cylinder functional needs one leg per time");
    }
    out.legs_ = std::move(legs);
    out.scale_ = scale;
    return out;
}

CylinderFunctional CylinderFunctional::poly_clip(std::vector<double> times, std::vector<double> coeffs, double lo, double hi)
{
    CylinderFunctional out(CylinderKind::poly_clip, std::move(times));
    if (coeffs.empty() || !(lo <= hi)) {
        throw ValidationError("poly-clip cylinder functional needs coefficients and lo <= hi");
    }
    out.coeffs_ = std::move(coeffs);
    out.lo_ = lo;
    out.hi_ = hi;
    return out;
}

double CylinderFunctional::operator()(std::span<const double> xs) const
{
    switch (kind_) {
    case CylinderKind::linear: {
        double acc = c0_;
        for (std::size_t j = 0; j < coeffs_.size(); ++j) {
            acc += coeffs_[j] * xs[j];
        }
        return acc;
    }
    case CylinderKind::squared_increment: {
        const double last = xs.back();
        const double prev = xs.size() > 1 ? xs[xs.size() - 2] : 0.0;
        return scale_ * (last - prev) * (last - prev);
    }
    case CylinderKind::leg_product: {
        double acc = scale_;
        for (std::size_t j = 0; j < legs_.size(); ++j) {
            acc *= legs_[j](xs[j]);
        }
        return acc;
    }
    case CylinderKind::poly_clip: {
        double acc = 0.0;
        const double x = xs.back();
        for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) {
            acc = acc * x + *it;
        }
        return std::clamp(acc, lo_, hi_);
    }
    }
    return 0.0;
}

RowMatrix solve_g_heat(const Eigen::ArrayXd& terminal, const GParams& gp, double t_start, double t_end, const Grid& grid)
{
    if (!(t_start < t_end)) {
        throw DomainError("solve_g_heat needs t_start < t_end");
    }
    if (terminal.size() != grid.nx()) {
        throw DomainError("solve_g_heat: terminal has " + std::to_string(terminal.size()) + " nodes, grid has "
                          + std::to_string(grid.nx()));
    }
    for (Eigen::Index i = 0; i < terminal.size(); ++i) {
        if (!std::isfinite(terminal(i))) {
            throw DomainError("solve_g_heat: terminal is not finite at node " + std::to_string(i) + " (x = "
                              + format_double(grid.x(static_cast<int>(i))) + ")");
        }
    }
    const double dt = grid.dt();
    const double dx = grid.dx();
    if (dt * gp.sigma_hi_sq() / (dx * dx) > 0.5 * (1.0 + 1e-12)) {
        throw CflError("solve_g_heat: grid violates dt * sigma_hi_sq / dx^2 <= 1/2 for these G parameters");
    }
    const double span = (t_end - t_start) / dt;
    const int steps = static_cast<int>(std::lround(span));
    if (steps < 1 || std::abs(span - steps) > 1e-6) {
        throw DomainError("solve_g_heat: [" + format_double(t_start) + ", " + format_double(t_end)
                          + "] is not a whole number of time steps");
    }

    RowMatrix levels(steps + 1, grid.nx());
    levels.row(steps) = terminal.transpose();
    Eigen::ArrayXd u = terminal;
    for (int j = steps - 1; j >= 0; --j) {
        u += dt * g_apply(gp, second_difference(u, dx));
        levels.row(j) = u.transpose();
    }
    return levels;
}

CylinderValue evaluate_cylinder_field(const CylinderFunctional& func, const GParams& gp, const Grid& grid)
{
    const auto& times = func.times();
    if (func.arity() > 2) {
        throw UnsupportedArity("evaluate_cylinder supports at most 2 times, got " + std::to_string(func.arity()));
    }
    if (times.back() > grid.T() * (1.0 + 1e-12)) {
        throw DomainError("evaluate_cylinder: time " + format_double(times.back()) + " exceeds the grid horizon "
                          + format_double(grid.T()));
    }
    const Eigen::ArrayXd xs = grid.nodes();
    const int nx = grid.nx();
    Eigen::ArrayXd outer_terminal(nx);

    if (func.arity() == 1) {
        for (int i = 0; i < nx; ++i) {
            const double x = xs(i);
            outer_terminal(i) = func(std::span<const double>(&x, 1));
        }
    } else {
        // u_2(t_1, x; x_1) evaluated on the diagonal x = x_1 glues the two stages.
        const double t1 = times[0];
        const double t2 = times[1];
        Eigen::ArrayXd inner(nx);
        for (int a = 0; a < nx; ++a) {
            for (int i = 0; i < nx; ++i) {
                const double args[2] = {xs(a), xs(i)};
                inner(i) = func(args);
            }
            const RowMatrix levels = solve_g_heat(inner, gp, t1, t2, grid);
            outer_terminal(a) = levels(0, a);
        }
    }

    CylinderValue out;
    out.outer = solve_g_heat(outer_terminal, gp, 0.0, times[0], grid);
    out.value = interpolate(out.outer.row(0).transpose().array(), grid, 0.0);
    return out;
}

std::string ScenarioTable::to_csv() const
{
    CsvWriter csv({"control_id", "mean", "stderr"});
    for (const auto& row : rows) {
        csv.cell(row.control_id).cell(row.mean).cell(row.std_error).end_row();
    }
    return csv.str();
}

ScenarioTable sup_over_scenarios(const CylinderFunctional& func, const GParams& gp,
                                 const std::vector<ScenarioControl>& controls, int n_paths, std::uint64_t seed)
{
    if (n_paths < 1000) {
        throw ValidationError("sup_over_scenarios needs n_paths >= 1000, got " + std::to_string(n_paths));
    }
    if (controls.empty()) {
        throw ValidationError("sup_over_scenarios needs at least one control");
    }
    const auto& times = func.times();
    ScenarioTable table;
    std::vector<double> xs(times.size());
    for (std::size_t c = 0; c < controls.size(); ++c) {
        controls[c].check_band(gp);
        std::vector<double> root_var(times.size());
        double prev = 0.0;
        for (std::size_t j = 0; j < times.size(); ++j) {
            root_var[j] = std::sqrt(controls[c].integrated(prev, times[j]));
            prev = times[j];
        }
        double sum = 0.0;
        double sum_sq = 0.0;
        for (int p = 0; p < n_paths; ++p) {
            NormalStream rng(seed, static_cast<std::uint64_t>(p));
            double b = 0.0;
            for (std::size_t j = 0; j < times.size(); ++j) {
                b += root_var[j] * rng.normal();
                xs[j] = b;
            }
            const double value = func(xs);
            sum += value;
            sum_sq += value * value;
        }
        const double mean = sum / n_paths;
        const double var = std::max(0.0, (sum_sq - n_paths * mean * mean) / (n_paths - 1));
        table.rows.push_back({static_cast<int>(c), mean, std::sqrt(var / n_paths)});
        if (table.rows[c].mean > table.rows[static_cast<std::size_t>(table.best)].mean) {
            table.best = static_cast<int>(c);
        }
    }
    return table;
}

} // namespace gbsde
