#pragma once

#include "gbsde/core.hpp"
#include "gbsde/sde.hpp"

#include <cstdint>
#include <vector>

namespace gbsde {

struct UnsupportedArity : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

enum class CylinderKind { linear, squared_increment, leg_product, poly_clip };

struct PayoffLeg {
    bool put = true;
    double strike = 0.0;

    double operator()(double x) const { return put ? std::max(strike - x, 0.0) : std::max(x - strike, 0.0); }
};

/// phi(B_{t_1}, ..., B_{t_n}) from a small catalog:
///   linear             c0 + sum c_j x_j
///   squared_increment  scale (x_n - x_{n-1})^2, with x_0 = 0
///   leg_product        scale prod leg_j(x_j)
///   poly_clip          clamp(sum c_j x_n^j, lo, hi)
class CylinderFunctional {
public:
    static CylinderFunctional linear(std::vector<double> times, double c0, std::vector<double> coeffs);
    static CylinderFunctional squared_increment(std::vector<double> times, double scale = 1.0);
    static CylinderFunctional legs(std::vector<double> times, std::vector<PayoffLeg> legs, double scale = 1.0);
    static CylinderFunctional poly_clip(std::vector<double> times, std::vector<double> coeffs, double lo, double hi);

    double operator()(std::span<const double> xs) const;

    const std::vector<double>& times() const { return times_; }
    int arity() const { return static_cast<int>(times_.size()); }
    CylinderKind kind() const { return kind_; }

private:
    CylinderFunctional(CylinderKind kind, std::vector<double> times);

    CylinderKind kind_;
    std::vector<double> times_;
    std::vector<double> coeffs_;
    std::vector<PayoffLeg> legs_;
    double c0_ = 0.0;
    double scale_ = 1.0;
    double lo_ = 0.0;
    double hi_ = 0.0;
};

/// Explicit monotone scheme for u_t + G(u_xx) = 0, marched backward from t_end to t_start.
/// Row 0 of the result is the t_start level, the last row the terminal.
RowMatrix solve_g_heat(const Eigen::ArrayXd& terminal, const GParams& gp, double t_start, double t_end, const Grid& grid);

struct CylinderValue {
    double value = 0.0;
    RowMatrix outer; // levels of the final solve on [0, t_1]
};

/// G-expectation of a cylinder functional of B started at 0, read at (0, 0). Arity at most 2.
CylinderValue evaluate_cylinder_field(const CylinderFunctional& func, const GParams& gp, const Grid& grid);

inline double evaluate_cylinder(const CylinderFunctional& func, const GParams& gp, const Grid& grid)
{
    return evaluate_cylinder_field(func, gp, grid).value;
}

struct ScenarioRow {
    int control_id = 0;
    double mean = 0.0;
    double std_error = 0.0;
};

struct ScenarioTable {
    std::vector<ScenarioRow> rows;
    int best = 0;

    double best_mean() const { return rows.at(static_cast<std::size_t>(best)).mean; }
    double best_std_error() const { return rows.at(static_cast<std::size_t>(best)).std_error; }
    std::string to_csv() const;
};

/// Monte-Carlo lower bound for the G-expectation: the largest empirical mean over scenario controls.
/// B at the functional's times is sampled exactly from the integrated variance of each control.
ScenarioTable sup_over_scenarios(const CylinderFunctional& func, const GParams& gp,
                                 const std::vector<ScenarioControl>& controls, int n_paths, std::uint64_t seed);

} // namespace gbsde
