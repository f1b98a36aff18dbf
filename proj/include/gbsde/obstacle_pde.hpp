#pragma once

#include "gbsde/core.hpp"

#include <span>
#include <string>
#include <vector>

namespace gbsde {

/// Penalty parameters m, visited in order by solve_obstacle.
struct PenaltySchedule {
    std::vector<double> m_values;
    double stop_tolerance = 1e-4;
    int j_max = 0;

    /// m = 1, 2, 4, ..., 2^j_max.
    static PenaltySchedule doubling(int j_max, double stop_tolerance);
};

/// 1e-4 (1 + sup |phi|) over the grid nodes.
double default_stop_tolerance(const ProblemSpec& spec, const Grid& grid);

/// Doubling schedule capped at 2^12 and at the largest m with dt * m <= 1.
PenaltySchedule default_schedule(const ProblemSpec& spec, const Grid& grid);

/// F^i(A, p, r, x, t) = G(sigma^2 A + 2 p h + 2 g^i(t, x, r, sigma p)) + b p + f^i(t, x, r, sigma p).
double f_operator(const ProblemSpec& spec, int i, double A, double p, std::span<const double> r, double x, double t);

/// The explicit backward step shared by every grid solver.
///
/// From level j+1 to level j, component i moves by dt * F^i evaluated on level j+1 (all components
/// taken from level j+1), then the penalty acts on the intermediate value:
///   u~ = u_{j+1} + dt F^i(D2 u_{j+1}, D u_{j+1}, u_{j+1}, x, t_{j+1})
///   u_j = u~ + dt m (l - u~)^+
/// Monotone as long as dt sigma_hi^2 max sigma(x)^2 / dx^2 <= 1/2 and dt m <= 1.
class ExplicitScheme {
public:
    ExplicitScheme(const ProblemSpec& spec, const Grid& grid);

    /// F^i at every node of a level; level[c] holds component c.
    void hamiltonian(int i, double t, const std::vector<Eigen::ArrayXd>& level, Eigen::ArrayXd& out) const;

    /// One backward step of component i from a level at time t to the level below it.
    void step(int i, double t, const std::vector<Eigen::ArrayXd>& level, double m, Eigen::ArrayXd& out) const;

    const Eigen::ArrayXd& obstacle(int i) const { return obstacle_[static_cast<std::size_t>(i)]; }
    const Eigen::ArrayXd& terminal(int i) const { return terminal_[static_cast<std::size_t>(i)]; }
    const Eigen::ArrayXd& nodes() const { return nodes_; }
    const Eigen::ArrayXd& sigma_nodes() const { return sigma_; }
    const ProblemSpec& spec() const { return spec_; }
    const Grid& grid() const { return grid_; }

    /// Throws CflError if dt * m > 1.
    void check_penalty(double m) const;

private:
    ProblemSpec spec_;
    Grid grid_;
    Eigen::ArrayXd nodes_;
    Eigen::ArrayXd sigma_;
    Eigen::ArrayXd b_;
    Eigen::ArrayXd h_;
    std::vector<Eigen::ArrayXd> obstacle_;
    std::vector<Eigen::ArrayXd> terminal_;
};

/// Backward explicit solve of the penalized system with parameter m (m = 0: no reflection).
ValueField solve_penalized(const ProblemSpec& spec, double m, const Grid& grid);

struct ResidualField {
    std::vector<RowMatrix> components; // zero on the terminal row and the edge nodes
    double sup_norm = 0.0;

    /// Largest |residual| over nodes with x in [x_lo, x_hi] and t in [t_lo, t_hi].
    double window_sup(const Grid& grid, double x_lo, double x_hi, double t_lo, double t_hi) const;
};

/// min(u - l, -D_t u - F^i(D2 u, D u, u, x, t)) at interior nodes, with F on the same level as u.
ResidualField complementarity_residual(const ValueField& u, const ProblemSpec& spec, const Grid& grid);

struct PenaltyTraceEntry {
    double m = 0.0;
    double sup_delta = 0.0;      // sup |u^m - u^{previous m}|, the first entry against m = 0
    double sup_neg_part = 0.0;   // sup (u^m - l)^-
    double min_increment = 0.0;  // min (u^m - u^{previous m}); negative values break monotonicity
};

struct SolveResult {
    ValueField u;
    std::vector<PenaltyTraceEntry> trace;
    ResidualField residual;
    bool converged = false;
    int iterations = 0;
    double final_m = 0.0;
    double stop_tolerance = 0.0;
    double wall_seconds = 0.0;

    std::string trace_csv() const;
    std::string diagnostics_json(const Grid& grid, const ProblemSpec& spec) const;
};

/// Runs solve_penalized along the schedule until consecutive fields differ by less than the stop tolerance.
SolveResult solve_obstacle(const ProblemSpec& spec, const Grid& grid, const PenaltySchedule& schedule);

/// Field CSV with columns i,t,x,u,l,residual; every `time_stride`-th level plus the terminal.
std::string field_csv(const ValueField& u, const ResidualField* residual, const ProblemSpec& spec, const Grid& grid,
                      int time_stride);

} // namespace gbsde
