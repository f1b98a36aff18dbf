#pragma once

#include "gbsde/core.hpp"
#include "gbsde/obstacle_pde.hpp"
#include "gbsde/sde.hpp"

#include <string>
#include <vector>

namespace gbsde {

/// Per-path ledger of (Y, Z, A) reconstructed from a grid solution.
///
/// At step j -> j+1 (same time lattice as the grid):
///   Y_j   = u(t_j, X_j)                 linear interpolation in x
///   Z_j   = sigma(X_j) D u(t_{j+1}, X_j)
///   dA_j  = Y_j - Y_{j+1} - f dt - g v dt + Z_j dB_j + 1/2 D2u (dX^2 - sigma^2 v dt)
/// The last term is the zero-mean second-order part of the martingale increment; without it the
/// pathwise defect carries O(dt) noise of either sign. dA mixes the obstacle push with the
/// non-increasing K part, both of which are non-negative contributions.
///
/// tol_path bounds what is neither: the Taylor remainder of the interpolated field along each step,
/// the gap between interpolated and pointwise F, the obstacle interpolation error and the largest
/// obstacle violation of the field on the nodes.
struct PathSolution {
    int k = 1;
    int n_paths = 0;
    int n_steps = 0;
    bool ledger_stored = false;
    // ledger (only when stored): component-major, each paths x steps
    std::vector<RowMatrix> Y;
    std::vector<RowMatrix> Z;
    std::vector<RowMatrix> dA;
    std::vector<RowMatrix> obstacle;

    // summaries
    double min_obstacle_gap = 0.0;
    double min_a_increment = 0.0;
    double active_fraction = 0.0;     // steps where the nodal obstacle push is non-zero
    double tol_path = 0.0;
    double taylor_remainder = 0.0;    // max |Taylor remainder| over steps
    double operator_gap = 0.0;        // max dt |I[F] - F(interpolated derivatives)|
    double obstacle_interp = 0.0;     // max |I[l](X) - l(X)|
    double nodal_violation = 0.0;     // sup over nodes of (u - l)^-
    double mean_push = 0.0;           // mean over paths of the summed obstacle push
    double skorohod_mean = 0.0;       // mean over paths of sum_j (Y_j - l_j) dA_j
    double skorohod_stderr = 0.0;
    double mean_total_a = 0.0;
    double mean_total_a_stderr = 0.0;
    int clamped_steps = 0;            // steps whose state left the spatial domain

    // per-path extrema, component 0
    Eigen::ArrayXd path_min_gap;
    Eigen::ArrayXd path_min_da;
    Eigen::ArrayXd path_total_a;

    std::string summary_json() const;
    std::string extrema_csv() const;
};

/// Ensemble times must match the grid levels exactly; otherwise DomainError.
PathSolution reconstruct_paths(const ValueField& u, const ProblemSpec& spec, const Grid& grid,
                               const PathEnsemble& ensemble, const ScenarioControl& control, bool store_ledger = false);

struct OrderingError : ValidationError {
    using ValidationError::ValidationError;
};

struct ComparisonReport {
    double worst_violation = 0.0;  // max (u_lo - u_hi), positive means a violation
    double max_gap = 0.0;          // max (u_hi - u_lo)
    double tolerance = 0.0;        // 10 x stop tolerance
    long long violations = 0;      // nodes with u_hi < u_lo - tolerance
    bool ordered = false;
    double value_hi = 0.0;
    double value_lo = 0.0;

    std::string to_json() const;
};

/// Samples the declared ordering (terminal, obstacle), solves both problems and compares nodewise.
/// Throws OrderingError naming condition (ii) or (iii) if the data are not ordered.
ComparisonReport comparison_check(const ProblemSpec& spec_hi, const ProblemSpec& spec_lo, const Grid& grid,
                                  const PenaltySchedule& schedule, int n_samples = 257);

enum class OracleKind { binomial_american, bs_european };

struct OracleParams {
    double spot = 1.0;
    double strike = 1.0;
    double maturity = 1.0;
    double volatility = 0.2;
    double rate = 0.0;
    bool put = true;
    int steps = 2000;
};

double classical_oracle(OracleKind kind, const OracleParams& params);

double normal_cdf(double x);

} // namespace gbsde
