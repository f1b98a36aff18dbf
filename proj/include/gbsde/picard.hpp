#pragma once

#include "gbsde/core.hpp"
#include "gbsde/obstacle_pde.hpp"

#include <string>
#include <vector>

namespace gbsde {

enum class PicardGuess { terminal_propagated, zeros };

struct PicardConfig {
    double h = 1.0;              // initial slab width
    double rho = 0.5;            // contraction target
    int max_inner = 60;
    double inner_tolerance = 1e-7;
    int halving_limit = 8;
    double penalty_m = 0.0;      // penalty used by every frozen one-dimensional solve
    PicardGuess guess = PicardGuess::terminal_propagated;

    void validate(double T) const;
};

struct PicardIteration {
    int iteration = 0;
    double sup_delta = 0.0;  // sup |Y^{U_j} - U_j| over the slab
    double factor = 0.0;     // sup_delta_j / sup_delta_{j-1}; 0 when not measurable
};

struct LocalStepResult {
    std::vector<RowMatrix> field;   // per component, rows = slab levels bottom to top
    std::vector<PicardIteration> log;
    double certificate = 0.0;       // largest contraction factor measured from the third iteration on
    bool converged = false;
    bool too_wide = false;
};

/// Fixed-point iteration U -> Y^U on the slab [t_begin, t_end] of the grid.
///
/// Each component solves its own one-dimensional penalized problem with the other components frozen
/// at U. The top level of the slab is the terminal zeta. Stops once successive iterates differ by less
/// than the inner tolerance; reports `too_wide` as soon as a factor measured at iteration 3 or later
/// exceeds rho.
LocalStepResult picard_local_step(const ProblemSpec& spec, const std::vector<Eigen::ArrayXd>& zeta, double t_begin,
                                  double t_end, const Grid& grid, const PicardConfig& cfg);

struct SlabRecord {
    int index = 0;
    double h = 0.0;
    double t_begin = 0.0;
    double t_end = 0.0;
    int iterations = 0;
    double certificate = 0.0;
    double sup_delta = 0.0;
};

struct PicardResult {
    ValueField u;
    std::vector<SlabRecord> slabs;
    bool converged = false;
    double final_h = 0.0;
    int halvings = 0;
    double last_factor = 0.0;

    double max_certificate() const;
    std::string slab_csv() const;
};

/// Backward stitching of local Picard steps over [0, T]; halves h when a slab is too wide.
PicardResult picard_global_solve(const ProblemSpec& spec, const Grid& grid, const PicardConfig& cfg);

} // namespace gbsde
