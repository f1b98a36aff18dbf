#pragma once

#include "gbsde/core.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace gbsde {

/// Reproducible normal stream.
///
/// Each (seed, stream) pair seeds its own std::mt19937_64 with splitmix64(seed ^ splitmix64(stream + 1)).
/// Uniforms take the top 53 bits of a draw; normals come from the Box-Muller transform, consuming two
/// uniforms per pair and caching the second value. Path p of a simulation always uses stream p.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t stream);

    double uniform();
    double normal();

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Piecewise-constant variance path v(s) in [sigma_lo_sq, sigma_hi_sq], one measure of the representing family.
class ScenarioControl {
public:
    /// breakpoints 0 = tau_0 < ... < tau_m = horizon, variances v_1..v_m.
    ScenarioControl(std::vector<double> breakpoints, std::vector<double> variances);

    static ScenarioControl constant(double horizon, double variance);
    /// variance `first` on [0, switch_time), `second` afterwards.
    static ScenarioControl switching(double horizon, double switch_time, double first, double second);

    /// Variance in force at time t (right-continuous pieces; the last piece is closed).
    double variance_at(double t) const;
    /// Integral of v over [a, b].
    double integrated(double a, double b) const;
    double horizon() const { return breakpoints_.back(); }

    /// Throws ValidationError if any variance leaves the band of gp.
    void check_band(const GParams& gp) const;

    const std::vector<double>& breakpoints() const { return breakpoints_; }
    const std::vector<double>& variances() const { return variances_; }

private:
    std::vector<double> breakpoints_;
    std::vector<double> variances_;
};

/// Extremes plus one mid-band switch.
std::vector<ScenarioControl> default_control_family(const GParams& gp, double horizon);

struct PathEnsemble {
    Eigen::ArrayXd times;  // uniform, step dt
    RowMatrix states;      // paths x (n_steps + 1)
    RowMatrix db;          // paths x n_steps, increments of B
    Eigen::ArrayXd dqv;    // n_steps, increments of <B> = v(t_j) dt

    int n_paths() const { return static_cast<int>(states.rows()); }
    int n_steps() const { return static_cast<int>(times.size()) - 1; }
    double dt() const { return times(1) - times(0); }
};

/// Euler scheme for dX = b ds + h d<B> + sigma dB on [0, horizon] under one scenario.
PathEnsemble simulate_gsde(const ProblemSpec& spec, const ScenarioControl& control, double x0, int n_steps,
                           int n_paths, std::uint64_t seed, double horizon);

/// Horizon defaults to spec.T.
inline PathEnsemble simulate_gsde(const ProblemSpec& spec, const ScenarioControl& control, double x0, int n_steps,
                                  int n_paths, std::uint64_t seed)
{
    return simulate_gsde(spec, control, x0, n_steps, n_paths, seed, spec.T);
}

struct MomentRow {
    double x0 = 0.0;
    double delta = 0.0;
    double moment = 0.0;     // max over controls of E[sup_{s<=delta} |X_s - x0|^2]
    double std_error = 0.0;  // standard error of the maximizing control's estimate
    double ratio = 0.0;      // moment / (1 + x0^2)
    int worst_control = 0;
};

struct MomentDiagnostics {
    std::vector<MomentRow> rows;
    std::vector<double> slopes; // per x0: least-squares slope of log(moment) against log(delta)

    std::string to_csv() const;
};

/// Scaling diagnostics for E[sup |X - x0|^2] over the default control family.
MomentDiagnostics moment_diagnostics(const ProblemSpec& spec, const std::vector<double>& x0s,
                                     const std::vector<double>& deltas, int n_paths, std::uint64_t seed,
                                     int steps_per_window = 64);

} // namespace gbsde
