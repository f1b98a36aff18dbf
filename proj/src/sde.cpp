#include "gbsde/sde.hpp"

#include "gbsde/io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gbsde {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

NormalStream::NormalStream(std::uint64_t seed, std::uint64_t stream)
    : engine_(splitmix64(seed ^ splitmix64(stream + 1)))
{
}

double NormalStream::uniform()
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double NormalStream::normal()
{
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
}

ScenarioControl::ScenarioControl(std::vector<double> breakpoints, std::vector<double> variances)
    : breakpoints_(std::move(breakpoints)), variances_(std::move(variances))
{
    if (breakpoints_.size() < 2 || variances_.size() + 1 != breakpoints_.size()) {
        throw ValidationError("scenario control needs m + 1 breakpoints for m variances");
    }
    if (breakpoints_.front() != 0.0) {
        throw ValidationError("scenario control must start at time 0");
    }
    for (std::size_t j = 1; j < breakpoints_.size(); ++j) {
        if (!(breakpoints_[j] > breakpoints_[j - 1])) {
            throw ValidationError("scenario control breakpoints must be strictly increasing");
        }
    }
    for (double v : variances_) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ValidationError("scenario control variances must be positive and finite");
        }
    }
}

ScenarioControl ScenarioControl::constant(double horizon, double variance)
{
    return ScenarioControl({0.0, horizon}, {variance});
}

ScenarioControl ScenarioControl::switching(double horizon, double switch_time, double first, double second)
{
    return ScenarioControl({0.0, switch_time, horizon}, {first, second});
}

double ScenarioControl::variance_at(double t) const
{
    const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
    std::ptrdiff_t piece = std::distance(breakpoints_.begin(), it) - 1;
    piece = std::clamp<std::ptrdiff_t>(piece, 0, static_cast<std::ptrdiff_t>(variances_.size()) - 1);
    return variances_[static_cast<std::size_t>(piece)];
}

double ScenarioControl::integrated(double a, double b) const
{
    double acc = 0.0;
    for (std::size_t j = 0; j < variances_.size(); ++j) {
        double lo = breakpoints_[j];
        double hi = breakpoints_[j + 1];
        if (j + 1 == variances_.size()) {
            hi = std::max(hi, b); // last piece extends past the horizon
        }
        const double overlap = std::min(hi, b) - std::max(lo, a);
        if (overlap > 0.0) {
            acc += overlap * variances_[j];
        }
    }
    return acc;
}

void ScenarioControl::check_band(const GParams& gp) const
{
    const double slack = 1e-12 * gp.sigma_hi_sq();
    for (std::size_t j = 0; j < variances_.size(); ++j) {
        const double v = variances_[j];
        if (v < gp.sigma_lo_sq() - slack || v > gp.sigma_hi_sq() + slack) {
            throw ValidationError("scenario control piece " + std::to_string(j + 1) + " has variance "
                                  + format_double(v) + " outside [" + format_double(gp.sigma_lo_sq()) + ", "
                                  + format_double(gp.sigma_hi_sq()) + "]");
        }
    }
}

std::vector<ScenarioControl> default_control_family(const GParams& gp, double horizon)
{
    const double mid = 0.5 * (gp.sigma_lo_sq() + gp.sigma_hi_sq());
    return {ScenarioControl::constant(horizon, gp.sigma_lo_sq()),
            ScenarioControl::constant(horizon, gp.sigma_hi_sq()),
            ScenarioControl::switching(horizon, 0.5 * horizon, gp.sigma_lo_sq(), mid)};
}

PathEnsemble simulate_gsde(const ProblemSpec& spec, const ScenarioControl& control, double x0, int n_steps,
                           int n_paths, std::uint64_t seed, double horizon)
{
    if (n_steps < 1 || n_paths < 1) {
        throw ValidationError("simulate_gsde needs n_steps >= 1 and n_paths >= 1");
    }
    if (!(horizon > 0.0)) {
        throw ValidationError("simulate_gsde needs a positive horizon");
    }
    control.check_band(spec.g_params);

    PathEnsemble ens;
    const double dt = horizon / n_steps;
    ens.times = Eigen::ArrayXd::LinSpaced(n_steps + 1, 0.0, horizon);
    ens.states.resize(n_paths, n_steps + 1);
    ens.db.resize(n_paths, n_steps);
    ens.dqv.resize(n_steps);
    Eigen::ArrayXd root_var(n_steps);
    for (int j = 0; j < n_steps; ++j) {
        const double v = control.variance_at(ens.times(j));
        ens.dqv(j) = v * dt;
        root_var(j) = std::sqrt(v * dt);
    }

    for (int p = 0; p < n_paths; ++p) {
        NormalStream rng(seed, static_cast<std::uint64_t>(p));
        double x = x0;
        ens.states(p, 0) = x;
        for (int j = 0; j < n_steps; ++j) {
            const double t = ens.times(j);
            const double dB = root_var(j) * rng.normal();
            ens.db(p, j) = dB;
            x += spec.b(t, x) * dt + spec.h(t, x) * ens.dqv(j) + spec.sigma(t, x) * dB;
            ens.states(p, j + 1) = x;
        }
    }
    return ens;
}

std::string MomentDiagnostics::to_csv() const
{
    CsvWriter csv({"x0", "delta", "moment", "stderr", "ratio", "worst_control"});
    for (const auto& row : rows) {
        csv.cell(row.x0).cell(row.delta).cell(row.moment).cell(row.std_error).cell(row.ratio).cell(row.worst_control).end_row();
    }
    return csv.str();
}

MomentDiagnostics moment_diagnostics(const ProblemSpec& spec, const std::vector<double>& x0s,
                                     const std::vector<double>& deltas, int n_paths, std::uint64_t seed,
                                     int steps_per_window)
{
    if (deltas.empty() || x0s.empty()) {
        throw ValidationError("moment_diagnostics needs at least one x0 and one delta");
    }
    for (std::size_t d = 0; d < deltas.size(); ++d) {
        if (!(deltas[d] > 0.0) || (d > 0 && !(deltas[d] < deltas[d - 1]))) {
            throw ValidationError("moment_diagnostics deltas must be positive and strictly decreasing");
        }
    }
    MomentDiagnostics out;
    for (double x0 : x0s) {
        std::vector<double> log_d;
        std::vector<double> log_m;
        for (double delta : deltas) {
            const auto family = default_control_family(spec.g_params, delta);
            MomentRow row{x0, delta, -1.0, 0.0, 0.0, 0};
            for (std::size_t c = 0; c < family.size(); ++c) {
                const auto ens = simulate_gsde(spec, family[c], x0, steps_per_window, n_paths, seed, delta);
                Eigen::ArrayXd sup_sq = (ens.states.array() - x0).square().rowwise().maxCoeff();
                const double mean = sup_sq.mean();
                const double var = n_paths > 1 ? (sup_sq - mean).square().sum() / (n_paths - 1) : 0.0;
                if (mean > row.moment) {
                    row.moment = mean;
                    row.std_error = std::sqrt(var / n_paths);
                    row.worst_control = static_cast<int>(c);
                }
            }
            row.ratio = row.moment / (1.0 + x0 * x0);
            out.rows.push_back(row);
            if (row.moment > 0.0) {
                log_d.push_back(std::log(delta));
                log_m.push_back(std::log(row.moment));
            }
        }
        double slope = 0.0;
        if (log_d.size() >= 2) {
            const Eigen::Map<const Eigen::ArrayXd> ld(log_d.data(), static_cast<Eigen::Index>(log_d.size()));
            const Eigen::Map<const Eigen::ArrayXd> lm(log_m.data(), static_cast<Eigen::Index>(log_m.size()));
            const double md = ld.mean();
            const double mm = lm.mean();
            slope = ((ld - md) * (lm - mm)).sum() / (ld - md).square().sum();
        }
        out.slopes.push_back(slope);
    }
    return out;
}

} // namespace gbsde
