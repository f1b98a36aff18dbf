#include "gbsde/picard.hpp"

#include "gbsde/io.hpp"

#include <algorithm>
#include <cmath>

namespace gbsde {

void PicardConfig::validate(double T) const
{
    if (!(rho > 0.0 && rho < 1.0)) {
        throw ValidationError("picard: contraction target rho must lie in (0, 1)");
    }
    if (!(h > 0.0) || h > T * (1.0 + 1e-12)) {
        throw ValidationError("picard: slab width h must lie in (0, T]");
    }
    if (max_inner < 3) {
        throw ValidationError("picard: max_inner must be at least 3");
    }
    if (!(inner_tolerance > 0.0)) {
        throw ValidationError("picard: inner tolerance must be positive");
    }
    if (halving_limit < 0) {
        throw ValidationError("picard: halving limit must be non-negative");
    }
    if (penalty_m < 0.0) {
        throw ValidationError("picard: penalty m must be non-negative");
    }
}

namespace {

LocalStepResult local_step(const ExplicitScheme& scheme, const std::vector<Eigen::ArrayXd>& zeta, int begin, int end,
                           const PicardConfig& cfg)
{
    const ProblemSpec& spec = scheme.spec();
    const Grid& grid = scheme.grid();
    const int k = spec.k;
    const int levels = end - begin + 1;
    const int nx = grid.nx();

    std::vector<RowMatrix> frozen(static_cast<std::size_t>(k), RowMatrix(levels, nx));
    for (int c = 0; c < k; ++c) {
        auto& mat = frozen[static_cast<std::size_t>(c)];
        if (cfg.guess == PicardGuess::terminal_propagated) {
            mat.rowwise() = zeta[static_cast<std::size_t>(c)].transpose().matrix();
        } else {
            mat.setZero();
            mat.row(levels - 1) = zeta[static_cast<std::size_t>(c)].transpose();
        }
    }

    LocalStepResult out;
    std::vector<RowMatrix> image = frozen;
    std::vector<Eigen::ArrayXd> level(static_cast<std::size_t>(k));
    Eigen::ArrayXd next;
    const bool coupled = spec.coupled();
    double prev_delta = 0.0;
    double last_factor_before_third = 0.0;
    bool have_late_factor = false;

    for (int q = 1; q <= cfg.max_inner; ++q) {
        for (int c = 0; c < k; ++c) {
            auto& own = image[static_cast<std::size_t>(c)];
            own.row(levels - 1) = zeta[static_cast<std::size_t>(c)].transpose();
            for (int r = levels - 2; r >= 0; --r) {
                for (int d = 0; d < k; ++d) {
                    const auto& src = d == c ? own : frozen[static_cast<std::size_t>(d)];
                    level[static_cast<std::size_t>(d)] = src.row(r + 1).transpose();
                }
                scheme.step(c, grid.t(begin + r + 1), level, cfg.penalty_m, next);
                own.row(r) = next.transpose();
            }
        }
        double delta = 0.0;
        for (int c = 0; c < k; ++c) {
            delta = std::max(delta, (image[static_cast<std::size_t>(c)] - frozen[static_cast<std::size_t>(c)]).cwiseAbs().maxCoeff());
        }
        const double factor = (q >= 2 && prev_delta > 0.0) ? delta / prev_delta : 0.0;
        out.log.push_back({q, delta, factor});
        frozen = image;
        prev_delta = delta;

        if (q >= 3) {
            out.certificate = have_late_factor ? std::max(out.certificate, factor) : factor;
            have_late_factor = true;
        } else if (q == 2) {
            last_factor_before_third = factor;
        }

        if (!coupled) {
            // The frozen inputs never enter the map, so the first image is the fixed point.
            out.converged = true;
            break;
        }
        if (delta < cfg.inner_tolerance) {
            out.converged = true;
            break;
        }
        if (q >= 3 && factor > cfg.rho) {
            out.too_wide = true;
            break;
        }
    }
    if (!have_late_factor) {
        out.certificate = last_factor_before_third;
    }
    out.field = std::move(frozen);
    return out;
}

} // namespace

LocalStepResult picard_local_step(const ProblemSpec& spec, const std::vector<Eigen::ArrayXd>& zeta, double t_begin,
                                  double t_end, const Grid& grid, const PicardConfig& cfg)
{
    const ExplicitScheme scheme(spec, grid);
    scheme.check_penalty(cfg.penalty_m);
    cfg.validate(spec.T);
    const int begin = grid.level_of(t_begin);
    const int end = grid.level_of(t_end);
    if (end <= begin) {
        throw DomainError("picard_local_step needs t_begin < t_end");
    }
    if (zeta.size() != static_cast<std::size_t>(spec.k)) {
        throw DomainError("picard_local_step: terminal has the wrong number of components");
    }
    for (int c = 0; c < spec.k; ++c) {
        const auto& z = zeta[static_cast<std::size_t>(c)];
        if (z.size() != grid.nx()) {
            throw DomainError("picard_local_step: terminal of component " + std::to_string(c + 1) + " has the wrong size");
        }
        const double gap = (z - scheme.obstacle(c)).minCoeff();
        if (gap < -kValidationEps) {
            throw ValidationError("picard_local_step: terminal of component " + std::to_string(c + 1)
                                  + " lies below the obstacle by " + format_double(-gap));
        }
    }
    return local_step(scheme, zeta, begin, end, cfg);
}

double PicardResult::max_certificate() const
{
    double best = 0.0;
    for (const auto& slab : slabs) {
        best = std::max(best, slab.certificate);
    }
    return best;
}

std::string PicardResult::slab_csv() const
{
    CsvWriter csv({"slab", "h", "t_begin", "t_end", "iterations", "contraction_factor", "sup_delta"});
    for (const auto& s : slabs) {
        csv.cell(s.index).cell(s.h).cell(s.t_begin).cell(s.t_end).cell(s.iterations).cell(s.certificate).cell(s.sup_delta).end_row();
    }
    return csv.str();
}

PicardResult picard_global_solve(const ProblemSpec& spec, const Grid& grid, const PicardConfig& cfg)
{
    cfg.validate(spec.T);
    const ExplicitScheme scheme(spec, grid);
    scheme.check_penalty(cfg.penalty_m);
    const int nt = grid.nt();

    PicardResult result;
    double h = cfg.h;
    for (int attempt = 0; attempt <= cfg.halving_limit; ++attempt) {
        result = PicardResult{};
        result.u = ValueField(spec.k, grid);
        result.final_h = h;
        result.halvings = attempt;
        const int slab_steps = std::max(1, static_cast<int>(std::lround(h / grid.dt())));

        std::vector<Eigen::ArrayXd> zeta(static_cast<std::size_t>(spec.k));
        for (int c = 0; c < spec.k; ++c) {
            zeta[static_cast<std::size_t>(c)] = scheme.terminal(c);
            result.u[c].row(nt) = scheme.terminal(c).transpose();
        }
        bool failed = false;
        int index = 0;
        for (int end = nt; end > 0; end -= slab_steps, ++index) {
            const int begin = std::max(0, end - slab_steps);
            LocalStepResult local = local_step(scheme, zeta, begin, end, cfg);
            const double last_delta = local.log.empty() ? 0.0 : local.log.back().sup_delta;
            result.slabs.push_back({index, h, grid.t(begin), grid.t(end), static_cast<int>(local.log.size()),
                                    local.certificate, last_delta});
            result.last_factor = local.log.empty() ? 0.0 : local.log.back().factor;
            if (local.too_wide || !local.converged) {
                failed = true;
                break;
            }
            for (int c = 0; c < spec.k; ++c) {
                const auto& slab = local.field[static_cast<std::size_t>(c)];
                result.u[c].middleRows(begin, end - begin + 1) = slab;
                zeta[static_cast<std::size_t>(c)] = slab.row(0).transpose();
            }
        }
        if (!failed) {
            result.converged = true;
            return result;
        }
        h *= 0.5;
    }
    return result;
}

} // namespace gbsde
