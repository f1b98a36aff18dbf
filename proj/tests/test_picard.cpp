#include "fixtures.hpp"
#include "gbsde/obstacle_pde.hpp"
#include "gbsde/picard.hpp"

#include <gtest/gtest.h>

using namespace gbsde;
using namespace gbsde::testing;

namespace {

std::vector<Eigen::ArrayXd> terminals(const ProblemSpec& spec, const Grid& grid)
{
    const ExplicitScheme scheme(spec, grid);
    std::vector<Eigen::ArrayXd> out;
    for (int i = 0; i < spec.k; ++i) {
        out.push_back(scheme.terminal(i));
    }
    return out;
}

} // namespace

TEST(PicardConfig, Validation)
{
    PicardConfig cfg;
    EXPECT_NO_THROW(cfg.validate(1.0));
    cfg.rho = 1.0;
    EXPECT_THROW(cfg.validate(1.0), ValidationError);
    cfg = PicardConfig{};
    cfg.h = 2.0;
    EXPECT_THROW(cfg.validate(1.0), ValidationError);
    cfg = PicardConfig{};
    cfg.max_inner = 2;
    EXPECT_THROW(cfg.validate(1.0), ValidationError);
    cfg = PicardConfig{};
    cfg.penalty_m = -1.0;
    EXPECT_THROW(cfg.validate(1.0), ValidationError);
}

TEST(PicardLocalStep, DecoupledConvergesInOneIteration)
{
    const ProblemSpec spec = put_spec();
    const Grid grid = make_grid(spec, 0.0, 2.5, 101, 1600, 16.0);
    PicardConfig cfg;
    cfg.penalty_m = 16.0;
    const LocalStepResult r = picard_local_step(spec, terminals(spec, grid), 0.5, 1.0, grid, cfg);
    EXPECT_TRUE(r.converged);
    EXPECT_FALSE(r.too_wide);
    EXPECT_EQ(r.log.size(), 1u);
    ASSERT_EQ(r.field.size(), 1u);
    EXPECT_EQ(r.field[0].rows(), grid.nt() - grid.level_of(0.5) + 1);
}

TEST(PicardLocalStep, ConstantTerminalIsFixedPoint)
{
    ProblemSpec spec = heat_spec(CoefficientFn::constant(0.4), 1.0, 4.0);
    spec.l = {CoefficientFn::constant(0.1)};
    spec.l_tilde = {CoefficientFn::constant(0.1)};
    const Grid grid(-5.0, 5.0, 51, 400, 1.0, spec.g_params);
    PicardConfig cfg;
    cfg.penalty_m = 8.0;
    const LocalStepResult r = picard_local_step(spec, terminals(spec, grid), 0.0, 1.0, grid, cfg);
    EXPECT_EQ(r.log.size(), 1u);
    EXPECT_TRUE((r.field[0].array() == 0.4).all());
}

TEST(PicardLocalStep, CoupledContraction)
{
    const ProblemSpec spec = coupled_spec();
    const Grid grid = make_grid(spec, 0.0, 2.5, 101, 1600, 16.0);
    PicardConfig cfg;
    cfg.penalty_m = 16.0;
    const LocalStepResult r = picard_local_step(spec, terminals(spec, grid), 0.75, 1.0, grid, cfg);
    EXPECT_TRUE(r.converged);
    EXPECT_GE(r.log.size(), 3u);
    EXPECT_LE(r.certificate, 0.5);
    EXPECT_LT(r.log.back().sup_delta, cfg.inner_tolerance);
}

TEST(PicardLocalStep, Errors)
{
    const ProblemSpec spec = put_spec();
    const Grid grid = make_grid(spec, 0.0, 2.5, 101, 1600, 16.0);
    PicardConfig cfg;
    auto zeta = terminals(spec, grid);
    zeta[0](5) -= 0.01;
    EXPECT_THROW(picard_local_step(spec, zeta, 0.5, 1.0, grid, cfg), ValidationError);
    EXPECT_THROW(picard_local_step(spec, terminals(spec, grid), 1.0, 0.5, grid, cfg), DomainError);
    cfg.penalty_m = 2.0 / grid.dt();
    EXPECT_THROW(picard_local_step(spec, terminals(spec, grid), 0.5, 1.0, grid, cfg), CflError);
}

TEST(PicardGlobal, DecoupledMatchesObstacleSolver)
{
    const ProblemSpec spec = rate_put_spec();
    const Grid grid = make_grid(spec, 0.0, 2.5, 151, 1, 256.0);
    const SolveResult ref = solve_obstacle(spec, grid, PenaltySchedule::doubling(8, default_stop_tolerance(spec, grid)));
    ASSERT_TRUE(ref.converged);
    PicardConfig cfg;
    cfg.penalty_m = ref.final_m;
    const PicardResult r = picard_global_solve(spec, grid, cfg);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.u.sup_distance(ref.u), 2.0 * (ref.stop_tolerance + cfg.inner_tolerance));

    const Eigen::ArrayXd l = ExplicitScheme(spec, grid).obstacle(0);
    EXPECT_GE((r.u[0].array().rowwise() - l.transpose()).minCoeff(), -ref.stop_tolerance);
}

TEST(PicardGlobal, SlabStitchingIsConsistent)
{
    const ProblemSpec spec = rate_put_spec();
    const Grid grid(0.0, 2.5, 101, 1000, 1.0, spec.g_params, max_sigma_sq(spec, 0.0, 2.5, 101));
    PicardConfig one;
    one.penalty_m = 64.0;
    PicardConfig two = one;
    two.h = 0.5;
    const PicardResult a = picard_global_solve(spec, grid, one);
    const PicardResult b = picard_global_solve(spec, grid, two);
    ASSERT_EQ(a.slabs.size(), 1u);
    ASSERT_EQ(b.slabs.size(), 2u);
    EXPECT_LE(a.u.sup_distance(b.u), 1e-8);
    EXPECT_DOUBLE_EQ(b.slabs[0].t_begin, b.slabs[1].t_end);
    const std::string csv = b.slab_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "slab,h,t_begin,t_end,iterations,contraction_factor,sup_delta");
}

TEST(PicardGlobal, CoupledAgreementAndCertificate)
{
    const ProblemSpec spec = coupled_spec();
    const Grid grid = make_grid(spec, 0.0, 2.5, 101, 1, 64.0);
    const SolveResult ref = solve_obstacle(spec, grid, PenaltySchedule::doubling(6, default_stop_tolerance(spec, grid)));
    ASSERT_TRUE(ref.converged);
    PicardConfig cfg;
    cfg.penalty_m = ref.final_m;
    const PicardResult r = picard_global_solve(spec, grid, cfg);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.max_certificate(), 0.5);
    EXPECT_LE(r.u.sup_distance(ref.u), 2.0 * (ref.stop_tolerance + cfg.inner_tolerance));
}

TEST(PicardGlobal, HalvesSlabsUntilContraction)
{
    const ProblemSpec spec = coupled_spec(3.0);
    const Grid grid = make_grid(spec, 0.0, 2.5, 101, 1, 64.0);
    PicardConfig cfg;
    cfg.penalty_m = 64.0;
    cfg.rho = 0.3;
    const PicardResult r = picard_global_solve(spec, grid, cfg);
    EXPECT_TRUE(r.converged);
    EXPECT_GE(r.halvings, 1);
    EXPECT_LT(r.final_h, 1.0);
    EXPECT_LE(r.max_certificate(), 0.3);

    cfg.halving_limit = 0;
    const PicardResult stuck = picard_global_solve(spec, grid, cfg);
    EXPECT_FALSE(stuck.converged);
    EXPECT_GT(stuck.last_factor, 0.3);
}

TEST(PicardGlobal, FactorsShrinkWithSlabWidth)
{
    const ProblemSpec spec = coupled_spec(3.0);
    const Grid grid = make_grid(spec, 0.0, 2.5, 101, 1, 64.0);
    double previous = 1.0;
    for (double h : {1.0, 0.5, 0.25, 0.125}) {
        PicardConfig cfg;
        cfg.penalty_m = 64.0;
        cfg.rho = 0.99;
        cfg.h = h;
        cfg.halving_limit = 0;
        const PicardResult r = picard_global_solve(spec, grid, cfg);
        ASSERT_TRUE(r.converged);
        EXPECT_LE(r.max_certificate(), previous + 0.05) << "h = " << h;
        previous = r.max_certificate();
    }
}

TEST(PicardGlobal, InitialGuessDoesNotMatter)
{
    const ProblemSpec spec = coupled_spec();
    const Grid grid = make_grid(spec, 0.0, 2.5, 101, 1, 64.0);
    PicardConfig a;
    a.penalty_m = 64.0;
    PicardConfig b = a;
    b.guess = PicardGuess::zeros;
    const PicardResult ra = picard_global_solve(spec, grid, a);
    const PicardResult rb = picard_global_solve(spec, grid, b);
    ASSERT_TRUE(ra.converged);
    ASSERT_TRUE(rb.converged);
    EXPECT_LT(ra.u.sup_distance(rb.u), 2.0 * a.inner_tolerance);
}
