#pragma once

#include "gbsde/core.hpp"

namespace gbsde::testing {

inline GeneratorFn no_generator(int component) { return GeneratorFn(component, {}); }

/// One-dimensional put with sigma(x) = x (geometric), volatility band [lo, hi] in variance units.
inline ProblemSpec put_spec(double strike = 1.0, double T = 1.0, double lo = 0.04, double hi = 0.04)
{
    ProblemSpec s;
    s.k = 1;
    s.g_params = GParams(lo, hi);
    s.sigma = CoefficientFn::geometric(1.0);
    s.f = {no_generator(0)};
    s.g = {no_generator(0)};
    s.phi = {CoefficientFn::put(strike)};
    s.l = {CoefficientFn::put(strike)};
    s.l_tilde = {CoefficientFn::constant(strike)};
    s.T = T;
    s.L = 1.0;
    s.x0 = 1.0;
    return s;
}

/// Put with rate r: drift r x and discounting f = -r y, so early exercise matters.
inline ProblemSpec rate_put_spec(double rate = 0.05, double strike = 1.0, double T = 1.0)
{
    ProblemSpec s = put_spec(strike, T);
    s.b = CoefficientFn::geometric(rate);
    s.f = {GeneratorFn(0, {{GeneratorTermKind::linear_y, -rate, 0}})};
    return s;
}

/// Obstacle far below everything: the unreflected problem.
inline ProblemSpec unreflected(ProblemSpec s)
{
    for (int i = 0; i < s.k; ++i) {
        s.l[static_cast<std::size_t>(i)] = CoefficientFn::constant(-1e6);
        s.l_tilde[static_cast<std::size_t>(i)] = CoefficientFn::constant(-1e6);
    }
    return s;
}

/// k = 2, f^1 = c arctan(y^2), f^2 = c arctan(y^1), common put terminal and obstacle.
inline ProblemSpec coupled_spec(double coupling = 1.0, double lo = 0.01, double hi = 0.04)
{
    ProblemSpec s = put_spec(1.0, 1.0, lo, hi);
    s.k = 2;
    s.phi = {CoefficientFn::put(1.0), CoefficientFn::put(1.0)};
    s.l = s.phi;
    s.l_tilde = {CoefficientFn::constant(1.0), CoefficientFn::constant(1.0)};
    s.f = {GeneratorFn(0, {{GeneratorTermKind::arctan_y, coupling, 1}}),
           GeneratorFn(1, {{GeneratorTermKind::arctan_y, coupling, 0}})};
    s.g = {no_generator(0), no_generator(1)};
    s.L = 1.0 + coupling;
    return s;
}

/// b = h = 0, sigma = 1, f = g = 0 and the given terminal; obstacle inactive.
inline ProblemSpec heat_spec(const CoefficientFn& phi, double lo, double hi, double T = 1.0)
{
    ProblemSpec s;
    s.k = 1;
    s.g_params = GParams(lo, hi);
    s.f = {no_generator(0)};
    s.g = {no_generator(0)};
    s.phi = {phi};
    s.l = {CoefficientFn::constant(-1e6)};
    s.l_tilde = {CoefficientFn::constant(-1e6)};
    s.T = T;
    s.L = 100.0;
    return s;
}

} // namespace gbsde::testing
