#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace gbsde {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Raised when a grid or penalty parameter would break monotonicity of the explicit scheme.
struct CflError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Variance band [sigma_lo_sq, sigma_hi_sq] of the G-Brownian motion.
class GParams {
public:
    GParams(double sigma_lo_sq, double sigma_hi_sq);

    double sigma_lo_sq() const { return lo_; }
    double sigma_hi_sq() const { return hi_; }
    bool degenerate() const { return lo_ == hi_; }

private:
    double lo_;
    double hi_;
};

/// G(a) = 1/2 (sigma_hi^2 a^+ - sigma_lo^2 a^-).
template <typename Scalar>
    requires std::is_floating_point_v<Scalar>
Scalar g_apply(const GParams& gp, Scalar a)
{
    const Scalar pos = a > Scalar(0) ? a : Scalar(0);
    const Scalar neg = a < Scalar(0) ? -a : Scalar(0);
    return Scalar(0.5) * (Scalar(gp.sigma_hi_sq()) * pos - Scalar(gp.sigma_lo_sq()) * neg);
}

/// Coefficient-wise G on an Eigen array expression.
template <typename Derived>
auto g_apply(const GParams& gp, const Eigen::ArrayBase<Derived>& a)
{
    using Scalar = typename Derived::Scalar;
    return Scalar(0.5) * (Scalar(gp.sigma_hi_sq()) * a.max(Scalar(0))
                          - Scalar(gp.sigma_lo_sq()) * (-a).max(Scalar(0)));
}

enum class CoefficientKind { constant, affine, geometric_linear, polynomial, put_payoff, call_payoff };

std::string to_string(CoefficientKind kind);
CoefficientKind coefficient_kind_from_string(const std::string& name);

/// Closed catalog of scalar functions of (t, x).
///
///   constant          params [c]             c
///   affine            params [a, b]          a + b x
///   geometric_linear  params [s]             s x
///   polynomial        params [c0, c1, ...]   sum c_j x^j
///   put_payoff        params [K, w=1, c=0]   w (K - x)^+ + c
///   call_payoff       params [K, w=1, c=0]   w (x - K)^+ + c
class CoefficientFn {
public:
    CoefficientFn() : CoefficientFn(CoefficientKind::constant, {0.0}) {}
    CoefficientFn(CoefficientKind kind, std::vector<double> params);

    static CoefficientFn constant(double c) { return {CoefficientKind::constant, {c}}; }
    static CoefficientFn affine(double a, double b) { return {CoefficientKind::affine, {a, b}}; }
    static CoefficientFn geometric(double s) { return {CoefficientKind::geometric_linear, {s}}; }
    static CoefficientFn put(double strike, double weight = 1.0, double offset = 0.0)
    {
        return {CoefficientKind::put_payoff, {strike, weight, offset}};
    }
    static CoefficientFn call(double strike, double weight = 1.0, double offset = 0.0)
    {
        return {CoefficientKind::call_payoff, {strike, weight, offset}};
    }
    static CoefficientFn polynomial(std::vector<double> coeffs) { return {CoefficientKind::polynomial, std::move(coeffs)}; }

    double operator()(double t, double x) const;

    /// Exact Lipschitz constant in x over [x_lo, x_hi] (polynomials: maximum of |p'| on the interval).
    double lipschitz(double x_lo, double x_hi) const;

    /// Strike for payoff kinds, empty otherwise.
    std::vector<double> strikes() const;

    CoefficientKind kind() const { return kind_; }
    const std::vector<double>& params() const { return params_; }

private:
    CoefficientKind kind_;
    std::vector<double> params_;
};

enum class GeneratorTermKind { constant, linear_x, linear_y, arctan_y, linear_z, abs_z };

std::string to_string(GeneratorTermKind kind);
GeneratorTermKind generator_term_kind_from_string(const std::string& name);

struct GeneratorTerm {
    GeneratorTermKind kind = GeneratorTermKind::constant;
    double coef = 0.0;
    int component = 0; // 0-based y index, used by linear_y / arctan_y
};

/// Generator of component i: a sum of catalog terms in (x, y, z^i).
/// Only the component's own z enters, which is the diagonal structure the system relies on.
class GeneratorFn {
public:
    GeneratorFn() = default;
    GeneratorFn(int component, std::vector<GeneratorTerm> terms);

    double operator()(double t, double x, std::span<const double> y, double z) const;

    double lipschitz_x() const;
    double lipschitz_y() const;
    double lipschitz_z() const;
    bool depends_on_other_components() const;
    bool zero() const { return terms_.empty(); }

    int component() const { return component_; }
    const std::vector<GeneratorTerm>& terms() const { return terms_; }

    /// Same terms with every y-index j replaced by perm[j].
    GeneratorFn relabeled(int component, std::span<const int> perm) const;

private:
    int component_ = 0;
    std::vector<GeneratorTerm> terms_;
};

/// k-dimensional Markovian reflected system with scalar state.
struct ProblemSpec {
    int k = 1;
    GParams g_params{1.0, 1.0};
    CoefficientFn b;
    CoefficientFn h;
    CoefficientFn sigma = CoefficientFn::constant(1.0);
    std::vector<GeneratorFn> f;
    std::vector<GeneratorFn> g;
    std::vector<CoefficientFn> l;
    std::vector<CoefficientFn> l_tilde;
    std::vector<CoefficientFn> phi;
    double T = 1.0;
    double L = 1.0;
    double x0 = 0.0; // evaluation point for reports

    /// Throws ValidationError naming the first field whose size disagrees with k.
    void check_structure() const;
    bool coupled() const;
};

/// Uniform space-time lattice. Row j of a field is time level t_j = j dt.
class Grid {
public:
    /// Enforces nx >= 3, nt >= 1 and dt * sigma_hi_sq * diffusion_scale / dx^2 <= 1/2.
    Grid(double x_min, double x_max, int nx, int nt, double T, const GParams& gp, double diffusion_scale = 1.0);

    double x_min() const { return x_min_; }
    double x_max() const { return x_max_; }
    int nx() const { return nx_; }
    int nt() const { return nt_; }
    double T() const { return T_; }
    double dx() const { return (x_max_ - x_min_) / (nx_ - 1); }
    double dt() const { return T_ / nt_; }
    double x(int i) const { return x_min_ + i * dx(); }
    double t(int j) const { return j * dt(); }
    Eigen::ArrayXd nodes() const { return Eigen::ArrayXd::LinSpaced(nx_, x_min_, x_max_); }

    /// Index of the time level at t, throwing DomainError if t is off-lattice.
    int level_of(double t) const;

private:
    double x_min_, x_max_;
    int nx_, nt_;
    double T_;
};

/// Largest sigma(t, x)^2 over the nodes of [x_min, x_max].
double max_sigma_sq(const ProblemSpec& spec, double x_min, double x_max, int nx);

/// Default truncation: x0 -/+ 6 sigma_hi max(1,|x0|) sqrt(T), widened around strikes,
/// clipped at zero when the volatility coefficient is geometric.
std::pair<double, double> default_bounds(const ProblemSpec& spec);

/// Grid satisfying the effective CFL of the problem (sigma(x)^2 included) and dt * m_max <= 1.
/// nt is raised from nt_min as needed.
Grid make_grid(const ProblemSpec& spec, double x_min, double x_max, int nx, int nt_min = 1, double m_max = 0.0);

/// k components, each (nt+1) x nx.
struct ValueField {
    std::vector<RowMatrix> components;

    ValueField() = default;
    ValueField(int k, const Grid& grid);

    int k() const { return static_cast<int>(components.size()); }
    RowMatrix& operator[](int i) { return components[i]; }
    const RowMatrix& operator[](int i) const { return components[i]; }

    bool all_finite() const;
    double sup_distance(const ValueField& other) const;
    /// Linear interpolation of component i at level j.
    double at(int i, int j, double x, const Grid& grid) const;
};

/// Piecewise-linear interpolation on the uniform grid; clamps to the domain.
double interpolate(const Eigen::Ref<const Eigen::ArrayXd>& values, const Grid& grid, double x);

enum class CheckStatus { pass, fail, not_applicable };

struct CheckResult {
    std::string name;
    CheckStatus status = CheckStatus::pass;
    std::string detail;
    double worst = 0.0; // largest violation or empirical quotient, when meaningful
};

struct ValidationReport {
    std::vector<CheckResult> checks;

    bool ok() const;
    const CheckResult* find(const std::string& name) const;
    std::string to_json() const;
};

inline constexpr double kValidationEps = 1e-9;

/// Samples n_samples (t, x) points of the grid and checks the standing assumptions.
ValidationReport validate_problem(const ProblemSpec& spec, const Grid& grid, int n_samples);

} // namespace gbsde
