#include "gbsde/core.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace gbsde {

GParams::GParams(double sigma_lo_sq, double sigma_hi_sq) : lo_(sigma_lo_sq), hi_(sigma_hi_sq)
{
    if (!(std::isfinite(lo_) && std::isfinite(hi_)) || !(lo_ > 0.0) || !(lo_ <= hi_)) {
        std::ostringstream msg;
        msg << "GParams requires 0 < sigma_lo_sq <= sigma_hi_sq < inf, got [" << lo_ << ", " << hi_ << "]";
        throw ValidationError(msg.str());
    }
}

namespace {

struct KindName {
    CoefficientKind kind;
    const char* name;
};

constexpr KindName kCoefficientNames[] = {
    {CoefficientKind::constant, "constant"},
    {CoefficientKind::affine, "affine"},
    {CoefficientKind::geometric_linear, "geometric-linear"},
    {CoefficientKind::polynomial, "polynomial"},
    {CoefficientKind::put_payoff, "put-payoff"},
    {CoefficientKind::call_payoff, "call-payoff"},
};

struct TermName {
    GeneratorTermKind kind;
    const char* name;
};

constexpr TermName kTermNames[] = {
    {GeneratorTermKind::constant, "constant"},
    {GeneratorTermKind::linear_x, "linear-x"},
    {GeneratorTermKind::linear_y, "linear-y"},
    {GeneratorTermKind::arctan_y, "arctan-y"},
    {GeneratorTermKind::linear_z, "linear-z"},
    {GeneratorTermKind::abs_z, "abs-z"},
};

double poly_eval(const std::vector<double>& c, double x)
{
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) {
        acc = acc * x + *it;
    }
    return acc;
}

double poly_derivative(const std::vector<double>& c, double x)
{
    double acc = 0.0;
    for (std::size_t j = c.size(); j-- > 1;) {
        acc = acc * x + static_cast<double>(j) * c[j];
    }
    return acc;
}

} // namespace

std::string to_string(CoefficientKind kind)
{
    for (const auto& entry : kCoefficientNames) {
        if (entry.kind == kind) {
            return entry.name;
        }
    }
    return "unknown";
}

CoefficientKind coefficient_kind_from_string(const std::string& name)
{
    std::string normalized = name;
    std::replace(normalized.begin(), normalized.end(), '_', '-');
    for (const auto& entry : kCoefficientNames) {
        if (normalized == entry.name) {
            return entry.kind;
        }
    }
    throw ValidationError("unknown coefficient kind '" + name + "'");
}

std::string to_string(GeneratorTermKind kind)
{
    for (const auto& entry : kTermNames) {
        if (entry.kind == kind) {
            return entry.name;
        }
    }
    return "unknown";
}

GeneratorTermKind generator_term_kind_from_string(const std::string& name)
{
    std::string normalized = name;
    std::replace(normalized.begin(), normalized.end(), '_', '-');
    for (const auto& entry : kTermNames) {
        if (normalized == entry.name) {
            return entry.kind;
        }
    }
    throw ValidationError("unknown generator term kind '" + name + "'");
}

CoefficientFn::CoefficientFn(CoefficientKind kind, std::vector<double> params)
    : kind_(kind), params_(std::move(params))
{
    std::size_t min_params = 1;
    std::size_t max_params = 1;
    switch (kind_) {
    case CoefficientKind::constant:
    case CoefficientKind::geometric_linear:
        break;
    case CoefficientKind::affine:
        min_params = max_params = 2;
        break;
    case CoefficientKind::polynomial:
        max_params = 16;
        break;
    case CoefficientKind::put_payoff:
    case CoefficientKind::call_payoff:
        max_params = 3;
        break;
    }
    if (params_.size() < min_params || params_.size() > max_params) {
        throw ValidationError("coefficient kind '" + to_string(kind_) + "' takes "
                              + std::to_string(min_params) + ".." + std::to_string(max_params) + " params, got "
                              + std::to_string(params_.size()));
    }
    for (double p : params_) {
        if (!std::isfinite(p)) {
            throw ValidationError("coefficient '" + to_string(kind_) + "' has a non-finite parameter");
        }
    }
}

double CoefficientFn::operator()(double /*t*/, double x) const
{
    switch (kind_) {
    case CoefficientKind::constant:
        return params_[0];
    case CoefficientKind::affine:
        return params_[0] + params_[1] * x;
    case CoefficientKind::geometric_linear:
        return params_[0] * x;
    case CoefficientKind::polynomial:
        return poly_eval(params_, x);
    case CoefficientKind::put_payoff: {
        const double w = params_.size() > 1 ? params_[1] : 1.0;
        const double c = params_.size() > 2 ? params_[2] : 0.0;
        return w * std::max(params_[0] - x, 0.0) + c;
    }
    case CoefficientKind::call_payoff: {
        const double w = params_.size() > 1 ? params_[1] : 1.0;
        const double c = params_.size() > 2 ? params_[2] : 0.0;
        return w * std::max(x - params_[0], 0.0) + c;
    }
    }
    return 0.0;
}

double CoefficientFn::lipschitz(double x_lo, double x_hi) const
{
    switch (kind_) {
    case CoefficientKind::constant:
        return 0.0;
    case CoefficientKind::affine:
        return std::abs(params_[1]);
    case CoefficientKind::geometric_linear:
        return std::abs(params_[0]);
    case CoefficientKind::put_payoff:
    case CoefficientKind::call_payoff:
        return std::abs(params_.size() > 1 ? params_[1] : 1.0);
    case CoefficientKind::polynomial: {
        // |p'| is maximized at an endpoint or a root of p''; a dense scan brackets those.
        constexpr int kScan = 4097;
        double best = 0.0;
        for (int s = 0; s < kScan; ++s) {
            const double x = x_lo + (x_hi - x_lo) * s / (kScan - 1);
            best = std::max(best, std::abs(poly_derivative(params_, x)));
        }
        return best;
    }
    }
    return 0.0;
}

std::vector<double> CoefficientFn::strikes() const
{
    if (kind_ == CoefficientKind::put_payoff || kind_ == CoefficientKind::call_payoff) {
        return {params_[0]};
    }
    return {};
}

GeneratorFn::GeneratorFn(int component, std::vector<GeneratorTerm> terms)
    : component_(component), terms_(std::move(terms))
{
    for (const auto& term : terms_) {
        if (!std::isfinite(term.coef)) {
            throw ValidationError("generator of component " + std::to_string(component + 1)
                                  + " has a non-finite coefficient");
        }
    }
}

double GeneratorFn::operator()(double /*t*/, double x, std::span<const double> y, double z) const
{
    double acc = 0.0;
    for (const auto& term : terms_) {
        switch (term.kind) {
        case GeneratorTermKind::constant:
            acc += term.coef;
            break;
        case GeneratorTermKind::linear_x:
            acc += term.coef * x;
            break;
        case GeneratorTermKind::linear_y:
            acc += term.coef * y[term.component];
            break;
        case GeneratorTermKind::arctan_y:
            acc += term.coef * std::atan(y[term.component]);
            break;
        case GeneratorTermKind::linear_z:
            acc += term.coef * z;
            break;
        case GeneratorTermKind::abs_z:
            acc += term.coef * std::abs(z);
            break;
        }
    }
    return acc;
}

double GeneratorFn::lipschitz_x() const
{
    double acc = 0.0;
    for (const auto& term : terms_) {
        if (term.kind == GeneratorTermKind::linear_x) {
            acc += std::abs(term.coef);
        }
    }
    return acc;
}

double GeneratorFn::lipschitz_y() const
{
    double acc = 0.0;
    for (const auto& term : terms_) {
        if (term.kind == GeneratorTermKind::linear_y || term.kind == GeneratorTermKind::arctan_y) {
            acc += std::abs(term.coef);
        }
    }
    return acc;
}

double GeneratorFn::lipschitz_z() const
{
    double acc = 0.0;
    for (const auto& term : terms_) {
        if (term.kind == GeneratorTermKind::linear_z || term.kind == GeneratorTermKind::abs_z) {
            acc += std::abs(term.coef);
        }
    }
    return acc;
}

bool GeneratorFn::depends_on_other_components() const
{
    return std::any_of(terms_.begin(), terms_.end(), [this](const GeneratorTerm& term) {
        return (term.kind == GeneratorTermKind::linear_y || term.kind == GeneratorTermKind::arctan_y)
            && term.component != component_ && term.coef != 0.0;
    });
}

GeneratorFn GeneratorFn::relabeled(int component, std::span<const int> perm) const
{
    auto terms = terms_;
    for (auto& term : terms) {
        if (term.kind == GeneratorTermKind::linear_y || term.kind == GeneratorTermKind::arctan_y) {
            term.component = perm[term.component];
        }
    }
    return GeneratorFn(component, std::move(terms));
}

void ProblemSpec::check_structure() const
{
    if (k < 1) {
        throw ValidationError("structure: k must be >= 1, got " + std::to_string(k));
    }
    auto expect = [this](const char* field, std::size_t size) {
        if (size != static_cast<std::size_t>(k)) {
            throw ValidationError(std::string("structure: field '") + field + "' has " + std::to_string(size)
                                  + " entries, expected k = " + std::to_string(k));
        }
    };
    expect("f", f.size());
    expect("g", g.size());
    expect("l", l.size());
    expect("l_tilde", l_tilde.size());
    expect("phi", phi.size());
    auto check_generators = [this](const char* field, const std::vector<GeneratorFn>& gens) {
        for (int i = 0; i < k; ++i) {
            if (gens[i].component() != i) {
                throw ValidationError(std::string("structure: field '") + field + "' entry " + std::to_string(i + 1)
                                      + " is labelled for component " + std::to_string(gens[i].component() + 1));
            }
            for (const auto& term : gens[i].terms()) {
                if ((term.kind == GeneratorTermKind::linear_y || term.kind == GeneratorTermKind::arctan_y)
                    && (term.component < 0 || term.component >= k)) {
                    throw ValidationError(std::string("structure: field '") + field + "' entry " + std::to_string(i + 1)
                                          + " references y component " + std::to_string(term.component + 1)
                                          + " outside 1.." + std::to_string(k));
                }
            }
        }
    };
    check_generators("f", f);
    check_generators("g", g);
    if (!(T > 0.0) || !std::isfinite(T)) {
        throw ValidationError("structure: T must be positive and finite");
    }
    if (!(L > 0.0) || !std::isfinite(L)) {
        throw ValidationError("structure: L must be positive and finite");
    }
}

bool ProblemSpec::coupled() const
{
    auto any = [](const std::vector<GeneratorFn>& gens) {
        return std::any_of(gens.begin(), gens.end(), [](const GeneratorFn& gen) { return gen.depends_on_other_components(); });
    };
    return any(f) || any(g);
}

Grid::Grid(double x_min, double x_max, int nx, int nt, double T, const GParams& gp, double diffusion_scale)
    : x_min_(x_min), x_max_(x_max), nx_(nx), nt_(nt), T_(T)
{
    if (nx_ < 3 || nt_ < 1) {
        throw ValidationError("grid requires nx >= 3 and nt >= 1, got nx = " + std::to_string(nx_)
                              + ", nt = " + std::to_string(nt_));
    }
    if (!(x_max_ > x_min_) || !std::isfinite(x_min_) || !std::isfinite(x_max_)) {
        throw ValidationError("grid requires finite x_min < x_max");
    }
    if (!(T_ > 0.0) || !std::isfinite(T_)) {
        throw ValidationError("grid requires a positive horizon T");
    }
    const double ratio = dt() * gp.sigma_hi_sq() * diffusion_scale / (dx() * dx());
    if (ratio > 0.5 * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "CFL violated: dt * sigma_hi_sq * scale / dx^2 = " << ratio << " > 1/2 (nx = " << nx_
            << ", nt = " << nt_ << "); increase nt";
        throw CflError(msg.str());
    }
}

int Grid::level_of(double t) const
{
    const double pos = t / dt();
    const double rounded = std::round(pos);
    if (t < -1e-12 || t > T_ * (1.0 + 1e-12) || std::abs(pos - rounded) > 1e-6) {
        std::ostringstream msg;
        msg << "time " << t << " is not a level of the grid (dt = " << dt() << ", T = " << T_ << ")";
        throw DomainError(msg.str());
    }
    return static_cast<int>(rounded);
}

double max_sigma_sq(const ProblemSpec& spec, double x_min, double x_max, int nx)
{
    double best = 0.0;
    for (int i = 0; i < nx; ++i) {
        const double x = x_min + (x_max - x_min) * i / (nx - 1);
        const double s = spec.sigma(0.0, x);
        best = std::max(best, s * s);
    }
    return best;
}

std::pair<double, double> default_bounds(const ProblemSpec& spec)
{
    const double sigma_hi = std::sqrt(spec.g_params.sigma_hi_sq());
    const double scale = std::max(std::abs(spec.sigma(0.0, spec.x0)), spec.sigma.lipschitz(spec.x0 - 1.0, spec.x0 + 1.0));
    const double root_t = std::sqrt(spec.T);
    double lo = spec.x0 - 6.0 * sigma_hi * scale * std::max(1.0, std::abs(spec.x0)) * root_t;
    double hi = spec.x0 + 6.0 * sigma_hi * scale * std::max(1.0, std::abs(spec.x0)) * root_t;
    auto widen = [&](const CoefficientFn& fn) {
        for (double strike : fn.strikes()) {
            const double pad = 3.0 * sigma_hi * scale * std::max(1.0, std::abs(strike)) * root_t;
            lo = std::min(lo, strike - pad);
            hi = std::max(hi, strike + pad);
        }
    };
    for (const auto& fn : spec.phi) {
        widen(fn);
    }
    for (const auto& fn : spec.l) {
        widen(fn);
    }
    if (spec.sigma.kind() == CoefficientKind::geometric_linear) {
        lo = std::max(lo, 0.0);
    }
    return {lo, hi};
}

Grid make_grid(const ProblemSpec& spec, double x_min, double x_max, int nx, int nt_min, double m_max)
{
    if (nx < 3) {
        throw ValidationError("grid requires nx >= 3");
    }
    const double dx = (x_max - x_min) / (nx - 1);
    const double scale = std::max(max_sigma_sq(spec, x_min, x_max, nx), 1e-300);
    const double dt_cfl = 0.5 * dx * dx / (spec.g_params.sigma_hi_sq() * scale);
    double dt_max = dt_cfl;
    if (m_max > 0.0) {
        dt_max = std::min(dt_max, 1.0 / m_max);
    }
    int nt = std::max(nt_min, static_cast<int>(std::ceil(spec.T / dt_max * (1.0 + 1e-12))));
    return Grid(x_min, x_max, nx, nt, spec.T, spec.g_params, scale);
}

ValueField::ValueField(int k, const Grid& grid)
    : components(static_cast<std::size_t>(k), RowMatrix::Zero(grid.nt() + 1, grid.nx()))
{
}

bool ValueField::all_finite() const
{
    return std::all_of(components.begin(), components.end(), [](const RowMatrix& m) { return m.allFinite(); });
}

double ValueField::sup_distance(const ValueField& other) const
{
    if (other.k() != k()) {
        throw DomainError("sup_distance: component count mismatch");
    }
    double best = 0.0;
    for (int i = 0; i < k(); ++i) {
        if (components[i].rows() != other.components[i].rows() || components[i].cols() != other.components[i].cols()) {
            throw DomainError("sup_distance: shape mismatch");
        }
        best = std::max(best, (components[i] - other.components[i]).cwiseAbs().maxCoeff());
    }
    return best;
}

double ValueField::at(int i, int j, double x, const Grid& grid) const
{
    return interpolate(components[i].row(j).transpose().array(), grid, x);
}

double interpolate(const Eigen::Ref<const Eigen::ArrayXd>& values, const Grid& grid, double x)
{
    const double pos = std::clamp((x - grid.x_min()) / grid.dx(), 0.0, static_cast<double>(grid.nx() - 1));
    const int cell = std::min(static_cast<int>(pos), grid.nx() - 2);
    const double theta = pos - cell;
    return (1.0 - theta) * values(cell) + theta * values(cell + 1);
}

bool ValidationReport::ok() const
{
    return std::none_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.status == CheckStatus::fail; });
}

const CheckResult* ValidationReport::find(const std::string& name) const
{
    for (const auto& check : checks) {
        if (check.name == name) {
            return &check;
        }
    }
    return nullptr;
}

std::string ValidationReport::to_json() const
{
    nlohmann::ordered_json doc;
    doc["ok"] = ok();
    auto& arr = doc["checks"] = nlohmann::ordered_json::array();
    for (const auto& check : checks) {
        const char* status = check.status == CheckStatus::pass ? "pass"
                           : check.status == CheckStatus::fail ? "fail"
                                                               : "not applicable (bounded domain)";
        arr.push_back({{"name", check.name}, {"status", status}, {"detail", check.detail}, {"worst", check.worst}});
    }
    return doc.dump(2);
}

namespace {

// Deterministic low-discrepancy samples of (level, node) pairs.
struct Sample {
    int level;
    int node;
};

std::vector<Sample> sample_points(const Grid& grid, int n_samples)
{
    std::vector<Sample> out;
    const int n = std::max(n_samples, 2);
    out.reserve(static_cast<std::size_t>(n));
    constexpr double kGolden = 0.6180339887498949;
    for (int s = 0; s < n; ++s) {
        const int node = static_cast<int>(std::lround(static_cast<double>(s) * (grid.nx() - 1) / (n - 1)));
        const double frac = std::fmod(s * kGolden, 1.0);
        const int level = static_cast<int>(std::lround(frac * grid.nt()));
        out.push_back({level, node});
    }
    return out;
}

double max_quotient(const std::vector<double>& xs, const std::function<double(double)>& fn)
{
    double best = 0.0;
    for (std::size_t a = 1; a < xs.size(); ++a) {
        const double dx = xs[a] - xs[a - 1];
        if (dx <= 0.0) {
            continue;
        }
        best = std::max(best, std::abs(fn(xs[a]) - fn(xs[a - 1])) / dx);
    }
    return best;
}

std::string fmt_double(double v)
{
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

} // namespace

ValidationReport validate_problem(const ProblemSpec& spec, const Grid& grid, int n_samples)
{
    spec.check_structure();
    ValidationReport report;
    const auto samples = sample_points(grid, n_samples);
    std::vector<double> xs;
    for (const auto& s : samples) {
        xs.push_back(grid.x(s.node));
    }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

    report.checks.push_back({"gparams", CheckStatus::pass,
                             "0 < " + fmt_double(spec.g_params.sigma_lo_sq()) + " <= " + fmt_double(spec.g_params.sigma_hi_sq()), 0.0});

    {
        CheckResult check{"obstacle_dominated_by_l_tilde", CheckStatus::pass, "l(t,x) <= l_tilde(t,x) on sampled points", 0.0};
        for (int i = 0; i < spec.k; ++i) {
            for (const auto& s : samples) {
                const double t = grid.t(s.level);
                const double x = grid.x(s.node);
                const double excess = spec.l[i](t, x) - spec.l_tilde[i](t, x);
                if (excess > check.worst) {
                    check.worst = excess;
                }
                if (excess > kValidationEps && check.status == CheckStatus::pass) {
                    check.status = CheckStatus::fail;
                    check.detail = "component " + std::to_string(i + 1) + ": l exceeds l_tilde by " + fmt_double(excess)
                                 + " at (t, x) = (" + fmt_double(t) + ", " + fmt_double(x) + ")";
                }
            }
        }
        report.checks.push_back(check);
    }

    {
        CheckResult check{"terminal_dominates_obstacle", CheckStatus::pass, "l(T,x) <= phi(x) on sampled points", 0.0};
        for (int i = 0; i < spec.k; ++i) {
            for (double x : xs) {
                const double excess = spec.l[i](spec.T, x) - spec.phi[i](spec.T, x);
                check.worst = std::max(check.worst, excess);
                if (excess > kValidationEps && check.status == CheckStatus::pass) {
                    check.status = CheckStatus::fail;
                    check.detail = "component " + std::to_string(i + 1) + ": l(T,.) <= phi violated by " + fmt_double(excess)
                                 + " at x = " + fmt_double(x);
                }
            }
        }
        report.checks.push_back(check);
    }

    auto lipschitz_check = [&](const std::string& name, const std::string& what,
                               const std::vector<std::pair<std::string, std::function<double(double)>>>& fns) {
        CheckResult check{name, CheckStatus::pass, what, 0.0};
        for (const auto& [label, fn] : fns) {
            const double q = max_quotient(xs, fn);
            check.worst = std::max(check.worst, q);
            if (q > spec.L * (1.0 + kValidationEps) && check.status == CheckStatus::pass) {
                check.status = CheckStatus::fail;
                check.detail = label + ": empirical Lipschitz quotient " + fmt_double(q) + " exceeds L = " + fmt_double(spec.L);
            }
        }
        if (check.status == CheckStatus::pass) {
            check.detail += "; max quotient " + fmt_double(check.worst) + " <= L = " + fmt_double(spec.L);
        }
        report.checks.push_back(check);
    };

    {
        std::vector<std::pair<std::string, std::function<double(double)>>> fns;
        for (int i = 0; i < spec.k; ++i) {
            fns.emplace_back("phi[" + std::to_string(i + 1) + "]", [&spec, i](double x) { return spec.phi[i](spec.T, x); });
        }
        lipschitz_check("terminal_lipschitz", "phi Lipschitz with constant <= L", fns);
    }
    lipschitz_check("coefficients_lipschitz", "b, h, sigma Lipschitz with constant <= L",
                    {{"b", [&spec](double x) { return spec.b(0.0, x); }},
                     {"h", [&spec](double x) { return spec.h(0.0, x); }},
                     {"sigma", [&spec](double x) { return spec.sigma(0.0, x); }}});

    {
        CheckResult check{"generators_lipschitz", CheckStatus::pass, "f, g Lipschitz in (x, y, z) with constant <= L", 0.0};
        for (int i = 0; i < spec.k; ++i) {
            for (const auto* gens : {&spec.f, &spec.g}) {
                const auto& gen = (*gens)[i];
                const double bound = std::max({gen.lipschitz_x(), gen.lipschitz_y(), gen.lipschitz_z()});
                check.worst = std::max(check.worst, bound);
                if (bound > spec.L * (1.0 + kValidationEps) && check.status == CheckStatus::pass) {
                    check.status = CheckStatus::fail;
                    check.detail = std::string(gens == &spec.f ? "f" : "g") + "[" + std::to_string(i + 1)
                                 + "]: catalog Lipschitz constant " + fmt_double(bound) + " exceeds L = " + fmt_double(spec.L);
                }
            }
        }
        report.checks.push_back(check);
    }

    report.checks.push_back({"diagonal_z_structure", CheckStatus::pass,
                             "generator i reads only z^i (enforced by the catalog)", 0.0});
    report.checks.push_back({"integrability_orders", CheckStatus::not_applicable,
                             "beta > 2, 2 <= alpha < beta have no counterpart on a bounded grid", 0.0});
    return report;
}

} // namespace gbsde
