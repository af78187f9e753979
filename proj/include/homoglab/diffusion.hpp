#pragma once

// Backward-Euler / lumped-P1 solvers for
//
//     d_t u = div(A(x,t) grad v) + f,   v = |u|^{p-1} u,   v = 0 on the boundary,
//
// where A is either the oscillating a(x/eps, t/eps^r) or the homogenized
// tensor.  Both share one Newton core in the unknown u; the coefficient enters
// only through a provider returning one tensor per element for a step.

#include "cell.hpp"
#include "coeff.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "mesh.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace homoglab {

inline double power_nonlinearity(double u, double p)
{
    if (u == 0.0)
        return 0.0;
    return std::copysign(std::pow(std::abs(u), p), u);
}

inline double power_inverse(double v, double p) { return power_nonlinearity(v, 1.0 / p); }

/// Regularized derivative of u -> |u|^{p-1}u.
inline double power_derivative(double u, double p, double delta)
{
    if (p == 1.0)
        return 1.0;
    const double a = std::abs(u);
    if (p > 1.0)
        return std::max(p * std::pow(a, p - 1.0), delta);
    if (a == 0.0)
        return 1.0 / delta;
    return std::min(p * std::pow(a, p - 1.0), 1.0 / delta);
}

struct StepperConfig {
    double newton_tolerance = 1e-9;
    int max_newton = 50;
    double delta = 1e-8;
    int max_halvings = 30;
    SolverConfig linear{1e-11, 0, Preconditioner::diagonal};

    void validate() const
    {
        if (!(newton_tolerance > 0.0) || max_newton < 1 || !(delta > 0.0 && delta < 1e-2) || max_halvings < 1)
            throw ConfigError("stepper configuration: values must be positive with delta << 1");
        linear.validate();
    }
};

using InitialCondition = std::function<double(const Point&)>;
using Forcing = std::function<double(const Point&, double)>;

struct ProblemSpec {
    double p = 1.0;
    double r = 1.0;
    std::optional<double> epsilon; ///< empty: homogenized problem
    MacroGrid macro;
    InitialCondition initial;
    Forcing forcing; ///< empty means f = 0
    std::optional<CoefficientField> coefficient;

    void validate() const
    {
        if (!(p > 0.0) || !std::isfinite(p))
            throw ConfigError("problem: p must be positive");
        if (!(r > 0.0) || !std::isfinite(r))
            throw ConfigError("problem: r must be positive");
        if (epsilon && (!(*epsilon > 0.0) || !std::isfinite(*epsilon)))
            throw ConfigError("problem: epsilon must be positive");
        macro.validate();
        if (!initial)
            throw ConfigError("problem: initial condition missing");
        if (coefficient && coefficient->dim() != macro.dim())
            throw ConfigError("problem: coefficient dimension does not match the grid");
    }
};

struct Trajectory {
    MacroGrid macro;
    double p = 1.0;
    std::vector<Field> u; ///< nt + 1 levels
    std::vector<Field> v;
    std::vector<double> residuals; ///< per step
    std::vector<int> newton_iterations;
    int halved_steps = 0;

    double time(int n) const { return macro.time(n); }
};

struct StepInfo {
    double residual = 0.0;
    int newton_iterations = 0;
};

/// Fills one tensor per element for the step ending at t_next, given u at the start of the step.
using CoefficientProvider = std::function<void(double t_next, const Field& u_prev, std::vector<Tensor>& out)>;

inline CoefficientProvider oscillating_provider(const CoefficientField& c, double eps, double r, const SpatialGrid& g)
{
    std::vector<Point> centroids(g.element_count());
    for (std::size_t e = 0; e < g.element_count(); ++e)
        centroids[e] = g.centroid(e);
    const double er = std::pow(eps, r);
    return [c, eps, er, centroids](double t, const Field&, std::vector<Tensor>& out) {
        out.resize(centroids.size());
        const double s = t / er;
        for (std::size_t e = 0; e < centroids.size(); ++e)
            out[e] = c.sample({centroids[e][0] / eps, centroids[e][1] / eps}, s);
    };
}

/// Constant tensor for r != 2; for r = 2 evaluated from u at the start of the step.
inline CoefficientProvider homogenized_provider(const HomogenizedTensor& t, const SpatialGrid& g)
{
    return [t, g](double, const Field& u_prev, std::vector<Tensor>& out) { out = t.element_tensors(g, u_prev); };
}

inline CoefficientProvider constant_provider(const Tensor& a, const SpatialGrid& g)
{
    return [a, n = g.element_count()](double, const Field&, std::vector<Tensor>& out) { out.assign(n, a); };
}

namespace detail {

struct StepSystem {
    const SpatialGrid& g;
    const DofMap& dofs;
    const std::vector<double>& mass; ///< lumped mass on the dofs
    const SparseMatrix& K;
    std::vector<double> load; ///< m_i f_i on the dofs
    double p;
    double tau;

    std::vector<double> residual(std::span<const double> u, std::span<const double> u_prev) const
    {
        const std::size_t n = dofs.size();
        std::vector<double> v(n), R(n);
        for (std::size_t i = 0; i < n; ++i)
            v[i] = power_nonlinearity(u[i], p);
        K.apply(v, R);
        for (std::size_t i = 0; i < n; ++i)
            R[i] += mass[i] * (u[i] - u_prev[i]) / tau - load[i];
        return R;
    }

    double norm(std::span<const double> R) const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < R.size(); ++i)
            s += R[i] * R[i] / mass[i];
        return std::sqrt(s);
    }
};

} // namespace detail

/// One backward-Euler step of length tau ending at t_next.
inline Field step(const Field& u_prev, double t_next, double tau, double p, const CoefficientProvider& provider,
                  const Forcing& forcing, const StepperConfig& cfg, StepInfo* info = nullptr)
{
    cfg.validate();
    const SpatialGrid& g = u_prev.grid;
    if (u_prev.centering != Centering::node)
        throw AlignmentError("step: u must be node-centered");
    detail::require_finite(u_prev.values, "step: u_prev");
    const DofMap dofs(g);
    const std::size_t n = dofs.size();
    const auto full_mass = g.lumped_mass();
    std::vector<double> mass(n), up(n), u(n);
    for (std::size_t i = 0; i < n; ++i) {
        mass[i] = full_mass[dofs.nodes[i]];
        up[i] = u_prev[dofs.nodes[i]];
    }
    std::vector<Tensor> coeff;
    provider(t_next, u_prev, coeff);
    const SparseMatrix K = assemble_stiffness(g, dofs, coeff);
    detail::StepSystem sys{g, dofs, mass, K, std::vector<double>(n, 0.0), p, tau};
    if (forcing)
        for (std::size_t i = 0; i < n; ++i)
            sys.load[i] = mass[i] * forcing(g.node_position(dofs.nodes[i]), t_next);

    u = up;
    auto R = sys.residual(u, up);
    double rnorm = sys.norm(R);
    int it = 0;
    SparseMatrix J = K;
    const auto diag = J.diagonal_positions();
    const auto kvals = K.values();
    std::vector<double> D(n), rhs(n), trial(n);
    while (rnorm > cfg.newton_tolerance) {
        if (it == cfg.max_newton)
            throw StepFailure("step: Newton did not converge in " + std::to_string(cfg.max_newton) + " iterations",
                              rnorm);
        ++it;
        auto jv = J.values();
        for (std::size_t i = 0; i < n; ++i) {
            D[i] = power_derivative(u[i], p, cfg.delta);
            jv[diag[i]] = kvals[diag[i]] + mass[i] / (tau * D[i]);
            rhs[i] = -R[i];
        }
        const auto w = solve_spd(J, rhs, cfg.linear);
        double alpha = 1.0;
        bool accepted = false;
        for (int halving = 0; halving <= cfg.max_halvings; ++halving) {
            for (std::size_t i = 0; i < n; ++i)
                trial[i] = u[i] + alpha * w.x[i] / D[i];
            auto Rt = sys.residual(trial, up);
            const double tn = sys.norm(Rt);
            if (std::isfinite(tn) && (tn <= (1.0 - 1e-4 * alpha) * rnorm || tn <= cfg.newton_tolerance)) {
                u = trial;
                R = std::move(Rt);
                rnorm = tn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted)
            throw StepFailure("step: line search exhausted its damping budget", rnorm);
    }
    Field out(g, Centering::node);
    for (std::size_t i = 0; i < n; ++i)
        out[dofs.nodes[i]] = u[i];
    if (info) {
        info->residual = rnorm;
        info->newton_iterations = it;
    }
    return out;
}

namespace detail {

inline Field v_of(const Field& u, double p)
{
    Field v(u.grid, Centering::node);
    for (std::size_t i = 0; i < u.size(); ++i)
        v[i] = power_nonlinearity(u[i], p);
    return v;
}

inline Field initial_field(const ProblemSpec& spec)
{
    const SpatialGrid& g = spec.macro.space;
    Field u0(g, Centering::node);
    for (std::size_t i = 0; i < g.node_count(); ++i)
        u0[i] = g.on_boundary(i) ? 0.0 : spec.initial(g.node_position(i));
    detail::require_finite(u0.values, "initial condition");
    return u0;
}

/// Full step; on failure retried once as two half steps, a second failure aborts.
inline Field robust_step(const Field& u_prev, double t_next, double tau, const ProblemSpec& spec,
                         const CoefficientProvider& provider, const StepperConfig& cfg, StepInfo& info, int& halved)
{
    try {
        return step(u_prev, t_next, tau, spec.p, provider, spec.forcing, cfg, &info);
    } catch (const StepFailure&) {
        ++halved;
        StepInfo a, b;
        const Field mid = step(u_prev, t_next - 0.5 * tau, 0.5 * tau, spec.p, provider, spec.forcing, cfg, &a);
        Field out = step(mid, t_next, 0.5 * tau, spec.p, provider, spec.forcing, cfg, &b);
        info.residual = b.residual;
        info.newton_iterations = a.newton_iterations + b.newton_iterations;
        return out;
    }
}

} // namespace detail

inline Trajectory solve_with(const ProblemSpec& spec, const CoefficientProvider& provider, const StepperConfig& cfg = {})
{
    spec.validate();
    cfg.validate();
    Trajectory tr;
    tr.macro = spec.macro;
    tr.p = spec.p;
    tr.u.push_back(detail::initial_field(spec));
    tr.v.push_back(detail::v_of(tr.u.back(), spec.p));
    const double tau = spec.macro.tau();
    for (int n = 1; n <= spec.macro.nt; ++n) {
        StepInfo info;
        Field next = detail::robust_step(tr.u.back(), spec.macro.time(n), tau, spec, provider, cfg, info, tr.halved_steps);
        tr.v.push_back(detail::v_of(next, spec.p));
        tr.u.push_back(std::move(next));
        tr.residuals.push_back(info.residual);
        tr.newton_iterations.push_back(info.newton_iterations);
    }
    return tr;
}

/// Checks h <= eps/8 and tau <= eps^r/8.
inline void check_resolution(const MacroGrid& macro, double eps, double r)
{
    const double h = macro.h();
    const double tau = macro.tau();
    const double er = std::pow(eps, r);
    const double slack = 1.0 + 1e-12;
    if (h > slack * eps / 8.0 || tau > slack * er / 8.0)
        throw ConfigError("solve_eps: grid does not resolve the oscillations; need h <= " + std::to_string(eps / 8.0)
                          + " and tau <= " + std::to_string(er / 8.0) + " (have h = " + std::to_string(h)
                          + ", tau = " + std::to_string(tau) + ")");
}

inline Trajectory solve_eps(const ProblemSpec& spec, const StepperConfig& cfg = {})
{
    spec.validate();
    if (!spec.epsilon)
        throw ConfigError("solve_eps: epsilon missing");
    if (!spec.coefficient)
        throw ConfigError("solve_eps: coefficient missing");
    check_resolution(spec.macro, *spec.epsilon, spec.r);
    return solve_with(spec, oscillating_provider(*spec.coefficient, *spec.epsilon, spec.r, spec.macro.space), cfg);
}

inline Trajectory solve_hom(const ProblemSpec& spec, const HomogenizedTensor& tensor, const StepperConfig& cfg = {})
{
    spec.validate();
    if (tensor.dim() != spec.macro.dim())
        throw ConfigError("solve_hom: tensor dimension does not match the grid");
    return solve_with(spec, homogenized_provider(tensor, spec.macro.space), cfg);
}

/// Step-n element tensors as the stepper saw them.
inline std::vector<Tensor> step_coefficients(const Trajectory& tr, const CoefficientProvider& provider, int n)
{
    std::vector<Tensor> out;
    provider(tr.time(n), tr.u[static_cast<std::size_t>(n - 1)], out);
    return out;
}

struct EnergyBalance {
    double dissipation = 0.0; ///< sum_n tau int A grad v^n . grad v^n
    double energy_drop = 0.0; ///< (||u^0||^{p+1} - ||u^N||^{p+1}) / (p+1), lumped
    double relative_defect() const
    {
        const double s = std::max(std::abs(dissipation), std::abs(energy_drop));
        return s == 0.0 ? 0.0 : std::abs(dissipation - energy_drop) / s;
    }
};

inline double lumped_power_norm(const Field& u, double q)
{
    const auto m = u.grid.lumped_mass();
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
        s += m[i] * std::pow(std::abs(u[i]), q);
    return s;
}

inline double dissipation_at(const Field& v, std::span<const Tensor> coeff)
{
    const auto grad = gradient(v);
    const auto& g = v.grid;
    double s = 0.0;
    for (std::size_t e = 0; e < g.element_count(); ++e)
        s += coeff[e].quadratic(grad.at(e));
    return s * g.element_measure();
}

inline EnergyBalance energy_balance(const Trajectory& tr, const CoefficientProvider& provider)
{
    EnergyBalance eb;
    const double tau = tr.macro.tau();
    for (int n = 1; n <= tr.macro.nt; ++n)
        eb.dissipation += tau * dissipation_at(tr.v[static_cast<std::size_t>(n)], step_coefficients(tr, provider, n));
    const double q = tr.p + 1.0;
    eb.energy_drop = (lumped_power_norm(tr.u.front(), q) - lumped_power_norm(tr.u.back(), q)) / q;
    return eb;
}

/// L2(Omega) norm of node-field differences at every level, max over levels.
inline double max_l2_difference(const Trajectory& a, const std::function<double(const Point&, double)>& exact)
{
    double m = 0.0;
    for (int n = 0; n <= a.macro.nt; ++n) {
        const Field& u = a.u[static_cast<std::size_t>(n)];
        Field d(u.grid, Centering::node);
        for (std::size_t i = 0; i < u.size(); ++i)
            d[i] = u[i] - exact(u.grid.node_position(i), a.time(n));
        m = std::max(m, l2_norm(d));
    }
    return m;
}

} // namespace homoglab
