#pragma once

// Corrector functionals and the eps-sweep study.
//
// All space-time quantities are element fields, piecewise constant on every
// step (t_{n-1}, t_n] with the t_n value.  With
//   G_eps = grad v_eps,  G_0 = grad v_0,
//   corr  = sum_k U(d_k v_0) U(grad_y Phi_k),
//   X     = a_eps (G_0 + corr),  j_eps = a_eps G_eps,  j_hom = a_hom G_0,
// the functionals are
//   E_grad  = ||G_eps - G_0 - corr||
//   E_flux  = ||j_eps - j_hom - (X - j_hom)||
//   E_dt    = ||d_t u_eps - d_t u_0 - div(X - j_hom)||_{L2(H^-1)}
//   E_naive = ||G_eps - G_0||.
// At r = 2 the corrector gradient depends on u_0 through the lookup weights
// of the homogenized tensor: grad_y Phi_k(x,t,.) = sum_i w_i(u_0) grad_y Phi_k^i.

#include "cell.hpp"
#include "coeff.hpp"
#include "diffusion.hpp"
#include "errors.hpp"
#include "mesh.hpp"
#include "unfold.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace homoglab {

namespace detail {

/// grad v^n on elements for n = 1..nt, stored at step n-1.
inline SpaceTimeField gradient_history(const Trajectory& tr, const std::vector<Field>& levels)
{
    const auto& g = tr.macro.space;
    SpaceTimeField out(g, tr.macro.nt, tr.macro.tau(), g.dim, Centering::element);
    for (int n = 1; n <= tr.macro.nt; ++n) {
        const auto gr = gradient(levels[static_cast<std::size_t>(n)]);
        std::copy(gr.values.begin(), gr.values.end(),
                  out.values.begin() + static_cast<std::ptrdiff_t>(out.index(n - 1, 0)));
    }
    return out;
}

inline SpaceTimeField element_history(const Trajectory& tr, const std::vector<Field>& levels)
{
    const auto& g = tr.macro.space;
    SpaceTimeField out(g, tr.macro.nt, tr.macro.tau(), 1, Centering::element);
    for (int n = 1; n <= tr.macro.nt; ++n) {
        const auto ev = element_values(levels[static_cast<std::size_t>(n)]);
        std::copy(ev.values.begin(), ev.values.end(),
                  out.values.begin() + static_cast<std::ptrdiff_t>(out.index(n - 1, 0)));
    }
    return out;
}

inline SpaceTimeField apply_tensors(const std::vector<std::vector<Tensor>>& a, const SpaceTimeField& f)
{
    SpaceTimeField out(f.grid, f.nt, f.tau, f.ncomp, f.centering);
    const int d = f.ncomp;
    for (int k = 0; k < f.nt; ++k)
        for (std::size_t e = 0; e < f.per_step(); ++e) {
            const Point v = d == 1 ? Point{f(k, e), 0.0} : Point{f(k, e, 0), f(k, e, 1)};
            const Point w = a[static_cast<std::size_t>(k)][e].apply(v);
            for (int c = 0; c < d; ++c)
                out(k, e, c) = w[static_cast<std::size_t>(c)];
        }
    return out;
}

inline SpaceTimeField combine(const SpaceTimeField& a, double alpha, const SpaceTimeField& b)
{
    SpaceTimeField out = a;
    for (std::size_t q = 0; q < out.values.size(); ++q)
        out.values[q] += alpha * b.values[q];
    return out;
}

} // namespace detail

/// Shared intermediate fields of all functionals for one eps.
class CorrectorAnalysis {
public:
    CorrectorAnalysis(const Trajectory& eps_traj, const Trajectory& hom_traj, const HomogenizedTensor& tensor,
                      const CoefficientField& c, const EpsilonGeometry& g, double r)
        : eps_(eps_traj), hom_(hom_traj), tensor_(tensor), coeff_(c), g_(g)
    {
        if (!(eps_.macro == hom_.macro) || !(eps_.macro == g.macro))
            throw AlignmentError("correctors: trajectories and geometry must share the fine grid");
        if (eps_.p != hom_.p)
            throw ConfigError("correctors: trajectories use different exponents");
        const Regime expected = regime_for(eps_.p, r);
        if (tensor.has_solutions() && tensor.regime() != expected)
            throw ConfigError(std::string("correctors: cell solution regime ") + to_string(tensor.regime())
                              + " does not match (p, r), expected " + to_string(expected));
        build();
    }

    const SpaceTimeField& grad_eps() const { return G_eps_; }
    const SpaceTimeField& grad_hom() const { return G_0_; }
    const SpaceTimeField& corrector() const { return corr_; }
    const SpaceTimeField& j_eps() const { return j_eps_; }
    const SpaceTimeField& j_hom() const { return j_hom_; }
    const SpaceTimeField& corrected_flux() const { return X_; }

    double gradient_error() const { return l2_norm(detail::combine(detail::combine(G_eps_, -1.0, G_0_), -1.0, corr_)); }

    double flux_error() const
    {
        // Literal form, j_hom cancels only up to rounding.
        SpaceTimeField d = j_eps_;
        for (std::size_t q = 0; q < d.values.size(); ++q)
            d.values[q] = (j_eps_.values[q] - j_hom_.values[q]) - (X_.values[q] - j_hom_.values[q]);
        return l2_norm(d);
    }

    double dt_error() const
    {
        const auto& sg = g_.macro.space;
        const DofMap dofs(sg);
        const auto L = dirichlet_laplacian(sg, dofs);
        const auto mass = sg.lumped_mass();
        const double tau = g_.macro.tau();
        const int d = sg.dim;
        double total = 0.0;
        for (int n = 1; n <= g_.macro.nt; ++n) {
            VectorField F(sg);
            for (std::size_t e = 0; e < sg.element_count(); ++e)
                for (int c = 0; c < d; ++c)
                    F.values[e * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)] =
                        X_(n - 1, e, c) - j_hom_(n - 1, e, c);
            auto b = weak_divergence(F, dofs);
            const auto& ue1 = eps_.u[static_cast<std::size_t>(n)];
            const auto& ue0 = eps_.u[static_cast<std::size_t>(n - 1)];
            const auto& uh1 = hom_.u[static_cast<std::size_t>(n)];
            const auto& uh0 = hom_.u[static_cast<std::size_t>(n - 1)];
            for (std::size_t i = 0; i < dofs.size(); ++i) {
                const std::size_t node = dofs.nodes[i];
                b[i] = mass[node] * ((ue1[node] - ue0[node]) - (uh1[node] - uh0[node])) / tau - b[i];
            }
            const double v = h_minus1_norm_of_functional(L, b, SolverConfig{1e-12, 0, Preconditioner::diagonal});
            total += tau * v * v;
        }
        return std::sqrt(total);
    }

    double naive_error() const { return l2_norm(detail::combine(G_eps_, -1.0, G_0_)); }

    double corrector_norm() const { return l2_norm(corr_); }

    double energy_defect() const
    {
        const double me = g_.macro.space.element_measure() * g_.macro.tau();
        double se = 0.0, s0 = 0.0;
        for (std::size_t q = 0; q < G_eps_.values.size(); ++q) {
            se += j_eps_.values[q] * G_eps_.values[q];
            s0 += j_hom_.values[q] * G_0_.values[q];
        }
        return std::abs(se - s0) * me;
    }

    /// Three-term split of the corrected flux minus j_hom.
    std::array<double, 3> flux_split() const
    {
        const SpaceTimeField first = detail::combine(detail::apply_tensors(a_eps_, detail::combine(G_0_, 1.0, z_point_)), -1.0, j_hom_);
        const SpaceTimeField second = detail::apply_tensors(a_eps_, detail::combine(z_point_, -1.0, z_avg_));
        const SpaceTimeField third = detail::apply_tensors(a_eps_, detail::combine(z_avg_, -1.0, corr_));
        return {l2_norm(first), l2_norm(second), l2_norm(third)};
    }

    /// ||T(grad v_eps) - (grad v_0 + grad_y z)|| and the Lambda_eps mass of grad v_eps.
    UnfoldingDefect two_scale_gradient_defect() const { return unfolding_defect(G_eps_, limit_, g_); }

    /// ||T(v_eps) - v_0|| and the Lambda_eps mass of v_eps.
    UnfoldingDefect unfolding_defect_v() const
    {
        SeparableSum s;
        s.ncomp = 1;
        s.terms.push_back({V_0_, MicroField::constant(cell_grid_, {1.0})});
        return unfolding_defect(V_eps_, s, g_);
    }

    /// |pairing(v_eps, Psi) - pairing(v_0, <Psi>_{y,s})| for a fixed oscillating test function.
    double pairing_defect() const
    {
        const double L = g_.macro.space.length;
        const int dim = g_.dim();
        TestFunction osc;
        osc.phi = [L, dim](const Point& x) {
            double v = std::sin(std::numbers::pi * x[0] / L);
            if (dim == 2)
                v *= std::sin(std::numbers::pi * x[1] / L);
            return v;
        };
        osc.b = [](const Point& y) { return 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * y[0]); };
        osc.c = [](double s) { return 1.0 + 0.5 * std::cos(2.0 * std::numbers::pi * s); };
        TestFunction mean;
        mean.phi = osc.phi;
        return std::abs(two_scale_pairing(V_eps_, osc, g_) - two_scale_pairing(V_0_, mean, g_));
    }

    /// Smallest Rayleigh quotient of the tensors the homogenized stepper used.
    double hom_min_rayleigh() const { return hom_min_rayleigh_; }
    double hom_max_symmetry_defect() const { return hom_max_sym_; }
    /// Element-steps on the zero branch and the largest corrector gradient there.
    std::size_t zero_branch_count() const { return zero_count_; }
    double zero_branch_max_gradient() const { return zero_max_grad_; }

private:
    void build()
    {
        const auto& sg = g_.macro.space;
        const int nt = g_.macro.nt;
        const double tau = g_.macro.tau();
        const int dim = sg.dim;
        const std::size_t ne = sg.element_count();

        G_eps_ = detail::gradient_history(eps_, eps_.v);
        G_0_ = detail::gradient_history(hom_, hom_.v);
        V_eps_ = detail::element_history(eps_, eps_.v);
        V_0_ = detail::element_history(hom_, hom_.v);

        // Coefficients per step as the two steppers saw them.
        const auto osc = oscillating_provider(coeff_, g_.epsilon, g_.r, sg);
        const auto homp = homogenized_provider(tensor_, sg);
        a_eps_.resize(static_cast<std::size_t>(nt));
        a_hom_.resize(static_cast<std::size_t>(nt));
        for (int n = 1; n <= nt; ++n) {
            osc(eps_.time(n), eps_.u[static_cast<std::size_t>(n - 1)], a_eps_[static_cast<std::size_t>(n - 1)]);
            homp(hom_.time(n), hom_.u[static_cast<std::size_t>(n - 1)], a_hom_[static_cast<std::size_t>(n - 1)]);
        }
        j_eps_ = detail::apply_tensors(a_eps_, G_eps_);
        j_hom_ = detail::apply_tensors(a_hom_, G_0_);

        hom_min_rayleigh_ = std::numeric_limits<double>::infinity();
        for (const auto& step : a_hom_)
            for (const auto& t : step) {
                hom_min_rayleigh_ = std::min(hom_min_rayleigh_, min_rayleigh(t));
                hom_max_sym_ = std::max(hom_max_sym_, t.symmetry_defect());
            }

        // Lookup weights per element and step from the lagged u_0.
        const auto& entries = tensor_.entries();
        const std::size_t nent = entries.size();
        cell_grid_ = g_.micro_grid();
        for (const auto& en : entries)
            if (!en.solution.phi.empty()) {
                cell_grid_ = en.solution.grid;
                break;
            }
        std::vector<SpaceTimeField> weights(nent, SpaceTimeField(sg, nt, tau, 1, Centering::element));
        std::vector<bool> zero_branch(static_cast<std::size_t>(nt) * ne, false);
        std::vector<double> w(nent);
        for (int n = 1; n <= nt; ++n) {
            const Field ue = element_values(hom_.u[static_cast<std::size_t>(n - 1)]);
            for (std::size_t e = 0; e < ne; ++e) {
                tensor_.weights(ue[e], w);
                for (std::size_t i = 0; i < nent; ++i)
                    weights[i](n - 1, e) = w[i];
                if (tensor_.zero_branch_applies(ue[e]))
                    zero_branch[static_cast<std::size_t>(n - 1) * ne + e] = true;
            }
        }

        // Micro factors grad_y Phi_k^i.
        std::vector<std::vector<MicroField>> B(static_cast<std::size_t>(dim));
        for (int k = 0; k < dim; ++k)
            for (std::size_t i = 0; i < nent; ++i) {
                const auto& sol = entries[i].solution;
                if (sol.phi.empty())
                    B[static_cast<std::size_t>(k)].push_back(
                        MicroField::constant(cell_grid_, std::vector<double>(static_cast<std::size_t>(dim), 0.0)));
                else
                    B[static_cast<std::size_t>(k)].push_back(
                        MicroField::corrector_gradient(sol.grid, sol.phi[static_cast<std::size_t>(k)]));
            }

        // d_k v_0 as scalar fields.
        std::vector<SpaceTimeField> dk(static_cast<std::size_t>(dim), SpaceTimeField(sg, nt, tau, 1, Centering::element));
        for (int k = 0; k < dim; ++k)
            for (int s = 0; s < nt; ++s)
                for (std::size_t e = 0; e < ne; ++e)
                    dk[static_cast<std::size_t>(k)](s, e) = G_0_(s, e, k);

        // corr = sum_k U(d_k v_0) U(sum_i w_i B_k^i);  z_avg = U(sum_k sum_i d_k v_0 w_i B_k^i).
        corr_ = SpaceTimeField(sg, nt, tau, dim, Centering::element);
        SeparableSum zsum;
        zsum.ncomp = dim;
        limit_.ncomp = dim;
        for (int c = 0; c < dim; ++c) {
            std::vector<double> ec(static_cast<std::size_t>(dim), 0.0);
            ec[static_cast<std::size_t>(c)] = 1.0;
            limit_.terms.push_back({dk[static_cast<std::size_t>(c)], MicroField::constant(cell_grid_, ec)});
        }
        for (int k = 0; k < dim; ++k) {
            const SpaceTimeField ud = average(dk[static_cast<std::size_t>(k)], g_);
            SeparableSum phi_sum;
            phi_sum.ncomp = dim;
            for (std::size_t i = 0; i < nent; ++i) {
                phi_sum.terms.push_back({weights[i], B[static_cast<std::size_t>(k)][i]});
                SpaceTimeField prod = weights[i];
                for (std::size_t q = 0; q < prod.values.size(); ++q)
                    prod.values[q] *= dk[static_cast<std::size_t>(k)].values[q];
                zsum.terms.push_back({prod, B[static_cast<std::size_t>(k)][i]});
                limit_.terms.push_back({std::move(prod), B[static_cast<std::size_t>(k)][i]});
            }
            const SpaceTimeField uphi = average(phi_sum, g_);
            for (int s = 0; s < nt; ++s)
                for (std::size_t e = 0; e < ne; ++e)
                    for (int c = 0; c < dim; ++c)
                        corr_(s, e, c) += ud(s, e) * uphi(s, e, c);
        }
        z_avg_ = average(zsum, g_);

        // Pointwise grad_y z(x, t, x/eps, t/eps^r).
        z_point_ = SpaceTimeField(sg, nt, tau, dim, Centering::element);
        std::vector<std::vector<std::size_t>> loc(nent, std::vector<std::size_t>(ne));
        for (std::size_t i = 0; i < nent; ++i) {
            const auto& mg = B[0][i].grid.space;
            for (std::size_t e = 0; e < ne; ++e) {
                const Point x = sg.centroid(e);
                loc[i][e] = mg.locate({wrap_unit(x[0] / g_.epsilon), wrap_unit(x[1] / g_.epsilon)});
            }
        }
        for (int s = 0; s < nt; ++s) {
            const double sm = wrap_unit((s + 0.5) * tau / g_.eps_r);
            for (std::size_t e = 0; e < ne; ++e) {
                const bool zb = zero_branch[static_cast<std::size_t>(s) * ne + e];
                if (zb)
                    ++zero_count_;
                for (int k = 0; k < dim; ++k)
                    for (std::size_t i = 0; i < nent; ++i) {
                        const double wi = weights[i](s, e);
                        if (wi == 0.0)
                            continue;
                        const auto& mf = B[static_cast<std::size_t>(k)][i];
                        const int sl = std::min(mf.slices - 1, static_cast<int>(std::floor(sm * mf.slices)));
                        for (int c = 0; c < dim; ++c) {
                            const double b = mf.at(loc[i][e], sl, c);
                            z_point_(s, e, c) += dk[static_cast<std::size_t>(k)](s, e) * wi * b;
                            if (zb)
                                zero_max_grad_ = std::max(zero_max_grad_, std::abs(wi * b));
                        }
                    }
            }
        }

        X_ = detail::apply_tensors(a_eps_, detail::combine(G_0_, 1.0, corr_));
    }

    static double min_rayleigh(const Tensor& t)
    {
        if (t.dim == 1)
            return t(0, 0);
        double m = std::numeric_limits<double>::infinity();
        for (int q = 0; q < 64; ++q) {
            const double th = std::numbers::pi * q / 64.0;
            m = std::min(m, t.quadratic({std::cos(th), std::sin(th)}));
        }
        return m;
    }

    const Trajectory& eps_;
    const Trajectory& hom_;
    const HomogenizedTensor& tensor_;
    const CoefficientField& coeff_;
    EpsilonGeometry g_;
    CellGrid cell_grid_;

    std::vector<std::vector<Tensor>> a_eps_, a_hom_;
    SpaceTimeField G_eps_, G_0_, V_eps_, V_0_, j_eps_, j_hom_, corr_, X_, z_avg_, z_point_;
    SeparableSum limit_;
    double hom_min_rayleigh_ = 0.0;
    double hom_max_sym_ = 0.0;
    std::size_t zero_count_ = 0;
    double zero_max_grad_ = 0.0;
};

inline double gradient_corrector_error(const CorrectorAnalysis& a) { return a.gradient_error(); }
inline double flux_corrector_error(const CorrectorAnalysis& a) { return a.flux_error(); }
inline double dt_corrector_error(const CorrectorAnalysis& a) { return a.dt_error(); }
inline double naive_gradient_error(const CorrectorAnalysis& a) { return a.naive_error(); }
inline double energy_defect(const CorrectorAnalysis& a) { return a.energy_defect(); }

struct StudyConfig {
    std::string scenario = "custom";
    double p = 1.0;
    double r = 1.0;
    int dim = 1;
    double length = 1.0;
    double horizon = 0.25;
    std::vector<double> epsilons{0.25, 0.125, 0.0625};
    int cells_per_eps = 8;   ///< eps / h
    int steps_per_period = 8; ///< eps^r / tau
    std::optional<CoefficientField> coefficient;
    InitialCondition initial;
    Forcing forcing;
    std::string initial_expr;
    std::string forcing_expr = "0";
    StepperConfig stepper;
    CellOptions cell;
    int lookup_samples = 32;
    int spot_checks = 5;
    unsigned seed = 12345u;
    int threads = 1;

    void validate() const
    {
        if (!(p > 0.0) || !(r > 0.0))
            throw ConfigError("study: p and r must be positive");
        if (dim != 1 && dim != 2)
            throw ConfigError("study: dim must be 1 or 2");
        if (epsilons.empty())
            throw ConfigError("study: epsilon list is empty");
        for (std::size_t i = 0; i < epsilons.size(); ++i) {
            if (!(epsilons[i] > 0.0))
                throw ConfigError("study: epsilon values must be positive");
            if (i > 0 && !(epsilons[i] < epsilons[i - 1]))
                throw ConfigError("study: epsilon list must be strictly decreasing");
        }
        if (cells_per_eps < 8 || steps_per_period < 8)
            throw ConfigError("study: need at least 8 fine cells and steps per eps-cell");
        if (!coefficient)
            throw ConfigError("study: coefficient missing");
        if (coefficient->dim() != dim)
            throw ConfigError("study: coefficient dimension does not match dim");
        if (!initial)
            throw ConfigError("study: initial condition missing");
        if (lookup_samples < 2)
            throw ConfigError("study: lookup needs at least 2 samples");
        stepper.validate();
        for (double e : epsilons)
            macro_grid(e);
    }

    Regime regime() const { return regime_for(p, r); }
    CellGrid cell_grid() const { return CellGrid(dim, cells_per_eps, steps_per_period); }

    /// Fine grid slaved to eps: h = eps / cells_per_eps, tau = eps^r / steps_per_period.
    MacroGrid macro_grid(double eps) const
    {
        const double fx = length * cells_per_eps / eps;
        const double ft = horizon * steps_per_period / std::pow(eps, r);
        const double rx = std::round(fx), rt = std::round(ft);
        if (std::abs(fx - rx) > 1e-9 * fx || std::abs(ft - rt) > 1e-9 * ft)
            throw ConfigError("study: eps = " + std::to_string(eps) + " gives a non-integer grid (L*m/eps = "
                              + std::to_string(fx) + ", T*ms/eps^r = " + std::to_string(ft) + ")");
        return MacroGrid(dim, static_cast<int>(rx), static_cast<int>(rt), length, horizon);
    }

    ProblemSpec problem(double eps, bool homogenized) const
    {
        ProblemSpec s;
        s.p = p;
        s.r = r;
        if (!homogenized)
            s.epsilon = eps;
        s.macro = macro_grid(eps);
        s.initial = initial;
        s.forcing = forcing;
        s.coefficient = coefficient;
        return s;
    }
};

struct EpsilonResult {
    double epsilon = 0.0;
    bool ok = false;
    std::string error;
    int nx = 0;
    int nt = 0;
    double h = 0.0;
    double tau = 0.0;
    double e_grad = 0.0;
    double e_flux = 0.0;
    double e_dt = 0.0;
    double e_naive = 0.0;
    double energy_defect = 0.0;
    double pairing_defect = 0.0;
    double corrector_norm = 0.0;
    double dt_constant = 0.0; ///< max(0, E_dt - E_flux) / tau
    double split_first = 0.0;
    double split_second = 0.0;
    double split_third = 0.0;
    double two_scale_defect = 0.0;
    double lambda_mass_gradient = 0.0;
    double unfolding_defect = 0.0;
    double lambda_mass = 0.0;
    double hom_min_rayleigh = 0.0;
    double hom_symmetry_defect = 0.0;
    std::size_t zero_branch_count = 0;
    double zero_branch_max_gradient = 0.0;
    double max_residual_eps = 0.0;
    double max_residual_hom = 0.0;
    int newton_eps = 0;
    int newton_hom = 0;
    int halved_steps = 0;
    double runtime_seconds = 0.0;
};

struct CorrectorReport {
    static constexpr int schema_version = 1;
    std::string scenario;
    double p = 1.0;
    double r = 1.0;
    int dim = 1;
    std::string regime;
    std::string coefficient;
    double lambda = 0.0;
    double upper = 0.0;
    double length = 1.0;
    double horizon = 1.0;
    int cells_per_eps = 8;
    int steps_per_period = 8;
    std::string initial_expr;
    std::string forcing_expr;
    double phireg = 0.0;
    std::vector<double> spot_check_errors;
    std::vector<std::pair<double, Tensor>> a_hom; ///< (|u0|, tensor); one entry for r != 2
    bool zero_branch = false;
    Tensor zero_branch_tensor;
    std::vector<EpsilonResult> results;

    bool all_ok() const
    {
        return std::all_of(results.begin(), results.end(), [](const EpsilonResult& r) { return r.ok; });
    }
};

/// Homogenized tensor for a study; r = 2 uses u0 sampled on the finest grid.
inline HomogenizedTensor study_tensor(const StudyConfig& cfg)
{
    const Regime reg = cfg.regime();
    if (!is_critical(reg))
        return homogenized_tensor(reg, *cfg.coefficient, cfg.cell_grid(), cfg.p, std::nullopt, cfg.cell);
    const auto macro = cfg.macro_grid(cfg.epsilons.back());
    const Field u0 = sample_nodes(macro.space, cfg.initial);
    auto t = homogenized_tensor(reg, *cfg.coefficient, cfg.cell_grid(), cfg.p, std::span<const double>(u0.values),
                                cfg.cell, cfg.lookup_samples);
    if (cfg.spot_checks > 0)
        spot_check(t, *cfg.coefficient, u0.values, cfg.spot_checks, cfg.seed, cfg.cell);
    return t;
}

/// Full pipeline for one eps with a precomputed homogenized tensor.
inline EpsilonResult run_epsilon(const StudyConfig& cfg, double eps, const HomogenizedTensor& tensor)
{
    EpsilonResult res;
    res.epsilon = eps;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const auto macro = cfg.macro_grid(eps);
        res.nx = macro.space.n;
        res.nt = macro.nt;
        res.h = macro.h();
        res.tau = macro.tau();
        const auto g = geometry(eps, cfg.r, macro);
        const Trajectory te = solve_eps(cfg.problem(eps, false), cfg.stepper);
        const Trajectory th = solve_hom(cfg.problem(eps, true), tensor, cfg.stepper);
        for (double v : te.residuals)
            res.max_residual_eps = std::max(res.max_residual_eps, v);
        for (double v : th.residuals)
            res.max_residual_hom = std::max(res.max_residual_hom, v);
        for (int v : te.newton_iterations)
            res.newton_eps += v;
        for (int v : th.newton_iterations)
            res.newton_hom += v;
        res.halved_steps = te.halved_steps + th.halved_steps;

        const CorrectorAnalysis an(te, th, tensor, *cfg.coefficient, g, cfg.r);
        res.e_grad = an.gradient_error();
        res.e_flux = an.flux_error();
        res.e_dt = an.dt_error();
        res.e_naive = an.naive_error();
        res.energy_defect = an.energy_defect();
        res.pairing_defect = an.pairing_defect();
        res.corrector_norm = an.corrector_norm();
        res.dt_constant = std::max(0.0, res.e_dt - res.e_flux) / res.tau;
        const auto split = an.flux_split();
        res.split_first = split[0];
        res.split_second = split[1];
        res.split_third = split[2];
        const auto ts = an.two_scale_gradient_defect();
        res.two_scale_defect = ts.defect;
        res.lambda_mass_gradient = ts.lambda_mass;
        const auto ud = an.unfolding_defect_v();
        res.unfolding_defect = ud.defect;
        res.lambda_mass = ud.lambda_mass;
        res.hom_min_rayleigh = an.hom_min_rayleigh();
        res.hom_symmetry_defect = an.hom_max_symmetry_defect();
        res.zero_branch_count = an.zero_branch_count();
        res.zero_branch_max_gradient = an.zero_branch_max_gradient();
        res.ok = true;
    } catch (const std::exception& ex) {
        res.ok = false;
        res.error = ex.what();
    }
    res.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

inline CorrectorReport make_report_header(const StudyConfig& cfg, const HomogenizedTensor& tensor)
{
    CorrectorReport rep;
    rep.scenario = cfg.scenario;
    rep.p = cfg.p;
    rep.r = cfg.r;
    rep.dim = cfg.dim;
    rep.regime = to_string(cfg.regime());
    rep.coefficient = cfg.coefficient->name();
    rep.lambda = cfg.coefficient->lambda();
    rep.upper = cfg.coefficient->upper();
    rep.length = cfg.length;
    rep.horizon = cfg.horizon;
    rep.cells_per_eps = cfg.cells_per_eps;
    rep.steps_per_period = cfg.steps_per_period;
    rep.initial_expr = cfg.initial_expr;
    rep.forcing_expr = cfg.forcing_expr;
    rep.phireg = tensor.max_corrector_gradient_norm();
    for (const auto& sc : tensor.spot_checks())
        rep.spot_check_errors.push_back(sc.relative_error);
    for (const auto& e : tensor.entries())
        rep.a_hom.emplace_back(e.u_abs, e.a_hom);
    rep.zero_branch = tensor.has_zero_branch();
    rep.zero_branch_tensor = tensor.has_zero_branch() ? tensor.zero_branch_tensor() : Tensor::zero(cfg.dim);
    return rep;
}

/// Runs every eps; per-eps failures are recorded and the sweep continues.
inline CorrectorReport run_study(const StudyConfig& cfg)
{
    cfg.validate();
    const HomogenizedTensor tensor = study_tensor(cfg);
    CorrectorReport rep = make_report_header(cfg, tensor);
    const std::size_t n = cfg.epsilons.size();
    rep.results.resize(n);
    const std::size_t threads = static_cast<std::size_t>(std::max(1, cfg.threads));
    for (std::size_t first = 0; first < n; first += threads) {
        std::vector<std::future<EpsilonResult>> jobs;
        const std::size_t last = std::min(n, first + threads);
        for (std::size_t i = first; i < last; ++i)
            jobs.push_back(std::async(threads > 1 ? std::launch::async : std::launch::deferred,
                                      [&cfg, &tensor, eps = cfg.epsilons[i]] { return run_epsilon(cfg, eps, tensor); }));
        for (std::size_t i = first; i < last; ++i)
            rep.results[i] = jobs[i - first].get();
    }
    return rep;
}

} // namespace homoglab
