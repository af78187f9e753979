#pragma once

// Cell problems on the periodic unit cell and the homogenized matrix
//
//     a_hom e_k = < a(y,s) (grad_y Phi_k + e_k) >_{y,s}.
//
// Regimes by the time-scale exponent r:
//   r < 2   elliptic problem in y for every frozen s,
//   r > 2   elliptic problem for the time-averaged coefficient,
//   r = 2   s-periodic parabolic problem whose capacity depends on the local
//           value of the homogenized solution u_0(x,t):
//             p < 1 :  (1/p)|u0|^{1-p} d_s Phi = div_y(a (grad Phi + e_k))
//             p >= 1:  d_s Psi = div_y(a (p|u0|^{p-1} grad Psi + e_k)),
//                      Phi = p|u0|^{p-1} Psi, and Phi = 0 where u0 = 0.
// Time-periodic problems are solved by iterating the one-period map
// (backward Euler in s) until the terminal state reproduces the initial one.

#include "coeff.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace homoglab {

enum class Regime { subcritical, critical_fde, critical_pme, supercritical };

inline const char* to_string(Regime r)
{
    switch (r) {
    case Regime::subcritical: return "subcritical";
    case Regime::critical_fde: return "critical-fde";
    case Regime::critical_pme: return "critical-pme";
    case Regime::supercritical: return "supercritical";
    }
    return "?";
}

inline Regime parse_regime(const std::string& s)
{
    if (s == "subcritical")
        return Regime::subcritical;
    if (s == "critical-fde" || s == "critical_fde")
        return Regime::critical_fde;
    if (s == "critical-pme" || s == "critical_pme")
        return Regime::critical_pme;
    if (s == "supercritical")
        return Regime::supercritical;
    throw ConfigError("unknown regime '" + s + "'");
}

inline bool is_critical(Regime r) { return r == Regime::critical_fde || r == Regime::critical_pme; }

/// r = 2 with p = 1 is routed to the PME form, whose diffusion scale is then 1.
inline Regime regime_for(double p, double r)
{
    if (!(p > 0.0) || !(r > 0.0))
        throw ConfigError("regime: p and r must be positive");
    if (std::abs(r - 2.0) < 1e-12)
        return p < 1.0 ? Regime::critical_fde : Regime::critical_pme;
    return r < 2.0 ? Regime::subcritical : Regime::supercritical;
}

/// Corrector values on one s-slice: node values and element gradients.
struct CellSlice {
    std::vector<double> phi;
    std::vector<double> grad; ///< element-major, dim components

    Point grad_at(std::size_t e, int dim) const
    {
        return dim == 1 ? Point{grad[e], 0.0}
                        : Point{grad[2 * e], grad[2 * e + 1]};
    }
};

/// Corrector for one direction e_k; one slice when s-independent.
struct CorrectorField {
    int k = 0;
    std::vector<CellSlice> slices;
    std::vector<double> s_positions;

    const CellSlice& slice(int j) const
    {
        return slices.size() == 1 ? slices.front() : slices[static_cast<std::size_t>(j)];
    }
};

struct PeriodMapStats {
    int periods = 0;
    double final_defect = 0.0;
    std::vector<double> contraction_ratios; ///< from the second iteration on
};

struct CellSolution {
    Regime regime = Regime::subcritical;
    CellGrid grid;
    std::optional<double> u0_value;
    double p = 1.0;
    bool zero_branch = false;
    std::vector<CorrectorField> phi; ///< one per direction k
    std::vector<CorrectorField> psi; ///< critical PME only
    std::vector<PeriodMapStats> stats; ///< critical regimes only

    /// ||grad_y Phi_k||_{L2(cell x period)}.
    double grad_l2_norm(int k) const
    {
        const auto& f = phi[static_cast<std::size_t>(k)];
        const auto& g = grid.space;
        double s = 0.0;
        const int nsl = static_cast<int>(f.slices.size());
        for (int j = 0; j < nsl; ++j)
            for (double v : f.slices[static_cast<std::size_t>(j)].grad)
                s += v * v;
        return std::sqrt(s * g.element_measure() / nsl);
    }
};

struct CellOptions {
    SolverConfig solver{1e-12, 0, Preconditioner::diagonal};
    int max_periods = 200;
    double periodic_tolerance = 1e-9;
};

namespace cellops {

inline std::vector<Tensor> element_coefficients(const CoefficientSliceY& a, const SpatialGrid& g)
{
    std::vector<Tensor> out(g.element_count());
    for (std::size_t e = 0; e < g.element_count(); ++e)
        out[e] = a.sample(g.centroid(e));
    return out;
}

inline std::vector<Tensor> element_coefficients(const CoefficientField& c, const SpatialGrid& g, double s)
{
    return element_coefficients(CoefficientSliceY::at_time(c, s), g);
}

/// Periodic P1 stiffness on all cell nodes.
inline SparseMatrix stiffness(const SpatialGrid& g, std::span<const Tensor> coeff, double scale = 1.0)
{
    const DofMap dofs(g);
    if (scale == 1.0)
        return assemble_stiffness(g, dofs, coeff);
    std::vector<Tensor> scaled(coeff.begin(), coeff.end());
    for (auto& t : scaled)
        t *= scale;
    return assemble_stiffness(g, dofs, scaled);
}

/// Load of the cell problem: F_i = -int a e_k . grad(w_i).
inline std::vector<double> load(const SpatialGrid& g, std::span<const Tensor> coeff, int k)
{
    std::vector<double> f(g.node_count(), 0.0);
    const double meas = g.element_measure();
    Point ek{0.0, 0.0};
    ek[static_cast<std::size_t>(k)] = 1.0;
    for (std::size_t e = 0; e < g.element_count(); ++e) {
        const auto s = g.stencil(e);
        const Point flux = coeff[e].apply(ek);
        for (int a = 0; a < s.count; ++a)
            f[s.nodes[static_cast<std::size_t>(a)]] -= meas * dot(flux, s.grads[static_cast<std::size_t>(a)], g.dim);
    }
    return f;
}

inline CellSlice make_slice(const SpatialGrid& g, std::vector<double> phi)
{
    CellSlice s;
    const Field f(g, Centering::node, std::move(phi));
    s.grad = gradient(f).values;
    s.phi = f.values;
    return s;
}

inline double mean_free_l2(const SpatialGrid& g, std::span<const double> v)
{
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s * std::pow(g.h(), g.dim));
}

} // namespace cellops

inline void check_cell_grid(const CoefficientField& c, const CellGrid& grid)
{
    grid.validate();
    if (grid.dim() != c.dim())
        throw ConfigError("cell grid dimension does not match the coefficient");
}

inline void check_direction(int k, int dim)
{
    if (k < 0 || k >= dim)
        throw ConfigError("direction index k out of range");
}

/// -div_y(a(y)[grad Phi_k + e_k]) = 0, periodic, zero mean.
inline CellSlice solve_cp_elliptic(const CoefficientSliceY& a, const SpatialGrid& g, int k, const CellOptions& opt = {})
{
    if (!g.periodic)
        throw ConfigError("cell problems need a periodic grid");
    check_direction(k, g.dim);
    const auto coeff = cellops::element_coefficients(a, g);
    const auto K = cellops::stiffness(g, coeff);
    const auto F = cellops::load(g, coeff, k);
    auto sol = solve_spd(K, F, opt.solver, Constraint::zero_mean);
    return cellops::make_slice(g, std::move(sol.x));
}

inline CorrectorField solve_cp_subcritical(const CoefficientField& c, const CellGrid& grid, int k, const CellOptions& opt = {})
{
    check_cell_grid(c, grid);
    check_direction(k, grid.dim());
    CorrectorField f;
    f.k = k;
    if (c.s_independent()) {
        f.slices.push_back(solve_cp_elliptic(CoefficientSliceY::at_time(c, 0.0), grid.space, k, opt));
        f.s_positions.push_back(0.5);
        return f;
    }
    for (int j = 0; j < grid.ns; ++j) {
        const double s = (j + 0.5) / grid.ns;
        f.slices.push_back(solve_cp_elliptic(CoefficientSliceY::at_time(c, s), grid.space, k, opt));
        f.s_positions.push_back(s);
    }
    return f;
}

inline CorrectorField solve_cp_supercritical(const CoefficientField& c, const CellGrid& grid, int k, const CellOptions& opt = {})
{
    check_cell_grid(c, grid);
    CorrectorField f;
    f.k = k;
    f.slices.push_back(solve_cp_elliptic(time_average(c, grid.ns), grid.space, k, opt));
    f.s_positions.push_back(0.5);
    return f;
}

/// capacity d_s W = div_y(a(y,s)[scale grad W + e_k]), W(.,0) = W(.,1).
///
/// Backward Euler with ns steps per period; slice j holds W at s = (j+1)/ns.
/// capacity = 0 degenerates to independent elliptic problems per slice.
inline CorrectorField solve_periodic_parabolic(const CoefficientField& c, const CellGrid& grid, int k, double capacity,
                                               double scale, const CellOptions& opt, PeriodMapStats& stats)
{
    check_cell_grid(c, grid);
    check_direction(k, grid.dim());
    if (!(capacity >= 0.0) || !(scale > 0.0) || !std::isfinite(capacity) || !std::isfinite(scale))
        throw ConfigError("periodic cell problem: invalid capacity or diffusion scale");
    const auto& g = grid.space;
    const int ns = grid.ns;
    const double ds = grid.ds();
    const std::size_t nn = g.node_count();
    const double mass = std::pow(g.h(), g.dim); // lumped mass, uniform on the periodic grid

    CorrectorField f;
    f.k = k;
    for (int j = 0; j < ns; ++j)
        f.s_positions.push_back(static_cast<double>(j + 1) / ns);

    std::vector<SparseMatrix> systems;
    std::vector<std::vector<double>> loads;
    systems.reserve(static_cast<std::size_t>(ns));
    for (int j = 0; j < ns; ++j) {
        const auto coeff = cellops::element_coefficients(c, g, f.s_positions[static_cast<std::size_t>(j)]);
        auto K = cellops::stiffness(g, coeff, scale);
        loads.push_back(cellops::load(g, coeff, k));
        if (capacity > 0.0) {
            auto vals = K.values();
            for (std::size_t pos : K.diagonal_positions())
                vals[pos] += capacity * mass / ds;
        }
        systems.push_back(std::move(K));
    }

    if (capacity == 0.0) {
        for (int j = 0; j < ns; ++j) {
            auto sol = solve_spd(systems[static_cast<std::size_t>(j)], loads[static_cast<std::size_t>(j)], opt.solver,
                                 Constraint::zero_mean);
            f.slices.push_back(cellops::make_slice(g, std::move(sol.x)));
        }
        stats = {};
        return f;
    }

    std::vector<std::vector<double>> states(static_cast<std::size_t>(ns), std::vector<double>(nn, 0.0));
    std::vector<double> start(nn, 0.0), rhs(nn);
    double prev_defect = -1.0;
    stats = {};
    for (int period = 1; period <= opt.max_periods; ++period) {
        const std::vector<double>* prev = &start;
        for (int j = 0; j < ns; ++j) {
            for (std::size_t i = 0; i < nn; ++i)
                rhs[i] = capacity * mass / ds * (*prev)[i] + loads[static_cast<std::size_t>(j)][i];
            auto& out = states[static_cast<std::size_t>(j)];
            auto sol = solve_spd(systems[static_cast<std::size_t>(j)], rhs, opt.solver, Constraint::none,
                                 std::span<const double>(out));
            out = std::move(sol.x);
            detail::remove_mean(out);
            prev = &out;
        }
        const auto& end = states.back();
        std::vector<double> diff(nn);
        for (std::size_t i = 0; i < nn; ++i)
            diff[i] = end[i] - start[i];
        const double defect = cellops::mean_free_l2(g, diff);
        double total = 0.0;
        for (const auto& st : states) {
            const double n2 = cellops::mean_free_l2(g, st);
            total += n2 * n2 / ns;
        }
        stats.periods = period;
        stats.final_defect = defect;
        if (prev_defect > 0.0)
            stats.contraction_ratios.push_back(defect / prev_defect);
        prev_defect = defect;
        start = end;
        if (defect <= opt.periodic_tolerance * std::max(1.0, std::sqrt(total))) {
            for (auto& st : states)
                f.slices.push_back(cellops::make_slice(g, std::move(st)));
            return f;
        }
    }
    double rate = stats.contraction_ratios.empty() ? 1.0 : stats.contraction_ratios.back();
    throw SolverError("periodic cell problem: period map did not converge in " + std::to_string(opt.max_periods)
                          + " periods (contraction estimate " + std::to_string(rate) + ")",
                      stats.final_defect);
}

/// Critical fast-diffusion cell problem, capacity (1/p)|u0|^{1-p}.
inline CellSolution solve_cp_critical_fde(const CoefficientField& c, const CellGrid& grid, double u0_value, double p,
                                          const CellOptions& opt = {})
{
    if (!(p > 0.0 && p < 1.0))
        throw ConfigError("critical FDE cell problem requires 0 < p < 1");
    if (u0_value == 0.0)
        throw ConfigError("critical FDE cell problem requires u0 != 0");
    CellSolution sol;
    sol.regime = Regime::critical_fde;
    sol.grid = grid;
    sol.u0_value = u0_value;
    sol.p = p;
    const double capacity = std::pow(std::abs(u0_value), 1.0 - p) / p;
    for (int k = 0; k < grid.dim(); ++k) {
        PeriodMapStats st;
        sol.phi.push_back(solve_periodic_parabolic(c, grid, k, capacity, 1.0, opt, st));
        sol.stats.push_back(st);
    }
    return sol;
}

/// Critical porous-medium cell problem; returns Psi_k and Phi_k = p|u0|^{p-1} Psi_k.
inline CellSolution solve_cp_critical_pme(const CoefficientField& c, const CellGrid& grid, double u0_value, double p,
                                          const CellOptions& opt = {}, double zero_threshold = 0.0)
{
    if (!(p >= 1.0))
        throw ConfigError("critical PME cell problem requires p >= 1");
    check_cell_grid(c, grid);
    CellSolution sol;
    sol.regime = Regime::critical_pme;
    sol.grid = grid;
    sol.u0_value = u0_value;
    sol.p = p;
    const bool linear = p == 1.0;
    if (!linear && std::abs(u0_value) <= zero_threshold) {
        sol.zero_branch = true;
        const auto& g = grid.space;
        for (int k = 0; k < grid.dim(); ++k) {
            CorrectorField z;
            z.k = k;
            z.slices.push_back(CellSlice{std::vector<double>(g.node_count(), 0.0),
                                         std::vector<double>(g.element_count() * static_cast<std::size_t>(g.dim), 0.0)});
            z.s_positions.push_back(0.5);
            sol.phi.push_back(z);
            sol.psi.push_back(z);
            sol.stats.emplace_back();
        }
        return sol;
    }
    const double scale = linear ? 1.0 : p * std::pow(std::abs(u0_value), p - 1.0);
    for (int k = 0; k < grid.dim(); ++k) {
        PeriodMapStats st;
        CorrectorField psi = solve_periodic_parabolic(c, grid, k, 1.0, scale, opt, st);
        CorrectorField phi = psi;
        for (auto& sl : phi.slices) {
            for (auto& v : sl.phi)
                v *= scale;
            for (auto& v : sl.grad)
                v *= scale;
        }
        sol.psi.push_back(std::move(psi));
        sol.phi.push_back(std::move(phi));
        sol.stats.push_back(st);
    }
    return sol;
}

inline CellSolution solve_cell_problems(Regime regime, const CoefficientField& c, const CellGrid& grid,
                                        const CellOptions& opt = {}, double p = 1.0, double u0_value = 1.0,
                                        double zero_threshold = 0.0)
{
    CellSolution sol;
    sol.regime = regime;
    sol.grid = grid;
    sol.p = p;
    switch (regime) {
    case Regime::subcritical:
        for (int k = 0; k < grid.dim(); ++k)
            sol.phi.push_back(solve_cp_subcritical(c, grid, k, opt));
        return sol;
    case Regime::supercritical:
        for (int k = 0; k < grid.dim(); ++k)
            sol.phi.push_back(solve_cp_supercritical(c, grid, k, opt));
        return sol;
    case Regime::critical_fde:
        if (u0_value == 0.0) {
            // |u0| -> 0 removes the capacity: elliptic problems per slice.
            sol.regime = Regime::critical_fde;
            sol.u0_value = 0.0;
            for (int k = 0; k < grid.dim(); ++k) {
                PeriodMapStats st;
                sol.phi.push_back(solve_periodic_parabolic(c, grid, k, 0.0, 1.0, opt, st));
                sol.stats.push_back(st);
            }
            return sol;
        }
        return solve_cp_critical_fde(c, grid, u0_value, p, opt);
    case Regime::critical_pme:
        return solve_cp_critical_pme(c, grid, u0_value, p, opt, zero_threshold);
    }
    return sol;
}

/// Coefficient seen by slice j of a cell solution.
inline CoefficientSliceY slice_coefficient(const CoefficientField& c, const CellSolution& sol, const CorrectorField& f, int j)
{
    if (sol.regime == Regime::supercritical)
        return time_average(c, sol.grid.ns);
    return CoefficientSliceY::at_time(c, f.s_positions[static_cast<std::size_t>(j)]);
}

/// a_hom e_k = < a (grad Phi_k + e_k) > by midpoint quadrature over cell x period.
inline Tensor homogenized_matrix(const CoefficientField& c, const CellSolution& sol)
{
    const auto& g = sol.grid.space;
    const int dim = g.dim;
    Tensor out = Tensor::zero(dim);
    const double meas = g.element_measure();
    for (int k = 0; k < dim; ++k) {
        const auto& f = sol.phi[static_cast<std::size_t>(k)];
        const int nsl = static_cast<int>(f.slices.size());
        Point acc{0.0, 0.0};
        for (int j = 0; j < nsl; ++j) {
            const auto coeff = cellops::element_coefficients(slice_coefficient(c, sol, f, j), g);
            const auto& sl = f.slices[static_cast<std::size_t>(j)];
            Point sj{0.0, 0.0};
            for (std::size_t e = 0; e < g.element_count(); ++e) {
                Point q = sl.grad_at(e, dim);
                q[static_cast<std::size_t>(k)] += 1.0;
                const Point flux = coeff[e].apply(q);
                sj[0] += flux[0];
                sj[1] += flux[1];
            }
            acc[0] += sj[0] * meas / nsl;
            acc[1] += sj[1] * meas / nsl;
        }
        for (int i = 0; i < dim; ++i)
            out(i, k) = acc[static_cast<std::size_t>(i)];
    }
    return out;
}

/// M_jk = < a (grad Phi_k + e_k) . grad Phi_j >; vanishes for elliptic cell problems.
inline Tensor flux_orthogonality(const CoefficientField& c, const CellSolution& sol)
{
    const auto& g = sol.grid.space;
    const int dim = g.dim;
    Tensor out = Tensor::zero(dim);
    const double meas = g.element_measure();
    for (int k = 0; k < dim; ++k) {
        const auto& fk = sol.phi[static_cast<std::size_t>(k)];
        const int nsl = static_cast<int>(std::max(fk.slices.size(), sol.phi[0].slices.size()));
        for (int jd = 0; jd < dim; ++jd) {
            const auto& fj = sol.phi[static_cast<std::size_t>(jd)];
            double acc = 0.0;
            for (int j = 0; j < nsl; ++j) {
                const auto coeff = cellops::element_coefficients(slice_coefficient(c, sol, fk, j), g);
                const auto& sk = fk.slice(j);
                const auto& sj = fj.slice(j);
                double s = 0.0;
                for (std::size_t e = 0; e < g.element_count(); ++e) {
                    Point q = sk.grad_at(e, dim);
                    q[static_cast<std::size_t>(k)] += 1.0;
                    s += dot(coeff[e].apply(q), sj.grad_at(e, dim), dim);
                }
                acc += s * meas / nsl;
            }
            out(jd, k) = acc;
        }
    }
    return out;
}

/// Arithmetic and harmonic means of the scalar coefficient a_11 over cell x period.
inline std::array<double, 2> voigt_reuss_bounds(const CoefficientField& c, const CellGrid& grid)
{
    const auto& g = grid.space;
    double arith = 0.0, inv = 0.0;
    const int nsl = c.s_independent() ? 1 : grid.ns;
    for (int j = 0; j < nsl; ++j) {
        const auto coeff = cellops::element_coefficients(c, g, (j + 0.5) / nsl);
        for (const auto& t : coeff) {
            arith += t(0, 0);
            inv += 1.0 / t(0, 0);
        }
    }
    const double n = static_cast<double>(nsl) * static_cast<double>(g.element_count());
    return {n / inv, arith / n};
}

/// Homogenized matrix: one constant tensor for r != 2; for r = 2 a lookup
/// over |u0| built from cell solves at tabulated values, linearly interpolated.
class HomogenizedTensor {
public:
    struct Entry {
        double u_abs = 0.0;
        Tensor a_hom;
        CellSolution solution;
    };

    struct SpotCheck {
        double u_abs = 0.0;
        double relative_error = 0.0;
    };

    HomogenizedTensor() = default;

    static HomogenizedTensor constant(Regime regime, Tensor a_hom, CellSolution sol)
    {
        HomogenizedTensor t;
        t.regime_ = regime;
        t.entries_.push_back({0.0, a_hom, std::move(sol)});
        return t;
    }

    static HomogenizedTensor fixed(const Tensor& a)
    {
        HomogenizedTensor t;
        t.regime_ = Regime::subcritical;
        CellSolution sol;
        t.entries_.push_back({0.0, a, std::move(sol)});
        t.has_solutions_ = false;
        return t;
    }

    Regime regime() const { return regime_; }
    bool is_constant() const { return entries_.size() == 1 && !zero_branch_; }
    bool has_solutions() const { return has_solutions_; }
    int dim() const { return entries_.front().a_hom.dim; }
    double eta() const { return eta_; }
    bool has_zero_branch() const { return zero_branch_; }
    const Tensor& zero_branch_tensor() const { return zero_tensor_; }
    const std::vector<Entry>& entries() const { return entries_; }
    const std::vector<SpotCheck>& spot_checks() const { return spot_checks_; }
    Tensor constant_value() const { return entries_.front().a_hom; }

    /// Interpolation weights over the entries for a given u0; all zero on the zero branch.
    void weights(double u0, std::span<double> w) const
    {
        std::fill(w.begin(), w.end(), 0.0);
        if (entries_.size() == 1) {
            if (!(zero_branch_ && std::abs(u0) <= eta_))
                w[0] = 1.0;
            return;
        }
        const double u = std::abs(u0);
        if (zero_branch_ && u <= eta_)
            return;
        if (u <= entries_.front().u_abs) {
            w[0] = 1.0;
            return;
        }
        if (u >= entries_.back().u_abs) {
            w[entries_.size() - 1] = 1.0;
            return;
        }
        const auto it = std::upper_bound(entries_.begin(), entries_.end(), u,
                                         [](double x, const Entry& e) { return x < e.u_abs; });
        const std::size_t hi = static_cast<std::size_t>(it - entries_.begin());
        const std::size_t lo = hi - 1;
        const double t = (u - entries_[lo].u_abs) / (entries_[hi].u_abs - entries_[lo].u_abs);
        w[lo] = 1.0 - t;
        w[hi] = t;
    }

    Tensor at(double u0) const
    {
        if (zero_branch_ && std::abs(u0) <= eta_)
            return zero_tensor_;
        std::vector<double> w(entries_.size());
        weights(u0, w);
        Tensor out = Tensor::zero(dim());
        for (std::size_t i = 0; i < w.size(); ++i)
            if (w[i] != 0.0)
                out += w[i] * entries_[i].a_hom;
        return out;
    }

    bool zero_branch_applies(double u0) const { return zero_branch_ && std::abs(u0) <= eta_; }

    /// Per-element tensors, evaluated at the P1 centroid value of u.
    std::vector<Tensor> element_tensors(const SpatialGrid& g, const Field& u) const
    {
        if (is_constant())
            return std::vector<Tensor>(g.element_count(), constant_value());
        const Field ue = element_values(u);
        std::vector<Tensor> out(g.element_count());
        for (std::size_t e = 0; e < g.element_count(); ++e)
            out[e] = at(ue[e]);
        return out;
    }

    /// Per-node tensors for the node values of u.
    std::vector<Tensor> node_tensors(const Field& u) const
    {
        std::vector<Tensor> out(u.size());
        for (std::size_t i = 0; i < u.size(); ++i)
            out[i] = at(u[i]);
        return out;
    }

    /// Largest ||grad_y Phi_k||_{L2(cell x period)} over all stored solutions.
    double max_corrector_gradient_norm() const
    {
        double m = 0.0;
        for (const auto& e : entries_)
            for (int k = 0; k < static_cast<int>(e.solution.phi.size()); ++k)
                m = std::max(m, e.solution.grad_l2_norm(k));
        return m;
    }

    friend HomogenizedTensor build_critical_tensor(Regime, const CoefficientField&, const CellGrid&, double, double,
                                                   const CellOptions&, int);
    friend void spot_check(HomogenizedTensor&, const CoefficientField&, std::span<const double>, int, unsigned,
                           const CellOptions&);

private:
    Regime regime_ = Regime::subcritical;
    std::vector<Entry> entries_;
    bool zero_branch_ = false;
    double eta_ = 0.0;
    Tensor zero_tensor_;
    bool has_solutions_ = true;
    std::vector<SpotCheck> spot_checks_;
};

/// Arithmetic mean <a>_{y,s}: the homogenized matrix when Phi = 0.
inline Tensor arithmetic_mean(const CoefficientField& c, const CellGrid& grid)
{
    const auto& g = grid.space;
    Tensor sum = Tensor::zero(g.dim);
    const int nsl = c.s_independent() ? 1 : grid.ns;
    for (int j = 0; j < nsl; ++j)
        for (const auto& t : cellops::element_coefficients(c, g, (j + 1.0) / grid.ns))
            sum += t;
    return (1.0 / (static_cast<double>(nsl) * static_cast<double>(g.element_count()))) * sum;
}

/// Lookup of a_hom over |u0| in [0, u_max] with `samples` entries.
///
/// FDE: entries at u_max*j/(samples-1), j = 0 being the capacity-free limit.
/// PME (p > 1): entries at u_max*(j+1)/samples; |u0| <= eta = 1e-7 u_max takes
/// the Phi = 0 branch; values between eta and the first entry are clamped to it.
inline HomogenizedTensor build_critical_tensor(Regime regime, const CoefficientField& c, const CellGrid& grid, double p,
                                               double u_max, const CellOptions& opt = {}, int samples = 32)
{
    if (!is_critical(regime))
        throw ConfigError("build_critical_tensor: regime is not critical");
    if (!(u_max > 0.0) || !std::isfinite(u_max))
        throw ConfigError("critical homogenized tensor needs max|u0| > 0");
    if (samples < 2)
        throw ConfigError("critical homogenized tensor needs at least 2 samples");
    HomogenizedTensor t;
    t.regime_ = regime;
    t.eta_ = 1e-7 * u_max;
    const bool linear = regime == Regime::critical_pme && p == 1.0;
    if (linear) {
        auto sol = solve_cp_critical_pme(c, grid, 1.0, 1.0, opt);
        const Tensor a = homogenized_matrix(c, sol);
        t.entries_.push_back({1.0, a, std::move(sol)});
        return t;
    }
    if (regime == Regime::critical_pme) {
        t.zero_branch_ = true;
        t.zero_tensor_ = arithmetic_mean(c, grid);
    }
    for (int j = 0; j < samples; ++j) {
        const double u = regime == Regime::critical_fde ? u_max * j / (samples - 1) : u_max * (j + 1) / samples;
        auto sol = solve_cell_problems(regime, c, grid, opt, p, u);
        const Tensor a = homogenized_matrix(c, sol);
        t.entries_.push_back({u, a, std::move(sol)});
    }
    return t;
}

/// Re-solves the cell problem at `count` pseudo-random sample values inside
/// the table range and records the relative deviation of the interpolated tensor.
inline void spot_check(HomogenizedTensor& t, const CoefficientField& c, std::span<const double> u0_samples, int count = 5,
                       unsigned seed = 12345u, const CellOptions& opt = {})
{
    t.spot_checks_.clear();
    if (t.entries_.size() < 2)
        return;
    std::vector<double> candidates;
    for (double u : u0_samples) {
        const double a = std::abs(u);
        if (a >= t.entries_.front().u_abs && a <= t.entries_.back().u_abs && !t.zero_branch_applies(a))
            candidates.push_back(a);
    }
    if (candidates.empty())
        return;
    std::mt19937_64 rng(seed);
    const auto& ref = t.entries_.front().solution;
    for (int i = 0; i < count; ++i) {
        const double u = candidates[static_cast<std::size_t>(rng() % candidates.size())];
        const auto sol = solve_cell_problems(t.regime_, c, ref.grid, opt, ref.p, u);
        const Tensor exact = homogenized_matrix(c, sol);
        const Tensor interp = t.at(u);
        double num = 0.0, den = 0.0;
        for (std::size_t q = 0; q < 4; ++q) {
            num = std::max(num, std::abs(exact.m[q] - interp.m[q]));
            den = std::max(den, std::abs(exact.m[q]));
        }
        t.spot_checks_.push_back({u, num / den});
    }
}

/// Homogenized tensor for a regime. Critical regimes need u0 samples (their
/// maximum fixes the lookup range); p is only used by critical regimes.
inline HomogenizedTensor homogenized_tensor(Regime regime, const CoefficientField& c, const CellGrid& grid, double p = 1.0,
                                            std::optional<std::span<const double>> u0_samples = std::nullopt,
                                            const CellOptions& opt = {}, int samples = 32)
{
    if (!is_critical(regime)) {
        auto sol = solve_cell_problems(regime, c, grid, opt, p);
        const Tensor a = homogenized_matrix(c, sol);
        return HomogenizedTensor::constant(regime, a, std::move(sol));
    }
    if (!u0_samples)
        throw ConfigError("critical regimes require u0 samples");
    double u_max = 0.0;
    for (double u : *u0_samples)
        u_max = std::max(u_max, std::abs(u));
    return build_critical_tensor(regime, c, grid, p, u_max, opt, samples);
}

} // namespace homoglab
