#pragma once

// Discrete space-time unfolding T_eps and averaging U_eps on grid-aligned eps.
//
// With eps/h = m and eps^r/tau = ms integers every fine element of a whole
// eps-cell eps(xi + box) x eps^r(zeta + J) is a micro element of the cell grid
// CellGrid(dim, m, ms), so T_eps is a bijective re-indexing of samples and the
// identities relating T_eps, U_eps and the integral hold to rounding.
//
// Space-time fields are piecewise constant per fine step; step k covers
// (k tau, (k+1) tau] and belongs to zeta = k / ms, micro step k % ms.

#include "cell.hpp"
#include "errors.hpp"
#include "mesh.hpp"
#include "mesh_io.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

namespace homoglab {

struct EpsilonGeometry {
    double epsilon = 1.0;
    double r = 1.0;
    double eps_r = 1.0;
    MacroGrid macro;
    int m = 1;           ///< fine cells per eps-cell and axis
    int ms = 1;          ///< fine steps per eps^r period
    int xi_per_axis = 0; ///< |Xi| per axis
    int theta_count = 0; ///< |Theta|

    int dim() const { return macro.dim(); }
    std::size_t cell_count() const
    {
        const auto x = static_cast<std::size_t>(xi_per_axis);
        return dim() == 1 ? x : x * x;
    }
    double omega_hat_length() const { return xi_per_axis * epsilon; }
    double i_hat_length() const { return theta_count * eps_r; }
    CellGrid micro_grid() const { return CellGrid(dim(), m, ms); }

    std::vector<std::array<int, 2>> xi_set() const
    {
        std::vector<std::array<int, 2>> out;
        const int ny = dim() == 2 ? xi_per_axis : 1;
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < xi_per_axis; ++i)
                out.push_back({i, j});
        return out;
    }
    std::vector<int> theta_set() const
    {
        std::vector<int> out(static_cast<std::size_t>(theta_count));
        for (int z = 0; z < theta_count; ++z)
            out[static_cast<std::size_t>(z)] = z;
        return out;
    }

    bool step_inside(int k) const { return k < theta_count * ms; }

    /// Square index range covered by whole eps-cells.
    bool square_inside(int i, int j) const
    {
        const int lim = xi_per_axis * m;
        return i < lim && (dim() == 1 || j < lim);
    }

    bool inside(Centering c, std::size_t entry) const
    {
        const auto& g = macro.space;
        if (c == Centering::element) {
            const auto [i, j, t] = g.element_index(entry);
            return square_inside(i, j);
        }
        const auto [i, j] = g.node_index(entry);
        return square_inside(i, j);
    }

    /// Eps-cell of an inside entry (linear xi index) and its micro entry on micro_grid().
    std::pair<std::size_t, std::size_t> split(Centering c, std::size_t entry) const
    {
        const auto& g = macro.space;
        const auto cg = micro_grid().space;
        int i, j, t = 0;
        if (c == Centering::element) {
            const auto idx = g.element_index(entry);
            i = idx[0];
            j = idx[1];
            t = idx[2];
        } else {
            const auto idx = g.node_index(entry);
            i = idx[0];
            j = idx[1];
        }
        const std::size_t cell = static_cast<std::size_t>(i / m)
                                 + (dim() == 2 ? static_cast<std::size_t>(xi_per_axis) * static_cast<std::size_t>(j / m) : 0);
        const std::size_t micro = c == Centering::element ? cg.element_id(i % m, j % m, t) : cg.node_id(i % m, j % m);
        return {cell, micro};
    }

    /// Indicator of Lambda_eps per (step, entry), true outside the whole cells.
    std::vector<bool> lambda_mask(Centering c) const
    {
        const std::size_t count = macro.space.count(c);
        std::vector<bool> mask(count * static_cast<std::size_t>(macro.nt));
        for (int k = 0; k < macro.nt; ++k)
            for (std::size_t e = 0; e < count; ++e)
                mask[static_cast<std::size_t>(k) * count + e] = !(step_inside(k) && inside(c, e));
        return mask;
    }
};

/// Builds the index sets; eps/h and eps^r/tau must be integers.
inline EpsilonGeometry geometry(double eps, double r, const MacroGrid& macro)
{
    macro.validate();
    if (!(eps > 0.0) || !std::isfinite(eps) || !(r > 0.0))
        throw ConfigError("geometry: epsilon and r must be positive");
    EpsilonGeometry g;
    g.epsilon = eps;
    g.r = r;
    g.eps_r = std::pow(eps, r);
    g.macro = macro;
    const double fm = eps / macro.h();
    const double fs = g.eps_r / macro.tau();
    const double rm = std::round(fm), rs = std::round(fs);
    if (rm < 1.0 || std::abs(fm - rm) > 1e-9 * fm || rs < 1.0 || std::abs(fs - rs) > 1e-9 * fs)
        throw ConfigError("geometry: eps = " + std::to_string(eps) + " is not grid-aligned; admissible eps are integer "
                          "multiples of h = " + std::to_string(macro.h()) + " whose power eps^r is an integer multiple "
                          "of tau = " + std::to_string(macro.tau()));
    g.m = static_cast<int>(rm);
    g.ms = static_cast<int>(rs);
    g.xi_per_axis = static_cast<int>(std::floor(macro.space.length / eps + 1e-9));
    g.theta_count = static_cast<int>(std::floor(macro.horizon / g.eps_r + 1e-9));
    return g;
}

/// T_eps(w) on Omega_hat x I_hat x box x J; zero on Lambda_eps (not stored).
struct UnfoldedField {
    EpsilonGeometry geom;
    CellGrid micro;
    Centering centering = Centering::element;
    int ncomp = 1;
    std::vector<double> values; ///< [(((cell*theta + zeta)*micro + y)*ns + s)*ncomp + c]

    std::size_t micro_count() const { return micro.space.count(centering); }
    std::size_t index(std::size_t cell, int zeta, std::size_t y, int s, int c = 0) const
    {
        const std::size_t th = static_cast<std::size_t>(geom.theta_count);
        const std::size_t ns = static_cast<std::size_t>(micro.ns);
        return (((cell * th + static_cast<std::size_t>(zeta)) * micro_count() + y) * ns + static_cast<std::size_t>(s))
                   * static_cast<std::size_t>(ncomp)
               + static_cast<std::size_t>(c);
    }
    double operator()(std::size_t cell, int zeta, std::size_t y, int s, int c = 0) const
    {
        return values[index(cell, zeta, y, s, c)];
    }
    double& operator()(std::size_t cell, int zeta, std::size_t y, int s, int c = 0)
    {
        return values[index(cell, zeta, y, s, c)];
    }

    /// Measure of one (cell, zeta, y, s) sample in Omega x I x box x J.
    double sample_measure() const
    {
        const double cellm = std::pow(geom.epsilon, geom.dim()) * geom.eps_r;
        const double micro_m = centering == Centering::element ? micro.space.element_measure()
                                                               : std::pow(micro.space.h(), geom.dim());
        return cellm * micro_m * micro.ds();
    }

    UnfoldedField& operator+=(const UnfoldedField& o)
    {
        for (std::size_t q = 0; q < values.size(); ++q)
            values[q] += o.values[q];
        return *this;
    }
    UnfoldedField& operator*=(double a)
    {
        for (double& v : values)
            v *= a;
        return *this;
    }
};

namespace detail {

inline void check_field(const SpaceTimeField& w, const EpsilonGeometry& g)
{
    if (!(w.grid == g.macro.space) || w.nt != g.macro.nt)
        throw AlignmentError("unfold: field does not live on the geometry's macro grid");
}

} // namespace detail

/// Pure re-indexing at the per-cell fine resolution.
inline UnfoldedField unfold(const SpaceTimeField& w, const EpsilonGeometry& g)
{
    detail::check_field(w, g);
    UnfoldedField out;
    out.geom = g;
    out.micro = g.micro_grid();
    out.centering = w.centering;
    out.ncomp = w.ncomp;
    out.values.assign(g.cell_count() * static_cast<std::size_t>(g.theta_count) * out.micro_count()
                          * static_cast<std::size_t>(g.ms) * static_cast<std::size_t>(w.ncomp),
                      0.0);
    const std::size_t count = w.per_step();
    for (int k = 0; k < g.theta_count * g.ms; ++k) {
        const int zeta = k / g.ms, s = k % g.ms;
        for (std::size_t e = 0; e < count; ++e) {
            if (!g.inside(w.centering, e))
                continue;
            const auto [cell, y] = g.split(w.centering, e);
            for (int c = 0; c < w.ncomp; ++c)
                out(cell, zeta, y, s, c) = w(k, e, c);
        }
    }
    return out;
}

/// Unfolding onto a coarser cell grid whose resolution divides the fine one:
/// micro samples are the means of the fine samples they contain.
inline UnfoldedField unfold(const SpaceTimeField& w, const EpsilonGeometry& g, const CellGrid& cg)
{
    if (cg.dim() != g.dim() || g.m % cg.ny() != 0 || g.ms % cg.ns != 0)
        throw AlignmentError("unfold: cell grid resolution must divide the per-cell fine resolution");
    UnfoldedField fine = unfold(w, g);
    if (cg == fine.micro)
        return fine;
    UnfoldedField out;
    out.geom = g;
    out.micro = cg;
    out.centering = w.centering;
    out.ncomp = w.ncomp;
    out.values.assign(g.cell_count() * static_cast<std::size_t>(g.theta_count) * out.micro_count()
                          * static_cast<std::size_t>(cg.ns) * static_cast<std::size_t>(w.ncomp),
                      0.0);
    const int qs = g.ms / cg.ns;
    const auto& fg = fine.micro.space;
    std::vector<double> weight(out.micro_count(), 0.0);
    std::vector<std::ptrdiff_t> target(fine.micro_count(), -1);
    for (std::size_t y = 0; y < fine.micro_count(); ++y) {
        if (w.centering == Centering::element) {
            target[y] = static_cast<std::ptrdiff_t>(cg.space.locate(fg.centroid(y)));
        } else {
            const auto [i, j] = fg.node_index(y);
            const int q = g.m / cg.ny();
            if (i % q == 0 && j % q == 0)
                target[y] = static_cast<std::ptrdiff_t>(cg.space.node_id(i / q, j / q));
        }
        if (target[y] >= 0)
            weight[static_cast<std::size_t>(target[y])] += 1.0;
    }
    for (std::size_t cell = 0; cell < g.cell_count(); ++cell)
        for (int zeta = 0; zeta < g.theta_count; ++zeta)
            for (std::size_t y = 0; y < fine.micro_count(); ++y) {
                if (target[y] < 0)
                    continue;
                const auto ty = static_cast<std::size_t>(target[y]);
                for (int s = 0; s < g.ms; ++s)
                    for (int c = 0; c < w.ncomp; ++c)
                        out(cell, zeta, ty, s / qs, c) += fine(cell, zeta, y, s, c) / (weight[ty] * qs);
            }
    return out;
}

/// U_eps(Psi): macro cell mean (Psi is already constant there) at the micro position of each entry.
inline SpaceTimeField average(const UnfoldedField& psi)
{
    const auto& g = psi.geom;
    SpaceTimeField out(g.macro.space, g.macro.nt, g.macro.tau(), psi.ncomp, psi.centering);
    const std::size_t count = out.per_step();
    const bool same = psi.micro == g.micro_grid();
    const auto fine = g.micro_grid();
    for (int k = 0; k < g.theta_count * g.ms; ++k) {
        const int zeta = k / g.ms, sf = k % g.ms;
        const int s = same ? sf : static_cast<int>(std::floor((sf + 0.5) / g.ms * psi.micro.ns));
        for (std::size_t e = 0; e < count; ++e) {
            if (!g.inside(psi.centering, e))
                continue;
            auto [cell, y] = g.split(psi.centering, e);
            if (!same) {
                const Point yp = psi.centering == Centering::element ? fine.space.centroid(y) : fine.space.node_position(y);
                y = psi.centering == Centering::element ? psi.micro.space.locate(yp)
                                                        : psi.micro.space.node_id(static_cast<int>(std::floor(yp[0] * psi.micro.ny() + 1e-9)),
                                                                                  static_cast<int>(std::floor(yp[1] * psi.micro.ny() + 1e-9)));
            }
            for (int c = 0; c < psi.ncomp; ++c)
                out(k, e, c) = psi(cell, zeta, y, s, c);
        }
    }
    return out;
}

/// Cell-grid field B(y, s): element values per s-slice, ncomp components.
struct MicroField {
    CellGrid grid;
    int ncomp = 1;
    int slices = 1;
    std::vector<double> values; ///< [(slice*elements + e)*ncomp + c]

    double at(std::size_t e, int slice, int c = 0) const
    {
        const std::size_t ne = grid.space.element_count();
        return values[((static_cast<std::size_t>(slice) * ne) + e) * static_cast<std::size_t>(ncomp) + static_cast<std::size_t>(c)];
    }

    static MicroField constant(const CellGrid& grid, std::vector<double> value)
    {
        MicroField f;
        f.grid = grid;
        f.ncomp = static_cast<int>(value.size());
        f.slices = 1;
        for (std::size_t e = 0; e < grid.space.element_count(); ++e)
            f.values.insert(f.values.end(), value.begin(), value.end());
        return f;
    }

    /// grad_y of a corrector, one slice per stored s-slice.
    static MicroField corrector_gradient(const CellGrid& grid, const CorrectorField& phi)
    {
        MicroField f;
        f.grid = grid;
        f.ncomp = grid.dim();
        f.slices = static_cast<int>(phi.slices.size());
        for (const auto& sl : phi.slices)
            f.values.insert(f.values.end(), sl.grad.begin(), sl.grad.end());
        return f;
    }
};

/// Scalar macro factor A(x,t) (element-centered, piecewise constant per step) times B(y,s).
struct SeparableTerm {
    SpaceTimeField macro;
    MicroField micro;
};

struct SeparableSum {
    int ncomp = 1;
    std::vector<SeparableTerm> terms;
};

namespace detail {

/// Map from fine local element / step to micro element / slice of a micro field.
struct MicroLookup {
    std::vector<std::size_t> element; ///< indexed by fine micro element
    std::vector<int> slice;           ///< indexed by fine micro step

    MicroLookup(const EpsilonGeometry& g, const MicroField& f)
    {
        const auto fine = g.micro_grid();
        if (f.grid.dim() != g.dim())
            throw AlignmentError("micro field dimension does not match the geometry");
        element.resize(fine.space.element_count());
        for (std::size_t y = 0; y < element.size(); ++y)
            element[y] = f.grid.space.locate(fine.space.centroid(y));
        slice.resize(static_cast<std::size_t>(g.ms));
        for (int s = 0; s < g.ms; ++s)
            slice[static_cast<std::size_t>(s)] =
                std::min(f.slices - 1, static_cast<int>(std::floor((s + 0.5) / g.ms * f.slices)));
    }
};

/// Means of A over every (cell, zeta) block, index cell*theta + zeta.
inline std::vector<double> block_means(const SpaceTimeField& a, const EpsilonGeometry& g)
{
    check_field(a, g);
    if (a.centering != Centering::element || a.ncomp != 1)
        throw AlignmentError("separable macro factor must be a scalar element field");
    const std::size_t th = static_cast<std::size_t>(g.theta_count);
    std::vector<double> sum(g.cell_count() * th, 0.0);
    const std::size_t count = a.per_step();
    for (int k = 0; k < g.theta_count * g.ms; ++k)
        for (std::size_t e = 0; e < count; ++e) {
            if (!g.inside(Centering::element, e))
                continue;
            const auto cell = g.split(Centering::element, e).first;
            sum[cell * th + static_cast<std::size_t>(k / g.ms)] += a(k, e);
        }
    const double n = static_cast<double>(g.micro_grid().space.element_count()) * g.ms;
    for (double& v : sum)
        v /= n;
    return sum;
}

} // namespace detail

/// U_eps(sum_i A_i B_i) = sum_i mean_block(A_i) B_i({x/eps}, {t/eps^r}).
inline SpaceTimeField average(const SeparableSum& psi, const EpsilonGeometry& g)
{
    SpaceTimeField out(g.macro.space, g.macro.nt, g.macro.tau(), psi.ncomp, Centering::element);
    const std::size_t count = out.per_step();
    const std::size_t th = static_cast<std::size_t>(g.theta_count);
    for (const auto& term : psi.terms) {
        if (term.micro.ncomp != psi.ncomp)
            throw AlignmentError("separable term has the wrong component count");
        const auto means = detail::block_means(term.macro, g);
        const detail::MicroLookup look(g, term.micro);
        for (int k = 0; k < g.theta_count * g.ms; ++k) {
            const int zeta = k / g.ms;
            const int sl = look.slice[static_cast<std::size_t>(k % g.ms)];
            for (std::size_t e = 0; e < count; ++e) {
                if (!g.inside(Centering::element, e))
                    continue;
                const auto [cell, y] = g.split(Centering::element, e);
                const double a = means[cell * th + static_cast<std::size_t>(zeta)];
                if (a == 0.0)
                    continue;
                for (int c = 0; c < psi.ncomp; ++c)
                    out(k, e, c) += a * term.micro.at(look.element[y], sl, c);
            }
        }
    }
    return out;
}

/// U_eps of a macro-only field: its block mean, zero on Lambda_eps.
inline SpaceTimeField average(const SpaceTimeField& a, const EpsilonGeometry& g)
{
    detail::check_field(a, g);
    SpaceTimeField out(a.grid, a.nt, a.tau, a.ncomp, a.centering);
    const std::size_t th = static_cast<std::size_t>(g.theta_count);
    const std::size_t count = a.per_step();
    const std::size_t nc = static_cast<std::size_t>(a.ncomp);
    std::vector<double> sum(g.cell_count() * th * nc, 0.0), n(g.cell_count() * th, 0.0);
    for (int k = 0; k < g.theta_count * g.ms; ++k)
        for (std::size_t e = 0; e < count; ++e) {
            if (!g.inside(a.centering, e))
                continue;
            const auto b = g.split(a.centering, e).first * th + static_cast<std::size_t>(k / g.ms);
            n[b] += 1.0;
            for (std::size_t c = 0; c < nc; ++c)
                sum[b * nc + c] += a(k, e, static_cast<int>(c));
        }
    for (int k = 0; k < g.theta_count * g.ms; ++k)
        for (std::size_t e = 0; e < count; ++e) {
            if (!g.inside(a.centering, e))
                continue;
            const auto b = g.split(a.centering, e).first * th + static_cast<std::size_t>(k / g.ms);
            for (std::size_t c = 0; c < nc; ++c)
                out(k, e, static_cast<int>(c)) = sum[b * nc + c] / n[b];
        }
    return out;
}

/// Integral of all components of an unfolded field over Omega x I x box x J.
inline double integral(const UnfoldedField& f)
{
    double s = 0.0;
    for (double v : f.values)
        s += v;
    return s * f.sample_measure();
}

inline double l2_norm(const UnfoldedField& f)
{
    double s = 0.0;
    for (double v : f.values)
        s += v * v;
    return std::sqrt(s * f.sample_measure());
}

/// int over Lambda_eps of |w|^2.
inline double lambda_mass(const SpaceTimeField& w, const EpsilonGeometry& g)
{
    detail::check_field(w, g);
    double s = 0.0;
    const std::size_t count = w.per_step();
    for (int k = 0; k < w.nt; ++k)
        for (std::size_t e = 0; e < count; ++e) {
            if (g.step_inside(k) && g.inside(w.centering, e))
                continue;
            for (int c = 0; c < w.ncomp; ++c)
                s += w(k, e, c) * w(k, e, c);
        }
    return s * w.cell_measure();
}

/// |int_{Omega_hat x I_hat} w - int T_eps(w)|.
inline double integral_identity_defect(const SpaceTimeField& w, const EpsilonGeometry& g)
{
    detail::check_field(w, g);
    double direct = 0.0;
    const std::size_t count = w.per_step();
    for (int k = 0; k < g.theta_count * g.ms; ++k)
        for (std::size_t e = 0; e < count; ++e)
            if (g.inside(w.centering, e))
                for (int c = 0; c < w.ncomp; ++c)
                    direct += w(k, e, c);
    return std::abs(direct * w.cell_measure() - integral(unfold(w, g)));
}

inline double l1_norm(const SpaceTimeField& w)
{
    double s = 0.0;
    for (double v : w.values)
        s += std::abs(v);
    return s * w.cell_measure();
}

/// Separable test function phi(x) psi(t) b(y) c(s); empty factors are 1.
struct TestFunction {
    std::function<double(const Point&)> phi;
    std::function<double(double)> psi;
    std::function<double(const Point&)> b;
    std::function<double(double)> c;

    double macro(const Point& x, double t) const { return (phi ? phi(x) : 1.0) * (psi ? psi(t) : 1.0); }
    double micro(const Point& y, double s) const { return (b ? b(y) : 1.0) * (c ? c(s) : 1.0); }
};

/// int int v(x,t) Psi(x, t, x/eps, t/eps^r): element centroids and step midpoints.
inline double two_scale_pairing(const SpaceTimeField& v, const TestFunction& f, const EpsilonGeometry& g)
{
    detail::check_field(v, g);
    const auto& sg = g.macro.space;
    const double tau = g.macro.tau();
    double s = 0.0;
    for (int k = 0; k < v.nt; ++k) {
        const double t = (k + 0.5) * tau;
        const double sm = wrap_unit(t / g.eps_r);
        for (std::size_t e = 0; e < v.per_step(); ++e) {
            const Point x = v.centering == Centering::element ? sg.centroid(e) : sg.node_position(e);
            const Point y{wrap_unit(x[0] / g.epsilon), wrap_unit(x[1] / g.epsilon)};
            s += v(k, e) * f.macro(x, t) * f.micro(y, sm);
        }
    }
    return s * v.cell_measure();
}

struct UnfoldingDefect {
    double defect = 0.0;      ///< ||T_eps v - V||_{L2(Omega x I x box x J)}
    double lambda_mass = 0.0; ///< int_{Lambda_eps} |v|^2
};

using TwoScaleFunction = std::function<double(const Point& x, double t, const Point& y, double s)>;

/// Defect against a closed-form limit V(x,t,y,s): macro points are the fine
/// element centroids and step midpoints inside each eps-cell.
inline UnfoldingDefect unfolding_defect(const SpaceTimeField& v, const TwoScaleFunction& limit, const EpsilonGeometry& g)
{
    if (v.ncomp != 1 || v.centering != Centering::element)
        throw AlignmentError("unfolding_defect: scalar element field required");
    const UnfoldedField tv = unfold(v, g);
    const auto& sg = g.macro.space;
    const auto mg = g.micro_grid();
    const double tau = g.macro.tau();
    const std::size_t nmicro = mg.space.element_count();
    std::vector<Point> ymid(nmicro);
    for (std::size_t y = 0; y < nmicro; ++y)
        ymid[y] = mg.space.centroid(y);
    double s = 0.0;
    for (int k = 0; k < g.theta_count * g.ms; ++k) {
        const double t = (k + 0.5) * tau;
        const int zeta = k / g.ms;
        for (std::size_t e = 0; e < sg.element_count(); ++e) {
            if (!g.inside(Centering::element, e))
                continue;
            const auto cell = g.split(Centering::element, e).first;
            const Point x = sg.centroid(e);
            for (std::size_t y = 0; y < nmicro; ++y)
                for (int sl = 0; sl < g.ms; ++sl) {
                    const double d = tv(cell, zeta, y, sl) - limit(x, t, ymid[y], (sl + 0.5) / g.ms);
                    s += d * d;
                }
        }
    }
    const double w = v.cell_measure() * mg.space.element_measure() * mg.ds();
    return {std::sqrt(s * w), lambda_mass(v, g)};
}

/// Defect against a separable limit sum_i A_i(x,t) B_i(y,s), expanded as
/// ||T v||^2 - 2 <T v, V> + ||V||^2 with exact macro integration.
inline UnfoldingDefect unfolding_defect(const SpaceTimeField& v, const SeparableSum& limit, const EpsilonGeometry& g)
{
    if (v.centering != Centering::element || v.ncomp != limit.ncomp)
        throw AlignmentError("unfolding_defect: element field with matching components required");
    const UnfoldedField tv = unfold(v, g);
    const auto mg = g.micro_grid();
    const std::size_t nmicro = mg.space.element_count();
    const std::size_t th = static_cast<std::size_t>(g.theta_count);
    const std::size_t nblocks = g.cell_count() * th;
    const std::size_t nterms = limit.terms.size();
    const int nc = limit.ncomp;

    std::vector<std::vector<double>> means;
    std::vector<detail::MicroLookup> looks;
    for (const auto& term : limit.terms) {
        means.push_back(detail::block_means(term.macro, g));
        looks.emplace_back(g, term.micro);
    }
    // B_i sampled on the fine micro grid: [term][(s*nmicro + y)*nc + c].
    std::vector<std::vector<double>> bvals(nterms, std::vector<double>(static_cast<std::size_t>(g.ms) * nmicro * static_cast<std::size_t>(nc)));
    for (std::size_t i = 0; i < nterms; ++i)
        for (int sl = 0; sl < g.ms; ++sl)
            for (std::size_t y = 0; y < nmicro; ++y)
                for (int c = 0; c < nc; ++c)
                    bvals[i][(static_cast<std::size_t>(sl) * nmicro + y) * static_cast<std::size_t>(nc) + static_cast<std::size_t>(c)] =
                        limit.terms[i].micro.at(looks[i].element[y], looks[i].slice[static_cast<std::size_t>(sl)], c);

    // Macro Gram per block: int_block A_i A_j / |block|.
    std::vector<double> gram(nblocks * nterms * nterms, 0.0);
    {
        const auto& sg = g.macro.space;
        const double per_block = static_cast<double>(nmicro) * g.ms;
        for (int k = 0; k < g.theta_count * g.ms; ++k)
            for (std::size_t e = 0; e < sg.element_count(); ++e) {
                if (!g.inside(Centering::element, e))
                    continue;
                const auto b = g.split(Centering::element, e).first * th + static_cast<std::size_t>(k / g.ms);
                for (std::size_t i = 0; i < nterms; ++i) {
                    const double ai = limit.terms[i].macro(k, e);
                    if (ai == 0.0)
                        continue;
                    for (std::size_t j = 0; j < nterms; ++j)
                        gram[(b * nterms + i) * nterms + j] += ai * limit.terms[j].macro(k, e) / per_block;
                }
            }
    }
    // Micro Gram: mean over box x J of B_i . B_j.
    std::vector<double> bgram(nterms * nterms, 0.0);
    for (std::size_t i = 0; i < nterms; ++i)
        for (std::size_t j = 0; j < nterms; ++j) {
            double s = 0.0;
            for (std::size_t q = 0; q < bvals[i].size(); ++q)
                s += bvals[i][q] * bvals[j][q];
            bgram[i * nterms + j] = s / (static_cast<double>(nmicro) * g.ms);
        }

    double tt = 0.0, cross = 0.0, vv = 0.0;
    for (double x : tv.values)
        tt += x * x;
    for (std::size_t cell = 0; cell < g.cell_count(); ++cell)
        for (std::size_t zeta = 0; zeta < th; ++zeta) {
            const std::size_t b = cell * th + zeta;
            for (std::size_t i = 0; i < nterms; ++i) {
                const double a = means[i][b];
                if (a == 0.0)
                    continue;
                double s = 0.0;
                for (std::size_t y = 0; y < nmicro; ++y)
                    for (int sl = 0; sl < g.ms; ++sl)
                        for (int c = 0; c < nc; ++c)
                            s += tv(cell, static_cast<int>(zeta), y, sl, c)
                                 * bvals[i][(static_cast<std::size_t>(sl) * nmicro + y) * static_cast<std::size_t>(nc) + static_cast<std::size_t>(c)];
                cross += a * s;
            }
            for (std::size_t i = 0; i < nterms; ++i)
                for (std::size_t j = 0; j < nterms; ++j)
                    vv += gram[(b * nterms + i) * nterms + j] * bgram[i * nterms + j];
        }
    const double w = tv.sample_measure();
    const double block = std::pow(g.epsilon, g.dim()) * g.eps_r;
    const double sq = tt * w - 2.0 * cross * w + vv * block;
    return {std::sqrt(std::max(0.0, sq)), lambda_mass(v, g)};
}

// Binary dump "HMGU": magic, uint16 version, uint8 dim, uint8 flags, then
// uint32 macro cells, macro steps, |Xi| per axis, |Theta|, micro cells, micro
// steps, components, value count, float64 eps, r, L, T and the values.

inline constexpr char kUnfoldedMagic[4] = {'H', 'M', 'G', 'U'};

inline std::vector<char> encode_unfolded(const UnfoldedField& f)
{
    std::vector<char> out(kUnfoldedMagic, kUnfoldedMagic + 4);
    detail::put<std::uint16_t>(out, kFieldVersion);
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(f.geom.dim()));
    detail::put<std::uint8_t>(out, f.centering == Centering::element ? 1u : 0u);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.geom.macro.space.n));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.geom.macro.nt));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.geom.xi_per_axis));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.geom.theta_count));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.micro.ny()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.micro.ns));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.ncomp));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.values.size()));
    detail::put<double>(out, f.geom.epsilon);
    detail::put<double>(out, f.geom.r);
    detail::put<double>(out, f.geom.macro.space.length);
    detail::put<double>(out, f.geom.macro.horizon);
    for (double v : f.values)
        detail::put<double>(out, v);
    return out;
}

inline UnfoldedField decode_unfolded(const std::vector<char>& in)
{
    if (in.size() < 16 || std::memcmp(in.data(), kUnfoldedMagic, 4) != 0)
        throw ValidationError("unfolded dump: bad magic");
    std::size_t pos = 4;
    if (detail::get<std::uint16_t>(in, pos) != kFieldVersion)
        throw ValidationError("unfolded dump: unsupported version");
    const int dim = detail::get<std::uint8_t>(in, pos);
    const auto flags = detail::get<std::uint8_t>(in, pos);
    const int nx = static_cast<int>(detail::get<std::uint32_t>(in, pos));
    const int nt = static_cast<int>(detail::get<std::uint32_t>(in, pos));
    detail::get<std::uint32_t>(in, pos);
    detail::get<std::uint32_t>(in, pos);
    const int ny = static_cast<int>(detail::get<std::uint32_t>(in, pos));
    const int ns = static_cast<int>(detail::get<std::uint32_t>(in, pos));
    const int ncomp = static_cast<int>(detail::get<std::uint32_t>(in, pos));
    const auto count = detail::get<std::uint32_t>(in, pos);
    const double eps = detail::get<double>(in, pos);
    const double r = detail::get<double>(in, pos);
    const double length = detail::get<double>(in, pos);
    const double horizon = detail::get<double>(in, pos);
    UnfoldedField f;
    f.geom = geometry(eps, r, MacroGrid(dim, nx, nt, length, horizon));
    f.micro = CellGrid(dim, ny, ns);
    f.centering = (flags & 1u) ? Centering::element : Centering::node;
    f.ncomp = ncomp;
    f.values.resize(count);
    for (auto& v : f.values)
        v = detail::get<double>(in, pos);
    return f;
}

} // namespace homoglab
