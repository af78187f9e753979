#pragma once

// Uniform structured grids on the macroscopic box (0,L)^dim x (0,T) and on the
// periodic unit cell (0,1)^dim x (0,1), the fields living on them, P1
// differential operators and the quadrature-based norms used by all
// diagnostics.
//
// Elements: in 1D the cells [ih, (i+1)h]; in 2D every square (i,j) is split
// into a lower triangle (i,j),(i+1,j),(i,j+1) with index 2q and an upper
// triangle (i+1,j+1),(i,j+1),(i+1,j) with index 2q+1, q = i + n*j.  P1
// gradients on this split are exactly the first differences across the
// square's faces.

#include "errors.hpp"
#include "linalg.hpp"
#include "tensor.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace homoglab {

enum class Centering { node, element };

inline const char* to_string(Centering c) { return c == Centering::node ? "node" : "element"; }

/// Local node list and P1 basis gradients of one element.
struct ElementStencil {
    int count = 2;
    std::array<std::size_t, 3> nodes{};
    std::array<Point, 3> grads{};
};

struct SpatialGrid {
    int dim = 1;
    int n = 2;              ///< cells per axis
    double length = 1.0;    ///< box edge length
    bool periodic = false;  ///< periodic identification of opposite faces

    void validate() const
    {
        if (dim != 1 && dim != 2)
            throw ConfigError("grid: dim must be 1 or 2");
        if (n < 2)
            throw ConfigError("grid: at least 2 cells per axis are required");
        if (!(length > 0.0) || !std::isfinite(length))
            throw ConfigError("grid: domain length must be positive");
    }

    double h() const { return length / n; }
    std::size_t nodes_per_axis() const { return periodic ? static_cast<std::size_t>(n) : static_cast<std::size_t>(n) + 1; }
    std::size_t node_count() const { return dim == 1 ? nodes_per_axis() : nodes_per_axis() * nodes_per_axis(); }
    std::size_t square_count() const { return dim == 1 ? static_cast<std::size_t>(n) : static_cast<std::size_t>(n) * static_cast<std::size_t>(n); }
    std::size_t element_count() const { return dim == 1 ? square_count() : 2 * square_count(); }
    std::size_t count(Centering c) const { return c == Centering::node ? node_count() : element_count(); }
    double element_measure() const { return dim == 1 ? h() : 0.5 * h() * h(); }
    double measure() const { return dim == 1 ? length : length * length; }

    std::size_t node_id(int i, int j = 0) const
    {
        const int np = static_cast<int>(nodes_per_axis());
        if (periodic) {
            i = ((i % n) + n) % n;
            j = ((j % n) + n) % n;
        }
        return dim == 1 ? static_cast<std::size_t>(i) : static_cast<std::size_t>(i + np * j);
    }

    std::array<int, 2> node_index(std::size_t id) const
    {
        const auto np = nodes_per_axis();
        if (dim == 1)
            return {static_cast<int>(id), 0};
        return {static_cast<int>(id % np), static_cast<int>(id / np)};
    }

    Point node_position(std::size_t id) const
    {
        const auto [i, j] = node_index(id);
        return {i * h(), j * h()};
    }

    bool on_boundary(std::size_t id) const
    {
        if (periodic)
            return false;
        const auto [i, j] = node_index(id);
        if (i == 0 || i == n)
            return true;
        return dim == 2 && (j == 0 || j == n);
    }

    /// Square (i,j) containing element e and its triangle type (0 lower, 1 upper).
    std::array<int, 3> element_index(std::size_t e) const
    {
        if (dim == 1)
            return {static_cast<int>(e), 0, 0};
        const std::size_t q = e / 2;
        return {static_cast<int>(q % static_cast<std::size_t>(n)), static_cast<int>(q / static_cast<std::size_t>(n)),
                static_cast<int>(e % 2)};
    }

    std::size_t element_id(int i, int j, int type) const
    {
        if (dim == 1)
            return static_cast<std::size_t>(i);
        return 2 * static_cast<std::size_t>(i + n * j) + static_cast<std::size_t>(type);
    }

    Point centroid(std::size_t e) const
    {
        const auto [i, j, t] = element_index(e);
        if (dim == 1)
            return {(i + 0.5) * h(), 0.0};
        const double off = t == 0 ? 1.0 / 3.0 : 2.0 / 3.0;
        return {(i + off) * h(), (j + off) * h()};
    }

    ElementStencil stencil(std::size_t e) const
    {
        ElementStencil s;
        const double ih = 1.0 / h();
        const auto [i, j, t] = element_index(e);
        if (dim == 1) {
            s.count = 2;
            s.nodes = {node_id(i), node_id(i + 1), 0};
            s.grads = {Point{-ih, 0.0}, Point{ih, 0.0}, Point{}};
            return s;
        }
        s.count = 3;
        if (t == 0) {
            s.nodes = {node_id(i, j), node_id(i + 1, j), node_id(i, j + 1)};
            s.grads = {Point{-ih, -ih}, Point{ih, 0.0}, Point{0.0, ih}};
        } else {
            s.nodes = {node_id(i + 1, j + 1), node_id(i, j + 1), node_id(i + 1, j)};
            s.grads = {Point{ih, ih}, Point{-ih, 0.0}, Point{0.0, -ih}};
        }
        return s;
    }

    /// Element containing the point x (half-open convention, periodic wrap if periodic).
    std::size_t locate(const Point& x) const
    {
        auto axis = [&](double v) {
            double f = v / h();
            int i = static_cast<int>(std::floor(f));
            if (periodic)
                i = ((i % n) + n) % n;
            else
                i = std::clamp(i, 0, n - 1);
            return std::pair<int, double>{i, f - std::floor(f)};
        };
        const auto [i, fi] = axis(x[0]);
        if (dim == 1)
            return static_cast<std::size_t>(i);
        const auto [j, fj] = axis(x[1]);
        return element_id(i, j, fi + fj < 1.0 ? 0 : 1);
    }

    /// Lumped P1 mass of every node.
    std::vector<double> lumped_mass() const
    {
        std::vector<double> m(node_count(), 0.0);
        const double share = element_measure() / (dim + 1);
        for (std::size_t e = 0; e < element_count(); ++e) {
            const auto s = stencil(e);
            for (int a = 0; a < s.count; ++a)
                m[s.nodes[static_cast<std::size_t>(a)]] += share;
        }
        return m;
    }

    friend bool operator==(const SpatialGrid&, const SpatialGrid&) = default;
};

/// Space-time grid on Omega x I, Omega = (0,L)^dim, I = (0,T), homogeneous Dirichlet in space.
struct MacroGrid {
    SpatialGrid space;
    int nt = 1;
    double horizon = 1.0;

    MacroGrid() = default;
    MacroGrid(int dim, int nx, int nt_, double domain_length, double horizon_)
        : space{dim, nx, domain_length, false}, nt(nt_), horizon(horizon_)
    {
        validate();
    }

    void validate() const
    {
        space.validate();
        if (space.periodic)
            throw ConfigError("macro grid must not be periodic");
        if (nt < 1)
            throw ConfigError("macro grid: nt must be at least 1");
        if (!(horizon > 0.0) || !std::isfinite(horizon))
            throw ConfigError("macro grid: horizon must be positive");
    }

    int dim() const { return space.dim; }
    double h() const { return space.h(); }
    double tau() const { return horizon / nt; }
    double time(int n) const { return n == nt ? horizon : n * tau(); }

    friend bool operator==(const MacroGrid&, const MacroGrid&) = default;
};

/// Periodic grid on the unit cell (0,1)^dim and the unit period (0,1).
struct CellGrid {
    SpatialGrid space;
    int ns = 1;

    CellGrid() = default;
    CellGrid(int dim, int ny, int ns_) : space{dim, ny, 1.0, true}, ns(ns_) { validate(); }

    void validate() const
    {
        space.validate();
        if (!space.periodic || space.length != 1.0)
            throw ConfigError("cell grid must be the periodic unit cell");
        if (ns < 1)
            throw ConfigError("cell grid: ns must be at least 1");
    }

    int dim() const { return space.dim; }
    int ny() const { return space.n; }
    double ds() const { return 1.0 / ns; }

    friend bool operator==(const CellGrid&, const CellGrid&) = default;
};

namespace detail {
inline void require_finite(std::span<const double> v, const char* what)
{
    for (double x : v)
        if (!std::isfinite(x))
            throw ValidationError(std::string(what) + ": non-finite entry");
}
} // namespace detail

/// Scalar field on a spatial grid, node- or element-centered.
struct Field {
    SpatialGrid grid;
    Centering centering = Centering::node;
    std::vector<double> values;

    Field() = default;
    Field(const SpatialGrid& g, Centering c) : grid(g), centering(c), values(g.count(c), 0.0) {}
    Field(const SpatialGrid& g, Centering c, std::vector<double> v) : grid(g), centering(c), values(std::move(v))
    {
        validate();
    }

    void validate() const
    {
        if (values.size() != grid.count(centering))
            throw AlignmentError("field: value count " + std::to_string(values.size()) + " does not match "
                                 + to_string(centering) + " count " + std::to_string(grid.count(centering)));
        detail::require_finite(values, "field");
    }

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
};

/// dim-component field on elements (P1 gradients, fluxes).
struct VectorField {
    SpatialGrid grid;
    std::vector<double> values; ///< element-major, values[e*dim + c]

    VectorField() = default;
    explicit VectorField(const SpatialGrid& g) : grid(g), values(g.element_count() * static_cast<std::size_t>(g.dim), 0.0) {}

    void validate() const
    {
        if (values.size() != grid.element_count() * static_cast<std::size_t>(grid.dim))
            throw AlignmentError("vector field: component count does not match grid");
        detail::require_finite(values, "vector field");
    }

    Point at(std::size_t e) const
    {
        const std::size_t d = static_cast<std::size_t>(grid.dim);
        return grid.dim == 1 ? Point{values[e], 0.0} : Point{values[d * e], values[d * e + 1]};
    }
    void set(std::size_t e, const Point& v)
    {
        const std::size_t d = static_cast<std::size_t>(grid.dim);
        for (std::size_t c = 0; c < d; ++c)
            values[d * e + c] = v[c];
    }
};

/// Element-centered field on Omega x I, piecewise constant on every time step
/// (t_{n-1}, t_n], n = 1..nt.  ncomp components per (element, step); node
/// centering is also allowed for sampling purposes.
struct SpaceTimeField {
    SpatialGrid grid;
    int nt = 1;
    double tau = 1.0;
    Centering centering = Centering::element;
    int ncomp = 1;
    std::vector<double> values; ///< [(step*count + entry)*ncomp + c], step 0-based

    SpaceTimeField() = default;
    SpaceTimeField(const SpatialGrid& g, int nt_, double tau_, int ncomp_ = 1, Centering c = Centering::element)
        : grid(g), nt(nt_), tau(tau_), centering(c), ncomp(ncomp_),
          values(g.count(c) * static_cast<std::size_t>(nt_) * static_cast<std::size_t>(ncomp_), 0.0)
    {
    }

    std::size_t per_step() const { return grid.count(centering); }
    std::size_t index(int step, std::size_t entry, int c = 0) const
    {
        return (static_cast<std::size_t>(step) * per_step() + entry) * static_cast<std::size_t>(ncomp)
               + static_cast<std::size_t>(c);
    }
    double& operator()(int step, std::size_t entry, int c = 0) { return values[index(step, entry, c)]; }
    double operator()(int step, std::size_t entry, int c = 0) const { return values[index(step, entry, c)]; }
    double cell_measure() const
    {
        return centering == Centering::element ? grid.element_measure() * tau
                                               : std::pow(grid.h(), grid.dim) * tau;
    }
};

/// Element values of a node field (P1 value at the element centroid).
inline Field element_values(const Field& f)
{
    if (f.centering == Centering::element)
        return f;
    Field out(f.grid, Centering::element);
    for (std::size_t e = 0; e < f.grid.element_count(); ++e) {
        const auto s = f.grid.stencil(e);
        double sum = 0.0;
        for (int a = 0; a < s.count; ++a)
            sum += f[s.nodes[static_cast<std::size_t>(a)]];
        out[e] = sum / s.count;
    }
    return out;
}

/// P1 gradient: constant per element, equal to the face-centered first differences.
inline VectorField gradient(const Field& f)
{
    if (f.centering != Centering::node)
        throw AlignmentError("gradient: field must be node-centered");
    VectorField g(f.grid);
    for (std::size_t e = 0; e < f.grid.element_count(); ++e) {
        const auto s = f.grid.stencil(e);
        Point v{0.0, 0.0};
        for (int a = 0; a < s.count; ++a) {
            const double fa = f[s.nodes[static_cast<std::size_t>(a)]];
            v[0] += fa * s.grads[static_cast<std::size_t>(a)][0];
            v[1] += fa * s.grads[static_cast<std::size_t>(a)][1];
        }
        g.set(e, v);
    }
    return g;
}

namespace detail {
inline void check_region(const SpatialGrid& g, const std::optional<std::vector<bool>>& region)
{
    if (region && region->size() != g.element_count())
        throw AlignmentError("l2_norm: region mask does not match the element count");
}
} // namespace detail

/// Midpoint-rule L2 norm over Omega, optionally restricted to a union of elements.
inline double l2_norm(const Field& f, const std::optional<std::vector<bool>>& region = std::nullopt)
{
    detail::check_region(f.grid, region);
    const Field ev = element_values(f);
    double s = 0.0;
    for (std::size_t e = 0; e < ev.size(); ++e)
        if (!region || (*region)[e])
            s += ev[e] * ev[e];
    return std::sqrt(s * f.grid.element_measure());
}

inline double l2_norm(const VectorField& f, const std::optional<std::vector<bool>>& region = std::nullopt)
{
    detail::check_region(f.grid, region);
    double s = 0.0;
    for (std::size_t e = 0; e < f.grid.element_count(); ++e) {
        if (region && !(*region)[e])
            continue;
        const Point v = f.at(e);
        s += dot(v, v, f.grid.dim);
    }
    return std::sqrt(s * f.grid.element_measure());
}

/// L2 norm over Omega x I (all components), optional (step, element) mask.
inline double l2_norm(const SpaceTimeField& f, const std::optional<std::vector<bool>>& region = std::nullopt)
{
    if (region && region->size() != f.per_step() * static_cast<std::size_t>(f.nt))
        throw AlignmentError("l2_norm: space-time region mask does not match the field");
    double s = 0.0;
    const std::size_t nc = static_cast<std::size_t>(f.ncomp);
    for (std::size_t q = 0; q < f.values.size(); ++q)
        if (!region || (*region)[q / nc])
            s += f.values[q] * f.values[q];
    return std::sqrt(s * f.cell_measure());
}

/// Interior (non-Dirichlet) nodes and the map node -> unknown index.
struct DofMap {
    std::vector<std::size_t> nodes;
    std::vector<std::ptrdiff_t> index; ///< -1 on boundary nodes

    explicit DofMap(const SpatialGrid& g) : index(g.node_count(), -1)
    {
        for (std::size_t i = 0; i < g.node_count(); ++i)
            if (!g.on_boundary(i)) {
                index[i] = static_cast<std::ptrdiff_t>(nodes.size());
                nodes.push_back(i);
            }
    }
    std::size_t size() const { return nodes.size(); }
};

/// P1 stiffness sum_e |e| grad(phi_a) . A_e grad(phi_b) restricted to the dofs.
inline SparseMatrix assemble_stiffness(const SpatialGrid& g, const DofMap& dofs, std::span<const Tensor> coeff)
{
    if (coeff.size() != g.element_count())
        throw AlignmentError("assemble_stiffness: one tensor per element required");
    TripletBuilder tb(dofs.size(), dofs.size());
    const double meas = g.element_measure();
    for (std::size_t e = 0; e < g.element_count(); ++e) {
        const auto s = g.stencil(e);
        for (int a = 0; a < s.count; ++a) {
            const auto ia = dofs.index[s.nodes[static_cast<std::size_t>(a)]];
            if (ia < 0)
                continue;
            const Point ag = coeff[e].apply(s.grads[static_cast<std::size_t>(a)]);
            for (int b = 0; b < s.count; ++b) {
                const auto ib = dofs.index[s.nodes[static_cast<std::size_t>(b)]];
                if (ib < 0)
                    continue;
                tb.add(static_cast<std::size_t>(ia), static_cast<std::size_t>(ib),
                       meas * dot(ag, s.grads[static_cast<std::size_t>(b)], g.dim));
            }
        }
    }
    // Symmetric tensors give a symmetric matrix up to summation order.
    bool symmetric = true;
    for (const auto& t : coeff)
        if (t.symmetry_defect() > 1e-12)
            symmetric = false;
    return tb.build(symmetric);
}

/// Weak divergence of an element vector field: b_i = -int phi . grad(w_i), i over dofs.
inline std::vector<double> weak_divergence(const VectorField& phi, const DofMap& dofs)
{
    const auto& g = phi.grid;
    std::vector<double> b(dofs.size(), 0.0);
    const double meas = g.element_measure();
    for (std::size_t e = 0; e < g.element_count(); ++e) {
        const auto s = g.stencil(e);
        const Point v = phi.at(e);
        for (int a = 0; a < s.count; ++a) {
            const auto ia = dofs.index[s.nodes[static_cast<std::size_t>(a)]];
            if (ia >= 0)
                b[static_cast<std::size_t>(ia)] -= meas * dot(v, s.grads[static_cast<std::size_t>(a)], g.dim);
        }
    }
    return b;
}

/// Dirichlet Laplacian (identity coefficient) on the dofs of a macro grid.
inline SparseMatrix dirichlet_laplacian(const SpatialGrid& g, const DofMap& dofs)
{
    const std::vector<Tensor> id(g.element_count(), Tensor::identity(g.dim));
    return assemble_stiffness(g, dofs, id);
}

/// Dual norm of a discrete functional b (values <g, w_i> on the dofs): sqrt(b^T A^{-1} b).
inline double h_minus1_norm_of_functional(const SparseMatrix& laplacian, std::span<const double> b,
                                          const SolverConfig& cfg = {})
{
    const auto sol = solve_spd(laplacian, b, cfg);
    return std::sqrt(std::max(0.0, detail::dot(b, sol.x)));
}

/// H^{-1}(Omega) norm of a node field g via the discrete Riesz map.
inline double h_minus1_norm(const Field& g, const SolverConfig& cfg = {})
{
    if (g.centering != Centering::node)
        throw AlignmentError("h_minus1_norm: field must be node-centered");
    if (g.grid.periodic)
        throw AlignmentError("h_minus1_norm: requires a Dirichlet grid");
    const DofMap dofs(g.grid);
    const auto mass = g.grid.lumped_mass();
    std::vector<double> b(dofs.size());
    for (std::size_t i = 0; i < dofs.size(); ++i)
        b[i] = mass[dofs.nodes[i]] * g[dofs.nodes[i]];
    return h_minus1_norm_of_functional(dirichlet_laplacian(g.grid, dofs), b, cfg);
}

/// L2(0,T; H^{-1}) norm of a sequence of slice functionals, tau-weighted.
inline double h_minus1_norm(const std::vector<Field>& slices, double tau, const SolverConfig& cfg = {})
{
    double s = 0.0;
    for (const auto& g : slices) {
        const double v = h_minus1_norm(g, cfg);
        s += tau * v * v;
    }
    return std::sqrt(s);
}

/// Node field sampled from a closed form f(x).
template <class F>
Field sample_nodes(const SpatialGrid& g, F&& f)
{
    Field out(g, Centering::node);
    for (std::size_t i = 0; i < g.node_count(); ++i)
        out[i] = f(g.node_position(i));
    return out;
}

} // namespace homoglab
