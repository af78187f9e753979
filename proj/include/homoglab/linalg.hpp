#pragma once

// Compressed-row sparse storage and preconditioned conjugate gradients for the
// symmetric systems that appear in every solver of the library: lumped
// parabolic steps, periodic cell problems and Riesz-map solves.

#include "errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace homoglab {

class SparseMatrix {
public:
    SparseMatrix() = default;

    /// Takes ownership of CSR arrays; column indices must be sorted within rows.
    SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
                 std::vector<std::size_t> col_idx, std::vector<double> values, bool symmetric)
        : rows_(rows), cols_(cols), row_ptr_(std::move(row_ptr)), col_idx_(std::move(col_idx)),
          values_(std::move(values)), symmetric_(symmetric)
    {
        if (row_ptr_.size() != rows_ + 1 || col_idx_.size() != values_.size()
            || row_ptr_.back() != values_.size())
            throw ConfigError("SparseMatrix: inconsistent CSR arrays");
        for (std::size_t i = 0; i < rows_; ++i)
            if (row_ptr_[i + 1] == row_ptr_[i])
                throw ConfigError("SparseMatrix: row " + std::to_string(i) + " has no stored entries");
        if (symmetric_) {
            const double defect = symmetry_defect();
            if (!(defect < 1e-12 * std::max(1.0, max_abs())))
                throw ConfigError("SparseMatrix: flagged symmetric but defect is "
                                  + std::to_string(defect));
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool symmetric() const { return symmetric_; }
    std::span<const std::size_t> row_ptr() const { return row_ptr_; }
    std::span<const std::size_t> col_idx() const { return col_idx_; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    double at(std::size_t i, std::size_t j) const
    {
        const auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
        const auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
        const auto it = std::lower_bound(first, last, j);
        return (it != last && *it == j) ? values_[static_cast<std::size_t>(it - col_idx_.begin())] : 0.0;
    }

    /// Position of the diagonal entry of each row in the value array.
    std::vector<std::size_t> diagonal_positions() const
    {
        std::vector<std::size_t> pos(rows_);
        for (std::size_t i = 0; i < rows_; ++i) {
            pos[i] = values_.size();
            for (std::size_t q = row_ptr_[i]; q < row_ptr_[i + 1]; ++q)
                if (col_idx_[q] == i)
                    pos[i] = q;
            if (pos[i] == values_.size())
                throw ConfigError("SparseMatrix: missing diagonal in row " + std::to_string(i));
        }
        return pos;
    }

    std::vector<double> diagonal() const
    {
        std::vector<double> d(rows_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i)
            d[i] = at(i, i);
        return d;
    }

    void apply(std::span<const double> x, std::span<double> y) const
    {
        for (std::size_t i = 0; i < rows_; ++i) {
            double s = 0.0;
            for (std::size_t q = row_ptr_[i]; q < row_ptr_[i + 1]; ++q)
                s += values_[q] * x[col_idx_[q]];
            y[i] = s;
        }
    }

    std::vector<double> operator*(std::span<const double> x) const
    {
        std::vector<double> y(rows_);
        apply(x, y);
        return y;
    }

    double symmetry_defect() const
    {
        double defect = 0.0;
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t q = row_ptr_[i]; q < row_ptr_[i + 1]; ++q)
                defect = std::max(defect, std::abs(values_[q] - at(col_idx_[q], i)));
        return defect;
    }

private:
    double max_abs() const
    {
        double m = 0.0;
        for (double v : values_)
            m = std::max(m, std::abs(v));
        return m;
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_idx_;
    std::vector<double> values_;
    bool symmetric_ = false;
};

/// Accumulates (i, j, v) contributions; duplicates are summed on build().
class TripletBuilder {
public:
    TripletBuilder(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

    void add(std::size_t i, std::size_t j, double v) { entries_.emplace_back(i, j, v); }

    SparseMatrix build(bool symmetric) const
    {
        auto sorted = entries_;
        std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
            return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
        });
        std::vector<std::size_t> row_ptr(rows_ + 1, 0);
        std::vector<std::size_t> col_idx;
        std::vector<double> values;
        col_idx.reserve(sorted.size());
        values.reserve(sorted.size());
        for (std::size_t q = 0; q < sorted.size(); ++q) {
            const auto [i, j, v] = sorted[q];
            if (!col_idx.empty() && q > 0 && std::get<0>(sorted[q - 1]) == i && col_idx.back() == j) {
                values.back() += v;
                continue;
            }
            col_idx.push_back(j);
            values.push_back(v);
            ++row_ptr[i + 1];
        }
        for (std::size_t i = 0; i < rows_; ++i)
            row_ptr[i + 1] += row_ptr[i];
        return SparseMatrix(rows_, cols_, std::move(row_ptr), std::move(col_idx), std::move(values),
                            symmetric);
    }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<std::tuple<std::size_t, std::size_t, double>> entries_;
};

enum class Preconditioner { none, diagonal };

/// Kernel treatment: zero_mean deflates the constant vector (periodic operators).
enum class Constraint { none, zero_mean };

struct SolverConfig {
    double relative_tolerance = 1e-10;
    std::size_t max_iterations = 0; ///< 0 selects 10 * unknowns
    Preconditioner preconditioner = Preconditioner::diagonal;

    void validate() const
    {
        if (!(relative_tolerance > 0.0 && relative_tolerance < 1.0))
            throw ConfigError("SolverConfig: tolerance must lie in (0,1)");
    }
};

struct SolveResult {
    std::vector<double> x;
    std::size_t iterations = 0;
    double relative_residual = 0.0;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

inline void remove_mean(std::span<double> v)
{
    if (v.empty())
        return;
    double s = 0.0;
    for (double x : v)
        s += x;
    const double mean = s / static_cast<double>(v.size());
    for (double& x : v)
        x -= mean;
}

} // namespace detail

/// Preconditioned conjugate gradients for symmetric positive (semi)definite A.
///
/// With Constraint::zero_mean the right-hand side is mean-corrected and all
/// iterates are kept in the mean-free subspace, which is where a periodic
/// operator with constant kernel is definite.
inline SolveResult solve_spd(const SparseMatrix& A, std::span<const double> b_in, const SolverConfig& cfg = {},
                             Constraint constraint = Constraint::none,
                             std::optional<std::span<const double>> initial_guess = std::nullopt)
{
    cfg.validate();
    const std::size_t n = A.rows();
    if (A.cols() != n || b_in.size() != n)
        throw ConfigError("solve_spd: dimension mismatch");
    const bool deflate = constraint == Constraint::zero_mean;

    std::vector<double> b(b_in.begin(), b_in.end());
    if (deflate)
        detail::remove_mean(b);

    SolveResult result;
    result.x.assign(n, 0.0);
    const double bnorm = std::sqrt(detail::dot(b, b));
    if (bnorm == 0.0)
        return result;

    if (initial_guess) {
        if (initial_guess->size() != n)
            throw ConfigError("solve_spd: initial guess has wrong size");
        std::copy(initial_guess->begin(), initial_guess->end(), result.x.begin());
        if (deflate)
            detail::remove_mean(result.x);
    }

    std::vector<double> inv_diag(n, 1.0);
    if (cfg.preconditioner == Preconditioner::diagonal) {
        const auto d = A.diagonal();
        for (std::size_t i = 0; i < n; ++i) {
            if (!(d[i] > 0.0))
                throw DefinitenessError("solve_spd: non-positive diagonal entry", std::abs(d[i]));
            inv_diag[i] = 1.0 / d[i];
        }
    }

    const std::size_t cap = cfg.max_iterations > 0 ? cfg.max_iterations : 10 * n;
    auto& x = result.x;
    std::vector<double> r(n), z(n), p(n), q(n);

    auto precondition = [&](std::span<const double> in, std::span<double> out) {
        for (std::size_t i = 0; i < n; ++i)
            out[i] = inv_diag[i] * in[i];
        if (deflate)
            detail::remove_mean(out);
    };
    auto true_residual = [&]() {
        A.apply(x, q);
        for (std::size_t i = 0; i < n; ++i)
            r[i] = b[i] - q[i];
        if (deflate)
            detail::remove_mean(r);
        return std::sqrt(detail::dot(r, r));
    };

    double rnorm = true_residual();
    std::size_t it = 0;
    // Outer loop restarts from the true residual if the recursive one drifted.
    while (rnorm > cfg.relative_tolerance * bnorm && it < cap) {
        precondition(r, z);
        p = z;
        double rz = detail::dot(r, z);
        while (it < cap) {
            A.apply(p, q);
            if (deflate)
                detail::remove_mean(q);
            const double curvature = detail::dot(p, q);
            if (!(curvature > 0.0))
                throw DefinitenessError("solve_spd: non-positive curvature encountered",
                                        rnorm / bnorm);
            const double alpha = rz / curvature;
            for (std::size_t i = 0; i < n; ++i) {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            ++it;
            rnorm = std::sqrt(detail::dot(r, r));
            if (rnorm <= cfg.relative_tolerance * bnorm)
                break;
            precondition(r, z);
            const double rz_next = detail::dot(r, z);
            const double beta = rz_next / rz;
            rz = rz_next;
            for (std::size_t i = 0; i < n; ++i)
                p[i] = z[i] + beta * p[i];
        }
        rnorm = true_residual();
    }
    if (deflate)
        detail::remove_mean(x);
    rnorm = true_residual();
    result.iterations = it;
    result.relative_residual = rnorm / bnorm;
    if (rnorm > cfg.relative_tolerance * bnorm)
        throw SolverError("solve_spd: no convergence after " + std::to_string(it) + " iterations",
                          result.relative_residual);
    return result;
}

} // namespace homoglab
