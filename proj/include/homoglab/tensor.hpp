#pragma once

#include <array>
#include <cmath>
#include <algorithm>

namespace homoglab {

using Point = std::array<double, 2>;

/// Small dense dim x dim matrix (dim = 1 or 2), row-major.
struct Tensor {
    int dim = 1;
    std::array<double, 4> m{};

    static Tensor zero(int dim)
    {
        Tensor t;
        t.dim = dim;
        return t;
    }
    static Tensor scalar(int dim, double value)
    {
        Tensor t = zero(dim);
        for (int i = 0; i < dim; ++i)
            t(i, i) = value;
        return t;
    }
    static Tensor identity(int dim) { return scalar(dim, 1.0); }

    double& operator()(int i, int j) { return m[static_cast<std::size_t>(2 * i + j)]; }
    double operator()(int i, int j) const { return m[static_cast<std::size_t>(2 * i + j)]; }

    Point apply(const Point& x) const
    {
        if (dim == 1)
            return {m[0] * x[0], 0.0};
        return {m[0] * x[0] + m[1] * x[1], m[2] * x[0] + m[3] * x[1]};
    }

    double quadratic(const Point& x) const
    {
        const Point ax = apply(x);
        return dim == 1 ? ax[0] * x[0] : ax[0] * x[0] + ax[1] * x[1];
    }

    double symmetry_defect() const { return dim == 1 ? 0.0 : std::abs(m[1] - m[2]); }

    /// Extreme eigenvalues of the symmetric part, i.e. the Rayleigh-quotient range.
    std::array<double, 2> rayleigh_range() const
    {
        if (dim == 1)
            return {m[0], m[0]};
        const double off = 0.5 * (m[1] + m[2]);
        const double mean = 0.5 * (m[0] + m[3]);
        const double half = 0.5 * (m[0] - m[3]);
        const double rad = std::hypot(half, off);
        return {mean - rad, mean + rad};
    }

    bool finite() const
    {
        return std::all_of(m.begin(), m.end(), [](double v) { return std::isfinite(v); });
    }

    Tensor& operator+=(const Tensor& o)
    {
        for (std::size_t i = 0; i < 4; ++i)
            m[i] += o.m[i];
        return *this;
    }
    Tensor& operator*=(double s)
    {
        for (auto& v : m)
            v *= s;
        return *this;
    }
    friend Tensor operator*(double s, Tensor t) { return t *= s; }
    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline double dot(const Point& a, const Point& b, int dim)
{
    return dim == 1 ? a[0] * b[0] : a[0] * b[0] + a[1] * b[1];
}

} // namespace homoglab
