#pragma once

// Periodic symmetric coefficient fields a(y, s) on R^dim x R, their
// validation, tabulated ingestion and time averaging.

#include "errors.hpp"
#include "tensor.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace homoglab {

inline double wrap_unit(double v) { return v - std::floor(v); }

/// Samples of a(y, s) on the nodes y = i/ny (per axis), s = j/ns of the unit cell.
struct CoefficientTable {
    int dim = 1;
    int ny = 2;
    int ns = 1;
    std::vector<Tensor> samples; ///< index (j * ny^dim + i_linear), i_linear = i1 + ny*i2

    std::size_t cell_nodes() const { return dim == 1 ? static_cast<std::size_t>(ny) : static_cast<std::size_t>(ny) * static_cast<std::size_t>(ny); }
    const Tensor& at(int i1, int i2, int j) const
    {
        const std::size_t lin = static_cast<std::size_t>(i1) + (dim == 2 ? static_cast<std::size_t>(ny) * static_cast<std::size_t>(i2) : 0);
        return samples[static_cast<std::size_t>(j) * cell_nodes() + lin];
    }
};

class CoefficientField {
public:
    using Sampler = std::function<Tensor(const Point& y, double s)>;

    CoefficientField(std::string name, int dim, double lambda, double upper, Sampler sampler, bool s_independent)
        : name_(std::move(name)), dim_(dim), lambda_(lambda), upper_(upper), sampler_(std::move(sampler)),
          s_independent_(s_independent)
    {
        if (dim_ != 1 && dim_ != 2)
            throw ConfigError("coefficient: dim must be 1 or 2");
        if (!(lambda_ > 0.0) || !(upper_ >= lambda_) || !std::isfinite(upper_))
            throw ConfigError("coefficient '" + name_ + "': need 0 < lambda <= upper");
    }

    const std::string& name() const { return name_; }
    int dim() const { return dim_; }
    double lambda() const { return lambda_; }
    double upper() const { return upper_; }
    bool s_independent() const { return s_independent_; }

    /// a(y, s) with both arguments wrapped into the unit cell and period.
    Tensor sample(const Point& y, double s) const
    {
        const Point yw{wrap_unit(y[0]), dim_ == 2 ? wrap_unit(y[1]) : 0.0};
        return sampler_(yw, s_independent_ ? 0.0 : wrap_unit(s));
    }

    CoefficientField scaled(double alpha) const
    {
        if (!(alpha > 0.0))
            throw ConfigError("coefficient scale must be positive");
        auto base = sampler_;
        return CoefficientField(name_, dim_, alpha * lambda_, alpha * upper_,
                                [base, alpha](const Point& y, double s) { return alpha * base(y, s); },
                                s_independent_);
    }

    // Built-in analytic families.

    static CoefficientField identity(int dim)
    {
        return {"identity", dim, 1.0, 1.0, [dim](const Point&, double) { return Tensor::identity(dim); }, true};
    }

    /// (2 + sin 2 pi y_1)/4 I
    static CoefficientField layered(int dim)
    {
        return {"layered", dim, 0.25, 0.75,
                [dim](const Point& y, double) {
                    return Tensor::scalar(dim, (2.0 + std::sin(2.0 * std::numbers::pi * y[0])) / 4.0);
                },
                true};
    }

    /// (2 + sin 2 pi s)/4 I
    static CoefficientField layered_s(int dim)
    {
        return {"layered-s", dim, 0.25, 0.75,
                [dim](const Point&, double s) {
                    return Tensor::scalar(dim, (2.0 + std::sin(2.0 * std::numbers::pi * s)) / 4.0);
                },
                false};
    }

    /// (2 + sin 2 pi y_1)(2 + sin 2 pi s)/16 I
    static CoefficientField product(int dim)
    {
        return {"product", dim, 1.0 / 16.0, 9.0 / 16.0,
                [dim](const Point& y, double s) {
                    const double a = (2.0 + std::sin(2.0 * std::numbers::pi * y[0]))
                                     * (2.0 + std::sin(2.0 * std::numbers::pi * s)) / 16.0;
                    return Tensor::scalar(dim, a);
                },
                false};
    }

    /// (2 + sin 2 pi y_1 sin 2 pi s)/4 I
    static CoefficientField coupled(int dim)
    {
        return {"coupled", dim, 0.25, 0.75,
                [dim](const Point& y, double s) {
                    const double a = (2.0 + std::sin(2.0 * std::numbers::pi * y[0]) * std::sin(2.0 * std::numbers::pi * s)) / 4.0;
                    return Tensor::scalar(dim, a);
                },
                false};
    }

    /// Two-phase checkerboard: value `first` on [0,1/2)^2 and [1/2,1)^2, `second` elsewhere.
    static CoefficientField checkerboard(double first = 1.0, double second = 4.0)
    {
        if (!(first > 0.0 && second > 0.0))
            throw ConfigError("checkerboard phases must be positive");
        return {"checkerboard", 2, std::min(first, second), std::max(first, second),
                [first, second](const Point& y, double) {
                    const bool a = y[0] < 0.5;
                    const bool b = y[1] < 0.5;
                    return Tensor::scalar(2, a == b ? first : second);
                },
                true};
    }

    /// Periodic multilinear interpolation of a table; lambda/upper default to
    /// the Rayleigh range of the samples.
    static CoefficientField tabulated(CoefficientTable table, std::string name = "tabulated",
                                      double lambda = std::numeric_limits<double>::quiet_NaN(),
                                      double upper = std::numeric_limits<double>::quiet_NaN())
    {
        if (table.dim != 1 && table.dim != 2)
            throw ValidationError("coefficient table: dim must be 1 or 2");
        if (table.ny < 1 || table.ns < 1)
            throw ValidationError("coefficient table: ny and ns must be positive");
        if (table.samples.size() != table.cell_nodes() * static_cast<std::size_t>(table.ns))
            throw ValidationError("coefficient table: expected " + std::to_string(table.cell_nodes() * static_cast<std::size_t>(table.ns))
                                  + " rows, got " + std::to_string(table.samples.size()));
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto& t : table.samples) {
            if (!t.finite())
                throw ValidationError("coefficient table: non-finite entry");
            const auto r = t.rayleigh_range();
            lo = std::min(lo, r[0]);
            hi = std::max(hi, r[1]);
        }
        if (std::isnan(lambda))
            lambda = lo;
        if (std::isnan(upper))
            upper = hi;
        if (!(lambda > 0.0))
            throw ValidationError("coefficient table: samples are not uniformly elliptic (min Rayleigh "
                                  + std::to_string(lo) + ")");
        auto shared = std::make_shared<const CoefficientTable>(std::move(table));
        const bool s_indep = shared->ns == 1;
        const int dim = shared->dim;
        return CoefficientField(std::move(name), dim, lambda, upper,
                                [shared](const Point& y, double s) { return interpolate(*shared, y, s); },
                                s_indep);
    }

    /// Family lookup by name; `params` may carry "scale" and, for the checkerboard, "first"/"second".
    static CoefficientField family(const std::string& name, int dim, const std::map<std::string, double>& params = {})
    {
        auto param = [&](const std::string& key, double fallback) {
            const auto it = params.find(key);
            return it == params.end() ? fallback : it->second;
        };
        CoefficientField c = [&]() -> CoefficientField {
            if (name == "identity")
                return identity(dim);
            if (name == "layered" || name == "layered-y")
                return layered(dim);
            if (name == "layered-s")
                return layered_s(dim);
            if (name == "product")
                return product(dim);
            if (name == "coupled")
                return coupled(dim);
            if (name == "checkerboard") {
                if (dim != 2)
                    throw ConfigError("checkerboard family is two-dimensional");
                return checkerboard(param("first", 1.0), param("second", 4.0));
            }
            throw ConfigError("unknown coefficient family '" + name + "'");
        }();
        const double scale = param("scale", 1.0);
        return scale == 1.0 ? c : c.scaled(scale);
    }

    static std::vector<std::string> family_names()
    {
        return {"identity", "layered", "layered-s", "product", "coupled", "checkerboard"};
    }

private:
    static Tensor interpolate(const CoefficientTable& t, const Point& y, double s)
    {
        auto axis = [](double v, int n) {
            const double f = wrap_unit(v) * n;
            int i = static_cast<int>(std::floor(f));
            double w = f - i;
            i %= n;
            return std::tuple<int, int, double>{i, (i + 1) % n, w};
        };
        const auto [j0, j1, ws] = axis(s, t.ns);
        const auto [a0, a1, wa] = axis(y[0], t.ny);
        Tensor out = Tensor::zero(t.dim);
        auto accumulate = [&](int i2a, int i2b, double w2) {
            for (const auto& [j, wj] : {std::pair{j0, 1.0 - ws}, std::pair{j1, ws}}) {
                if (wj == 0.0)
                    continue;
                for (const auto& [i1, w1] : {std::pair{a0, 1.0 - wa}, std::pair{a1, wa}}) {
                    if (w1 == 0.0)
                        continue;
                    for (const auto& [i2, wb] : {std::pair{i2a, 1.0 - w2}, std::pair{i2b, w2}}) {
                        if (wb == 0.0)
                            continue;
                        out += (wj * w1 * wb) * t.at(i1, i2, j);
                    }
                }
            }
        };
        if (t.dim == 1) {
            accumulate(0, 0, 0.0);
        } else {
            const auto [b0, b1, wb] = axis(y[1], t.ny);
            accumulate(b0, b1, wb);
        }
        return out;
    }

    std::string name_;
    int dim_;
    double lambda_;
    double upper_;
    Sampler sampler_;
    bool s_independent_;
};

/// Parses the tabulated-coefficient CSV.
///
///   dim,ny,ns                       (optional column-name line)
///   1,4,1                           (sizes)
///   iy[,iy2],is,a_11[,a_12,a_21,a_22]   (optional column-name line)
///   rows...
///
/// Lines starting with '#' and blank lines are ignored.
inline CoefficientTable parse_coefficient_table(std::istream& in)
{
    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ','))
            out.push_back(item);
        return out;
    };
    auto numeric = [](const std::string& s, double& v) {
        std::istringstream is(s);
        is >> v;
        if (!is)
            return false;
        is >> std::ws;
        return is.eof();
    };

    CoefficientTable t;
    bool have_sizes = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        const auto cols = split(line);
        std::vector<double> vals;
        bool all_numeric = true;
        for (const auto& c : cols) {
            double v = 0.0;
            if (!numeric(c, v)) {
                // "nan"/"inf" parse as numbers; anything else is a column-name line.
                all_numeric = false;
                break;
            }
            vals.push_back(v);
        }
        if (!all_numeric)
            continue;
        if (!have_sizes) {
            if (vals.size() != 3)
                throw ValidationError("coefficient table line " + std::to_string(lineno) + ": expected dim,ny,ns");
            t.dim = static_cast<int>(vals[0]);
            t.ny = static_cast<int>(vals[1]);
            t.ns = static_cast<int>(vals[2]);
            if ((t.dim != 1 && t.dim != 2) || t.ny < 1 || t.ns < 1)
                throw ValidationError("coefficient table line " + std::to_string(lineno) + ": invalid sizes");
            t.samples.assign(t.cell_nodes() * static_cast<std::size_t>(t.ns), Tensor::zero(t.dim));
            have_sizes = true;
            continue;
        }
        const std::size_t expected = static_cast<std::size_t>(t.dim + 1 + t.dim * t.dim);
        if (vals.size() != expected)
            throw ValidationError("coefficient table line " + std::to_string(lineno) + ": expected "
                                  + std::to_string(expected) + " columns");
        const int i1 = static_cast<int>(vals[0]);
        const int i2 = t.dim == 2 ? static_cast<int>(vals[1]) : 0;
        const int j = static_cast<int>(vals[static_cast<std::size_t>(t.dim)]);
        if (i1 < 0 || i1 >= t.ny || i2 < 0 || i2 >= t.ny || j < 0 || j >= t.ns)
            throw ValidationError("coefficient table line " + std::to_string(lineno) + ": index out of range");
        Tensor a = Tensor::zero(t.dim);
        for (int r = 0; r < t.dim; ++r)
            for (int c = 0; c < t.dim; ++c)
                a(r, c) = vals[static_cast<std::size_t>(t.dim + 1 + r * t.dim + c)];
        const std::size_t lin = static_cast<std::size_t>(i1) + static_cast<std::size_t>(t.ny) * static_cast<std::size_t>(i2);
        t.samples[static_cast<std::size_t>(j) * t.cell_nodes() + lin] = a;
    }
    if (!have_sizes)
        throw ValidationError("coefficient table: missing dim,ny,ns line");
    return t;
}

inline CoefficientField load_coefficient_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open coefficient file " + path);
    return CoefficientField::tabulated(parse_coefficient_table(in), path);
}

struct ValidationReport {
    bool passed = false;
    double min_rayleigh = 0.0;
    double max_rayleigh = 0.0;
    double max_symmetry_defect = 0.0;
    double lambda = 0.0;
    double upper = 0.0;
    int resolution = 0;
    std::string message;
};

/// Symmetry and ellipticity on the lattice y = i/res (per axis), s = j/res.
inline ValidationReport validate(const CoefficientField& c, int lattice_resolution = 64)
{
    if (lattice_resolution < 2)
        throw ConfigError("validate: lattice resolution must be at least 2");
    ValidationReport rep;
    rep.lambda = c.lambda();
    rep.upper = c.upper();
    rep.resolution = lattice_resolution;
    rep.min_rayleigh = std::numeric_limits<double>::infinity();
    rep.max_rayleigh = -rep.min_rayleigh;
    bool finite = true;
    const int n = lattice_resolution;
    const int n2 = c.dim() == 2 ? n : 1;
    const int nsl = c.s_independent() ? 1 : n;
    for (int j = 0; j < nsl; ++j)
        for (int i2 = 0; i2 < n2; ++i2)
            for (int i1 = 0; i1 < n; ++i1) {
                const Tensor a = c.sample({static_cast<double>(i1) / n, static_cast<double>(i2) / n},
                                          static_cast<double>(j) / n);
                if (!a.finite()) {
                    finite = false;
                    continue;
                }
                const auto r = a.rayleigh_range();
                rep.min_rayleigh = std::min(rep.min_rayleigh, r[0]);
                rep.max_rayleigh = std::max(rep.max_rayleigh, r[1]);
                rep.max_symmetry_defect = std::max(rep.max_symmetry_defect, a.symmetry_defect());
            }
    const bool symmetric = rep.max_symmetry_defect < 1e-12;
    const bool elliptic = rep.min_rayleigh >= c.lambda() - 1e-12 && rep.max_rayleigh <= c.upper() + 1e-12;
    rep.passed = finite && symmetric && elliptic;
    std::ostringstream msg;
    if (!finite)
        msg << "non-finite samples; ";
    if (!symmetric)
        msg << "symmetry defect " << rep.max_symmetry_defect << "; ";
    if (!elliptic)
        msg << "Rayleigh range [" << rep.min_rayleigh << ", " << rep.max_rayleigh << "] outside [" << c.lambda()
            << ", " << c.upper() << "]; ";
    std::string m = msg.str();
    if (m.size() >= 2)
        m.resize(m.size() - 2);
    rep.message = rep.passed ? "ok" : m;
    return rep;
}

/// y-only coefficient: a slice of a(y, s) at fixed s or its time average.
struct CoefficientSliceY {
    int dim = 1;
    double lambda = 1.0;
    double upper = 1.0;
    std::function<Tensor(const Point&)> sampler;

    Tensor sample(const Point& y) const
    {
        return sampler(Point{wrap_unit(y[0]), dim == 2 ? wrap_unit(y[1]) : 0.0});
    }

    static CoefficientSliceY at_time(const CoefficientField& c, double s)
    {
        return {c.dim(), c.lambda(), c.upper(), [c, s](const Point& y) { return c.sample(y, s); }};
    }
};

/// Midpoint-rule average over s in (0,1) with ns points.
inline CoefficientSliceY time_average(const CoefficientField& c, int ns)
{
    if (ns < 1)
        throw ConfigError("time_average: ns must be at least 1");
    if (c.s_independent())
        return CoefficientSliceY::at_time(c, 0.0);
    return {c.dim(), c.lambda(), c.upper(), [c, ns](const Point& y) {
                Tensor sum = Tensor::zero(c.dim());
                for (int j = 0; j < ns; ++j)
                    sum += c.sample(y, (j + 0.5) / ns);
                return (1.0 / ns) * sum;
            }};
}

} // namespace homoglab
