// Acceptance run: one pass/fail line per criterion, nonzero exit if any fails.

#include "oracles.hpp"

#include <homoglab/cell.hpp>
#include <homoglab/config.hpp>
#include <homoglab/corrector.hpp>
#include <homoglab/diffusion.hpp>
#include <homoglab/unfold.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace homoglab;

namespace {

constexpr double pi = std::numbers::pi;

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + ("FAILED " + what);
        }
    }
    void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(double v)
{
    char b[32];
    std::snprintf(b, sizeof b, "%.3e", v);
    return b;
}

// ---------------------------------------------------------------- AC1

SpaceTimeField random_field(const MacroGrid& g, Centering c, int ncomp, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    SpaceTimeField w(g.space, g.nt, g.tau(), ncomp, c);
    for (double& v : w.values)
        v = dist(rng);
    return w;
}

double signed_power(double v, double p) { return std::copysign(std::pow(std::abs(v), p), v); }

Outcome operator_algebra()
{
    Outcome o;
    double lin = 0.0, mult = 0.0, pw = 0.0, integ = 0.0, adj = 0.0, inv = 0.0, norm = 0.0;
    std::uint64_t seed = 1000;
    for (int dim : {1, 2})
        for (double eps : {0.25, 0.125})
            for (double r : {1.0, 2.0})
                for (auto c : {Centering::element, Centering::node}) {
                    // h = 1/32 on 37 cells leaves a boundary layer in space; the horizon leaves one in time.
                    const double tau = r == 1.0 ? 1.0 / 32.0 : 1.0 / 64.0;
                    const MacroGrid macro(dim, 37, 10, 37.0 / 32.0, 10.0 * tau);
                    const auto g = geometry(eps, r, macro);
                    const auto a = random_field(macro, c, 1, ++seed);
                    const auto b = random_field(macro, c, 1, ++seed);
                    const auto ta = unfold(a, g), tb = unfold(b, g);
                    double scale = 0.0;
                    for (double v : ta.values)
                        scale = std::max(scale, std::abs(v));

                    auto comb = a, prod = a, pa = a;
                    for (std::size_t i = 0; i < a.values.size(); ++i) {
                        comb.values[i] = 0.7 * a.values[i] - 1.3 * b.values[i];
                        prod.values[i] = a.values[i] * b.values[i];
                        pa.values[i] = signed_power(a.values[i], 1.7);
                    }
                    const auto tc = unfold(comb, g), tp = unfold(prod, g), tpa = unfold(pa, g);
                    for (std::size_t i = 0; i < ta.values.size(); ++i) {
                        lin = std::max(lin, std::abs(tc.values[i] - (0.7 * ta.values[i] - 1.3 * tb.values[i])) / scale);
                        mult = std::max(mult, std::abs(tp.values[i] - ta.values[i] * tb.values[i]) / scale);
                        pw = std::max(pw, std::abs(tpa.values[i] - signed_power(ta.values[i], 1.7)) / scale);
                    }

                    auto shifted = a;
                    for (double& v : shifted.values)
                        v += 2.0;
                    integ = std::max(integ, integral_identity_defect(shifted, g) / std::abs(integral(unfold(shifted, g))));

                    auto psi = tb;
                    std::mt19937_64 rng(++seed);
                    std::uniform_real_distribution<double> dist(-1.0, 1.0);
                    for (double& v : psi.values)
                        v = dist(rng);
                    double lhs = 0.0, rhs = 0.0;
                    for (std::size_t i = 0; i < ta.values.size(); ++i)
                        lhs += ta.values[i] * psi.values[i];
                    lhs *= ta.sample_measure();
                    const auto up = average(psi);
                    for (std::size_t i = 0; i < a.values.size(); ++i)
                        rhs += a.values[i] * up.values[i];
                    rhs *= a.cell_measure();
                    adj = std::max(adj, std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-300));

                    const auto back = average(ta);
                    const auto mask = g.lambda_mask(c);
                    for (std::size_t i = 0; i < a.values.size(); ++i)
                        inv = std::max(inv, std::abs(back.values[i] - (mask[i] ? 0.0 : a.values[i])) / scale);

                    double total = 0.0;
                    for (double v : a.values)
                        total += v * v;
                    total *= a.cell_measure();
                    const double tn = l2_norm(ta);
                    norm = std::max(norm, std::abs(tn * tn + lambda_mass(a, g) - total) / total);
                }
    const double tol = 1e-12;
    o.check(lin <= tol, "linearity " + fmt(lin));
    o.check(mult <= tol, "multiplicativity " + fmt(mult));
    o.check(pw <= tol, "power rule " + fmt(pw));
    o.check(integ <= tol, "integral identity " + fmt(integ));
    o.check(adj <= tol, "adjointness " + fmt(adj));
    o.check(inv <= tol, "left inverse " + fmt(inv));
    o.check(norm <= tol, "norm identity " + fmt(norm));
    o.note("max relative defect " + fmt(std::max({lin, mult, pw, integ, adj, inv, norm})));
    return o;
}

// ---------------------------------------------------------------- AC2

Outcome homogenized_matrix_oracle()
{
    Outcome o;
    const double layered = homogenized_tensor(Regime::subcritical, CoefficientField::layered(1), CellGrid(1, 256, 1))
                               .constant_value()(0, 0);
    o.check(std::abs(layered - std::sqrt(3.0) / 4.0) <= 1e-3, "layered " + fmt(layered));
    const double super = homogenized_tensor(Regime::supercritical, CoefficientField::coupled(1), CellGrid(1, 64, 32))
                             .constant_value()(0, 0);
    o.check(std::abs(super - 0.5) <= 1e-6, "supercritical " + fmt(super));
    const double sub = homogenized_tensor(Regime::subcritical, CoefficientField::coupled(1), CellGrid(1, 128, 32))
                           .constant_value()(0, 0);
    const double ref = oracle::coupled_subcritical();
    o.check(sub < 0.5, "subcritical below 1/2");
    o.check(std::abs(sub - ref) <= 1e-3, "subcritical vs quadrature " + fmt(std::abs(sub - ref)));
    o.note("layered err " + fmt(std::abs(layered - std::sqrt(3.0) / 4.0)) + ", supercritical err "
           + fmt(std::abs(super - 0.5)) + ", subcritical err " + fmt(std::abs(sub - ref)));
    return o;
}

// ---------------------------------------------------------------- AC3

Outcome critical_cell_solver()
{
    Outcome o;
    double reduction = 0.0;
    {
        const auto c = CoefficientField::layered(1);
        const CellGrid g(1, 64, 16);
        const auto ell = solve_cp_elliptic(CoefficientSliceY::at_time(c, 0.0), g.space, 0);
        for (double u0 : {0.3, 1.7}) {
            for (const auto& sol : {solve_cp_critical_fde(c, g, u0, 0.5), solve_cp_critical_pme(c, g, u0, 2.0)})
                for (const auto& sl : sol.phi[0].slices)
                    for (std::size_t i = 0; i < sl.phi.size(); ++i)
                        reduction = std::max(reduction, std::abs(sl.phi[i] - ell.phi[i]));
        }
    }
    o.check(reduction <= 1e-6, "elliptic reduction " + fmt(reduction));

    double mono = 0.0, worst_ratio = 0.0;
    const auto c = CoefficientField::coupled(1);
    const CellGrid g(1, 32, 32);
    for (const auto& [capacity, scale] : {std::pair{1.0, 1.0}, std::pair{2.5, 0.4}, std::pair{0.3, 3.0}}) {
        PeriodMapStats st;
        const auto f = solve_periodic_parabolic(c, g, 0, capacity, scale, CellOptions{}, st);
        const auto ref = oracle::monolithic_cell_1d(c, 32, 32, capacity, scale);
        for (int j = 0; j < 32; ++j)
            for (int i = 0; i < 32; ++i)
                mono = std::max(mono, std::abs(f.slices[static_cast<std::size_t>(j)].phi[static_cast<std::size_t>(i)]
                                               - ref[static_cast<std::size_t>(j * 32 + i)]));
        o.check(!st.contraction_ratios.empty(), "contraction ratios recorded");
        for (double r : st.contraction_ratios)
            worst_ratio = std::max(worst_ratio, r);
    }
    // Contraction along the critical lookup of a real study as well.
    const auto cfg = scenario("critical-fde");
    const auto t = study_tensor(cfg);
    for (const auto& e : t.entries())
        for (const auto& st : e.solution.stats)
            for (double r : st.contraction_ratios)
                worst_ratio = std::max(worst_ratio, r);
    o.check(mono <= 1e-6, "monolithic agreement " + fmt(mono));
    o.check(worst_ratio < 1.0, "contraction ratio " + fmt(worst_ratio));
    o.note("reduction " + fmt(reduction) + ", monolithic " + fmt(mono) + ", max contraction " + fmt(worst_ratio));
    return o;
}

// ---------------------------------------------------------------- AC4

Outcome epsilon_solver()
{
    Outcome o;
    const auto heat = [](const Point& x, double t) { return std::exp(-pi * pi * t) * std::sin(pi * x[0]); };
    double worst = 0.0;
    for (int nx : {16, 32, 64}) {
        ProblemSpec s;
        s.macro = MacroGrid(1, nx, nx, 1.0, 0.25);
        s.initial = [](const Point& x) { return std::sin(pi * x[0]); };
        const auto tr = solve_with(s, constant_provider(Tensor::identity(1), s.macro.space));
        const double bound = 5.0 * (s.macro.h() * s.macro.h() + s.macro.tau());
        const double err = max_l2_difference(tr, heat);
        o.check(err <= bound, "heat nx=" + std::to_string(nx) + " " + fmt(err) + " > " + fmt(bound));
        worst = std::max(worst, err / bound);
    }

    std::vector<double> err;
    for (int nx : {16, 32, 64}) {
        ProblemSpec s;
        s.p = 2.0;
        s.macro = MacroGrid(1, nx, nx * nx / 4, 1.0, 0.25);
        s.initial = [](const Point& x) { return std::sin(pi * x[0]); };
        s.forcing = [](const Point& x, double t) {
            return -std::exp(-t) * std::sin(pi * x[0]) - 2.0 * pi * pi * std::exp(-2.0 * t) * std::cos(2.0 * pi * x[0]);
        };
        const auto tr = solve_with(s, constant_provider(Tensor::identity(1), s.macro.space));
        const Field& u = tr.u.back();
        double e2 = 0.0;
        Field d(u.grid, Centering::node);
        for (std::size_t i = 0; i < u.size(); ++i)
            d[i] = u[i] - std::exp(-tr.macro.horizon) * std::sin(pi * u.grid.node_position(i)[0]);
        e2 = l2_norm(d);
        err.push_back(e2);
    }
    const double o1 = std::log2(err[0] / err[1]), o2 = std::log2(err[1] / err[2]);
    o.check(o1 >= 1.5 && o2 >= 1.5, "PME order " + fmt(o1) + ", " + fmt(o2));
    o.note("heat err/bound <= " + fmt(worst) + ", PME orders " + fmt(o1) + ", " + fmt(o2));
    return o;
}

// ---------------------------------------------------------------- AC5 - AC8

struct Studies {
    std::map<std::string, CorrectorReport> reports;

    const CorrectorReport& get(const std::string& name)
    {
        auto it = reports.find(name);
        if (it == reports.end()) {
            auto cfg = scenario(name);
            cfg.threads = 1;
            it = reports.emplace(name, run_study(cfg)).first;
        }
        return it->second;
    }
};

Outcome corrector_convergence(Studies& st)
{
    Outcome o;
    const auto& rep = st.get("layered-linear");
    o.check(rep.all_ok() && rep.results.size() == 3, "study completed");
    if (!o.pass)
        return o;
    const auto& r = rep.results;
    o.check(r[1].e_grad < r[0].e_grad && r[2].e_grad < r[1].e_grad, "E_grad strictly decreasing");
    o.check(r[2].e_grad < 0.5 * r[0].e_grad, "E_grad halving");
    o.check(r[2].e_naive > 0.5 * r[0].e_naive, "E_naive stagnation");
    o.note("E_grad " + fmt(r[0].e_grad) + " " + fmt(r[1].e_grad) + " " + fmt(r[2].e_grad) + ", E_naive "
           + fmt(r[0].e_naive) + " " + fmt(r[2].e_naive));
    return o;
}

Outcome domination(Studies& st)
{
    Outcome o;
    std::size_t checked = 0;
    double flux_margin = -1e300, dt_margin = -1e300;
    for (const auto& name : scenario_names()) {
        const auto cfg = scenario(name);
        const double upper = cfg.coefficient->upper();
        for (const auto& r : st.get(name).results) {
            if (!r.ok)
                continue;
            ++checked;
            const double fm = r.e_flux - (upper * r.e_grad + 1e-12);
            const double dm = r.e_dt - (r.e_flux + r.dt_constant * r.tau);
            o.check(fm <= 0.0, name + " eps " + fmt(r.epsilon) + " flux");
            o.check(dm <= 0.0, name + " eps " + fmt(r.epsilon) + " dt");
            flux_margin = std::max(flux_margin, fm);
            dt_margin = std::max(dt_margin, dm);
        }
    }
    o.check(checked > 0, "no completed study");
    o.note(std::to_string(checked) + " eps checked, worst flux margin " + fmt(flux_margin) + ", worst dt margin "
           + fmt(dt_margin));
    return o;
}

Outcome critical_pme(Studies& st)
{
    Outcome o;
    const auto cfg = scenario("critical-pme");
    const auto& rep = st.get("critical-pme");
    o.check(rep.all_ok() && rep.results.size() == 2, "study completed");
    if (!o.pass)
        return o;
    const double lambda = cfg.coefficient->lambda();
    double rayleigh = 1e300;
    std::size_t zero = 0;
    double zero_grad = 0.0;
    for (const auto& r : rep.results) {
        rayleigh = std::min(rayleigh, r.hom_min_rayleigh);
        zero += r.zero_branch_count;
        zero_grad = std::max(zero_grad, r.zero_branch_max_gradient);
    }
    o.check(rayleigh >= lambda - 1e-6, "ellipticity " + fmt(rayleigh));
    o.check(rep.results[1].e_grad < rep.results[0].e_grad, "E_grad decreasing");
    o.check(rep.zero_branch && zero > 0, "zero branch exercised");
    o.check(zero_grad == 0.0, "corrector vanishes on zero branch " + fmt(zero_grad));
    o.note("min Rayleigh " + fmt(rayleigh) + " (lambda " + fmt(lambda) + "), E_grad " + fmt(rep.results[0].e_grad)
           + " " + fmt(rep.results[1].e_grad) + ", zero-branch samples " + std::to_string(zero));
    return o;
}

Outcome energy_defect(Studies& st)
{
    Outcome o;
    const auto& rep = st.get("layered-linear");
    o.check(rep.all_ok(), "study completed");
    if (!o.pass)
        return o;
    std::string seq;
    for (std::size_t i = 0; i < rep.results.size(); ++i) {
        seq += (i ? " " : "") + fmt(rep.results[i].energy_defect);
        if (i > 0)
            o.check(rep.results[i].energy_defect < rep.results[i - 1].energy_defect, "decrease at " + std::to_string(i));
    }
    o.note("energy defect " + seq);
    return o;
}

} // namespace

int main()
{
    Studies studies;
    struct Criterion {
        const char* id;
        const char* title;
        double limit_seconds;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {"AC1", "unfolding operator algebra", 10.0, operator_algebra},
        {"AC2", "homogenized matrix oracles", 5.0, homogenized_matrix_oracle},
        {"AC3", "critical cell solver", 60.0, critical_cell_solver},
        {"AC4", "epsilon-problem solver", 120.0, epsilon_solver},
        {"AC5", "corrector convergence", 600.0, [&] { return corrector_convergence(studies); }},
        {"AC6", "flux and time-derivative domination", 1e300, [&] { return domination(studies); }},
        {"AC7", "critical PME end to end", 1200.0, [&] { return critical_pme(studies); }},
        {"AC8", "energy defect decrease", 1e300, [&] { return energy_defect(studies); }},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        o.check(secs < c.limit_seconds, "runtime limit");
        if (!o.pass)
            ++failed;
        std::printf("%s %s  %-38s %7.2fs  %s\n", c.id, o.pass ? "PASS" : "FAIL", c.title, secs, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
