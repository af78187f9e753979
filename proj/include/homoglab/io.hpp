#pragma once

// JSON / CSV emission for reports, homogenized tensors and trajectories.

#include "cell.hpp"
#include "corrector.hpp"
#include "diffusion.hpp"
#include "errors.hpp"
#include "mesh_io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

namespace homoglab {

using json = nlohmann::json;

inline constexpr const char* kReportSchema = "homoglab.corrector-report";

namespace detail {

inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double number_from(const json& j)
{
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline json matrix(const Tensor& t)
{
    json m = json::array();
    for (int i = 0; i < t.dim; ++i) {
        json row = json::array();
        for (int k = 0; k < t.dim; ++k)
            row.push_back(t(i, k));
        m.push_back(row);
    }
    return m;
}

inline Tensor matrix_from(const json& m)
{
    const int dim = static_cast<int>(m.size());
    if (dim != 1 && dim != 2)
        throw ValidationError("report: matrix must be 1x1 or 2x2");
    Tensor t = Tensor::zero(dim);
    for (int i = 0; i < dim; ++i)
        for (int k = 0; k < dim; ++k)
            t(i, k) = m.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<double>();
    return t;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw ConfigError("cannot open " + path.string() + " for writing");
    os << text;
}

} // namespace detail

inline json to_json(const EpsilonResult& r)
{
    using detail::number;
    return json{{"epsilon", number(r.epsilon)},
                {"ok", r.ok},
                {"error", r.error},
                {"nx", r.nx},
                {"nt", r.nt},
                {"h", number(r.h)},
                {"tau", number(r.tau)},
                {"e_grad", number(r.e_grad)},
                {"e_flux", number(r.e_flux)},
                {"e_dt", number(r.e_dt)},
                {"e_naive", number(r.e_naive)},
                {"energy_defect", number(r.energy_defect)},
                {"pairing_defect", number(r.pairing_defect)},
                {"corrector_norm", number(r.corrector_norm)},
                {"dt_constant", number(r.dt_constant)},
                {"flux_split", {number(r.split_first), number(r.split_second), number(r.split_third)}},
                {"two_scale_defect", number(r.two_scale_defect)},
                {"lambda_mass_gradient", number(r.lambda_mass_gradient)},
                {"unfolding_defect", number(r.unfolding_defect)},
                {"lambda_mass", number(r.lambda_mass)},
                {"hom_min_rayleigh", number(r.hom_min_rayleigh)},
                {"hom_symmetry_defect", number(r.hom_symmetry_defect)},
                {"zero_branch_count", r.zero_branch_count},
                {"zero_branch_max_gradient", number(r.zero_branch_max_gradient)},
                {"max_residual_eps", number(r.max_residual_eps)},
                {"max_residual_hom", number(r.max_residual_hom)},
                {"newton_eps", r.newton_eps},
                {"newton_hom", r.newton_hom},
                {"halved_steps", r.halved_steps},
                {"runtime_seconds", number(r.runtime_seconds)}};
}

inline EpsilonResult epsilon_result_from_json(const json& j)
{
    using detail::number_from;
    EpsilonResult r;
    r.epsilon = number_from(j.at("epsilon"));
    r.ok = j.at("ok").get<bool>();
    r.error = j.at("error").get<std::string>();
    r.nx = j.at("nx").get<int>();
    r.nt = j.at("nt").get<int>();
    r.h = number_from(j.at("h"));
    r.tau = number_from(j.at("tau"));
    r.e_grad = number_from(j.at("e_grad"));
    r.e_flux = number_from(j.at("e_flux"));
    r.e_dt = number_from(j.at("e_dt"));
    r.e_naive = number_from(j.at("e_naive"));
    r.energy_defect = number_from(j.at("energy_defect"));
    r.pairing_defect = number_from(j.at("pairing_defect"));
    r.corrector_norm = number_from(j.at("corrector_norm"));
    r.dt_constant = number_from(j.at("dt_constant"));
    const auto& fs = j.at("flux_split");
    r.split_first = number_from(fs.at(0));
    r.split_second = number_from(fs.at(1));
    r.split_third = number_from(fs.at(2));
    r.two_scale_defect = number_from(j.at("two_scale_defect"));
    r.lambda_mass_gradient = number_from(j.at("lambda_mass_gradient"));
    r.unfolding_defect = number_from(j.at("unfolding_defect"));
    r.lambda_mass = number_from(j.at("lambda_mass"));
    r.hom_min_rayleigh = number_from(j.at("hom_min_rayleigh"));
    r.hom_symmetry_defect = number_from(j.at("hom_symmetry_defect"));
    r.zero_branch_count = j.at("zero_branch_count").get<std::size_t>();
    r.zero_branch_max_gradient = number_from(j.at("zero_branch_max_gradient"));
    r.max_residual_eps = number_from(j.at("max_residual_eps"));
    r.max_residual_hom = number_from(j.at("max_residual_hom"));
    r.newton_eps = j.at("newton_eps").get<int>();
    r.newton_hom = j.at("newton_hom").get<int>();
    r.halved_steps = j.at("halved_steps").get<int>();
    r.runtime_seconds = number_from(j.at("runtime_seconds"));
    return r;
}

inline json to_json(const CorrectorReport& rep)
{
    using detail::number;
    json ahom = json::array();
    for (const auto& [u, t] : rep.a_hom)
        ahom.push_back({{"u_abs", number(u)}, {"matrix", detail::matrix(t)}});
    json spots = json::array();
    for (double e : rep.spot_check_errors)
        spots.push_back(number(e));
    json results = json::array();
    for (const auto& r : rep.results)
        results.push_back(to_json(r));
    return json{{"schema", kReportSchema},
                {"schema_version", CorrectorReport::schema_version},
                {"scenario", rep.scenario},
                {"p", number(rep.p)},
                {"r", number(rep.r)},
                {"dim", rep.dim},
                {"regime", rep.regime},
                {"coefficient", {{"name", rep.coefficient}, {"lambda", number(rep.lambda)}, {"upper", number(rep.upper)}}},
                {"grid",
                 {{"length", number(rep.length)},
                  {"horizon", number(rep.horizon)},
                  {"cells_per_eps", rep.cells_per_eps},
                  {"steps_per_period", rep.steps_per_period}}},
                {"initial", rep.initial_expr},
                {"forcing", rep.forcing_expr},
                {"phireg", number(rep.phireg)},
                {"spot_check_errors", spots},
                {"a_hom", ahom},
                {"zero_branch", {{"enabled", rep.zero_branch}, {"matrix", detail::matrix(rep.zero_branch_tensor)}}},
                {"results", results}};
}

inline CorrectorReport report_from_json(const json& j)
{
    using detail::number_from;
    if (j.at("schema").get<std::string>() != kReportSchema)
        throw ValidationError("report: unknown schema");
    if (j.at("schema_version").get<int>() != CorrectorReport::schema_version)
        throw ValidationError("report: unsupported schema version");
    CorrectorReport rep;
    rep.scenario = j.at("scenario").get<std::string>();
    rep.p = number_from(j.at("p"));
    rep.r = number_from(j.at("r"));
    rep.dim = j.at("dim").get<int>();
    rep.regime = j.at("regime").get<std::string>();
    rep.coefficient = j.at("coefficient").at("name").get<std::string>();
    rep.lambda = number_from(j.at("coefficient").at("lambda"));
    rep.upper = number_from(j.at("coefficient").at("upper"));
    rep.length = number_from(j.at("grid").at("length"));
    rep.horizon = number_from(j.at("grid").at("horizon"));
    rep.cells_per_eps = j.at("grid").at("cells_per_eps").get<int>();
    rep.steps_per_period = j.at("grid").at("steps_per_period").get<int>();
    rep.initial_expr = j.at("initial").get<std::string>();
    rep.forcing_expr = j.at("forcing").get<std::string>();
    rep.phireg = number_from(j.at("phireg"));
    for (const auto& e : j.at("spot_check_errors"))
        rep.spot_check_errors.push_back(number_from(e));
    for (const auto& e : j.at("a_hom"))
        rep.a_hom.emplace_back(number_from(e.at("u_abs")), detail::matrix_from(e.at("matrix")));
    rep.zero_branch = j.at("zero_branch").at("enabled").get<bool>();
    rep.zero_branch_tensor = detail::matrix_from(j.at("zero_branch").at("matrix"));
    for (const auto& r : j.at("results"))
        rep.results.push_back(epsilon_result_from_json(r));
    return rep;
}

inline std::string report_csv(const CorrectorReport& rep)
{
    std::ostringstream os;
    os << "epsilon,h,tau,e_grad,e_flux,e_dt,e_naive,energy_defect,ok\n";
    for (const auto& r : rep.results)
        os << format_double(r.epsilon) << ',' << format_double(r.h) << ',' << format_double(r.tau) << ','
           << format_double(r.e_grad) << ',' << format_double(r.e_flux) << ',' << format_double(r.e_dt) << ','
           << format_double(r.e_naive) << ',' << format_double(r.energy_defect) << ',' << (r.ok ? 1 : 0) << '\n';
    return os.str();
}

inline void write_report(const std::filesystem::path& dir, const CorrectorReport& rep)
{
    std::filesystem::create_directories(dir);
    detail::write_text(dir / "report.json", to_json(rep).dump(2) + "\n");
    detail::write_text(dir / "report.csv", report_csv(rep));
}

inline CorrectorReport read_report(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw ConfigError("cannot open " + path.string());
    return report_from_json(json::parse(is));
}

/// Regime, matrices and quadrature metadata; node tensors when u is given.
inline json tensor_to_json(const HomogenizedTensor& t, const std::optional<Field>& u = std::nullopt)
{
    json j{{"regime", to_string(t.regime())}, {"dim", t.dim()}};
    if (!t.entries().empty() && t.has_solutions()) {
        const auto& g = t.entries().front().solution.grid;
        j["quadrature"] = {{"rule", "midpoint"}, {"ny", g.ny()}, {"ns", g.ns}, {"elements", g.space.element_count()}};
    }
    if (t.is_constant()) {
        j["matrix"] = detail::matrix(t.constant_value());
        j["symmetry_defect"] = t.constant_value().symmetry_defect();
    } else {
        json lookup = json::array();
        for (const auto& e : t.entries())
            lookup.push_back({{"u_abs", e.u_abs}, {"matrix", detail::matrix(e.a_hom)}});
        j["lookup"] = lookup;
        j["interpolation"] = "linear in |u0|";
        if (t.has_zero_branch())
            j["zero_branch"] = {{"eta", t.eta()}, {"matrix", detail::matrix(t.zero_branch_tensor())}};
        json spots = json::array();
        for (const auto& s : t.spot_checks())
            spots.push_back({{"u_abs", s.u_abs}, {"relative_error", s.relative_error}});
        j["spot_checks"] = spots;
    }
    if (u) {
        json nodes = json::array();
        for (const auto& m : t.node_tensors(*u))
            nodes.push_back(detail::matrix(m));
        j["nodes"] = nodes;
    }
    return j;
}

/// One CSV per level (coordinates, u, v) plus manifest.json.
inline void write_trajectory(const std::filesystem::path& dir, const Trajectory& tr, const json& spec_echo)
{
    std::filesystem::create_directories(dir);
    const auto& g = tr.macro.space;
    json files = json::array();
    for (std::size_t n = 0; n < tr.u.size(); ++n) {
        char name[32];
        std::snprintf(name, sizeof name, "step_%05zu.csv", n);
        std::ostringstream os;
        os << (g.dim == 1 ? "x,u,v\n" : "x,y,u,v\n");
        for (std::size_t i = 0; i < g.node_count(); ++i) {
            const Point x = g.node_position(i);
            os << format_double(x[0]) << ',';
            if (g.dim == 2)
                os << format_double(x[1]) << ',';
            os << format_double(tr.u[n][i]) << ',' << format_double(tr.v[n][i]) << '\n';
        }
        detail::write_text(dir / name, os.str());
        files.push_back({{"step", n}, {"time", tr.time(static_cast<int>(n))}, {"file", name}});
    }
    json residuals = json::array();
    for (double r : tr.residuals)
        residuals.push_back(detail::number(r));
    const json manifest{{"spec", spec_echo},
                        {"p", tr.p},
                        {"grid", {{"dim", g.dim}, {"nx", g.n}, {"nt", tr.macro.nt}, {"length", g.length}, {"horizon", tr.macro.horizon}}},
                        {"residuals", residuals},
                        {"newton_iterations", tr.newton_iterations},
                        {"halved_steps", tr.halved_steps},
                        {"files", files}};
    detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

} // namespace homoglab
