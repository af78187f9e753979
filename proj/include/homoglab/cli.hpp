#pragma once

// Command-line front end. Exit codes: 0 ok, 1 configuration or validation
// failure, 2 solver failure, 64 usage error.

#include "cell.hpp"
#include "coeff.hpp"
#include "config.hpp"
#include "corrector.hpp"
#include "diffusion.hpp"
#include "io.hpp"
#include "mesh_io.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

namespace homoglab {

enum ExitCode : int { exit_ok = 0, exit_invalid = 1, exit_solver = 2, exit_usage = 64 };

namespace detail {

struct CoefficientOptions {
    std::string family = "identity";
    std::string file;
    int dim = 1;
    double scale = 1.0;

    void add(CLI::App* app)
    {
        app->add_option("--coeff", family, "Coefficient family (" + join_names() + ")");
        app->add_option("--file", file, "Tabulated coefficient file (overrides --coeff)");
        app->add_option("--dim", dim, "Spatial dimension")->check(CLI::IsMember({1, 2}));
        app->add_option("--scale", scale, "Multiply the coefficient by this factor");
    }
    CoefficientField build() const
    {
        CoefficientField c = file.empty() ? CoefficientField::family(family, dim) : load_coefficient_file(file);
        return scale == 1.0 ? c : c.scaled(scale);
    }
    static std::string join_names()
    {
        std::string s;
        for (const auto& n : CoefficientField::family_names())
            s += (s.empty() ? "" : ", ") + n;
        return s;
    }
};

struct StudyOptions {
    std::string scenario_name;
    std::string config_path;
    int threads = 0;

    void add(CLI::App* app)
    {
        auto* s = app->add_option("--scenario", scenario_name, "Built-in scenario (" + scenario_list() + ")");
        auto* c = app->add_option("--config", config_path, "Configuration file");
        s->excludes(c);
        app->add_option("--threads", threads, "Parallel epsilon jobs")->check(CLI::PositiveNumber);
    }
    StudyConfig build() const
    {
        if (scenario_name.empty() && config_path.empty())
            throw ConfigError("one of --scenario or --config is required");
        StudyConfig cfg = config_path.empty() ? scenario(scenario_name)
                                              : study_from_config(load_config(config_path), config_path);
        if (threads > 0)
            cfg.threads = threads;
        if (const char* env = std::getenv("HOMOGLAB_THREADS"); env && *env) {
            char* end = nullptr;
            const long v = std::strtol(env, &end, 10);
            if (*end != '\0' || v < 1)
                throw ConfigError("HOMOGLAB_THREADS must be a positive integer");
            cfg.threads = static_cast<int>(v);
        }
        return cfg;
    }
    static std::string scenario_list()
    {
        std::string s;
        for (const auto& n : scenario_names())
            s += (s.empty() ? "" : ", ") + n;
        return s;
    }
};

inline double pick_epsilon(const StudyConfig& cfg, std::optional<double> eps)
{
    if (!eps)
        return cfg.epsilons.back();
    return *eps;
}

inline void print_tensor(std::ostream& out, const Tensor& t)
{
    out << std::setprecision(10);
    for (int i = 0; i < t.dim; ++i) {
        for (int j = 0; j < t.dim; ++j)
            out << (j ? " " : "") << t(i, j);
        out << '\n';
    }
}

inline json study_echo(const StudyConfig& cfg, double eps, bool homogenized)
{
    return {{"scenario", cfg.scenario}, {"p", cfg.p},       {"r", cfg.r},
            {"dim", cfg.dim},           {"epsilon", eps},   {"homogenized", homogenized},
            {"coefficient", cfg.coefficient->name()},       {"initial", cfg.initial_expr},
            {"forcing", cfg.forcing_expr}};
}

} // namespace detail

/// Parses argv and runs one subcommand.
inline int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"homoglab: periodic homogenization of nonlinear diffusion"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Expand all help");

    // validate-coeff
    auto* vc = app.add_subcommand("validate-coeff", "Check symmetry and ellipticity of a coefficient");
    detail::CoefficientOptions vc_coeff;
    vc_coeff.add(vc);
    int vc_res = 64;
    vc->add_option("--resolution", vc_res, "Lattice points per axis")->check(CLI::Range(2, 4096));

    // solve-eps / solve-hom
    auto* se = app.add_subcommand("solve-eps", "Solve the oscillating problem for one epsilon");
    auto* sh = app.add_subcommand("solve-hom", "Solve the homogenized problem on the grid of one epsilon");
    detail::StudyOptions se_study, sh_study;
    std::optional<double> se_eps, sh_eps;
    std::string se_out = "out/eps", sh_out = "out/hom";
    for (auto [cmd, st, eps, dir] : {std::tuple{se, &se_study, &se_eps, &se_out}, std::tuple{sh, &sh_study, &sh_eps, &sh_out}}) {
        st->add(cmd);
        cmd->add_option("--eps", *eps, "Epsilon (default: smallest of the study)");
        cmd->add_option("--out", *dir, "Output directory");
    }

    // cell
    auto* ce = app.add_subcommand("cell", "Solve the cell problems of one regime and dump the correctors");
    detail::CoefficientOptions ce_coeff;
    ce_coeff.add(ce);
    std::string ce_regime = "subcritical", ce_out = "out/cell";
    int ce_ny = 64, ce_ns = 32;
    double ce_p = 1.0, ce_u0 = 1.0;
    ce->add_option("--regime", ce_regime, "subcritical, supercritical, critical-fde, critical-pme");
    ce->add_option("--ny", ce_ny, "Cell resolution per axis")->check(CLI::Range(2, 4096));
    ce->add_option("--ns", ce_ns, "Slices per period")->check(CLI::Range(1, 4096));
    ce->add_option("--p", ce_p, "Nonlinearity exponent (critical regimes)");
    ce->add_option("--u0", ce_u0, "Frozen macroscopic value (critical regimes)");
    ce->add_option("--out", ce_out, "Output directory");

    // ahom
    auto* ah = app.add_subcommand("ahom", "Print the homogenized matrix");
    detail::CoefficientOptions ah_coeff;
    ah_coeff.add(ah);
    std::string ah_regime = "subcritical";
    int ah_ny = 64, ah_ns = 32, ah_samples = 32;
    double ah_p = 1.0, ah_umax = 1.0;
    bool ah_json = false;
    ah->add_option("--regime", ah_regime, "subcritical, supercritical, critical-fde, critical-pme");
    ah->add_option("--ny", ah_ny, "Cell resolution per axis")->check(CLI::Range(2, 4096));
    ah->add_option("--ns", ah_ns, "Slices per period")->check(CLI::Range(1, 4096));
    ah->add_option("--p", ah_p, "Nonlinearity exponent (critical regimes)");
    ah->add_option("--umax", ah_umax, "Largest |u0| of the lookup (critical regimes)");
    ah->add_option("--samples", ah_samples, "Lookup samples (critical regimes)")->check(CLI::Range(2, 4096));
    ah->add_flag("--json", ah_json, "Emit JSON");

    // correctors
    auto* co = app.add_subcommand("correctors", "Corrector functionals for one epsilon");
    detail::StudyOptions co_study;
    co_study.add(co);
    std::optional<double> co_eps;
    std::string co_out = "out/correctors";
    co->add_option("--eps", co_eps, "Epsilon (default: smallest of the study)");
    co->add_option("--out", co_out, "Output directory");

    // study
    auto* sy = app.add_subcommand("study", "Full epsilon sweep");
    detail::StudyOptions sy_study;
    sy_study.add(sy);
    std::string sy_out = "out/study";
    sy->add_option("--out", sy_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return exit_usage;
    }

    try {
        if (vc->parsed()) {
            const auto c = vc_coeff.build();
            const auto rep = validate(c, vc_res);
            out << "coefficient " << c.name() << " (dim " << c.dim() << ")\n"
                << std::setprecision(10) << "  min rayleigh      " << rep.min_rayleigh << '\n'
                << "  max rayleigh      " << rep.max_rayleigh << '\n'
                << "  symmetry defect   " << rep.max_symmetry_defect << '\n'
                << "  declared bounds   [" << rep.lambda << ", " << rep.upper << "]\n"
                << "  status            " << (rep.passed ? "ok" : "FAILED") << '\n';
            if (!rep.passed) {
                err << "validation failed: " << rep.message << '\n';
                return exit_invalid;
            }
            return exit_ok;
        }

        if (se->parsed() || sh->parsed()) {
            const bool hom = sh->parsed();
            const auto cfg = (hom ? sh_study : se_study).build();
            const double eps = detail::pick_epsilon(cfg, hom ? sh_eps : se_eps);
            const std::string& dir = hom ? sh_out : se_out;
            Trajectory tr;
            if (hom)
                tr = solve_hom(cfg.problem(eps, true), study_tensor(cfg), cfg.stepper);
            else
                tr = solve_eps(cfg.problem(eps, false), cfg.stepper);
            write_trajectory(dir, tr, detail::study_echo(cfg, eps, hom));
            out << "wrote " << tr.u.size() << " levels to " << dir << '\n';
            return exit_ok;
        }

        if (ce->parsed()) {
            const auto c = ce_coeff.build();
            const Regime reg = parse_regime(ce_regime);
            const CellGrid grid(c.dim(), ce_ny, ce_ns);
            const double eta = reg == Regime::critical_pme && ce_p != 1.0 ? 1e-7 * std::abs(ce_u0) : 0.0;
            const auto sol = solve_cell_problems(reg, c, grid, CellOptions{}, ce_p, ce_u0, eta);
            std::filesystem::create_directories(ce_out);
            std::size_t files = 0;
            for (const auto& f : sol.phi)
                for (std::size_t j = 0; j < f.slices.size(); ++j) {
                    char name[48];
                    std::snprintf(name, sizeof name, "phi_%d_%04zu.hmgf", f.k, j);
                    write_field((std::filesystem::path(ce_out) / name).string(),
                                Field(grid.space, Centering::node, f.slices[j].phi));
                    ++files;
                }
            for (std::size_t k = 0; k < sol.stats.size(); ++k)
                out << "direction " << k << ": " << sol.stats[k].periods << " periods, defect "
                    << sol.stats[k].final_defect << '\n';
            out << "a_hom (" << to_string(sol.regime) << ")\n";
            detail::print_tensor(out, homogenized_matrix(c, sol));
            out << "wrote " << files << " slices to " << ce_out << '\n';
            return exit_ok;
        }

        if (ah->parsed()) {
            const auto c = ah_coeff.build();
            const Regime reg = parse_regime(ah_regime);
            const CellGrid grid(c.dim(), ah_ny, ah_ns);
            const std::vector<double> umax{ah_umax};
            const auto t = homogenized_tensor(reg, c, grid, ah_p, std::span<const double>(umax), CellOptions{}, ah_samples);
            if (ah_json) {
                out << tensor_to_json(t).dump(2) << '\n';
                return exit_ok;
            }
            if (t.is_constant()) {
                out << "a_hom (" << to_string(t.regime()) << ")\n";
                detail::print_tensor(out, t.constant_value());
            } else {
                for (const auto& e : t.entries()) {
                    out << "|u0| = " << std::setprecision(10) << e.u_abs << '\n';
                    detail::print_tensor(out, e.a_hom);
                }
                if (t.has_zero_branch()) {
                    out << "zero branch (|u0| <= " << t.eta() << ")\n";
                    detail::print_tensor(out, t.zero_branch_tensor());
                }
            }
            return exit_ok;
        }

        if (co->parsed() || sy->parsed()) {
            auto cfg = (co->parsed() ? co_study : sy_study).build();
            const std::string& dir = co->parsed() ? co_out : sy_out;
            if (co->parsed())
                cfg.epsilons = {detail::pick_epsilon(cfg, co_eps)};
            const auto rep = run_study(cfg);
            write_report(dir, rep);
            out << report_csv(rep);
            out << "wrote report.json and report.csv to " << dir << '\n';
            if (!rep.all_ok()) {
                for (const auto& r : rep.results)
                    if (!r.ok)
                        err << "eps " << r.epsilon << " failed: " << r.error << '\n';
                return exit_solver;
            }
            return exit_ok;
        }
    } catch (const SolverError& e) {
        err << "solver failure: " << e.what() << '\n';
        return exit_solver;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_invalid;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_invalid;
    }
    return exit_usage;
}

} // namespace homoglab
