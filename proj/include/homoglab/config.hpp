#pragma once

// Run configuration: a key = value text format with [sections].
//
//   # comment            ; comment
//   [study]
//   name = layered-linear
//   p = 1
//   epsilons = 1/4, 1/8, 1/16
//
// Sections and keys:
//   [study]        name, p, r, dim, length, horizon, epsilons, cells_per_eps,
//                  steps_per_period, threads
//   [coefficient]  family, file, scale, first, second
//   [problem]      initial, forcing          (expressions in x, y, t)
//   [solver]       newton_tolerance, max_newton, delta, cell_tolerance,
//                  periodic_tolerance, max_periods, lookup_samples,
//                  spot_checks, seed
// Numbers accept constant expressions (1/8, 2^-3).

#include "coeff.hpp"
#include "corrector.hpp"
#include "errors.hpp"
#include "expr.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace homoglab {

struct ConfigEntry {
    std::string value;
    int line = 0;
};

/// section -> key -> entry
using ConfigDocument = std::map<std::string, std::map<std::string, ConfigEntry>>;

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos)
        return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline const std::map<std::string, std::vector<std::string>>& config_schema()
{
    static const std::map<std::string, std::vector<std::string>> schema{
        {"study", {"name", "p", "r", "dim", "length", "horizon", "epsilons", "cells_per_eps", "steps_per_period", "threads"}},
        {"coefficient", {"family", "file", "scale", "first", "second"}},
        {"problem", {"initial", "forcing"}},
        {"solver",
         {"newton_tolerance", "max_newton", "delta", "cell_tolerance", "periodic_tolerance", "max_periods",
          "lookup_samples", "spot_checks", "seed"}}};
    return schema;
}

} // namespace detail

inline ConfigDocument parse_config(std::istream& in, const std::string& source = "config")
{
    ConfigDocument doc;
    std::string line, section;
    int lineno = 0;
    const auto& schema = detail::config_schema();
    auto fail = [&](const std::string& what) {
        throw ConfigError(source + ":" + std::to_string(lineno) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        const std::string body = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty())
            continue;
        if (body.front() == '[') {
            if (body.back() != ']')
                fail("malformed section header");
            section = detail::trim(body.substr(1, body.size() - 2));
            if (!schema.count(section))
                fail("unknown section [" + section + "]");
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            fail("expected key = value");
        if (section.empty())
            fail("key outside of a section");
        const std::string key = detail::trim(body.substr(0, eq));
        const std::string value = detail::trim(body.substr(eq + 1));
        const auto& keys = schema.at(section);
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            fail("unknown key '" + key + "' in [" + section + "]");
        if (value.empty())
            fail("empty value for '" + key + "'");
        if (doc[section].count(key))
            fail("duplicate key '" + key + "'");
        doc[section][key] = {value, lineno};
    }
    return doc;
}

inline ConfigDocument parse_config_text(const std::string& text, const std::string& source = "config")
{
    std::istringstream is(text);
    return parse_config(is, source);
}

inline ConfigDocument load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path);
    return parse_config(in, path);
}

/// Built-in scenario library; the same texts ship under scenarios/.
inline const std::map<std::string, std::string>& scenario_texts()
{
    static const std::map<std::string, std::string> texts{
        {"identity-sanity", R"([study]
name = identity-sanity
p = 1
r = 1
dim = 1
length = 1
horizon = 1/4
epsilons = 1/4, 1/8
[coefficient]
family = identity
[problem]
initial = sin(pi*x)
forcing = 0
)"},
        {"layered-linear", R"([study]
name = layered-linear
p = 1
r = 1
dim = 1
length = 1
horizon = 1/4
epsilons = 1/4, 1/8, 1/16
[coefficient]
family = layered
[problem]
initial = sin(pi*x)
forcing = 0
)"},
        {"layered-fde", R"([study]
name = layered-fde
p = 1/2
r = 1
dim = 1
length = 1
horizon = 1/8
epsilons = 1/4, 1/8, 1/16
[coefficient]
family = layered
[problem]
initial = sin(pi*x)
forcing = 0
)"},
        {"supercritical", R"([study]
name = supercritical
p = 2
r = 3
dim = 1
length = 1
horizon = 1/64
epsilons = 1/4, 1/8
[coefficient]
family = coupled
[problem]
initial = sin(pi*x)
forcing = 0
)"},
        {"critical-pme", R"([study]
name = critical-pme
p = 2
r = 2
dim = 1
length = 1
horizon = 1/8
epsilons = 1/4, 1/8
[coefficient]
family = coupled
[problem]
initial = max(0, sin(2*pi*x))
forcing = 0
)"},
        {"critical-fde", R"([study]
name = critical-fde
p = 1/2
r = 2
dim = 1
length = 1
horizon = 1/8
epsilons = 1/4, 1/8
[coefficient]
family = coupled
[problem]
initial = sin(pi*x)
forcing = 0
)"},
        {"coupled-gap", R"([study]
name = coupled-gap
p = 1
r = 1
dim = 1
length = 1
horizon = 1/4
epsilons = 1/4, 1/8
[coefficient]
family = coupled
[problem]
initial = sin(pi*x)
forcing = 0
)"}};
    return texts;
}

inline std::vector<std::string> scenario_names()
{
    std::vector<std::string> out;
    for (const auto& [k, v] : scenario_texts())
        out.push_back(k);
    return out;
}

namespace detail {

struct ConfigReader {
    const ConfigDocument& doc;
    const std::string& source;

    const ConfigEntry* find(const std::string& section, const std::string& key) const
    {
        const auto s = doc.find(section);
        if (s == doc.end())
            return nullptr;
        const auto k = s->second.find(key);
        return k == s->second.end() ? nullptr : &k->second;
    }
    [[noreturn]] void fail(const ConfigEntry& e, const std::string& what) const
    {
        throw ConfigError(source + ":" + std::to_string(e.line) + ": " + what);
    }
    double number(const std::string& section, const std::string& key, double fallback) const
    {
        const auto* e = find(section, key);
        if (!e)
            return fallback;
        try {
            const double v = evaluate_constant(e->value);
            if (!std::isfinite(v))
                fail(*e, key + " is not finite");
            return v;
        } catch (const ConfigError& ex) {
            fail(*e, ex.what());
        }
    }
    int integer(const std::string& section, const std::string& key, int fallback) const
    {
        const auto* e = find(section, key);
        if (!e)
            return fallback;
        const double v = number(section, key, fallback);
        if (v != std::floor(v))
            fail(*e, key + " must be an integer");
        return static_cast<int>(v);
    }
    std::string text(const std::string& section, const std::string& key, const std::string& fallback) const
    {
        const auto* e = find(section, key);
        return e ? e->value : fallback;
    }
    std::vector<double> list(const std::string& section, const std::string& key) const
    {
        const auto* e = find(section, key);
        if (!e)
            return {};
        std::vector<double> out;
        std::stringstream ss(e->value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                out.push_back(evaluate_constant(trim(item)));
            } catch (const ConfigError& ex) {
                fail(*e, ex.what());
            }
        }
        return out;
    }
    Expression expression(const std::string& section, const std::string& key, const std::string& fallback) const
    {
        const auto* e = find(section, key);
        try {
            return Expression::parse(e ? e->value : fallback);
        } catch (const ConfigError& ex) {
            if (e)
                fail(*e, ex.what());
            throw;
        }
    }
};

} // namespace detail

/// Builds a validated study configuration.
inline StudyConfig study_from_config(const ConfigDocument& doc, const std::string& source = "config")
{
    const detail::ConfigReader rd{doc, source};
    StudyConfig cfg;
    cfg.scenario = rd.text("study", "name", "custom");
    cfg.p = rd.number("study", "p", 1.0);
    cfg.r = rd.number("study", "r", 1.0);
    cfg.dim = rd.integer("study", "dim", 1);
    cfg.length = rd.number("study", "length", 1.0);
    cfg.horizon = rd.number("study", "horizon", 0.25);
    if (const auto eps = rd.list("study", "epsilons"); !eps.empty())
        cfg.epsilons = eps;
    cfg.cells_per_eps = rd.integer("study", "cells_per_eps", 8);
    cfg.steps_per_period = rd.integer("study", "steps_per_period", 8);
    cfg.threads = rd.integer("study", "threads", 1);

    if (const auto* f = rd.find("coefficient", "file")) {
        try {
            cfg.coefficient = load_coefficient_file(f->value);
        } catch (const Error& ex) {
            rd.fail(*f, ex.what());
        }
    } else {
        std::map<std::string, double> params;
        for (const char* k : {"scale", "first", "second"})
            if (rd.find("coefficient", k))
                params[k] = rd.number("coefficient", k, 1.0);
        const std::string fam = rd.text("coefficient", "family", "identity");
        try {
            cfg.coefficient = CoefficientField::family(fam, cfg.dim, params);
        } catch (const ConfigError& ex) {
            if (const auto* e = rd.find("coefficient", "family"))
                rd.fail(*e, ex.what());
            throw;
        }
    }

    const Expression u0 = rd.expression("problem", "initial", "0");
    const Expression f = rd.expression("problem", "forcing", "0");
    cfg.initial_expr = u0.text();
    cfg.forcing_expr = f.text();
    cfg.initial = [u0](const Point& x) { return u0(x, 0.0); };
    if (f.text() != "0")
        cfg.forcing = [f](const Point& x, double t) { return f(x, t); };

    cfg.stepper.newton_tolerance = rd.number("solver", "newton_tolerance", cfg.stepper.newton_tolerance);
    cfg.stepper.max_newton = rd.integer("solver", "max_newton", cfg.stepper.max_newton);
    cfg.stepper.delta = rd.number("solver", "delta", cfg.stepper.delta);
    cfg.cell.solver.relative_tolerance = rd.number("solver", "cell_tolerance", cfg.cell.solver.relative_tolerance);
    cfg.cell.periodic_tolerance = rd.number("solver", "periodic_tolerance", cfg.cell.periodic_tolerance);
    cfg.cell.max_periods = rd.integer("solver", "max_periods", cfg.cell.max_periods);
    cfg.lookup_samples = rd.integer("solver", "lookup_samples", cfg.lookup_samples);
    cfg.spot_checks = rd.integer("solver", "spot_checks", cfg.spot_checks);
    cfg.seed = static_cast<unsigned>(rd.integer("solver", "seed", static_cast<int>(cfg.seed)));

    try {
        cfg.validate();
    } catch (const ConfigError& ex) {
        throw ConfigError(source + ": " + ex.what());
    }
    return cfg;
}

inline StudyConfig scenario(const std::string& name)
{
    const auto& texts = scenario_texts();
    const auto it = texts.find(name);
    if (it == texts.end()) {
        std::string known;
        for (const auto& [k, v] : texts)
            known += (known.empty() ? "" : ", ") + k;
        throw ConfigError("unknown scenario '" + name + "' (known: " + known + ")");
    }
    return study_from_config(parse_config_text(it->second, name), name);
}

} // namespace homoglab
