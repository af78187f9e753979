#include <homoglab/config.hpp>

#include <gtest/gtest.h>

#include <numbers>

using namespace homoglab;

namespace {
const std::string source_dir = HOMOGLAB_SOURCE_DIR;

std::string error_of(const std::string& text)
{
    try {
        study_from_config(parse_config_text(text, "t.ini"), "t.ini");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}
} // namespace

TEST(Config, ParsesSectionsAndComments)
{
    const auto doc = parse_config_text("# top\n[study]\np = 2 ; trailing\n\n[problem]\ninitial = sin(pi*x)\n");
    EXPECT_EQ(doc.at("study").at("p").value, "2");
    EXPECT_EQ(doc.at("study").at("p").line, 3);
    EXPECT_EQ(doc.at("problem").at("initial").value, "sin(pi*x)");
}

TEST(Config, LineNumberedErrors)
{
    EXPECT_NE(error_of("[study]\np = 1\nbogus = 2\n").find("t.ini:3"), std::string::npos);
    EXPECT_NE(error_of("[nope]\n").find("t.ini:1"), std::string::npos);
    EXPECT_NE(error_of("p = 1\n").find("outside"), std::string::npos);
    EXPECT_NE(error_of("[study]\np\n").find("t.ini:2"), std::string::npos);
    EXPECT_NE(error_of("[study]\np = 1\np = 2\n").find("duplicate"), std::string::npos);
    EXPECT_NE(error_of("[study]\ndim = 1.5\n").find("t.ini:2"), std::string::npos);
    EXPECT_NE(error_of("[problem]\ninitial = sin(\n").find("t.ini:2"), std::string::npos);
    EXPECT_NE(error_of("[study]\nepsilons = 1/4, x\n").find("t.ini:2"), std::string::npos);
    EXPECT_NE(error_of("[coefficient]\nfamily = marble\n").find("t.ini:2"), std::string::npos);
}

TEST(Config, ValidationFailuresAreReported)
{
    EXPECT_FALSE(error_of("[study]\nepsilons = 1/8, 1/4\n").empty());
    EXPECT_FALSE(error_of("[study]\ncells_per_eps = 4\n").empty());
    EXPECT_FALSE(error_of("[study]\nepsilons = 0.3\n").empty());
    EXPECT_FALSE(error_of("[study]\nr = 0\n").empty());
}

TEST(Config, BuildsStudy)
{
    const auto cfg = study_from_config(parse_config_text("[study]\nname = demo\np = 1/2\nr = 2\nepsilons = 1/4, 1/8\n"
                                                         "[coefficient]\nfamily = layered\nscale = 2\n"
                                                         "[problem]\ninitial = x*(1-x)\nforcing = t\n"
                                                         "[solver]\nmax_newton = 12\nseed = 7\n"));
    EXPECT_EQ(cfg.scenario, "demo");
    EXPECT_DOUBLE_EQ(cfg.p, 0.5);
    EXPECT_EQ(cfg.regime(), Regime::critical_fde);
    EXPECT_EQ(cfg.epsilons, (std::vector<double>{0.25, 0.125}));
    EXPECT_DOUBLE_EQ(cfg.coefficient->lambda(), 0.5);
    EXPECT_DOUBLE_EQ(cfg.initial(Point{0.5, 0.0}), 0.25);
    ASSERT_TRUE(static_cast<bool>(cfg.forcing));
    EXPECT_DOUBLE_EQ(cfg.forcing(Point{0.5, 0.0}, 0.3), 0.3);
    EXPECT_EQ(cfg.stepper.max_newton, 12);
    EXPECT_EQ(cfg.seed, 7u);
}

TEST(Config, BuiltinScenariosMatchShippedFiles)
{
    for (const auto& name : scenario_names()) {
        const auto builtin = scenario(name);
        const auto file = study_from_config(load_config(source_dir + "/scenarios/" + name + ".ini"), name);
        EXPECT_EQ(builtin.scenario, name);
        EXPECT_EQ(file.p, builtin.p);
        EXPECT_EQ(file.r, builtin.r);
        EXPECT_EQ(file.epsilons, builtin.epsilons);
        EXPECT_EQ(file.initial_expr, builtin.initial_expr);
        EXPECT_EQ(file.coefficient->name(), builtin.coefficient->name());
        EXPECT_TRUE(validate(*builtin.coefficient).passed) << name;
    }
}

TEST(Config, ScenarioRegimes)
{
    EXPECT_EQ(scenario("layered-linear").regime(), Regime::subcritical);
    EXPECT_EQ(scenario("supercritical").regime(), Regime::supercritical);
    EXPECT_EQ(scenario("critical-pme").regime(), Regime::critical_pme);
    EXPECT_EQ(scenario("critical-fde").regime(), Regime::critical_fde);
    EXPECT_THROW(scenario("nope"), ConfigError);
    EXPECT_THROW(load_config("/nonexistent.ini"), ConfigError);
}
