#include <homoglab/cli.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace homoglab;
namespace fs = std::filesystem;

namespace {

const std::string source_dir = HOMOGLAB_SOURCE_DIR;

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args)
{
    args.insert(args.begin(), "homoglab");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& tag)
{
    const auto dir = fs::temp_directory_path() / ("homoglab_test_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace

TEST(Cli, UsageErrors)
{
    EXPECT_EQ(run({}).code, exit_usage);
    EXPECT_EQ(run({"frobnicate"}).code, exit_usage);
    const auto r = run({"ahom", "--bogus"});
    EXPECT_EQ(r.code, exit_usage);
    EXPECT_NE(r.err.find("error"), std::string::npos);
    EXPECT_EQ(run({"cell", "--ny", "1"}).code, exit_usage);
    EXPECT_EQ(run({"study", "--scenario", "layered-linear", "--config", "x.ini"}).code, exit_usage);
    EXPECT_EQ(run({"--help"}).code, exit_ok);
    EXPECT_NE(run({"--help"}).out.find("validate-coeff"), std::string::npos);
}

TEST(Cli, AhomLayeredSubcritical)
{
    const auto r = run({"ahom", "--coeff", "layered", "--regime", "subcritical", "--ny", "256"});
    ASSERT_EQ(r.code, exit_ok) << r.err;
    EXPECT_NE(r.out.find("0.4330127"), std::string::npos) << r.out;
    const auto j = run({"ahom", "--coeff", "coupled", "--regime", "supercritical", "--json"});
    ASSERT_EQ(j.code, exit_ok) << j.err;
    const auto parsed = json::parse(j.out);
    EXPECT_NEAR(parsed.at("matrix").at(0).at(0).get<double>(), 0.5, 1e-12);
}

TEST(Cli, AhomCriticalLookup)
{
    const auto r = run({"ahom", "--coeff", "coupled", "--regime", "critical-pme", "--p", "2", "--umax", "1",
                        "--samples", "4", "--ny", "16", "--ns", "16"});
    ASSERT_EQ(r.code, exit_ok) << r.err;
    EXPECT_NE(r.out.find("|u0| ="), std::string::npos);
    EXPECT_NE(r.out.find("zero branch"), std::string::npos);
}

TEST(Cli, ValidateCoefficient)
{
    EXPECT_EQ(run({"validate-coeff", "--coeff", "checkerboard", "--dim", "2"}).code, exit_ok);
    const auto bad = run({"validate-coeff", "--file", source_dir + "/scenarios/bad_asym.csv"});
    EXPECT_EQ(bad.code, exit_invalid);
    EXPECT_NE(bad.err.find("validation failed"), std::string::npos);
    EXPECT_EQ(run({"validate-coeff", "--file", "/nonexistent.csv"}).code, exit_invalid);
    EXPECT_EQ(run({"validate-coeff", "--coeff", "marble"}).code, exit_invalid);
}

TEST(Cli, StudyWritesReports)
{
    const auto dir = scratch("study");
    const auto r = run({"study", "--scenario", "layered-linear", "--out", dir.string()});
    ASSERT_EQ(r.code, exit_ok) << r.err;
    ASSERT_TRUE(fs::exists(dir / "report.json"));
    ASSERT_TRUE(fs::exists(dir / "report.csv"));
    EXPECT_EQ(r.out.substr(0, r.out.find("wrote")), slurp(dir / "report.csv"));
    const auto rep = read_report(dir / "report.json");
    EXPECT_EQ(rep.scenario, "layered-linear");
    EXPECT_EQ(rep.results.size(), 3u);

    // Identical CSV on a rerun, also with a different thread count.
    const auto dir2 = scratch("study2");
    ::setenv("HOMOGLAB_THREADS", "3", 1);
    const auto r2 = run({"study", "--config", source_dir + "/scenarios/layered-linear.ini", "--out", dir2.string()});
    ::unsetenv("HOMOGLAB_THREADS");
    ASSERT_EQ(r2.code, exit_ok) << r2.err;
    EXPECT_EQ(slurp(dir / "report.csv"), slurp(dir2 / "report.csv"));
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST(Cli, ThreadEnvironmentIsValidated)
{
    ::setenv("HOMOGLAB_THREADS", "zero", 1);
    const auto r = run({"correctors", "--scenario", "identity-sanity", "--out", scratch("env").string()});
    ::unsetenv("HOMOGLAB_THREADS");
    EXPECT_EQ(r.code, exit_invalid);
    EXPECT_NE(r.err.find("HOMOGLAB_THREADS"), std::string::npos);
    EXPECT_EQ(run({"study", "--scenario", "identity-sanity", "--threads", "0"}).code, exit_usage);
    fs::remove_all(fs::temp_directory_path() / "homoglab_test_cli_env");
}

TEST(Cli, ConfigErrorsCarryLineNumbers)
{
    const auto dir = scratch("config");
    {
        std::ofstream os(dir / "bad.ini");
        os << "[study]\np = 2\nwhatever = 1\n";
    }
    const auto r = run({"study", "--config", (dir / "bad.ini").string(), "--out", dir.string()});
    EXPECT_EQ(r.code, exit_invalid);
    EXPECT_NE(r.err.find("bad.ini:3"), std::string::npos) << r.err;
    EXPECT_EQ(run({"study", "--out", dir.string()}).code, exit_invalid);
    EXPECT_EQ(run({"study", "--scenario", "nope"}).code, exit_invalid);
    fs::remove_all(dir);
}

TEST(Cli, SolverFailureExitCode)
{
    const auto dir = scratch("solver");
    {
        std::ofstream os(dir / "tight.ini");
        os << slurp(source_dir + "/scenarios/critical-pme.ini") << "[solver]\nmax_newton = 1\n";
    }
    const auto r = run({"study", "--config", (dir / "tight.ini").string(), "--out", dir.string()});
    EXPECT_EQ(r.code, exit_solver) << r.err;
    EXPECT_NE(r.err.find("failed"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "report.json"));
    const auto s = run({"solve-eps", "--config", (dir / "tight.ini").string(), "--out", (dir / "traj").string()});
    EXPECT_EQ(s.code, exit_solver) << s.err;
    fs::remove_all(dir);
}

TEST(Cli, SolveAndCellDumps)
{
    const auto dir = scratch("solve");
    const auto e = run({"solve-eps", "--scenario", "layered-linear", "--eps", "0.25", "--out", (dir / "eps").string()});
    ASSERT_EQ(e.code, exit_ok) << e.err;
    EXPECT_TRUE(fs::exists(dir / "eps" / "manifest.json"));
    const auto h = run({"solve-hom", "--scenario", "critical-fde", "--out", (dir / "hom").string()});
    ASSERT_EQ(h.code, exit_ok) << h.err;
    EXPECT_TRUE(fs::exists(dir / "hom" / "manifest.json"));
    EXPECT_EQ(run({"solve-eps", "--scenario", "layered-linear", "--eps", "0.3", "--out", (dir / "x").string()}).code,
              exit_invalid);

    const auto c = run({"cell", "--coeff", "coupled", "--regime", "critical-fde", "--p", "0.5", "--u0", "1", "--ny",
                        "16", "--ns", "8", "--out", (dir / "cell").string()});
    ASSERT_EQ(c.code, exit_ok) << c.err;
    EXPECT_NE(c.out.find("a_hom (critical-fde)"), std::string::npos);
    std::size_t dumps = 0;
    for (const auto& f : fs::directory_iterator(dir / "cell"))
        if (f.path().extension() == ".hmgf") {
            ++dumps;
            EXPECT_EQ(read_field(f.path().string()).grid.n, 16);
        }
    EXPECT_EQ(dumps, 8u);
    fs::remove_all(dir);
}

TEST(Cli, CorrectorsSingleEpsilon)
{
    const auto dir = scratch("corr");
    const auto r = run({"correctors", "--scenario", "supercritical", "--out", dir.string()});
    ASSERT_EQ(r.code, exit_ok) << r.err;
    const auto rep = read_report(dir / "report.json");
    ASSERT_EQ(rep.results.size(), 1u);
    EXPECT_EQ(rep.results[0].epsilon, scenario("supercritical").epsilons.back());
    fs::remove_all(dir);
}
