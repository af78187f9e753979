#include <homoglab/config.hpp>
#include <homoglab/io.hpp>

#include <gtest/gtest.h>

#include <fstream>
#include <limits>
#include <random>

using namespace homoglab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& tag)
{
    const auto dir = fs::temp_directory_path() / ("homoglab_test_io_" + tag);
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

TEST(Io, FieldBinaryRoundTripIsBitExact)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(-1e3, 1e3);
    for (int dim : {1, 2})
        for (auto c : {Centering::node, Centering::element}) {
            Field f(SpatialGrid{dim, 9, 1.5, dim == 2}, c);
            for (double& v : f.values)
                v = dist(rng);
            f.values.front() = std::numeric_limits<double>::denorm_min();
            const Field back = decode_field(encode_field(f));
            EXPECT_EQ(back.grid, f.grid);
            EXPECT_EQ(back.centering, c);
            ASSERT_EQ(back.values.size(), f.values.size());
            EXPECT_EQ(std::memcmp(back.values.data(), f.values.data(), f.values.size() * sizeof(double)), 0);
        }
    const auto dir = scratch("field");
    Field f(SpatialGrid{1, 4, 1.0, false}, Centering::node);
    f.values = {0.0, 0.1, 1.0 / 3.0, -2.5, 7.0};
    write_field((dir / "f.hmgf").string(), f);
    EXPECT_EQ(read_field((dir / "f.hmgf").string()).values, f.values);
    fs::remove_all(dir);
}

TEST(Io, CorruptFieldDumpsAreRejected)
{
    Field f(SpatialGrid{1, 4, 1.0, false}, Centering::node);
    auto bytes = encode_field(f);
    auto bad = bytes;
    bad[1] = 'Z';
    EXPECT_THROW(decode_field(bad), ValidationError);
    bytes.resize(bytes.size() - 3);
    EXPECT_THROW(decode_field(bytes), ValidationError);
    EXPECT_THROW(read_field("/nonexistent/f.hmgf"), Error);
}

TEST(Io, FieldCsvUsesRoundTripPrecision)
{
    Field f(SpatialGrid{1, 2, 1.0, false}, Centering::node);
    f.values = {0.0, 1.0 / 3.0, 0.0};
    const auto csv = field_to_csv(f);
    EXPECT_EQ(csv.substr(0, 8), "x,value\n");
    EXPECT_NE(csv.find("0.33333333333333331"), std::string::npos);
    EXPECT_EQ(std::stod(format_double(0.1)), 0.1);
}

TEST(Io, ReportJsonRoundTrip)
{
    const auto rep = run_study(scenario("critical-pme"));
    const auto dir = scratch("report");
    write_report(dir, rep);
    const auto back = read_report(dir / "report.json");
    EXPECT_EQ(back.scenario, rep.scenario);
    EXPECT_EQ(back.regime, rep.regime);
    EXPECT_EQ(back.p, rep.p);
    EXPECT_EQ(back.phireg, rep.phireg);
    EXPECT_EQ(back.spot_check_errors, rep.spot_check_errors);
    ASSERT_EQ(back.a_hom.size(), rep.a_hom.size());
    for (std::size_t i = 0; i < rep.a_hom.size(); ++i) {
        EXPECT_EQ(back.a_hom[i].first, rep.a_hom[i].first);
        EXPECT_EQ(back.a_hom[i].second, rep.a_hom[i].second);
    }
    EXPECT_EQ(back.zero_branch, rep.zero_branch);
    ASSERT_EQ(back.results.size(), rep.results.size());
    for (std::size_t i = 0; i < rep.results.size(); ++i) {
        const auto& a = rep.results[i];
        const auto& b = back.results[i];
        EXPECT_EQ(b.e_grad, a.e_grad);
        EXPECT_EQ(b.e_flux, a.e_flux);
        EXPECT_EQ(b.e_dt, a.e_dt);
        EXPECT_EQ(b.e_naive, a.e_naive);
        EXPECT_EQ(b.zero_branch_count, a.zero_branch_count);
        EXPECT_EQ(b.nx, a.nx);
        EXPECT_EQ(b.ok, a.ok);
    }
    // Writing the parsed report again reproduces the file byte for byte.
    const auto dir2 = scratch("report2");
    write_report(dir2, back);
    EXPECT_EQ(slurp(dir / "report.json"), slurp(dir2 / "report.json"));
    EXPECT_EQ(slurp(dir / "report.csv"), slurp(dir2 / "report.csv"));
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST(Io, NonFiniteNumbersBecomeNull)
{
    CorrectorReport rep;
    rep.scenario = "x";
    rep.zero_branch_tensor = Tensor::zero(1);
    EpsilonResult r;
    r.epsilon = 0.25;
    r.e_grad = std::numeric_limits<double>::quiet_NaN();
    r.e_flux = std::numeric_limits<double>::infinity();
    rep.results.push_back(r);
    const json j = to_json(rep);
    EXPECT_TRUE(j.at("results").at(0).at("e_grad").is_null());
    EXPECT_TRUE(j.at("results").at(0).at("e_flux").is_null());
    const auto back = report_from_json(json::parse(j.dump()));
    EXPECT_TRUE(std::isnan(back.results[0].e_grad));
    EXPECT_TRUE(std::isnan(back.results[0].e_flux));
    json bad = j;
    bad["schema"] = "other";
    EXPECT_THROW(report_from_json(bad), ValidationError);
    bad = j;
    bad["schema_version"] = 99;
    EXPECT_THROW(report_from_json(bad), ValidationError);
}

TEST(Io, CsvHasOneRowPerEpsilon)
{
    const auto rep = run_study(scenario("layered-linear"));
    const auto csv = report_csv(rep);
    EXPECT_EQ(csv.rfind("epsilon,h,tau,e_grad,e_flux,e_dt,e_naive,energy_defect,ok\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
    EXPECT_NE(csv.find("\n0.25,"), std::string::npos);
    EXPECT_NE(csv.find("\n0.0625,"), std::string::npos);
}

TEST(Io, TrajectoryDump)
{
    const auto cfg = scenario("layered-fde");
    const auto tr = solve_eps(cfg.problem(cfg.epsilons.front(), false), cfg.stepper);
    const auto dir = scratch("traj");
    write_trajectory(dir, tr, json{{"scenario", cfg.scenario}});
    const auto manifest = json::parse(slurp(dir / "manifest.json"));
    EXPECT_EQ(manifest.at("spec").at("scenario"), cfg.scenario);
    EXPECT_EQ(manifest.at("files").size(), tr.u.size());
    EXPECT_EQ(manifest.at("grid").at("nx").get<int>(), tr.macro.space.n);
    const auto last = manifest.at("files").back().at("file").get<std::string>();
    const auto text = slurp(dir / last);
    EXPECT_EQ(text.rfind("x,u,v\n", 0), 0u);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), static_cast<long>(tr.macro.space.node_count() + 1));
    // Values are written with round-trip precision.
    std::istringstream is(text);
    std::string line;
    std::getline(is, line);
    for (std::size_t i = 0; i < tr.macro.space.node_count(); ++i) {
        std::getline(is, line);
        const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
        EXPECT_EQ(std::stod(line.substr(c1 + 1, c2 - c1 - 1)), tr.u.back()[i]);
    }
    fs::remove_all(dir);
}

TEST(Io, TensorJson)
{
    const auto c = CoefficientField::layered(1);
    const auto t = homogenized_tensor(Regime::subcritical, c, CellGrid(1, 64, 8), 1.0, std::nullopt, CellOptions{});
    const auto j = tensor_to_json(t);
    EXPECT_EQ(j.at("regime"), "subcritical");
    EXPECT_NEAR(j.at("matrix").at(0).at(0).get<double>(), std::sqrt(3.0) / 4.0, 1e-3);
    EXPECT_EQ(j.at("quadrature").at("ny").get<int>(), 64);
}
