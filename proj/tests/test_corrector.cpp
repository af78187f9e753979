#include <homoglab/config.hpp>
#include <homoglab/corrector.hpp>

#include <gtest/gtest.h>

using namespace homoglab;

namespace {

std::vector<double> numbers_of(const EpsilonResult& r)
{
    return {r.e_grad, r.e_flux, r.e_dt, r.e_naive, r.energy_defect, r.pairing_defect, r.corrector_norm,
            r.split_first, r.split_second, r.split_third, r.two_scale_defect, r.unfolding_defect, r.lambda_mass,
            r.hom_min_rayleigh, r.max_residual_eps, r.max_residual_hom};
}

} // namespace

TEST(Corrector, IdentityCoefficientHasNoCorrector)
{
    const auto rep = run_study(scenario("identity-sanity"));
    ASSERT_TRUE(rep.all_ok());
    for (const auto& r : rep.results) {
        EXPECT_LE(r.e_grad, 1e-10);
        EXPECT_LE(r.e_flux, 1e-10);
        EXPECT_LE(r.e_dt, 1e-8);
        EXPECT_LE(r.e_naive, 1e-10);
        EXPECT_LE(r.corrector_norm, 1e-12);
        EXPECT_LE(r.energy_defect, 1e-10);
    }
    ASSERT_EQ(rep.a_hom.size(), 1u);
    EXPECT_NEAR(rep.a_hom[0].second(0, 0), 1.0, 1e-12);
}

TEST(Corrector, FluxAndTimeDerivativeAreDominated)
{
    for (const char* name : {"layered-linear", "supercritical", "critical-pme", "coupled-gap"}) {
        const auto cfg = scenario(name);
        const double upper = cfg.coefficient->upper();
        const auto rep = run_study(cfg);
        ASSERT_TRUE(rep.all_ok()) << name;
        for (const auto& r : rep.results) {
            EXPECT_LE(r.e_flux, upper * r.e_grad + 1e-12) << name << " eps " << r.epsilon;
            EXPECT_LE(r.e_dt, r.e_flux + r.dt_constant * r.tau + 1e-12) << name;
            // Divergence is a contraction from L2 to H^-1, up to the Newton residual.
            EXPECT_LE(r.e_dt, r.e_flux * (1.0 + 1e-6) + 1e-7) << name;
        }
    }
}

TEST(Corrector, GradientErrorDecreasesWhileNaiveStagnates)
{
    const auto rep = run_study(scenario("layered-linear"));
    ASSERT_EQ(rep.results.size(), 3u);
    for (std::size_t i = 1; i < 3; ++i) {
        EXPECT_LT(rep.results[i].e_grad, rep.results[i - 1].e_grad);
        EXPECT_LT(rep.results[i].energy_defect, rep.results[i - 1].energy_defect);
        EXPECT_GT(rep.results[i].e_naive, 0.5 * rep.results[0].e_naive);
    }
    EXPECT_GT(rep.results.back().e_naive, 4.0 * rep.results.back().e_grad);
}

TEST(Corrector, ZeroBranchCarriesNoCorrector)
{
    const auto rep = run_study(scenario("critical-pme"));
    ASSERT_TRUE(rep.all_ok());
    EXPECT_TRUE(rep.zero_branch);
    for (const auto& r : rep.results) {
        EXPECT_GT(r.zero_branch_count, 0u);
        EXPECT_EQ(r.zero_branch_max_gradient, 0.0);
        EXPECT_GT(r.hom_min_rayleigh, rep.lambda * (1.0 - 1e-12));
    }
    for (double e : rep.spot_check_errors)
        EXPECT_LE(e, 1e-3);
}

TEST(Corrector, MismatchedInputsThrow)
{
    const auto cfg = scenario("layered-linear");
    const double eps = cfg.epsilons.front();
    const auto tensor = study_tensor(cfg);
    const auto te = solve_eps(cfg.problem(eps, false), cfg.stepper);
    const auto th = solve_hom(cfg.problem(eps, true), tensor, cfg.stepper);
    const auto g = geometry(eps, cfg.r, cfg.macro_grid(eps));
    EXPECT_NO_THROW(CorrectorAnalysis(te, th, tensor, *cfg.coefficient, g, cfg.r));

    const auto wrong = homogenized_tensor(Regime::supercritical, *cfg.coefficient, cfg.cell_grid(), cfg.p,
                                          std::nullopt, cfg.cell);
    EXPECT_THROW(CorrectorAnalysis(te, th, wrong, *cfg.coefficient, g, cfg.r), ConfigError);

    const double small = cfg.epsilons[1];
    const auto g_small = geometry(small, cfg.r, cfg.macro_grid(small));
    EXPECT_THROW(CorrectorAnalysis(te, th, tensor, *cfg.coefficient, g_small, cfg.r), AlignmentError);
    const auto th_small = solve_hom(cfg.problem(small, true), tensor, cfg.stepper);
    EXPECT_THROW(CorrectorAnalysis(te, th_small, tensor, *cfg.coefficient, g, cfg.r), AlignmentError);
}

TEST(Corrector, DeterministicAcrossRunsAndThreads)
{
    auto cfg = scenario("critical-fde");
    const auto a = run_study(cfg);
    const auto b = run_study(cfg);
    cfg.threads = 3;
    const auto c = run_study(cfg);
    ASSERT_EQ(a.results.size(), b.results.size());
    for (std::size_t i = 0; i < a.results.size(); ++i) {
        EXPECT_EQ(numbers_of(a.results[i]), numbers_of(b.results[i]));
        EXPECT_EQ(numbers_of(a.results[i]), numbers_of(c.results[i]));
    }
    EXPECT_EQ(a.spot_check_errors, c.spot_check_errors);
}

TEST(Corrector, FailuresAreRecordedPerEpsilon)
{
    auto cfg = scenario("critical-pme");
    cfg.stepper.max_newton = 1;
    const auto rep = run_study(cfg);
    EXPECT_FALSE(rep.all_ok());
    for (const auto& r : rep.results)
        if (!r.ok) {
            EXPECT_FALSE(r.error.empty());
        }
}

TEST(Corrector, StudyValidation)
{
    auto cfg = scenario("layered-linear");
    cfg.epsilons = {0.125, 0.25};
    EXPECT_THROW(run_study(cfg), ConfigError);
    cfg = scenario("layered-linear");
    cfg.cells_per_eps = 4;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = scenario("layered-linear");
    cfg.epsilons = {0.3};
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = scenario("layered-linear");
    cfg.coefficient = CoefficientField::layered(2);
    EXPECT_THROW(cfg.validate(), ConfigError);
}
