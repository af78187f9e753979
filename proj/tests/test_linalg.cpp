#include <homoglab/linalg.hpp>
#include <homoglab/mesh.hpp>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <random>

using namespace homoglab;

namespace {

// Random sparse SPD: diagonally dominant with random off-diagonals.
SparseMatrix random_spd(std::size_t n, std::mt19937_64& rng, Eigen::MatrixXd& dense)
{
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    dense = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < std::min(n, i + 4); ++j) {
            const double v = U(rng);
            dense(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            dense(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
        }
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        dense(ii, ii) = dense.row(ii).cwiseAbs().sum() + 0.5 + std::abs(U(rng));
    }
    TripletBuilder tb(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double v = dense(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (v != 0.0)
                tb.add(i, j, v);
        }
    return tb.build(true);
}

Eigen::VectorXd to_eigen(const std::vector<double>& v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace

TEST(Linalg, TripletBuilderSumsDuplicates)
{
    TripletBuilder tb(2, 2);
    tb.add(0, 0, 1.0);
    tb.add(0, 0, 2.0);
    tb.add(1, 1, 4.0);
    tb.add(0, 1, -1.0);
    tb.add(1, 0, -1.0);
    const auto A = tb.build(true);
    EXPECT_EQ(A.at(0, 0), 3.0);
    EXPECT_EQ(A.at(0, 1), -1.0);
    EXPECT_EQ(A.at(1, 1), 4.0);
    EXPECT_EQ(A.symmetry_defect(), 0.0);
}

TEST(Linalg, ApplyMatchesDense)
{
    std::mt19937_64 rng(7);
    Eigen::MatrixXd D;
    const auto A = random_spd(40, rng, D);
    std::vector<double> x(40);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (double& v : x)
        v = U(rng);
    const auto y = A * std::span<const double>(x);
    const Eigen::VectorXd ref = D * to_eigen(x);
    for (std::size_t i = 0; i < 40; ++i)
        EXPECT_NEAR(y[i], ref(static_cast<Eigen::Index>(i)), 1e-13);
}

TEST(Linalg, CgMatchesDenseCholesky)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (std::size_t n : {1u, 5u, 60u, 200u}) {
        Eigen::MatrixXd D;
        const auto A = random_spd(n, rng, D);
        std::vector<double> b(n);
        for (double& v : b)
            v = U(rng);
        const auto res = solve_spd(A, b, SolverConfig{1e-13});
        const Eigen::VectorXd ref = D.llt().solve(to_eigen(b));
        EXPECT_LE((to_eigen(res.x) - ref).norm(), 1e-10 * ref.norm()) << "n = " << n;
        EXPECT_LE(res.relative_residual, 1e-13);
    }
}

TEST(Linalg, ZeroMeanMatchesPseudoinverse)
{
    // Periodic 1D Laplacian: kernel = constants.
    const SpatialGrid g{1, 24, 1.0, true};
    DofMap dofs(g);
    const std::vector<Tensor> id(g.element_count(), Tensor::identity(1));
    const auto A = assemble_stiffness(g, dofs, id);
    ASSERT_EQ(A.rows(), 24u);
    Eigen::MatrixXd D(24, 24);
    for (std::size_t i = 0; i < 24; ++i)
        for (std::size_t j = 0; j < 24; ++j)
            D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = A.at(i, j);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::vector<double> b(24);
    for (double& v : b)
        v = U(rng);
    const auto res = solve_spd(A, b, SolverConfig{1e-13}, Constraint::zero_mean);
    const Eigen::VectorXd ref = D.completeOrthogonalDecomposition().pseudoInverse() * to_eigen(b);
    EXPECT_LE((to_eigen(res.x) - ref).norm(), 1e-9 * ref.norm());
    EXPECT_NEAR(to_eigen(res.x).sum(), 0.0, 1e-12);
}

TEST(Linalg, InitialGuessIsHonoured)
{
    std::mt19937_64 rng(5);
    Eigen::MatrixXd D;
    const auto A = random_spd(30, rng, D);
    std::vector<double> b(30, 1.0);
    const auto exact = solve_spd(A, b, SolverConfig{1e-14});
    const auto warm = solve_spd(A, b, SolverConfig{1e-10}, Constraint::none, std::span<const double>(exact.x));
    EXPECT_LE(warm.iterations, 1u);
}

TEST(Linalg, ZeroRightHandSide)
{
    std::mt19937_64 rng(9);
    Eigen::MatrixXd D;
    const auto A = random_spd(10, rng, D);
    const auto res = solve_spd(A, std::vector<double>(10, 0.0));
    for (double v : res.x)
        EXPECT_EQ(v, 0.0);
}

TEST(Linalg, IndefiniteMatrixIsReported)
{
    TripletBuilder tb(2, 2);
    tb.add(0, 0, 1.0);
    tb.add(1, 1, -1.0);
    const auto A = tb.build(true);
    EXPECT_THROW(solve_spd(A, std::vector<double>{1.0, 1.0}), DefinitenessError);
}

TEST(Linalg, DimensionMismatchThrows)
{
    TripletBuilder tb(2, 2);
    tb.add(0, 0, 1.0);
    tb.add(1, 1, 1.0);
    const auto A = tb.build(true);
    EXPECT_THROW(solve_spd(A, std::vector<double>{1.0}), ConfigError);
    EXPECT_THROW(solve_spd(A, std::vector<double>{1.0, 1.0}, SolverConfig{2.0}), ConfigError);
}

TEST(Linalg, IterationCapRaisesSolverError)
{
    std::mt19937_64 rng(13);
    Eigen::MatrixXd D;
    const auto A = random_spd(100, rng, D);
    std::vector<double> b(100, 1.0);
    b[3] = -7.0;
    EXPECT_THROW(solve_spd(A, b, SolverConfig{1e-14, 1}), SolverError);
}
