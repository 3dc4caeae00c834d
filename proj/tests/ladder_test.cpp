#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "kbm/eig.hpp"
#include "kbm/ladder.hpp"
#include "kbm/operator.hpp"
#include "test_util.hpp"

using namespace kbm;

TEST(LadderCoeffSq, Examples) {
  EXPECT_DOUBLE_EQ(ladder_coeff_sq(2.0, 1.0, 0), 0.5);
  for (int k : {-7, -1, 0, 3, 40}) EXPECT_DOUBLE_EQ(ladder_coeff_sq(3.7, 0.0, k), 3.7 / 4.0);
  EXPECT_EQ(ladder_coeff_sq(0.0, -1.0, 0), 0.0);
}

TEST(LadderCoeffSq, NegativeOutsideSphereLadder) {
  EXPECT_DOUBLE_EQ(ladder_coeff_sq(2.0, 1.0, 1), 0.0);
  EXPECT_LT(ladder_coeff_sq(2.0, 1.0, 2), 0.0);
}

TEST(LadderExtent, SphereBlocks) {
  const auto e2 = ladder_extent(2.0, 1.0);
  EXPECT_EQ(e2.k_min, -1);
  EXPECT_EQ(e2.k_max, 1);
  EXPECT_TRUE(e2.finite);
  const auto e6 = ladder_extent(6.0, 1.0);
  EXPECT_EQ(e6.k_min, -2);
  EXPECT_EQ(e6.k_max, 2);
  EXPECT_TRUE(e6.finite);
  // K = 4, l = 1.
  const auto e8 = ladder_extent(8.0, 4.0);
  EXPECT_EQ(e8.k_min, -1);
  EXPECT_EQ(e8.k_max, 1);
}

TEST(LadderExtent, InfiniteLaddersAndTrivialBlock) {
  const auto e = ladder_extent(5.0, -1.0);
  EXPECT_FALSE(e.finite);
  EXPECT_FALSE(e.bounded());
  EXPECT_FALSE(ladder_extent(1.0, 0.0).finite);
  for (double K : {-1.0, 0.0, 1.0}) {
    const auto z = ladder_extent(0.0, K);
    EXPECT_EQ(z.k_min, 0);
    EXPECT_EQ(z.k_max, 0);
  }
}

TEST(LadderExtent, Rejections) {
  try {
    ladder_extent(-1.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_argument);
  }
  try {
    ladder_extent(3.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_casimir_value);
  }
}

TEST(MakeBlock, RejectsRangeOutsideFiniteLadder) {
  EXPECT_THROW(make_block(2.0, 1.0, -2, 2), Error);
  EXPECT_NO_THROW(make_block(5.0, -1.0, -20, 20));
}

TEST(LadderCoefficients, GaugeAndNormFormulas) {
  for (const auto& block : {finite_block(2.0, 1.0), finite_block(12.0, 1.0), make_block(5.0, -1.0, -20, 20),
                            make_block(1.0, 0.0, -8, 8), finite_block(8.0, 4.0)}) {
    const auto c = ladder_coefficients(block);
    ASSERT_EQ(c.a.size(), static_cast<std::size_t>(block.dim() - 1));
    const double eta = block.eta, K = block.curvature;
    for (int k = block.k_min; k < block.k_max; ++k) {
      const double a = c.at(k);
      EXPECT_GE(a, 0.0);
      EXPECT_NEAR(a * a, 0.25 * (eta - K * k - K * k * k), 1e-12);
      // X_- norm formula read on slot k + 1.
      const double kk = k + 1;
      EXPECT_NEAR(a * a, 0.25 * (eta + K * kk - K * kk * kk), 1e-12);
    }
  }
}

TEST(LadderCoefficients, FiniteLadderTerminates) {
  for (double eta : {2.0, 6.0, 12.0, 20.0}) {
    const auto b = finite_block(eta, 1.0);
    EXPECT_NEAR(ladder_coeff_sq(eta, 1.0, b.k_max), 0.0, 1e-12);
    EXPECT_NEAR(ladder_coeff_sq(eta, 1.0, b.k_min - 1), 0.0, 1e-12);
    EXPECT_EQ(b.k_min, -b.k_max);
  }
}

TEST(CasimirResidual, Examples) {
  EXPECT_LE(casimir_residual(ladder_coefficients(finite_block(2.0, 1.0))), 1e-12);
  EXPECT_LE(casimir_residual(ladder_coefficients(make_block(5.0, -1.0, -20, 20))), 1e-12);
  EXPECT_EQ(casimir_residual(ladder_coefficients(finite_block(0.0, -1.0))), 0.0);
}

TEST(CasimirResidual, TruncationEdgesAreExcluded) {
  const auto b = make_block(5.0, -1.0, -6, 6);
  const auto [first, last] = interior_rows(b);
  EXPECT_EQ(first, 1);
  EXPECT_EQ(last, b.dim() - 2);
  EXPECT_LE(casimir_residual(ladder_coefficients(b)), 1e-12);
}

TEST(LadderMatrices, AdjointRelation) {
  for (const auto& block : {finite_block(6.0, 1.0), make_block(2.0, -1.0, -10, 10)}) {
    const auto m = ladder_matrices(ladder_coefficients(block));
    EXPECT_TRUE((m.x_plus.adjoint() + m.x_minus).isZero(0.0));
  }
}

TEST(LadderMatrices, ProductScalars) {
  for (const auto& block : {finite_block(12.0, 1.0), make_block(5.0, -1.0, -15, 15), make_block(2.0, 0.0, -5, 5)}) {
    const auto m = ladder_matrices(ladder_coefficients(block));
    const Eigen::MatrixXcd pm = m.x_plus * m.x_minus;
    for (int j = 1; j < block.dim(); ++j) {
      const double k = block.k_min + j;
      EXPECT_NEAR(std::abs(pm(j, j) - (-0.25 * (block.eta + block.curvature * (k - k * k)))), 0.0, 1e-12);
    }
  }
}

TEST(LadderMatrices, VerticalCommutators) {
  const auto block = make_block(5.0, -1.0, -12, 12);
  const auto m = ladder_matrices(ladder_coefficients(block));
  const cd i(0.0, 1.0);
  const Eigen::MatrixXcd cp = m.v * m.x_plus - m.x_plus * m.v - i * m.x_plus;
  const Eigen::MatrixXcd cm = m.v * m.x_minus - m.x_minus * m.v + i * m.x_minus;
  EXPECT_LE(cp.cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LE(cm.cwiseAbs().maxCoeff(), 1e-13);
}

TEST(LadderMatrices, SkewSymmetricX) {
  for (const auto& block : {finite_block(2.0, 1.0), make_block(10.0, -1.0, -32, 32)}) {
    const Eigen::MatrixXcd x = ladder_matrices(ladder_coefficients(block)).x();
    EXPECT_TRUE((x + x.transpose()).isZero(0.0));
    EXPECT_TRUE(x.imag().isZero(0.0));
  }
}

// Conjugating the ladder by a diagonal unitary changes the phase convention
// but not the spectrum of T(x).
TEST(LadderMatrices, GaugeInvariance) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (const auto& block : {finite_block(6.0, 1.0), make_block(5.0, -1.0, -10, 10)}) {
    const auto coeffs = ladder_coefficients(block);
    const cd x(-0.37, 0.0);
    const auto op = assemble_T(block, coeffs, x);
    const auto reference = eig_dense(op);
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXcd d(block.dim());
      for (int j = 0; j < block.dim(); ++j) d(j) = std::polar(1.0, phase(rng));
      const Eigen::MatrixXcd rotated = d.asDiagonal().inverse() * op.to_dense() * d.asDiagonal();
      Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(rotated, false);
      const auto& ev = solver.eigenvalues();
      const std::vector<cd> spectrum(ev.data(), ev.data() + ev.size());
      EXPECT_LE(test_util::multiset_distance(reference, spectrum), 1e-10);
    }
  }
}
