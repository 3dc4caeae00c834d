#include <gtest/gtest.h>

#include <random>

#include "kbm/eig.hpp"
#include "kbm/operator.hpp"
#include "kbm/truncation.hpp"
#include "test_util.hpp"

using namespace kbm;

namespace {
const double kA = std::sqrt(2.0) / 2.0;
}

TEST(AssembleT, UnperturbedSphereBlock) {
  const auto b = finite_block(2.0, 1.0);
  const auto op = assemble_T(b, ladder_coefficients(b), 0.0);
  ASSERT_EQ(op.dim(), 3);
  EXPECT_EQ(op.diag[0], cd(1.0));
  EXPECT_EQ(op.diag[1], cd(0.0));
  EXPECT_EQ(op.diag[2], cd(1.0));
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(op.sub[j], cd(0.0));
    EXPECT_EQ(op.sup[j], cd(0.0));
  }
  EXPECT_EQ(op.k_offset, -1);
}

TEST(AssembleT, PerturbedSphereBlock) {
  const auto b = finite_block(2.0, 1.0);
  const auto op = assemble_T(b, ladder_coefficients(b), 0.3);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(std::abs(op.sub[j] - 0.3 * kA), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(op.sup[j] + 0.3 * kA), 0.0, 1e-15);
  }
  EXPECT_EQ(op.meta.kind, OperatorKind::family_t);
  EXPECT_EQ(op.meta.parameter, cd(0.3));
}

TEST(AssembleT, TrivialBlock) {
  for (double K : {-1.0, 0.0, 1.0}) {
    const auto b = finite_block(0.0, K);
    const auto op = assemble_T(b, ladder_coefficients(b), cd(0.7, -0.2));
    ASSERT_EQ(op.dim(), 1);
    EXPECT_EQ(op.diag[0], cd(0.0));
  }
}

TEST(AssembleT, DiagonalIsKSquared) {
  const auto b = make_block(3.0, -1.0, -9, 9);
  const auto op = assemble_T(b, ladder_coefficients(b), cd(0.1, 0.4));
  for (int j = 0; j < op.dim(); ++j) {
    const double k = j + op.k_offset;
    EXPECT_EQ(op.diag[j], cd(k * k));
  }
}

TEST(AssembleT, RejectsInconsistentCoefficients) {
  const auto b = make_block(3.0, -1.0, -9, 9);
  const auto other = ladder_coefficients(make_block(3.0, -1.0, -8, 8));
  try {
    assemble_T(b, other, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::inconsistent_block);
  }
}

TEST(AssemblePgamma, SphereBlockAtGamma4) {
  const auto b = finite_block(2.0, 1.0);
  const auto op = assemble_Pgamma(b, ladder_coefficients(b), 4.0);
  EXPECT_EQ(op.diag[0], cd(8.0));
  EXPECT_EQ(op.diag[1], cd(0.0));
  EXPECT_EQ(op.diag[2], cd(8.0));
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(std::abs(op.sub[j] + 4.0 * kA), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(op.sup[j] - 4.0 * kA), 0.0, 1e-14);
  }
}

TEST(AssemblePgamma, MatchesRescaledFamily) {
  for (const auto& b : {finite_block(6.0, 1.0), make_block(5.0, -1.0, -16, 16), make_block(2.0, 0.0, -8, 8)}) {
    const auto c = ladder_coefficients(b);
    for (double gamma : {1.0, 10.0, 100.0}) {
      const Eigen::MatrixXcd p = assemble_Pgamma(b, c, gamma).to_dense();
      const Eigen::MatrixXcd t = 0.5 * gamma * gamma * assemble_T(b, c, -2.0 / gamma).to_dense();
      for (int i = 0; i < p.rows(); ++i) {
        for (int j = 0; j < p.cols(); ++j) {
          EXPECT_LE(std::abs(p(i, j) - t(i, j)), 1e-13 * std::max(1.0, std::abs(p(i, j))));
        }
      }
    }
  }
}

TEST(AssemblePgamma, TrivialAndInvalid) {
  const auto b = finite_block(0.0, 1.0);
  const auto op = assemble_Pgamma(b, ladder_coefficients(b), 3.0);
  EXPECT_EQ(op.dim(), 1);
  EXPECT_EQ(op.diag[0], cd(0.0));
  const auto s = finite_block(2.0, 1.0);
  EXPECT_THROW(assemble_Pgamma(s, ladder_coefficients(s), 0.0), Error);
  EXPECT_THROW(assemble_Pgamma(s, ladder_coefficients(s), -1.0), Error);
}

TEST(Operator, XPartIsSkew) {
  for (const auto& b : {finite_block(12.0, 1.0), make_block(10.0, -1.0, -40, 40)}) {
    const auto c = ladder_coefficients(b);
    const auto x = assemble_X(b, c);
    for (std::size_t j = 0; j < x.sub.size(); ++j) EXPECT_EQ(x.sub[j] + x.sup[j], cd(0.0));
    const auto t = assemble_T(b, c, 0.45);
    for (std::size_t j = 0; j < t.sub.size(); ++j) EXPECT_EQ(t.sub[j] + t.sup[j], cd(0.0));
    const auto p = assemble_Pgamma(b, c, 2.5);
    for (std::size_t j = 0; j < p.sub.size(); ++j) EXPECT_EQ(p.sub[j] + p.sup[j], cd(0.0));
  }
}

TEST(Operator, XHasNoRealEnergy) {
  std::mt19937_64 rng(11);
  const auto b = make_block(5.0, -1.0, -30, 30);
  const auto x = assemble_X(b, ladder_coefficients(b));
  for (int trial = 0; trial < 50; ++trial) {
    auto v = test_util::random_vector(static_cast<std::size_t>(b.dim()), rng);
    const double n = norm2(v);
    for (auto& z : v) z /= n;
    EXPECT_LE(std::abs(inner(x.apply(v), v).real()), 1e-14);
  }
}

TEST(Operator, RealParameterSpectrumIsConjugationClosed) {
  for (const auto& b : {finite_block(12.0, 1.0), make_block(5.0, -1.0, -20, 20)}) {
    const auto c = ladder_coefficients(b);
    for (double x : {-0.3, 0.8, -2.0}) {
      const auto ev = eig_dense(assemble_T(b, c, x));
      std::vector<cd> conj(ev.size());
      for (std::size_t i = 0; i < ev.size(); ++i) conj[i] = std::conj(ev[i]);
      EXPECT_LE(test_util::multiset_distance(ev, conj), 1e-10);
    }
  }
}

TEST(Operator, ApplyMatchesDense) {
  std::mt19937_64 rng(3);
  const auto b = make_block(2.0, -1.0, -6, 6);
  const auto op = assemble_T(b, ladder_coefficients(b), cd(0.2, -0.7));
  const auto v = test_util::random_vector(static_cast<std::size_t>(op.dim()), rng);
  const auto w = op.apply(v);
  const Eigen::VectorXcd dense = op.to_dense() * Eigen::Map<const Eigen::VectorXcd>(v.data(), op.dim());
  for (int i = 0; i < op.dim(); ++i) EXPECT_LE(std::abs(w[i] - dense(i)), 1e-13);
  const Eigen::MatrixXcd adj = op.adjoint().to_dense();
  EXPECT_LE((adj - op.to_dense().adjoint()).norm(), 0.0);
}

TEST(TridiagonalLU, SolvesShiftedSystems) {
  std::mt19937_64 rng(5);
  const auto b = make_block(5.0, -1.0, -12, 12);
  const auto op = assemble_T(b, ladder_coefficients(b), cd(-0.6, 0.1));
  for (cd shift : {cd(0.3, 0.2), cd(4.0, 0.0), cd(0.0, 0.0)}) {
    const auto rhs = test_util::random_vector(static_cast<std::size_t>(op.dim()), rng);
    TridiagonalLU lu(op, shift);
    const auto x = lu.solve(rhs);
    Eigen::MatrixXcd m = op.to_dense();
    m.diagonal().array() -= shift;
    const Eigen::VectorXcd r =
        m * Eigen::Map<const Eigen::VectorXcd>(x.data(), op.dim()) - Eigen::Map<const Eigen::VectorXcd>(rhs.data(), op.dim());
    EXPECT_LE(r.norm(), 1e-10);
  }
}

TEST(Truncate, FixedPolicyEchoes) {
  const auto b = truncate(5.0, -1.0, TruncationPolicy::fixed(32));
  EXPECT_EQ(b.k_min, -32);
  EXPECT_EQ(b.k_max, 32);
  EXPECT_FALSE(b.finite);
  const auto t = truncate(1.0, 0.0, TruncationPolicy::fixed(16));
  EXPECT_EQ(t.k_min, -16);
  EXPECT_EQ(t.k_max, 16);
}

TEST(Truncate, AdaptiveDoublingAtTarget) {
  const auto result = truncate_certified(5.0, -1.0, TruncationPolicy::adaptive(1e-10, {cd(-0.2, 0.0)}));
  EXPECT_TRUE(result.certified);
  EXPECT_EQ(result.block.k_max, 32);
  EXPECT_LT(result.certificate, 1e-10);
  // Independent check: dense spectra of the window and the doubled window
  // both contain the same eigenvalue near 0 to within the tolerance.
  const auto small = result.block;
  const auto big = truncated_block(5.0, -1.0, 2 * small.k_max);
  const auto ev_small = eig_dense(assemble_T(small, ladder_coefficients(small), -0.2));
  const auto ev_big = eig_dense(assemble_T(big, ladder_coefficients(big), -0.2));
  auto closest_to_zero = [](const std::vector<cd>& ev) {
    cd best = ev.front();
    for (const cd& z : ev) {
      if (std::abs(z) < std::abs(best)) best = z;
    }
    return best;
  };
  EXPECT_LT(std::abs(closest_to_zero(ev_small) - closest_to_zero(ev_big)), 1e-10);
}

TEST(Truncate, SmallWindowsGrowUntilCertified) {
  TruncationPolicy p = TruncationPolicy::adaptive(1e-10, {cd(-0.1, 0.0)});
  p.k_max = 2;
  const auto result = truncate_certified(10.0, -1.0, p);
  EXPECT_TRUE(result.certified);
  EXPECT_GT(result.tried.size(), 1u);
  EXPECT_EQ(result.tried.front(), 2);
}

TEST(Truncate, Rejections) {
  EXPECT_THROW(truncate(2.0, 1.0, TruncationPolicy::fixed(8)), Error);
  EXPECT_THROW(truncate(0.0, -1.0, TruncationPolicy::fixed(8)), Error);
  EXPECT_THROW(truncate(2.0, -1.0, TruncationPolicy::adaptive(1e-10)), Error);
  EXPECT_THROW(truncate(2.0, -1.0, TruncationPolicy::fixed(0)), Error);
}

TEST(Truncate, DefaultWindow) {
  EXPECT_EQ(default_truncation_k(1.0), 32);
  EXPECT_EQ(default_truncation_k(10.0), 34);
  EXPECT_EQ(default_truncation_k(100.0), 88);
}

TEST(Accretivity, Examples) {
  const auto s = finite_block(2.0, 1.0);
  EXPECT_GE(accretivity_minimum(assemble_Pgamma(s, ladder_coefficients(s), 3.0), 100, 1), -1e-12);
  const auto z = finite_block(0.0, 1.0);
  EXPECT_EQ(accretivity_minimum(assemble_Pgamma(z, ladder_coefficients(z), 3.0), 100, 1), 0.0);
  const auto h = truncated_block(5.0, -1.0, 64);
  EXPECT_GE(accretivity_minimum(assemble_Pgamma(h, ladder_coefficients(h), 0.5), 100, 1), -1e-12);
}

TEST(Accretivity, MatchesVerticalEnergy) {
  // For a single trial the minimum is (gamma^2 / 2) sum k^2 |v_k|^2.
  const auto b = truncated_block(5.0, -1.0, 10);
  const auto op = assemble_Pgamma(b, ladder_coefficients(b), 2.0);
  std::mt19937_64 rng(42);
  auto v = test_util::random_vector(static_cast<std::size_t>(b.dim()), rng);
  const double n = norm2(v);
  double energy = 0.0;
  for (int j = 0; j < b.dim(); ++j) {
    const double k = b.k_min + j;
    energy += 2.0 * k * k * std::norm(v[j] / n);
  }
  EXPECT_NEAR(accretivity_minimum(op, 1, 42), energy, 1e-12 * energy);
  EXPECT_THROW(accretivity_minimum(op, 0, 1), Error);
}
