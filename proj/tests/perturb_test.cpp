#include <gtest/gtest.h>

#include <Eigen/SVD>
#include <random>

#include "kbm/eig.hpp"
#include "kbm/operator.hpp"
#include "kbm/perturb.hpp"
#include "kbm/spectra.hpp"
#include "test_util.hpp"

using namespace kbm;

namespace {

const CasimirBlock kSphere = finite_block(2.0, 1.0);
const LadderCoefficients kSphereCoeffs = ladder_coefficients(kSphere);

std::vector<CasimirBlock> sample_blocks() {
  return {finite_block(2.0, 1.0), finite_block(6.0, 1.0),         finite_block(12.0, 1.0),
          finite_block(8.0, 4.0), truncated_block(1.0, 0.0, 32),  truncated_block(2.0, 0.0, 32),
          truncated_block(2.0, -1.0, 32), truncated_block(5.0, -1.0, 32), truncated_block(10.0, -1.0, 34),
          truncated_block(3.838, -1.0, 32)};
}

/// sigma_max of X (Delta_S - zeta)^{-1} from dense matrices and SVD.
double dense_factor_norm(const CasimirBlock& b, cd zeta) {
  const auto coeffs = ladder_coefficients(b);
  const Eigen::MatrixXcd x = ladder_matrices(coeffs).x();
  Eigen::MatrixXcd d = assemble_laplacian(b).to_dense();
  d.diagonal().array() -= zeta;
  const Eigen::MatrixXcd m = x * d.inverse();
  return Eigen::JacobiSVD<Eigen::MatrixXcd>(m).singularValues()(0);
}

}  // namespace

TEST(RsSeries, FirstOrderVanishes) {
  for (const auto& b : sample_blocks()) {
    const auto s = rs_series(b, ladder_coefficients(b));
    EXPECT_LE(std::abs(s.mu1), 1e-15);
    EXPECT_EQ(s.mu0, cd(0.0));
  }
}

TEST(RsSeries, SecondOrderIsHalfEta) {
  for (const auto& b : sample_blocks()) {
    const auto s = rs_series(b, ladder_coefficients(b));
    EXPECT_NEAR(s.mu2.real(), 0.5 * b.eta, 1e-12 * b.eta);
    EXPECT_NEAR(s.mu2.imag(), 0.0, 1e-15);
    EXPECT_NEAR(s.second_derivative().real(), b.eta, 1e-8 * b.eta);
  }
  const auto sphere = rs_series(kSphere, kSphereCoeffs);
  EXPECT_NEAR(sphere.mu2.real(), 1.0, 1e-15);
}

TEST(RsSeries, TrivialBlockIsZero) {
  const auto b = finite_block(0.0, -1.0);
  const auto s = rs_series(b, ladder_coefficients(b));
  EXPECT_EQ(s.mu1, cd(0.0));
  EXPECT_EQ(s.mu2, cd(0.0));
  ASSERT_EQ(s.phi0.size(), 1u);
  EXPECT_EQ(s.phi0[0], cd(1.0));
}

TEST(RsSeries, VectorInvariants) {
  for (const auto& b : sample_blocks()) {
    const auto coeffs = ladder_coefficients(b);
    const auto s = rs_series(b, coeffs);
    EXPECT_NEAR(norm2(s.phi0), 1.0, 1e-15);
    for (int j = 0; j < b.dim(); ++j) {
      if (j != b.index_of(0)) EXPECT_LE(std::abs(s.phi0[j]), 1e-14);
    }
    EXPECT_LE(std::abs(inner(s.phi1, s.phi0)), 1e-12);
    // (Delta_S - mu0) phi1 + (X - mu1) phi0 = 0.
    const auto lap = assemble_laplacian(b).apply(s.phi1);
    const auto xphi0 = assemble_X(b, coeffs).apply(s.phi0);
    std::vector<cd> r(lap.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      r[i] = lap[i] - s.mu0 * s.phi1[i] + xphi0[i] - s.mu1 * s.phi0[i];
    }
    EXPECT_LE(norm2(r), 1e-10);
  }
}

TEST(RsSeries, AgreesWithTrackedBranch) {
  for (const auto& b : {finite_block(2.0, 1.0), truncated_block(5.0, -1.0, 32), truncated_block(1.0, 0.0, 32)}) {
    const auto coeffs = ladder_coefficients(b);
    const auto s = rs_series(b, coeffs);
    std::vector<double> xs, errs;
    for (int p = 3; p <= 9; ++p) {
      const double x = std::ldexp(1.0, -p);
      const auto br = track_branch(b, coeffs, x, 16);
      ASSERT_TRUE(br.complete());
      xs.push_back(x);
      errs.push_back(std::abs(br.last_mu() - (s.mu1 * x + s.mu2 * x * x)));
    }
    EXPECT_GE(fit_loglog_slope(xs, errs), 2.7);
  }
}

TEST(Riesz, UnperturbedProjectionOnSlotZero) {
  const auto p = riesz_projection(assemble_T(kSphere, kSphereCoeffs, 0.0), default_contour());
  Eigen::MatrixXcd expected = Eigen::MatrixXcd::Zero(3, 3);
  expected(1, 1) = 1.0;
  EXPECT_LE((p - expected).norm(), 1e-12);
}

TEST(Riesz, RankOneAtSmallParameter) {
  const auto op = assemble_T(kSphere, kSphereCoeffs, 0.3);
  const auto p = riesz_projection(op, default_contour());
  EXPECT_LE((p * p - p).norm(), 1e-8);
  EXPECT_LE(std::abs(p.trace() - 1.0), 1e-8);
  // The enclosed eigenvalue is recovered as tr(P T).
  EXPECT_LE(std::abs((p * op.to_dense()).trace() - 0.1), 1e-10);
  const Contour around_one{cd(1.0, 0.0), 0.05, 64};
  const auto q = riesz_projection(op, around_one);
  EXPECT_LE(std::abs(q.trace() - 1.0), 1e-8);
  EXPECT_LE((q * q - q).norm(), 1e-8);
}

TEST(Riesz, TraceCountsEnclosedEigenvalues) {
  const auto b = truncated_block(5.0, -1.0, 16);
  const auto op = assemble_T(b, ladder_coefficients(b), -0.3);
  const auto ev = eig_dense(op);
  // Radii sit halfway between the clusters near k^2.
  for (const Contour& c : {Contour{cd(0.0, 0.0), 0.5, 64}, Contour{cd(0.0, 0.0), 2.5, 128},
                           Contour{cd(0.0, 0.0), 6.5, 128}}) {
    int inside = 0;
    for (const cd& z : ev) inside += std::abs(z - c.center) < c.radius ? 1 : 0;
    const auto p = riesz_projection(op, c);
    EXPECT_LE(std::abs(p.trace() - static_cast<double>(inside)), 1e-8);
    EXPECT_LE((p * p - p).norm(), 1e-8);
  }
}

TEST(Riesz, QuadratureConverges) {
  const auto b = truncated_block(5.0, -1.0, 16);
  const auto op = assemble_T(b, ladder_coefficients(b), -0.25);
  const auto p64 = riesz_projection(op, Contour{cd(0.0, 0.0), 0.5, 64});
  const auto p128 = riesz_projection(op, Contour{cd(0.0, 0.0), 0.5, 128});
  const auto p256 = riesz_projection(op, Contour{cd(0.0, 0.0), 0.5, 256});
  EXPECT_LE((p256 - p128).norm(), 1e-10);
  EXPECT_LT((p256 - p128).norm(), (p128 - p64).norm());
}

TEST(Riesz, RejectsEigenvalueOnContour) {
  const auto op = assemble_T(kSphere, kSphereCoeffs, 0.0);
  try {
    riesz_projection(op, Contour{cd(0.0, 0.0), 1.0, 64});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::singular_solve);
  }
  EXPECT_THROW(riesz_projection(op, Contour{cd(0.0, 0.0), 0.5, 4}), Error);
  EXPECT_THROW(riesz_projection(op, Contour{cd(0.0, 0.0), -0.5, 64}), Error);
}

TEST(Resolvent, IdentityWithUnperturbedResolvent) {
  std::mt19937_64 rng(19);
  std::uniform_int_distribution<int> node(0, 63);
  const Contour c = default_contour();
  for (const auto& b : {finite_block(2.0, 1.0), truncated_block(5.0, -1.0, 16)}) {
    const auto coeffs = ladder_coefficients(b);
    const double x = 0.05;
    const Eigen::MatrixXcd xm = assemble_X(b, coeffs).to_dense();
    const auto n = b.dim();
    for (int trial = 0; trial < 8; ++trial) {
      const cd zeta = c.node(node(rng));
      const Eigen::MatrixXcd rx = dense_resolvent(assemble_T(b, coeffs, x), zeta);
      const Eigen::MatrixXcd r0 = dense_resolvent(assemble_T(b, coeffs, 0.0), zeta);
      const Eigen::MatrixXcd rhs =
          r0 * (Eigen::MatrixXcd::Identity(n, n) + x * xm * r0).inverse();
      const double diff = Eigen::JacobiSVD<Eigen::MatrixXcd>(rx - rhs).singularValues()(0);
      EXPECT_LE(diff, 1e-9);
    }
  }
}

TEST(Resolvent, MatchesDenseInverse) {
  const auto b = truncated_block(2.0, 0.0, 10);
  const auto op = assemble_T(b, ladder_coefficients(b), cd(0.4, 0.2));
  const cd zeta(0.3, -0.2);
  Eigen::MatrixXcd m = op.to_dense();
  m.diagonal().array() -= zeta;
  EXPECT_LE((dense_resolvent(op, zeta) - m.inverse()).norm(), 1e-12);
}

TEST(SpectralNorm, PowerIterationAgreesWithSvd) {
  for (const auto& b : {finite_block(12.0, 1.0), truncated_block(5.0, -1.0, 32), truncated_block(8.0, -1.0, 64)}) {
    const auto f = perturbed_resolvent_factor(b, ladder_coefficients(b), cd(0.3, 0.4));
    const auto n = spectral_norm(f);
    ASSERT_FALSE(std::isnan(n.dense));
    EXPECT_NEAR(n.power, n.dense, 1e-9 * n.dense);
  }
}

TEST(PerturbationRadius, SphereBlock) {
  const double r = perturbation_radius(kSphere, kSphereCoeffs, default_contour());
  EXPECT_LE(r, 0.5 + 1e-12);
  double oracle = std::numeric_limits<double>::infinity();
  const Contour c = default_contour();
  for (int j = 0; j < c.nodes; ++j) oracle = std::min(oracle, 1.0 / dense_factor_norm(kSphere, c.node(j)));
  EXPECT_NEAR(r, oracle, 1e-10);
}

TEST(PerturbationRadius, TrivialAndHyperbolic) {
  const auto z = finite_block(0.0, 1.0);
  EXPECT_TRUE(std::isinf(perturbation_radius(z, ladder_coefficients(z), default_contour())));
  const auto h = truncated_block(8.0, -1.0, 64);
  EXPECT_LE(perturbation_radius(h, ladder_coefficients(h), default_contour()), 0.25 + 1e-12);
}

TEST(PerturbationRadius, DecaysWithEta) {
  double prev = std::numeric_limits<double>::infinity();
  for (double eta : {2.0, 8.0, 32.0}) {
    const auto b = truncated_block(eta, 0.0, default_truncation_k(eta));
    const double r = perturbation_radius(b, ladder_coefficients(b), default_contour());
    EXPECT_LT(r, prev);
    EXPECT_LE(r, 0.5 / std::sqrt(0.5 * eta) + 1e-12);
    prev = r;
  }
}

TEST(RemarkBound, Examples) {
  const auto a = remark_bound(2.0, 0.5);
  EXPECT_NEAR(a.computed, 2.0, 1e-14);
  EXPECT_NEAR(a.closed_form, 2.0, 1e-14);
  const auto b = remark_bound(8.0, 0.5);
  EXPECT_NEAR(b.computed, 4.0, 1e-14);
  EXPECT_NEAR(b.closed_form, 4.0, 1e-14);
  const auto c = remark_bound(2.0, 0.25);
  EXPECT_NEAR(c.computed, 4.0, 1e-14);
  EXPECT_LE(c.relative_error(), 1e-10);
}

TEST(RemarkBound, IndependentOfCurvatureAndComplexZeta) {
  for (double K : {-1.0, 0.0, 1.0}) {
    const double eta = K > 0.0 ? 6.0 : 5.0;
    EXPECT_LE(remark_bound(eta, cd(0.3, 0.4), K).relative_error(), 1e-12);
  }
}

TEST(RemarkBound, Rejections) {
  EXPECT_THROW(remark_bound(2.0, 1.0), Error);
  EXPECT_THROW(remark_bound(2.0, 0.0), Error);
  EXPECT_THROW(remark_bound(0.0, 0.5), Error);
}
