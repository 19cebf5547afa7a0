#include "ccgp/lfm.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "ccgp/quadrature.hpp"

using namespace ccgp;

namespace {

LfmParams one_treatment(double B, double D, double S, double ell, double tm) {
  LfmParams p;
  p.B = B;
  p.D = D;
  p.S = {S};
  p.ell = {ell};
  p.t_marks = {tm};
  return p;
}

constexpr auto kBoth = {ForceConvention::Unzeroed, ForceConvention::Zeroed};

}  // namespace

TEST(LfmMean, ConstantBOverD) {
  EXPECT_DOUBLE_EQ(lfm_mean(5, 2, 1), 2.0);
  EXPECT_DOUBLE_EQ(lfm_mean(0, 0, 3), 0.0);
  EXPECT_DOUBLE_EQ(lfm_mean(100, 3, 2), 1.5);
  EXPECT_THROW(lfm_mean(0, 1, 0), DomainError);
}

TEST(CrossCov, TrivialCases) {
  auto p = one_treatment(0, 1.0, 0.0, 0.5, 1.0);
  for (auto conv : kBoth) {
    EXPECT_DOUBLE_EQ(cross_cov_force_output(2.0, 1.5, 0, p, conv), 0.0);
    p.S[0] = 1.0;
    EXPECT_DOUBLE_EQ(cross_cov_force_output(0.0, 1.5, 0, p, conv), 0.0);
    p.S[0] = 0.0;
  }
  p.S[0] = 1.0;
  EXPECT_THROW(cross_cov_force_output(-1.0, 0.5, 0, p,
                                      ForceConvention::Unzeroed),
               DomainError);
}

// Frozen from the adaptive quadrature oracle at tol 1e-9.
TEST(CrossCov, MatchesFrozenOracleValues) {
  auto p = one_treatment(0, 1.0, 1.0, 0.5, 1.0);
  EXPECT_NEAR(cross_cov_force_output(2.0, 1.5, 0, p,
                                     ForceConvention::Unzeroed),
              0.5530443037472123, 1e-6);
  EXPECT_NEAR(cross_cov_force_output(2.0, 1.5, 0, p, ForceConvention::Zeroed),
              0.4674960888784635, 1e-6);
}

TEST(CovOutput, TrivialCases) {
  auto pa = one_treatment(0, 1.0, 0.0, 1.0, 1.0);
  auto pb = one_treatment(0, 0.5, 0.0, 1.0, 1.0);
  for (auto conv : kBoth)
    EXPECT_DOUBLE_EQ(cov_output_output(3, 2, pa, pb, {0}, conv), 0.0);

  pa.S[0] = 1.5;
  for (auto conv : kBoth) {
    const double var = cov_output_output(2.5, 2.5, pa, pa, {0}, conv);
    EXPECT_GE(var, 0.0);
  }
  // Mismatched shared force hyperparameters are rejected.
  pb.S[0] = 1.0;
  pb.ell[0] = 2.0;
  EXPECT_THROW(
      cov_output_output(3, 2, pa, pb, {0}, ForceConvention::Unzeroed),
      InputError);
}

TEST(CovOutput, MatchesFrozenOracleValues) {
  auto pa = one_treatment(0, 1.0, 1.0, 1.0, 1.0);
  auto pb = one_treatment(0, 0.5, 2.0, 1.0, 1.0);
  EXPECT_NEAR(cov_output_output(3, 2, pa, pb, {0}, ForceConvention::Unzeroed),
              1.0964137137966836, 1e-5);
  EXPECT_NEAR(cov_output_output(3, 2, pa, pb, {0}, ForceConvention::Zeroed),
              0.6995256143847122, 1e-5);
}

TEST(CrossCov, ZeroedDecouplesBeforeMark) {
  auto p = one_treatment(0, 0.8, 2.0, 0.7, 2.0);
  for (double t : {0.0, 0.5, 1.5, 2.0})
    for (double t2 : {0.5, 1.0, 3.0, 5.0})
      EXPECT_DOUBLE_EQ(
          cross_cov_force_output(t, t2, 0, p, ForceConvention::Zeroed), 0.0);
}

TEST(CrossCov, ExactlyLinearInS) {
  auto p = one_treatment(0, 1.3, 1.0, 0.6, 1.2);
  for (auto conv : kBoth) {
    const double base = cross_cov_force_output(2.7, 1.9, 0, p, conv);
    p.S[0] = -3.5;
    EXPECT_DOUBLE_EQ(cross_cov_force_output(2.7, 1.9, 0, p, conv),
                     -3.5 * base);
    p.S[0] = 1.0;
  }
}

TEST(CovOutput, ExactlyBilinearInS) {
  auto pa = one_treatment(0, 1.3, 1.0, 0.6, 1.2);
  auto pb = one_treatment(0, 0.4, 1.0, 0.6, 1.2);
  for (auto conv : kBoth) {
    const double base = cov_output_output(2.7, 1.9, pa, pb, {0}, conv);
    pa.S[0] = 2.0;
    pb.S[0] = -0.5;
    EXPECT_DOUBLE_EQ(cov_output_output(2.7, 1.9, pa, pb, {0}, conv),
                     -1.0 * base);
    pa.S[0] = pb.S[0] = 1.0;
  }
}

TEST(CrossCov, ContinuousInOutputTimeAcrossMark) {
  auto p = one_treatment(0, 1.1, 1.7, 0.5, 1.5);
  const double eps = 1e-6;
  for (auto conv : kBoth) {
    for (double t2 : {0.7, 1.5, 2.2}) {
      const double lo = cross_cov_force_output(1.5 - eps, t2, 0, p, conv);
      const double hi = cross_cov_force_output(1.5 + eps, t2, 0, p, conv);
      EXPECT_NEAR(lo, hi, 1e-4);
    }
  }
  // In the force argument the unzeroed form is continuous too.
  const double lo =
      cross_cov_force_output(2.5, 1.5 - eps, 0, p, ForceConvention::Unzeroed);
  const double hi =
      cross_cov_force_output(2.5, 1.5 + eps, 0, p, ForceConvention::Unzeroed);
  EXPECT_NEAR(lo, hi, 1e-4);
}

TEST(CovOutput, ContinuousAcrossMark) {
  auto pa = one_treatment(0, 1.1, 1.7, 0.5, 1.5);
  auto pb = one_treatment(0, 0.6, -0.8, 0.5, 1.5);
  const double eps = 1e-6;
  for (auto conv : kBoth)
    for (double t2 : {0.7, 1.5, 2.2})
      EXPECT_NEAR(cov_output_output(1.5 - eps, t2, pa, pb, {0}, conv),
                  cov_output_output(1.5 + eps, t2, pa, pb, {0}, conv), 1e-4);
}

TEST(ClosedForms, AgreeWithQuadratureOnRandomDraws) {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> upos(0.15, 2.5);
  std::uniform_real_distribution<double> us(-4.0, 4.0);
  // Stratify across the four orderings of (t, t2) vs t_m.
  const double t_m = 2.0;
  std::uniform_real_distribution<double> pre(0.0, t_m);
  std::uniform_real_distribution<double> post(t_m, t_m + 4.0);
  int done = 0;
  for (int rep = 0; rep < 50; ++rep) {
    for (int ordering = 0; ordering < 4; ++ordering) {
      const double t = (ordering & 1) ? post(rng) : pre(rng);
      const double t2 = (ordering & 2) ? post(rng) : pre(rng);
      auto pa = one_treatment(0, upos(rng), us(rng), upos(rng), t_m);
      auto pb = pa;
      pb.D = upos(rng);
      pb.S[0] = us(rng);
      for (auto conv : kBoth) {
        const double cq = quadrature_cross_cov(t, t2, 0, pa, conv, 1e-9);
        const double cc = cross_cov_force_output(t, t2, 0, pa, conv);
        EXPECT_NEAR(cc, cq, 1e-6) << "ordering " << ordering;
        const double oq =
            quadrature_cov_output(t, t2, pa, pb, {0}, conv, 1e-8);
        const double oc = cov_output_output(t, t2, pa, pb, {0}, conv);
        EXPECT_NEAR(oc, oq, 1e-5) << "ordering " << ordering;
      }
      ++done;
    }
  }
  EXPECT_EQ(done, 200);
}

TEST(ClosedForms, StableForLargeNu) {
  // nu = ell * D / 2 up to 25 must not overflow.
  for (double nu : {5.0, 12.0, 25.0}) {
    const double ell = 2.0;
    auto p = one_treatment(0, 2.0 * nu / ell, 1.0, ell, 1.0);
    for (auto conv : kBoth) {
      const double c = cross_cov_force_output(6.0, 3.0, 0, p, conv);
      EXPECT_TRUE(std::isfinite(c));
      const double o = cov_output_output(6.0, 5.0, p, p, {0}, conv);
      EXPECT_TRUE(std::isfinite(o));
      EXPECT_GE(o, 0.0);
    }
  }
  // Spot-check one large-nu case against the oracle.
  auto p = one_treatment(0, 10.0, 1.0, 3.0, 1.0);  // nu = 15
  const double cq =
      quadrature_cross_cov(4.0, 2.5, 0, p, ForceConvention::Unzeroed, 1e-9);
  EXPECT_NEAR(
      cross_cov_force_output(4.0, 2.5, 0, p, ForceConvention::Unzeroed), cq,
      1e-6);
}

TEST(JointGram, ForcesAndOutputsArePsd) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> upos(0.3, 2.0);
  std::uniform_real_distribution<double> us(-3.0, 3.0);
  std::uniform_real_distribution<double> ut(0.0, 6.0);
  for (int rep = 0; rep < 20; ++rep) {
    const double t_m = 2.0, ell = upos(rng);
    auto pa = one_treatment(0, upos(rng), us(rng), ell, t_m);
    auto pb = one_treatment(0, upos(rng), us(rng), ell, t_m);
    std::vector<double> times(5);
    for (auto& t : times) t = ut(rng);
    for (auto conv : kBoth) {
      const int n = static_cast<int>(times.size());
      Eigen::MatrixXd K(3 * n, 3 * n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          K(i, j) = force_cov(times[i], times[j], t_m, ell, conv);
          K(n + i, n + j) =
              cov_output_output(times[i], times[j], pa, pa, {0}, conv);
          K(2 * n + i, 2 * n + j) =
              cov_output_output(times[i], times[j], pb, pb, {0}, conv);
          K(n + i, 2 * n + j) =
              cov_output_output(times[i], times[j], pa, pb, {0}, conv);
          K(2 * n + j, n + i) = K(n + i, 2 * n + j);
          K(n + i, j) =
              cross_cov_force_output(times[i], times[j], 0, pa, conv);
          K(j, n + i) = K(n + i, j);
          K(2 * n + i, j) =
              cross_cov_force_output(times[i], times[j], 0, pb, conv);
          K(j, 2 * n + i) = K(2 * n + i, j);
        }
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
      EXPECT_GE(es.eigenvalues().minCoeff(),
                -1e-6 * K.diagonal().maxCoeff());
    }
  }
}
