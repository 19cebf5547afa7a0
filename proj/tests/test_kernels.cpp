#include "ccgp/kernels.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

using namespace ccgp;

TEST(SeKernel, AnalyticValues) {
  EXPECT_DOUBLE_EQ(se_kernel(0, 0, 1, 1), 1.0);
  EXPECT_NEAR(se_kernel(1, 0, 1, 1), std::exp(-0.5), 1e-15);
  EXPECT_DOUBLE_EQ(se_kernel(0, 0, 2, 0.5), 4.0);
}

TEST(SeKernel, RejectsNonpositiveParams) {
  EXPECT_THROW(se_kernel(0, 0, -1, 1), DomainError);
  EXPECT_THROW(se_kernel(0, 0, 1, 0), DomainError);
}

TEST(PeriodicKernel, AnalyticValues) {
  EXPECT_DOUBLE_EQ(periodic_kernel(0, 0, 1, 1, 24), 1.0);
  EXPECT_NEAR(periodic_kernel(24, 0, 1, 1, 24), 1.0, 1e-15);
  EXPECT_NEAR(periodic_kernel(12, 0, 1, 1, 24), std::exp(-0.5), 1e-15);
  EXPECT_THROW(periodic_kernel(0, 0, 1, 1, 0), DomainError);
}

TEST(OuKernel, AnalyticValues) {
  EXPECT_DOUBLE_EQ(ou_kernel(0, 0, 1, 1), 1.0);
  EXPECT_NEAR(ou_kernel(1, 0, 1, 1), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(ou_kernel(2, 0, 3, 2), 9.0 * std::exp(-1.0), 1e-14);
  EXPECT_THROW(ou_kernel(0, 0, 1, -2), DomainError);
}

TEST(CausalForceKernel, AnalyticValues) {
  const double tm = 3.0;
  EXPECT_DOUBLE_EQ(causal_force_kernel(tm - 1, tm - 2, tm, 1), 1.0);
  EXPECT_DOUBLE_EQ(causal_force_kernel(tm + 2, tm + 2, tm, 0.5), 1.0);
  // ell^2 denominator, not 2 ell^2: unit warped distance gives exp(-1).
  EXPECT_NEAR(causal_force_kernel(tm - 1, tm + 1, tm, 1), std::exp(-1.0),
              1e-15);
  EXPECT_THROW(causal_force_kernel(0, 0, 0, 0), DomainError);
}

TEST(CausalForceKernel, FlatBeforeMark) {
  // Exactly 1 for any pair of pre-mark inputs, including t = t_m itself
  // (the clip uses a strict inequality).
  for (double t : {-5.0, 0.0, 1.0, 2.0})
    for (double t2 : {-3.0, 0.5, 2.0})
      EXPECT_DOUBLE_EQ(causal_force_kernel(t, t2, 2.0, 0.7), 1.0);
}

TEST(Gram, MatchesPointwiseAndShape) {
  auto spec = KernelSpec::se(1.0, 1.0);
  auto g = gram(spec, {0.0}, {0.0});
  ASSERT_EQ(g.rows(), 1);
  EXPECT_DOUBLE_EQ(g(0, 0), 1.0);

  auto g2 = gram(spec, {0.0, 1.0}, {0.0});
  EXPECT_DOUBLE_EQ(g2(0, 0), 1.0);
  EXPECT_NEAR(g2(1, 0), std::exp(-0.5), 1e-15);

  EXPECT_THROW(gram(spec, {0.0, std::nan("")}, {0.0}), InputError);
}

namespace {

std::vector<KernelSpec> random_specs(std::mt19937& rng) {
  std::uniform_real_distribution<double> pos(0.2, 3.0);
  std::uniform_real_distribution<double> mark(-2.0, 5.0);
  return {KernelSpec::se(pos(rng), pos(rng)),
          KernelSpec::periodic(pos(rng), pos(rng), pos(rng) * 8),
          KernelSpec::ou(pos(rng), pos(rng)),
          KernelSpec::causal_force(mark(rng), pos(rng))};
}

}  // namespace

TEST(KernelProperties, SymmetryBoundednessStationarity) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> time(-10.0, 10.0);
  for (int rep = 0; rep < 50; ++rep) {
    for (const auto& spec : random_specs(rng)) {
      for (int k = 0; k < 10; ++k) {
        const double t = time(rng), t2 = time(rng);
        const double v = eval_kernel(spec, t, t2);
        EXPECT_DOUBLE_EQ(v, eval_kernel(spec, t2, t));
        EXPECT_GE(v, 0.0);  // strictly positive up to floating-point underflow
        EXPECT_LE(v, eval_kernel(spec, t, t) * (1 + 1e-12));
        if (spec.kind != KernelKind::CausalForce) {
          const double shift = time(rng);
          EXPECT_NEAR(eval_kernel(spec, t + shift, t2 + shift), v,
                      1e-9 * std::abs(v));
        } else {
          EXPECT_LE(v, 1.0);
        }
      }
    }
  }
}

TEST(KernelProperties, GramMatricesArePsd) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> time(-5.0, 15.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> times(20);
    for (auto& t : times) t = time(rng);
    for (const auto& spec : random_specs(rng)) {
      Eigen::MatrixXd g = gram(spec, times, times);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
      EXPECT_GE(es.eigenvalues().minCoeff(),
                -1e-8 * g.diagonal().maxCoeff());
    }
  }
}
