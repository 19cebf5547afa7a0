#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "ccgp/errors.hpp"

namespace ccgp {

enum class KernelKind { SE, Periodic, OU, CausalForce };

/// One base covariance function with its hyperparameters.
///
/// `period` is only meaningful for Periodic, `mark_time` only for CausalForce.
/// CausalForce has unit output scale; `sigma` is ignored for it.
struct KernelSpec {
  KernelKind kind = KernelKind::SE;
  double sigma = 1.0;
  double length_scale = 1.0;
  double period = 1.0;
  double mark_time = 0.0;

  static KernelSpec se(double sigma, double ell) {
    return {KernelKind::SE, sigma, ell, 1.0, 0.0};
  }
  static KernelSpec periodic(double sigma, double ell, double p) {
    return {KernelKind::Periodic, sigma, ell, p, 0.0};
  }
  static KernelSpec ou(double sigma, double ell) {
    return {KernelKind::OU, sigma, ell, 1.0, 0.0};
  }
  static KernelSpec causal_force(double mark_time, double ell) {
    return {KernelKind::CausalForce, 1.0, ell, 1.0, mark_time};
  }
};

inline double se_kernel(double t, double t2, double sigma, double ell) {
  require(sigma > 0.0, "se_kernel: sigma must be positive");
  require(ell > 0.0, "se_kernel: length scale must be positive");
  const double d = t - t2;
  return sigma * sigma * std::exp(-d * d / (2.0 * ell * ell));
}

inline double periodic_kernel(double t, double t2, double sigma, double ell,
                              double p) {
  require(sigma > 0.0, "periodic_kernel: sigma must be positive");
  require(ell > 0.0, "periodic_kernel: length scale must be positive");
  require(p > 0.0, "periodic_kernel: period must be positive");
  const double s = std::sin(std::numbers::pi * std::abs(t - t2) / p);
  return sigma * sigma * std::exp(-s * s / (2.0 * ell * ell));
}

inline double ou_kernel(double t, double t2, double sigma, double ell) {
  require(sigma > 0.0, "ou_kernel: sigma must be positive");
  require(ell > 0.0, "ou_kernel: length scale must be positive");
  return sigma * sigma * std::exp(-std::abs(t - t2) / ell);
}

// Clipping warp h(x) = x * 1(x > 0); strictly zero at x = 0.
inline double clip_positive(double x) { return x > 0.0 ? x : 0.0; }

/// Causal time-marked kernel: exp(-[h(t-t_m) - h(t2-t_m)]^2 / ell^2).
///
/// Note the ell^2 denominator (no factor 2), which differs from the SE
/// convention above. Equal to 1 whenever both inputs precede the mark.
inline double causal_force_kernel(double t, double t2, double t_m,
                                  double ell_m) {
  require(ell_m > 0.0, "causal_force_kernel: length scale must be positive");
  const double d = clip_positive(t - t_m) - clip_positive(t2 - t_m);
  return std::exp(-d * d / (ell_m * ell_m));
}

inline double eval_kernel(const KernelSpec& k, double t, double t2) {
  switch (k.kind) {
    case KernelKind::SE:
      return se_kernel(t, t2, k.sigma, k.length_scale);
    case KernelKind::Periodic:
      return periodic_kernel(t, t2, k.sigma, k.length_scale, k.period);
    case KernelKind::OU:
      return ou_kernel(t, t2, k.sigma, k.length_scale);
    case KernelKind::CausalForce:
      return causal_force_kernel(t, t2, k.mark_time, k.length_scale);
  }
  throw DomainError("eval_kernel: unknown kernel kind");
}

inline Eigen::MatrixXd gram(const KernelSpec& k,
                            const std::vector<double>& times_a,
                            const std::vector<double>& times_b) {
  for (double t : times_a)
    if (!std::isfinite(t)) throw InputError("gram: non-finite time in times_a");
  for (double t : times_b)
    if (!std::isfinite(t)) throw InputError("gram: non-finite time in times_b");
  Eigen::MatrixXd out(times_a.size(), times_b.size());
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      out(i, j) = eval_kernel(k, times_a[i], times_b[j]);
  return out;
}

}  // namespace ccgp
