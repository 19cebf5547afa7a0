#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "ccgp/errors.hpp"
#include "ccgp/lfm.hpp"

namespace ccgp {
namespace quad {

// Gauss-Kronrod 7-15 rule on [-1, 1] (QUADPACK dqk15 abscissae/weights).
inline constexpr std::array<double, 8> kGk15Nodes = {
    0.991455371120813, 0.949107912342759, 0.864864423359769,
    0.741531185599394, 0.586087235467691, 0.405845151377397,
    0.207784955007898, 0.000000000000000};
inline constexpr std::array<double, 8> kGk15Weights = {
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728};
inline constexpr std::array<double, 4> kGauss7Weights = {
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469};

struct PanelResult {
  double value = 0.0;
  double error = 0.0;
};

template <typename F>
PanelResult gk15(const F& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double kron = 0.0, gauss = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    const double x = kGk15Nodes[i];
    double fsum;
    if (i == 7) {
      fsum = f(c);
    } else {
      fsum = f(c - h * x) + f(c + h * x);
    }
    kron += kGk15Weights[i] * fsum;
    if (i == 7)
      gauss += kGauss7Weights[3] * fsum;
    else if (i % 2 == 1)
      gauss += kGauss7Weights[i / 2] * fsum;
  }
  PanelResult r;
  r.value = kron * h;
  const double diff = std::abs(kron - gauss) * std::abs(h);
  r.error = std::pow(200.0 * diff, 1.5);
  if (r.error > diff) r.error = diff;
  r.error = std::max(r.error, 1e-300);
  return r;
}

struct Interval {
  double a, b, value, error;
  bool operator<(const Interval& o) const {
    return error != o.error ? error < o.error
                            : (a != o.a ? a < o.a : b < o.b);
  }
};

/// Adaptive integration to absolute tolerance `tol`, pre-split at
/// `split_points` so integrand kinks land on panel boundaries.
template <typename F>
double integrate_adaptive(const F& f, double a, double b, double tol,
                          std::vector<double> split_points = {},
                          std::size_t max_panels = 4000) {
  require(tol > 0.0, "integrate_adaptive: tol must be positive");
  if (a == b) return 0.0;
  split_points.push_back(a);
  split_points.push_back(b);
  std::sort(split_points.begin(), split_points.end());
  std::multiset<Interval> heap;
  double total = 0.0, total_err = 0.0;
  for (std::size_t i = 0; i + 1 < split_points.size(); ++i) {
    const double lo = split_points[i], hi = split_points[i + 1];
    if (!(hi > lo) || lo < a || hi > b) continue;
    auto r = gk15(f, lo, hi);
    heap.insert({lo, hi, r.value, r.error});
    total += r.value;
    total_err += r.error;
  }
  std::size_t panels = heap.size();
  while (total_err > tol && !heap.empty()) {
    if (panels >= max_panels)
      throw NumericalError(
          "integrate_adaptive: tolerance " + std::to_string(tol) +
          " not reached after " + std::to_string(panels) +
          " panels (residual error " + std::to_string(total_err) + ")");
    auto worst = *heap.rbegin();
    heap.erase(std::prev(heap.end()));
    total -= worst.value;
    total_err -= worst.error;
    const double mid = 0.5 * (worst.a + worst.b);
    for (auto [lo, hi] : {std::pair{worst.a, mid}, std::pair{mid, worst.b}}) {
      auto r = gk15(f, lo, hi);
      heap.insert({lo, hi, r.value, r.error});
      total += r.value;
      total_err += r.error;
    }
    panels += 1;
  }
  return total;
}

}  // namespace quad

/// Numerical oracle for cross_cov_force_output: integrates
/// S * exp(-D (t - tau)) * k_f(tau, t2; t_m) over tau in [0, t].
inline double quadrature_cross_cov(double t, double t2, std::size_t m,
                                   const LfmParams& params,
                                   ForceConvention conv, double tol) {
  params.validate();
  require(tol > 0.0, "quadrature_cross_cov: tol must be positive");
  require(m < params.num_treatments(), "quadrature_cross_cov: bad index");
  if (t < 0.0) throw DomainError("quadrature_cross_cov: t must be >= 0");
  const double S = params.S[m];
  if (S == 0.0 || t == 0.0) return 0.0;
  const double D = params.D;
  const double ell = params.ell[m];
  const double t_m = params.t_marks[m];
  auto integrand = [&](double tau) {
    return std::exp(-D * (t - tau)) * force_cov(tau, t2, t_m, ell, conv);
  };
  std::vector<double> splits;
  if (t_m > 0.0 && t_m < t) splits.push_back(t_m);
  return S * quad::integrate_adaptive(integrand, 0.0, t, tol / std::abs(S),
                                      splits);
}

/// 2-D numerical oracle for cov_output_output (tensorized adaptive rule,
/// both axes split at each mark).
inline double quadrature_cov_output(double t, double t2, const LfmParams& pa,
                                    const LfmParams& pb,
                                    const std::vector<std::size_t>& shared,
                                    ForceConvention conv, double tol) {
  pa.validate();
  pb.validate();
  require(tol > 0.0, "quadrature_cov_output: tol must be positive");
  if (t < 0.0 || t2 < 0.0)
    throw DomainError("quadrature_cov_output: times must be >= 0");
  if (t == 0.0 || t2 == 0.0) return 0.0;
  double out = 0.0;
  for (std::size_t m : shared) {
    const double Sa = pa.S[m], Sb = pb.S[m];
    if (Sa == 0.0 || Sb == 0.0) continue;
    const double Da = pa.D, Db = pb.D;
    const double ell = pa.ell[m];
    const double t_m = pa.t_marks[m];
    const double scale = std::abs(Sa * Sb);
    const double tol_m = tol / (scale * static_cast<double>(shared.size()));
    const double inner_tol = tol_m / (4.0 * std::max(t, 1.0));
    std::vector<double> splits_inner, splits_outer;
    if (t_m > 0.0 && t_m < t2) splits_inner.push_back(t_m);
    if (t_m > 0.0 && t_m < t) splits_outer.push_back(t_m);
    auto outer = [&](double tau) {
      auto inner = [&](double taup) {
        return std::exp(-Db * (t2 - taup)) *
               force_cov(tau, taup, t_m, ell, conv);
      };
      return std::exp(-Da * (t - tau)) *
             quad::integrate_adaptive(inner, 0.0, t2, inner_tol, splits_inner);
    };
    out += Sa * Sb *
           quad::integrate_adaptive(outer, 0.0, t, tol_m / 2.0, splits_outer);
  }
  return out;
}

}  // namespace ccgp
