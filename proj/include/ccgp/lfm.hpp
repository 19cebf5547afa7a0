#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "ccgp/erf_stable.hpp"
#include "ccgp/errors.hpp"
#include "ccgp/kernels.hpp"

namespace ccgp {

/// Whether the latent force is pinned to zero before its mark time, or merely
/// held constant-correlated there by the causal warp.
enum class ForceConvention { Unzeroed, Zeroed };

/// First-order dynamics parameters of one covariate: baseline drive B, decay
/// D, and per-treatment effect sizes with the shared force hyperparameters.
struct LfmParams {
  double B = 0.0;
  double D = 1.0;
  std::vector<double> S;        // effect size per treatment
  std::vector<double> ell;      // force length scale per treatment
  std::vector<double> t_marks;  // treatment time per treatment

  std::size_t num_treatments() const { return S.size(); }

  void validate() const {
    require(D > 0.0, "LfmParams: D must be positive");
    require(S.size() == ell.size() && S.size() == t_marks.size(),
            "LfmParams: S, ell, t_marks must have equal length");
    for (double l : ell) require(l > 0.0, "LfmParams: ell must be positive");
  }
};

/// Stationary mean of the forced ODE: E[mu(t)] = B/D for all t.
inline double lfm_mean(double /*t*/, double B, double D) {
  require(D > 0.0, "lfm_mean: D must be positive");
  return B / D;
}

/// Force prior covariance under the selected convention.
inline double force_cov(double t, double t2, double t_m, double ell,
                        ForceConvention conv) {
  if (conv == ForceConvention::Zeroed) {
    require(ell > 0.0, "force_cov: length scale must be positive");
    if (t <= t_m || t2 <= t_m) return 0.0;
    const double d = t - t2;
    return std::exp(-d * d / (ell * ell));
  }
  return causal_force_kernel(t, t2, t_m, ell);
}

namespace detail {

inline constexpr double half_sqrt_pi =
    0.5 / std::numbers::inv_sqrtpi_v<double>;

}  // namespace detail

/// Cov(mu(t), f_m(t2)): covariance between the forced output at time t and
/// the latent force of treatment m at time t2, in closed form.
inline double cross_cov_force_output(double t, double t2, std::size_t m,
                                     const LfmParams& params,
                                     ForceConvention conv) {
  params.validate();
  require(m < params.num_treatments(), "cross_cov_force_output: bad index");
  if (t < 0.0)
    throw DomainError("cross_cov_force_output: t must be >= 0 (model origin)");
  const double S = params.S[m];
  if (S == 0.0 || t == 0.0) return 0.0;
  const double D = params.D;
  const double ell = params.ell[m];
  const double t_m = params.t_marks[m];
  const double nu = ell * D / 2.0;

  double vp = std::max(t2 - t_m, 0.0);
  double out = 0.0;
  if (conv == ForceConvention::Zeroed) {
    if (t2 <= t_m || t <= t_m) return 0.0;
  } else {
    // Constant-kernel stretch tau in [0, min(t, t_m)].
    const double s = std::clamp(t_m, 0.0, t);
    if (s > 0.0) {
      const double c_v = std::exp(-(vp / ell) * (vp / ell));
      out += S * c_v * (std::exp(D * (s - t)) - std::exp(-D * t)) / D;
    }
  }
  // Post-mark stretch, u = tau - t_m in [a, b].
  const double a = std::max(-t_m, 0.0);
  const double b = t - t_m;
  if (b > a) {
    const double beta = (b - vp) / ell - nu;
    const double alpha = (a - vp) / ell - nu;
    const double E = -D * (t - t_m - vp) + nu * nu;
    out += S * detail::half_sqrt_pi * ell * exp_erf_diff(E, beta, alpha);
  }
  return out;
}

/// Cov(mu_a(t), mu_b(t2)) through the forces listed in `shared_treatments`.
/// The two parameter sets must agree on each shared force's length scale and
/// mark time (the force is common; S and D are covariate-specific).
inline double cov_output_output(double t, double t2, const LfmParams& pa,
                                const LfmParams& pb,
                                const std::vector<std::size_t>& shared,
                                ForceConvention conv) {
  pa.validate();
  pb.validate();
  if (t < 0.0 || t2 < 0.0)
    throw DomainError("cov_output_output: times must be >= 0 (model origin)");
  double out = 0.0;
  for (std::size_t m : shared) {
    require(m < pa.num_treatments() && m < pb.num_treatments(),
            "cov_output_output: treatment index out of range");
    if (pa.ell[m] != pb.ell[m] || pa.t_marks[m] != pb.t_marks[m])
      throw InputError(
          "cov_output_output: shared force hyperparameters differ");
    const double Sa = pa.S[m], Sb = pb.S[m];
    if (Sa == 0.0 || Sb == 0.0) continue;
    const double Da = pa.D, Db = pb.D;
    const double ell = pa.ell[m];
    const double t_m = pa.t_marks[m];
    const double na = ell * Da / 2.0, nb = ell * Db / 2.0;

    // Both-post-mark region; a mark before the origin reduces to mark 0.
    const double tme = std::max(t_m, 0.0);
    const double T = t - tme, T2 = t2 - tme;
    if (T > 0.0 && T2 > 0.0) {
      const double c = Da + Db;
      const double g1 =
          exp_erf_sum(nb * nb - Db * (T2 - T), T / ell + nb,
                      (T2 - T) / ell - nb);
      const double g2 =
          exp_erf_sum(nb * nb - Da * T - Db * T2, nb, T2 / ell - nb);
      const double g3 =
          exp_erf_sum(na * na - Da * T - Db * T2, na, T / ell - na);
      const double g4 =
          exp_erf_sum(na * na - Da * (T - T2), T2 / ell + na,
                      (T - T2) / ell - na);
      out += Sa * Sb * detail::half_sqrt_pi * ell / c * (g1 - g2 - g3 + g4);
    }
    if (conv == ForceConvention::Unzeroed && t_m > 0.0) {
      const double s = std::min(t, t_m), s2 = std::min(t2, t_m);
      const double ea = (std::exp(Da * (s - t)) - std::exp(-Da * t)) / Da;
      const double eb = (std::exp(Db * (s2 - t2)) - std::exp(-Db * t2)) / Db;
      out += Sa * Sb * ea * eb;  // pre/pre region, kernel identically 1
      if (s > 0.0 && t2 > t_m) {
        const double jb = detail::half_sqrt_pi * ell *
                          exp_erf_diff(-Db * (t2 - t_m) + nb * nb,
                                       (t2 - t_m) / ell - nb, -nb);
        out += Sa * Sb * ea * jb;
      }
      if (s2 > 0.0 && t > t_m) {
        const double ja = detail::half_sqrt_pi * ell *
                          exp_erf_diff(-Da * (t - t_m) + na * na,
                                       (t - t_m) / ell - na, -na);
        out += Sa * Sb * eb * ja;
      }
    }
  }
  return out;
}

/// All treatment indices of `params`, the usual `shared` argument.
inline std::vector<std::size_t> all_treatments(const LfmParams& params) {
  std::vector<std::size_t> idx(params.num_treatments());
  for (std::size_t m = 0; m < idx.size(); ++m) idx[m] = m;
  return idx;
}

}  // namespace ccgp
