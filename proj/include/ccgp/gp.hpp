#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "ccgp/errors.hpp"
#include "ccgp/kernels.hpp"
#include "ccgp/lfm.hpp"

namespace ccgp {

/// One covariate's block of the joint patient model: baseline kernels
/// (Se + Periodic), forced dynamics, and observation noise. A periodic
/// component with sigma == 0 is treated as disabled.
struct CovariateSpec {
  std::string name;
  KernelSpec se = KernelSpec::se(1.0, 1.0);
  KernelSpec periodic = KernelSpec::periodic(1.0, 1.0, 24.0);
  LfmParams lfm;
  double noise_var = 1.0;
};

struct TreatmentSpec {
  std::string type;
  double time = 0.0;
  double ell = 1.0;  // shared force length scale
};

struct GpModel {
  std::vector<CovariateSpec> covariates;
  std::vector<TreatmentSpec> treatments;
  double jitter_rel = 1e-8;  // initial jitter, relative to max diagonal
  ForceConvention convention = ForceConvention::Unzeroed;

  void validate() const {
    require(jitter_rel > 0.0, "GpModel: jitter must be positive");
    for (const auto& c : covariates) {
      require(c.noise_var > 0.0, "GpModel: noise variance must be positive");
      c.lfm.validate();
      require(c.lfm.num_treatments() == treatments.size(),
              "GpModel: S vector length must match treatment count");
      for (std::size_t m = 0; m < treatments.size(); ++m) {
        require(c.lfm.ell[m] == treatments[m].ell &&
                    c.lfm.t_marks[m] == treatments[m].time,
                "GpModel: covariate force hyperparameters must mirror the "
                "treatment table");
      }
    }
  }

  /// Copies the shared treatment table into every covariate's LfmParams.
  void sync_treatments() {
    for (auto& c : covariates) {
      c.lfm.ell.resize(treatments.size());
      c.lfm.t_marks.resize(treatments.size());
      c.lfm.S.resize(treatments.size(), 0.0);
      for (std::size_t m = 0; m < treatments.size(); ++m) {
        c.lfm.ell[m] = treatments[m].ell;
        c.lfm.t_marks[m] = treatments[m].time;
      }
    }
  }
};

/// One observed or predicted series of a single covariate.
struct Series {
  std::vector<double> times;
  std::vector<double> values;
};

struct Posterior {
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> variance;
};

struct LatentForcePosterior {
  Posterior force;
  std::vector<Posterior> effects;  // one per covariate, in model order
};

inline double baseline_cov(const CovariateSpec& c, double t, double t2) {
  double v = se_kernel(t, t2, c.se.sigma, c.se.length_scale);
  if (c.periodic.sigma > 0.0)
    v += periodic_kernel(t, t2, c.periodic.sigma, c.periodic.length_scale,
                         c.periodic.period);
  return v;
}

/// Joint prior covariance over the concatenated per-covariate time grids.
/// Baseline kernels act within a covariate only; forces couple covariates.
inline Eigen::MatrixXd assemble_covariance(
    const GpModel& model, const std::vector<std::vector<double>>& times,
    bool include_noise = true) {
  model.validate();
  require(times.size() == model.covariates.size(),
          "assemble_covariance: one time grid per covariate expected");
  std::size_t n = 0;
  for (const auto& ts : times) n += ts.size();
  Eigen::MatrixXd K(n, n);
  const auto shared = model.treatments.empty()
                          ? std::vector<std::size_t>{}
                          : all_treatments(model.covariates[0].lfm);
  std::size_t row0 = 0;
  for (std::size_t j = 0; j < times.size(); ++j) {
    std::size_t col0 = 0;
    for (std::size_t j2 = 0; j2 < times.size(); ++j2) {
      if (j2 < j) {
        col0 += times[j2].size();
        continue;
      }
      for (std::size_t i = 0; i < times[j].size(); ++i) {
        for (std::size_t i2 = 0; i2 < times[j2].size(); ++i2) {
          if (j2 == j && i2 < i) continue;
          double v = cov_output_output(times[j][i], times[j2][i2],
                                       model.covariates[j].lfm,
                                       model.covariates[j2].lfm, shared,
                                       model.convention);
          if (j2 == j) {
            v += baseline_cov(model.covariates[j], times[j][i],
                              times[j2][i2]);
            if (include_noise && i == i2)
              v += model.covariates[j].noise_var;
          }
          K(row0 + i, col0 + i2) = v;
          K(col0 + i2, row0 + i) = v;
        }
      }
      col0 += times[j2].size();
    }
    row0 += times[j].size();
  }
  return K;
}

inline Eigen::VectorXd stack_values(const std::vector<Series>& obs) {
  std::size_t n = 0;
  for (const auto& s : obs) n += s.values.size();
  Eigen::VectorXd y(n);
  std::size_t k = 0;
  for (const auto& s : obs)
    for (double v : s.values) y(k++) = v;
  return y;
}

inline Eigen::VectorXd prior_mean(const GpModel& model, std::size_t total,
                                  const std::vector<Series>& obs) {
  Eigen::VectorXd mu(total);
  std::size_t k = 0;
  for (std::size_t j = 0; j < obs.size(); ++j) {
    const double m =
        lfm_mean(0.0, model.covariates[j].lfm.B, model.covariates[j].lfm.D);
    for (std::size_t i = 0; i < obs[j].times.size(); ++i) mu(k++) = m;
  }
  return mu;
}

/// Cholesky with the escalating-jitter policy: start at jitter_rel * max
/// diagonal, escalate by 10x up to 1e-4 * max diagonal, then fail.
inline Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(
    const Eigen::MatrixXd& K, double jitter_rel, double* jitter_used = nullptr) {
  const double scale = std::max(K.diagonal().maxCoeff(), 1e-300);
  double jitter = jitter_rel * scale;
  const double jitter_max = 1e-4 * scale;
  Eigen::MatrixXd Kj = K;
  while (true) {
    Kj = K;
    Kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(Kj);
    if (llt.info() == Eigen::Success) {
      if (jitter_used) *jitter_used = jitter;
      return llt;
    }
    if (jitter >= jitter_max)
      throw NumericalError(
          "cholesky_with_jitter: factorization failed at jitter " +
          std::to_string(jitter) + " (max diagonal " + std::to_string(scale) +
          ")");
    jitter *= 10.0;
  }
}

inline std::vector<std::vector<double>> observation_times(
    const std::vector<Series>& obs) {
  std::vector<std::vector<double>> times;
  times.reserve(obs.size());
  for (const auto& s : obs) times.push_back(s.times);
  return times;
}

/// Exact log marginal likelihood of the joint model, via Cholesky.
inline double log_marginal_likelihood(const GpModel& model,
                                      const std::vector<Series>& obs) {
  model.validate();
  require(obs.size() == model.covariates.size(),
          "log_marginal_likelihood: one series per covariate expected");
  const Eigen::VectorXd y = stack_values(obs);
  require(y.size() > 0, "log_marginal_likelihood: no observations");
  const Eigen::MatrixXd K = assemble_covariance(model, observation_times(obs));
  const Eigen::VectorXd mu = prior_mean(model, y.size(), obs);
  auto llt = cholesky_with_jitter(K, model.jitter_rel);
  const Eigen::VectorXd r = y - mu;
  const Eigen::VectorXd alpha = llt.solve(r);
  const double quad = r.dot(alpha);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * quad - 0.5 * logdet -
         0.5 * static_cast<double>(y.size()) *
             std::log(2.0 * std::numbers::pi);
}

namespace detail {

// Shared conditioning core: posterior of a process with prior mean mq,
// prior covariance Kqq, and train-query cross block Kxq (train rows).
inline Posterior condition(const Eigen::LLT<Eigen::MatrixXd>& llt,
                           const Eigen::VectorXd& resid,
                           const Eigen::MatrixXd& Kxq,
                           const Eigen::MatrixXd& Kqq,
                           const Eigen::VectorXd& mq,
                           const std::vector<double>& query_times) {
  Posterior p;
  p.times = query_times;
  const Eigen::VectorXd mean = mq + Kxq.transpose() * llt.solve(resid);
  const Eigen::MatrixXd cov = Kqq - Kxq.transpose() * llt.solve(Kxq);
  const double tol = 1e-10 * std::max(1.0, Kqq.diagonal().maxCoeff());
  p.mean.resize(query_times.size());
  p.variance.resize(query_times.size());
  for (std::size_t i = 0; i < query_times.size(); ++i) {
    p.mean[i] = mean(static_cast<Eigen::Index>(i));
    double v = cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    if (v < -tol)
      throw NumericalError("posterior variance " + std::to_string(v) +
                           " below clamping tolerance");
    p.variance[i] = std::max(v, 0.0);
  }
  return p;
}

}  // namespace detail

/// Predictive distribution of covariate `query_cov` at `query_times`.
/// Set `predictive_noise` to include observation noise in the variance.
inline Posterior posterior_predict(const GpModel& model,
                                   const std::vector<Series>& train,
                                   std::size_t query_cov,
                                   const std::vector<double>& query_times,
                                   bool predictive_noise = false) {
  model.validate();
  require(query_cov < model.covariates.size(),
          "posterior_predict: covariate index out of range");
  const Eigen::VectorXd y = stack_values(train);
  require(y.size() > 0, "posterior_predict: empty training set");
  const Eigen::MatrixXd K = assemble_covariance(model, observation_times(train));
  auto llt = cholesky_with_jitter(K, model.jitter_rel);
  const Eigen::VectorXd resid = y - prior_mean(model, y.size(), train);

  const auto shared = model.treatments.empty()
                          ? std::vector<std::size_t>{}
                          : all_treatments(model.covariates[0].lfm);
  const auto& cq = model.covariates[query_cov];
  const Eigen::Index nq = static_cast<Eigen::Index>(query_times.size());
  Eigen::MatrixXd Kxq(y.size(), nq);
  std::size_t row = 0;
  for (std::size_t j = 0; j < train.size(); ++j) {
    for (double tt : train[j].times) {
      for (Eigen::Index q = 0; q < nq; ++q) {
        double v = cov_output_output(query_times[q], tt, cq.lfm,
                                     model.covariates[j].lfm, shared,
                                     model.convention);
        if (j == query_cov) v += baseline_cov(cq, query_times[q], tt);
        Kxq(static_cast<Eigen::Index>(row), q) = v;
      }
      ++row;
    }
  }
  Eigen::MatrixXd Kqq(nq, nq);
  for (Eigen::Index a = 0; a < nq; ++a)
    for (Eigen::Index b = 0; b < nq; ++b) {
      double v = cov_output_output(query_times[a], query_times[b], cq.lfm,
                                   cq.lfm, shared, model.convention) +
                 baseline_cov(cq, query_times[a], query_times[b]);
      if (predictive_noise && a == b) v += cq.noise_var;
      Kqq(a, b) = v;
    }
  const Eigen::VectorXd mq =
      Eigen::VectorXd::Constant(nq, lfm_mean(0.0, cq.lfm.B, cq.lfm.D));
  return detail::condition(llt, resid, Kxq, Kqq, mq, query_times);
}

/// Posterior of latent force m given all covariate observations, plus the
/// induced per-covariate effect trajectories (the convolved force scaled by
/// each covariate's effect size).
inline LatentForcePosterior posterior_latent_force(
    const GpModel& model, const std::vector<Series>& train, std::size_t m,
    const std::vector<double>& query_times) {
  model.validate();
  require(m < model.treatments.size(),
          "posterior_latent_force: treatment index out of range");
  const Eigen::VectorXd y = stack_values(train);
  require(y.size() > 0, "posterior_latent_force: empty training set");
  const Eigen::MatrixXd K = assemble_covariance(model, observation_times(train));
  auto llt = cholesky_with_jitter(K, model.jitter_rel);
  const Eigen::VectorXd resid = y - prior_mean(model, y.size(), train);

  const double t_m = model.treatments[m].time;
  const double ell = model.treatments[m].ell;
  const Eigen::Index nq = static_cast<Eigen::Index>(query_times.size());

  LatentForcePosterior out;
  {
    Eigen::MatrixXd Kxq(y.size(), nq);
    std::size_t row = 0;
    for (std::size_t j = 0; j < train.size(); ++j)
      for (double tt : train[j].times) {
        for (Eigen::Index q = 0; q < nq; ++q)
          Kxq(static_cast<Eigen::Index>(row), q) = cross_cov_force_output(
              tt, query_times[q], m, model.covariates[j].lfm,
              model.convention);
        ++row;
      }
    Eigen::MatrixXd Kqq(nq, nq);
    for (Eigen::Index a = 0; a < nq; ++a)
      for (Eigen::Index b = 0; b < nq; ++b)
        Kqq(a, b) = force_cov(query_times[a], query_times[b], t_m, ell,
                              model.convention);
    out.force = detail::condition(llt, resid, Kxq, Kqq,
                                  Eigen::VectorXd::Zero(nq), query_times);
  }
  const std::vector<std::size_t> only_m = {m};
  for (std::size_t j = 0; j < model.covariates.size(); ++j) {
    const auto& cj = model.covariates[j];
    Eigen::MatrixXd Kxq(y.size(), nq);
    std::size_t row = 0;
    for (std::size_t j2 = 0; j2 < train.size(); ++j2)
      for (double tt : train[j2].times) {
        for (Eigen::Index q = 0; q < nq; ++q)
          Kxq(static_cast<Eigen::Index>(row), q) = cov_output_output(
              query_times[q], tt, cj.lfm, model.covariates[j2].lfm, only_m,
              model.convention);
        ++row;
      }
    Eigen::MatrixXd Kqq(nq, nq);
    for (Eigen::Index a = 0; a < nq; ++a)
      for (Eigen::Index b = 0; b < nq; ++b)
        Kqq(a, b) = cov_output_output(query_times[a], query_times[b], cj.lfm,
                                      cj.lfm, only_m, model.convention);
    out.effects.push_back(detail::condition(
        llt, resid, Kxq, Kqq, Eigen::VectorXd::Zero(nq), query_times));
  }
  return out;
}

}  // namespace ccgp
