#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ccgp/data.hpp"
#include "ccgp/errors.hpp"
#include "ccgp/gp.hpp"
#include "ccgp/optimize.hpp"
#include "ccgp/params.hpp"
#include "ccgp/sim.hpp"

namespace ccgp {

struct FitConfig {
  std::vector<std::string> covariates;  // empty = model all in the record
  ForceConvention convention = ForceConvention::Unzeroed;
  int restarts = 2;
  unsigned seed = 0;
  int max_iter = 200;
  double grad_tol = 1e-3;
  double fd_step = 1e-5;  // relative central-difference step
  double jitter_rel = 1e-8;
  GaussianPrior prior;
  // Model a periodic baseline component (disabled automatically for
  // covariates with fewer than 3 observations).
  bool periodic = true;
  // The likelihood is invariant to jointly flipping a force and its effect
  // sizes, so the sign of S is a gauge choice. When set, the gauge is fixed
  // after fitting so each treatment type's posterior latent force has a
  // nonnegative post-mark average (doses act as nonnegative inputs).
  bool canonicalize_signs = true;
};

struct RestartInfo {
  int restart = 0;
  bool ok = false;
  double objective = std::numeric_limits<double>::infinity();
  int iterations = 0;
  std::string error;
  std::vector<double> trace;
};

struct FitResult {
  GpModel model;
  ParamSchema schema;
  Eigen::VectorXd params;  // unconstrained optimum
  double objective = std::numeric_limits<double>::infinity();
  double time_offset = 0.0;  // subtracted during rebasing
  std::vector<Series> train;  // rebased observations used for the fit
  std::vector<RestartInfo> restarts;
};

inline double median_gap(const std::vector<double>& times) {
  std::vector<double> gaps;
  for (std::size_t i = 1; i < times.size(); ++i)
    gaps.push_back(times[i] - times[i - 1]);
  if (gaps.empty()) return 1.0;
  std::sort(gaps.begin(), gaps.end());
  const double g = gaps[gaps.size() / 2];
  return g > 1e-3 ? g : 1e-3;
}

inline double empirical_std(const std::vector<double>& values) {
  if (values.size() < 2) return 1.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return sd > 1e-3 ? sd : 1e-3;
}

/// Scale-aware initial model for a (rebased) record: length scales at the
/// median inter-observation gap, output scales at the empirical std, noise
/// at 10% of that, D at 1/(median gap), B and S at zero. Covariates with
/// fewer than 3 observations get their periodic component disabled.
inline GpModel initial_model(const PatientRecord& record,
                             const FitConfig& config) {
  GpModel m;
  m.convention = config.convention;
  m.jitter_rel = config.jitter_rel;
  double global_gap = 1.0;
  {
    std::vector<double> all_times;
    for (const auto& c : record.covariates)
      all_times.insert(all_times.end(), c.times.begin(), c.times.end());
    std::sort(all_times.begin(), all_times.end());
    // Covariates sampled on a shared schedule produce duplicate merged
    // times; the inter-observation gap is between distinct times.
    all_times.erase(std::unique(all_times.begin(), all_times.end()),
                    all_times.end());
    global_gap = median_gap(all_times);
  }
  for (const auto& e : record.treatments)
    m.treatments.push_back({e.treatment_type, e.time, global_gap});
  for (const auto& c : record.covariates) {
    if (!config.covariates.empty() &&
        std::find(config.covariates.begin(), config.covariates.end(),
                  c.name) == config.covariates.end())
      continue;
    require(!c.times.empty(),
            "fit: covariate " + c.name + " has no observations");
    CovariateSpec spec;
    spec.name = c.name;
    const double sd = empirical_std(c.values);
    const double gap = median_gap(c.times);
    spec.se = KernelSpec::se(sd, gap);
    spec.periodic = config.periodic && c.times.size() >= 3
                        ? KernelSpec::periodic(sd, 1.0, 24.0)
                        : KernelSpec::periodic(0.0, 1.0, 24.0);
    spec.noise_var = std::max(0.1 * sd * sd, 1e-6);
    spec.lfm.B = 0.0;
    spec.lfm.D = 1.0 / global_gap;
    spec.lfm.S.assign(m.treatments.size(), 0.0);
    m.covariates.push_back(spec);
  }
  require(!m.covariates.empty(), "fit: no covariates to model");
  m.sync_treatments();
  return m;
}

inline std::vector<Series> record_series(const PatientRecord& record,
                                         const GpModel& model) {
  std::vector<Series> obs;
  for (const auto& c : model.covariates) {
    const auto* s = record.find_covariate(c.name);
    require(s != nullptr, "record is missing covariate " + c.name);
    obs.push_back({s->times, s->values});
  }
  return obs;
}

/// Negative (optionally prior-penalized) log marginal likelihood.
inline double nll(const ParamSchema& schema, const Eigen::VectorXd& u,
                  const std::vector<Series>& obs, const GaussianPrior& prior) {
  const GpModel model = schema.to_model(u);
  return -log_marginal_likelihood(model, obs) + prior.penalty(u);
}

/// Objective and central-difference gradient in unconstrained coordinates.
/// Tied parameters accumulate all site sensitivities automatically since a
/// tied coordinate appears once in the vector.
inline double nll_and_gradient(const ParamSchema& schema,
                               const Eigen::VectorXd& u,
                               const std::vector<Series>& obs,
                               const GaussianPrior& prior,
                               Eigen::VectorXd& grad, double fd_step = 1e-5) {
  double f0;
  try {
    f0 = nll(schema, u, obs, prior);
  } catch (const NumericalError& e) {
    std::string msg = std::string("nll_and_gradient: ") + e.what() + " at [";
    for (Eigen::Index i = 0; i < u.size(); ++i)
      msg += (i ? "," : "") + std::to_string(u(i));
    throw NumericalError(msg + "]");
  }
  grad.resize(u.size());
  auto probe = [&](Eigen::VectorXd x) -> double {
    try {
      const double f = nll(schema, x, obs, prior);
      return std::isfinite(f) ? f : std::numeric_limits<double>::quiet_NaN();
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    const double h = fd_step * std::max(1.0, std::abs(u(k)));
    Eigen::VectorXd up = u, dn = u;
    up(k) += h;
    dn(k) -= h;
    const double fp = probe(up), fm = probe(dn);
    if (std::isfinite(fp) && std::isfinite(fm)) {
      grad(k) = (fp - fm) / (2.0 * h);
    } else if (std::isfinite(fp)) {
      grad(k) = (fp - f0) / h;
    } else if (std::isfinite(fm)) {
      grad(k) = (f0 - fm) / h;
    } else {
      grad(k) = 0.0;
    }
  }
  return f0;
}

/// Maximum (penalized) marginal-likelihood fit for one patient with
/// multi-restart gradient-based optimization. Deterministic given the seed.
inline FitResult fit_patient(const PatientRecord& record_in,
                             const FitConfig& config) {
  require(config.restarts >= 1, "fit_patient: need at least one restart");
  PatientRecord record = record_in;
  record.validate();
  FitResult result;
  result.time_offset = rebase_time_origin(record);

  const GpModel init = initial_model(record, config);
  const ParamSchema schema = ParamSchema::build(init);
  const Eigen::VectorXd u0 = schema.from_model(init);
  const std::vector<Series> obs = record_series(record, init);

  std::mt19937 rng(config.seed);
  std::normal_distribution<double> jitter(0.0, 1.0);

  int best = -1;
  Eigen::VectorXd best_x;
  for (int r = 0; r < config.restarts; ++r) {
    Eigen::VectorXd u = u0;
    if (r > 0) {
      for (std::size_t k = 0; k < schema.size(); ++k)
        if (schema.entries[k].name.find(".S[") != std::string::npos)
          u(static_cast<Eigen::Index>(k)) += jitter(rng);
    }
    RestartInfo info;
    info.restart = r;
    try {
      auto opt = minimize_lbfgs(
          [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
            return nll_and_gradient(schema, x, obs, config.prior, g,
                                    config.fd_step);
          },
          u, config.max_iter, config.grad_tol);
      info.ok = true;
      info.objective = opt.objective;
      info.iterations = opt.iterations;
      info.trace = std::move(opt.trace);
      if (best < 0 || info.objective < result.objective) {
        best = r;
        best_x = opt.x;
        result.objective = info.objective;
      }
    } catch (const NumericalError& e) {
      info.error = e.what();
    }
    result.restarts.push_back(std::move(info));
  }
  if (best < 0) {
    std::string msg = "fit_patient: all restarts failed numerically:";
    for (const auto& r : result.restarts)
      msg += "\n  restart " + std::to_string(r.restart) + ": " + r.error;
    throw NumericalError(msg);
  }
  result.model = schema.to_model(best_x);
  if (config.canonicalize_signs && !result.model.treatments.empty()) {
    double d_ref = std::numeric_limits<double>::infinity();
    for (const auto& c : result.model.covariates)
      d_ref = std::min(d_ref, c.lfm.D);
    for (std::size_t kt = 0; kt < schema.treatment_types.size(); ++kt) {
      double acc = 0.0;
      for (std::size_t m = 0; m < schema.type_of_treatment.size(); ++m) {
        if (schema.type_of_treatment[m] != kt) continue;
        const auto& tr = result.model.treatments[m];
        // Same gauge functional as the simulator: post-mark average of the
        // unit-S response to the (posterior mean) force, zero state at the
        // mark.
        std::vector<double> qt;
        const int nq = 60;
        for (int i = 0; i <= nq; ++i)
          qt.push_back(tr.time + 6.0 * tr.ell * double(i) / nq);
        const auto post = posterior_latent_force(result.model, obs, m, qt);
        const std::vector<double> unit =
            integrate_force(qt, post.force.mean, d_ref, 1.0);
        for (std::size_t i = 1; i < unit.size(); ++i) acc += unit[i];
      }
      if (acc < 0.0) {
        const std::string tag = ".S[" + schema.treatment_types[kt] + "]";
        for (std::size_t k = 0; k < schema.size(); ++k)
          if (schema.entries[k].name.size() >= tag.size() &&
              schema.entries[k].name.find(tag) != std::string::npos)
            best_x(static_cast<Eigen::Index>(k)) = -best_x(
                static_cast<Eigen::Index>(k));
      }
    }
    result.model = schema.to_model(best_x);
  }
  result.schema = schema;
  result.params = best_x;
  result.train = obs;
  return result;
}

}  // namespace ccgp
