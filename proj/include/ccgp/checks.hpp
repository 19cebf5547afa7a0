#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ccgp/gp.hpp"
#include "ccgp/params.hpp"
#include "ccgp/trainer.hpp"

namespace ccgp {

/// A random, well-scaled joint model for property suites: `n_cov` covariates,
/// `n_treat` treatments, moderate hyperparameters.
inline GpModel random_small_model(std::mt19937_64& rng, std::size_t n_cov,
                                  std::size_t n_treat, bool periodic,
                                  ForceConvention conv) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  GpModel m;
  m.convention = conv;
  for (std::size_t t = 0; t < n_treat; ++t)
    m.treatments.push_back({"t" + std::to_string(t),
                            0.5 + 3.0 * u01(rng),      // mark time
                            0.4 + 1.6 * u01(rng)});    // force length scale
  for (std::size_t j = 0; j < n_cov; ++j) {
    CovariateSpec c;
    c.name = "cov" + std::to_string(j);
    c.se = KernelSpec::se(0.5 + u01(rng), 0.5 + 2.0 * u01(rng));
    c.periodic = periodic
                     ? KernelSpec::periodic(0.3 + 0.5 * u01(rng),
                                            0.5 + u01(rng), 6.0 + 6.0 * u01(rng))
                     : KernelSpec::periodic(0.0, 1.0, 24.0);
    c.noise_var = 0.05 + 0.3 * u01(rng);
    c.lfm.B = -1.0 + 2.0 * u01(rng);
    c.lfm.D = 0.3 + 1.2 * u01(rng);
    m.covariates.push_back(c);
  }
  m.sync_treatments();
  for (auto& c : m.covariates)
    for (std::size_t t = 0; t < n_treat; ++t)
      c.lfm.S[t] = -2.0 + 4.0 * u01(rng);
  return m;
}

/// Random sorted observation series for every covariate of `model` on
/// [0, t_end], with values drawn loosely around the model mean.
inline std::vector<Series> random_obs(std::mt19937_64& rng,
                                      const GpModel& model,
                                      std::size_t n_per_cov, double t_end) {
  std::uniform_real_distribution<double> ut(0.0, t_end);
  std::normal_distribution<double> uv(0.0, 1.0);
  std::vector<Series> obs;
  for (const auto& c : model.covariates) {
    Series s;
    for (std::size_t i = 0; i < n_per_cov; ++i) s.times.push_back(ut(rng));
    std::sort(s.times.begin(), s.times.end());
    s.times.erase(std::unique(s.times.begin(), s.times.end()), s.times.end());
    for (std::size_t i = 0; i < s.times.size(); ++i)
      s.values.push_back(c.lfm.B / c.lfm.D + uv(rng));
    obs.push_back(std::move(s));
  }
  return obs;
}

struct GradCheckReport {
  std::size_t n_cases = 0;
  unsigned seed = 0;
  double rel_tol = 1e-4;
  double abs_floor = 1e-6;
  double max_rel_err = 0.0;
  std::vector<std::string> failures;
  bool pass = true;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["n_cases"] = n_cases;
    j["seed"] = seed;
    j["rel_tol"] = rel_tol;
    j["abs_floor"] = abs_floor;
    j["max_rel_err"] = max_rel_err;
    j["failures"] = failures;
    j["pass"] = pass;
    return j;
  }
};

/// Compares the trainer's gradient against an independent central-difference
/// evaluation (different step size) on random 10-observation problems.
inline GradCheckReport gradient_check(std::size_t n, unsigned seed,
                                      double rel_tol = 1e-4,
                                      double abs_floor = 1e-6) {
  require(n >= 1, "gradient_check: need at least one case");
  GradCheckReport report;
  report.n_cases = n;
  report.seed = seed;
  report.rel_tol = rel_tol;
  report.abs_floor = abs_floor;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t n_cov = 1 + (i % 2);
    const std::size_t n_treat = i % 3;
    const auto conv = (i % 2) ? ForceConvention::Zeroed
                              : ForceConvention::Unzeroed;
    const GpModel model =
        random_small_model(rng, n_cov, n_treat, i % 4 == 0, conv);
    const std::vector<Series> obs =
        random_obs(rng, model, n_cov == 1 ? 10 : 5, 6.0);
    const ParamSchema schema = ParamSchema::build(model);
    Eigen::VectorXd u = schema.from_model(model);
    for (Eigen::Index k = 0; k < u.size(); ++k)
      u(k) += 0.2 * (u01(rng) - 0.5);

    GaussianPrior prior;
    prior.enabled = (i % 5 == 0);
    prior.variance = 4.0;

    Eigen::VectorXd grad(u.size());
    nll_and_gradient(schema, u, obs, prior, grad);

    for (Eigen::Index k = 0; k < u.size(); ++k) {
      const double h = 3e-6 * std::max(1.0, std::abs(u(k)));
      Eigen::VectorXd up = u, dn = u;
      up(k) += h;
      dn(k) -= h;
      const double ref =
          (nll(schema, up, obs, prior) - nll(schema, dn, obs, prior)) /
          (2.0 * h);
      const double err = std::abs(grad(k) - ref);
      const double rel = err / std::max(std::abs(ref), abs_floor / rel_tol);
      report.max_rel_err = std::max(report.max_rel_err, rel);
      if (err > abs_floor && rel > rel_tol) {
        report.pass = false;
        report.failures.push_back(
            "case " + std::to_string(i) + " parameter " +
            schema.entries[static_cast<std::size_t>(k)].name + ": gradient " +
            std::to_string(grad(k)) + " vs reference " + std::to_string(ref));
      }
    }
  }
  return report;
}

}  // namespace ccgp
