#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccgp/errors.hpp"
#include "ccgp/eval.hpp"
#include "ccgp/sim.hpp"
#include "ccgp/trainer.hpp"

namespace ccgp {

inline ForceConvention parse_force_convention(const std::string& s) {
  if (s == "zeroed") return ForceConvention::Zeroed;
  if (s == "unzeroed") return ForceConvention::Unzeroed;
  throw InputError("unknown force convention '" + s +
                   "' (expected zeroed or unzeroed)");
}

inline std::string to_string(ForceConvention c) {
  return c == ForceConvention::Zeroed ? "zeroed" : "unzeroed";
}

/// Reads optimizer settings and priors from the "fit" subtree of a config.
inline FitConfig fit_config_from_json(const nlohmann::json& j) {
  FitConfig c;
  if (j.contains("covariates"))
    c.covariates = j.at("covariates").get<std::vector<std::string>>();
  if (j.contains("convention"))
    c.convention = parse_force_convention(j.at("convention").get<std::string>());
  c.restarts = j.value("restarts", c.restarts);
  c.seed = j.value("seed", c.seed);
  c.max_iter = j.value("max_iter", c.max_iter);
  c.grad_tol = j.value("grad_tol", c.grad_tol);
  c.fd_step = j.value("fd_step", c.fd_step);
  c.jitter_rel = j.value("jitter_rel", c.jitter_rel);
  c.canonicalize_signs = j.value("canonicalize_signs", c.canonicalize_signs);
  c.periodic = j.value("periodic", c.periodic);
  if (j.contains("prior")) {
    const auto& p = j.at("prior");
    c.prior.enabled = p.value("enabled", true);
    c.prior.mean = p.value("mean", 0.0);
    c.prior.variance = p.value("variance", 1.0);
  }
  return c;
}

inline CohortCriteria cohort_criteria_from_json(const nlohmann::json& j) {
  CohortCriteria c;
  c.min_observations_per_covariate =
      j.value("min_observations_per_covariate",
              c.min_observations_per_covariate);
  if (j.contains("allowed_treatment_types"))
    c.allowed_treatment_types =
        j.at("allowed_treatment_types").get<std::vector<std::string>>();
  c.min_global_treatment_count =
      j.value("min_global_treatment_count", c.min_global_treatment_count);
  if (j.contains("excluded_drug_classes"))
    c.excluded_drug_classes =
        j.at("excluded_drug_classes").get<std::vector<std::string>>();
  return c;
}

inline ObservationSchedule schedule_from_json(const nlohmann::json& j) {
  ObservationSchedule s;
  if (j.contains("law")) s.law = parse_sampling_law(j.at("law").get<std::string>());
  s.count = j.value("count", s.count);
  s.t_start = j.value("t_start", s.t_start);
  s.t_end = j.value("t_end", s.t_end);
  s.bursts = j.value("bursts", s.bursts);
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic-cohort specification: a population of patients sampled from a
// shared truth family, with randomized treatment schedules and effect sizes.

struct CohortCovariate {
  std::string name;
  double se_sigma = 1.0;
  double se_ell = 8.0;
  double periodic_sigma = 0.0;  // 0 disables the periodic component
  double periodic_ell = 1.0;
  double period = 24.0;
  double noise_var = 0.25;
  double B = 0.0;
  double D = 0.5;
};

struct CohortTreatmentLaw {
  int count_min = 1;
  int count_max = 2;
  double time_min = 12.0;
  double time_max = 48.0;
  double min_separation = 12.0;
  double ell = 2.0;
  double s_min = 3.0;  // effect-size magnitude range
  double s_max = 8.0;
  bool random_sign = true;
};

struct CohortSpec {
  int n_patients = 20;
  unsigned seed = 0;
  std::vector<CohortCovariate> covariates;
  CohortTreatmentLaw treatments;
  ObservationSchedule schedule;
  double grid_dt = 0.2;
  ForceConvention convention = ForceConvention::Unzeroed;
  bool canonicalize_force_sign = true;
  std::string id_prefix = "sim";

  void validate() const {
    require(n_patients >= 1, "CohortSpec: need at least one patient");
    require(!covariates.empty(), "CohortSpec: need at least one covariate");
    require(treatments.count_min >= 0 &&
                treatments.count_max >= treatments.count_min,
            "CohortSpec: invalid treatment count range");
    require(treatments.s_max >= treatments.s_min && treatments.s_min >= 0.0,
            "CohortSpec: invalid effect magnitude range");
    require(treatments.time_max >= treatments.time_min,
            "CohortSpec: invalid treatment time range");
  }
};

inline CohortSpec cohort_spec_from_json(const nlohmann::json& j) {
  CohortSpec s;
  s.n_patients = j.value("n_patients", s.n_patients);
  s.seed = j.value("seed", s.seed);
  if (j.contains("covariates")) {
    for (const auto& cj : j.at("covariates")) {
      CohortCovariate c;
      c.name = cj.at("name").get<std::string>();
      c.se_sigma = cj.value("se_sigma", c.se_sigma);
      c.se_ell = cj.value("se_ell", c.se_ell);
      c.periodic_sigma = cj.value("periodic_sigma", c.periodic_sigma);
      c.periodic_ell = cj.value("periodic_ell", c.periodic_ell);
      c.period = cj.value("period", c.period);
      c.noise_var = cj.value("noise_var", c.noise_var);
      c.B = cj.value("B", c.B);
      c.D = cj.value("D", c.D);
      s.covariates.push_back(c);
    }
  }
  if (j.contains("treatments")) {
    const auto& tj = j.at("treatments");
    auto& t = s.treatments;
    t.count_min = tj.value("count_min", t.count_min);
    t.count_max = tj.value("count_max", t.count_max);
    t.time_min = tj.value("time_min", t.time_min);
    t.time_max = tj.value("time_max", t.time_max);
    t.min_separation = tj.value("min_separation", t.min_separation);
    t.ell = tj.value("ell", t.ell);
    t.s_min = tj.value("s_min", t.s_min);
    t.s_max = tj.value("s_max", t.s_max);
    t.random_sign = tj.value("random_sign", t.random_sign);
  }
  if (j.contains("schedule")) s.schedule = schedule_from_json(j.at("schedule"));
  s.grid_dt = j.value("grid_dt", s.grid_dt);
  if (j.contains("convention"))
    s.convention = parse_force_convention(j.at("convention").get<std::string>());
  s.canonicalize_force_sign =
      j.value("canonicalize_force_sign", s.canonicalize_force_sign);
  s.id_prefix = j.value("id_prefix", s.id_prefix);
  return s;
}

/// Draws one patient's ground-truth generative configuration (treatment
/// schedule and effect sizes) from the cohort law. Deterministic in
/// (spec.seed, index); the returned SimConfig carries the truth model, so the
/// true S values can be recovered from it for benchmarking.
inline SimConfig sample_patient_config(const CohortSpec& spec, int index) {
  spec.validate();
  auto rng = detail::stream_rng(spec.seed, 5u, static_cast<unsigned>(index));
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  SimConfig config;
  config.patient_id =
      spec.id_prefix + "-" + (index < 9 ? "0" : "") + std::to_string(index + 1);
  config.schedule = spec.schedule;
  config.grid_dt = spec.grid_dt;
  config.seed = spec.seed + 7919u * static_cast<unsigned>(index + 1);
  config.canonicalize_force_sign = spec.canonicalize_force_sign;
  config.truth.convention = spec.convention;

  const auto& law = spec.treatments;
  std::uniform_int_distribution<int> count_dist(law.count_min, law.count_max);
  const int n_treat = count_dist(rng);
  std::vector<double> times;
  for (int schedule_attempt = 0;; ++schedule_attempt) {
    // Rejection-sample the whole schedule: resampling only the colliding
    // time can dead-end (a mid-window first draw may leave no valid slot).
    times.clear();
    bool ok = true;
    for (int m = 0; m < n_treat && ok; ++m) {
      ok = false;
      for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
        const double t =
            law.time_min + (law.time_max - law.time_min) * u01(rng);
        ok = true;
        for (double prev : times)
          if (std::abs(t - prev) < law.min_separation) ok = false;
        if (ok) times.push_back(t);
      }
    }
    if (ok) break;
    if (schedule_attempt >= 64)
      throw DomainError(
          "sample_patient_config: cannot place treatments with the "
          "requested separation");
  }
  std::sort(times.begin(), times.end());
  for (int m = 0; m < n_treat; ++m)
    config.truth.treatments.push_back(
        {"drug" + std::to_string(m + 1) + ":sim:iv", times[m], law.ell});

  for (const auto& cc : spec.covariates) {
    CovariateSpec c;
    c.name = cc.name;
    c.se = KernelSpec::se(cc.se_sigma, cc.se_ell);
    c.periodic = KernelSpec::periodic(cc.periodic_sigma, cc.periodic_ell,
                                      cc.period);
    c.noise_var = cc.noise_var;
    c.lfm.B = cc.B;
    c.lfm.D = cc.D;
    config.truth.covariates.push_back(c);
  }
  config.truth.sync_treatments();
  for (auto& c : config.truth.covariates)
    for (int m = 0; m < n_treat; ++m) {
      const double mag = law.s_min + (law.s_max - law.s_min) * u01(rng);
      const double sign = (law.random_sign && u01(rng) < 0.5) ? -1.0 : 1.0;
      c.lfm.S[static_cast<std::size_t>(m)] = sign * mag;
    }
  config.validate();
  return config;
}

inline std::vector<SimConfig> generate_cohort(const CohortSpec& spec) {
  std::vector<SimConfig> out;
  for (int i = 0; i < spec.n_patients; ++i)
    out.push_back(sample_patient_config(spec, i));
  return out;
}

}  // namespace ccgp
