#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccgp/baselines.hpp"
#include "ccgp/data.hpp"
#include "ccgp/errors.hpp"
#include "ccgp/gp.hpp"
#include "ccgp/lfm.hpp"
#include "ccgp/quadrature.hpp"
#include "ccgp/trainer.hpp"

namespace ccgp {

inline double mae(const std::vector<double>& predictions,
                  const std::vector<double>& actuals) {
  if (predictions.size() != actuals.size())
    throw InputError("mae: length mismatch");
  if (predictions.empty()) throw InputError("mae: empty sequences");
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    acc += std::abs(predictions[i] - actuals[i]);
  return acc / static_cast<double>(predictions.size());
}

enum class Method { Proposed, SePer, OuExp };

inline Method parse_method(const std::string& s) {
  if (s == "proposed") return Method::Proposed;
  if (s == "se-per") return Method::SePer;
  if (s == "ou-exp") return Method::OuExp;
  throw InputError("unknown method '" + s + "' (expected proposed, se-per, "
                   "or ou-exp)");
}

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Proposed: return "proposed";
    case Method::SePer: return "se-per";
    case Method::OuExp: return "ou-exp";
  }
  throw InputError("unknown method");
}

struct ExperimentConfig {
  Method method = Method::Proposed;
  FitConfig fit;
  double train_fraction = 0.7;
  std::string out_dir;  // empty: no files are written
};

struct PatientEval {
  std::string patient_id;
  bool ok = false;
  std::string error;
  std::map<std::string, double> mae;        // per covariate, original units
  std::map<std::string, double> effect_s;   // proposed only: fitted S per
                                            // "covariate/type" key
};

struct CovariateStat {
  double mean_mae = 0.0;
  double std_error = 0.0;  // sample std / sqrt(N); meaningless when !has_se
  bool has_se = false;     // defined only for N >= 2
  std::size_t n_patients = 0;
};

struct EvalReport {
  std::string method;
  unsigned seed = 0;
  std::string config_hash;
  double wall_time_seconds = 0.0;
  std::size_t fit_failures = 0;
  std::vector<PatientEval> patients;  // sorted by patient_id
  std::map<std::string, CovariateStat> covariates;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["method"] = method;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["wall_time_seconds"] = wall_time_seconds;
    j["fit_failures"] = fit_failures;
    j["covariates"] = nlohmann::json::object();
    for (const auto& [name, st] : covariates) {
      nlohmann::json c;
      c["mae"] = st.mean_mae;
      c["n_patients"] = st.n_patients;
      if (st.has_se)
        c["std_error"] = st.std_error;
      else
        c["std_error"] = nullptr;  // undefined for N = 1
      j["covariates"][name] = c;
    }
    j["patients"] = nlohmann::json::array();
    for (const auto& p : patients) {
      nlohmann::json e;
      e["patient_id"] = p.patient_id;
      e["ok"] = p.ok;
      if (!p.ok) e["error"] = p.error;
      e["mae"] = p.mae;
      if (!p.effect_s.empty()) e["effect_s"] = p.effect_s;
      j["patients"].push_back(e);
    }
    return j;
  }
};

namespace detail {

struct TrajectoryRow {
  std::string covariate;
  double time = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  bool has_observed = false;
  double observed = 0.0;
  bool treatment_mark = false;
};

inline void write_trajectory_csv(const std::string& path,
                                 const std::vector<TrajectoryRow>& rows) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot open '" + path + "' for writing");
  os.precision(12);
  os << "covariate,time_hours,mean,variance,observed,treatment_mark\n";
  for (const auto& r : rows) {
    os << r.covariate << "," << r.time << "," << r.mean << "," << r.variance
       << ",";
    if (r.has_observed) os << r.observed;
    os << "," << (r.treatment_mark ? 1 : 0) << "\n";
  }
}

inline std::vector<double> dense_query_grid(double t_min, double t_max,
                                            std::size_t n) {
  std::vector<double> q;
  if (t_max <= t_min) return {t_min};
  for (std::size_t i = 0; i < n; ++i)
    q.push_back(t_min + (t_max - t_min) * double(i) / double(n - 1));
  return q;
}

}  // namespace detail

/// Evaluation protocol for one method on a dataset: per patient normalize,
/// split
/// 70/30 in time order, fit on the training prefix, predict the test times,
/// and report the MAE in original units. Fit failures are recorded and
/// excluded from the aggregates. Deterministic given the config.
inline EvalReport run_experiment(const std::vector<PatientRecord>& dataset,
                                 const ExperimentConfig& config) {
  const auto t_begin = std::chrono::steady_clock::now();
  EvalReport report;
  report.method = to_string(config.method);
  report.seed = config.fit.seed;
  {
    nlohmann::json cj;
    cj["method"] = report.method;
    cj["train_fraction"] = config.train_fraction;
    cj["restarts"] = config.fit.restarts;
    cj["max_iter"] = config.fit.max_iter;
    cj["seed"] = config.fit.seed;
    cj["convention"] =
        config.fit.convention == ForceConvention::Zeroed ? "zeroed"
                                                         : "unzeroed";
    report.config_hash = std::to_string(std::hash<std::string>{}(cj.dump()));
  }
  if (!config.out_dir.empty())
    std::filesystem::create_directories(config.out_dir);

  std::vector<const PatientRecord*> ordered;
  for (const auto& r : dataset) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](const PatientRecord* a, const PatientRecord* b) {
              return a->patient_id < b->patient_id;
            });

  std::map<std::string, std::vector<double>> per_covariate_maes;
  for (const PatientRecord* src : ordered) {
    PatientEval pe;
    pe.patient_id = src->patient_id;
    try {
      PatientRecord record = *src;
      record.validate();
      const auto means = normalize(record);
      auto [train, test] = split_train_test(record, config.train_fraction);

      std::vector<detail::TrajectoryRow> rows;
      if (config.method == Method::Proposed) {
        const FitResult fit = fit_patient(train, config.fit);
        for (std::size_t j = 0; j < fit.model.covariates.size(); ++j) {
          const auto& name = fit.model.covariates[j].name;
          const double mean_shift = means.at(name);
          const auto* te = test.find_covariate(name);
          if (te && !te->times.empty()) {
            std::vector<double> qt;
            for (double t : te->times) qt.push_back(t - fit.time_offset);
            const Posterior post =
                posterior_predict(fit.model, fit.train, j, qt);
            std::vector<double> pred, actual;
            for (std::size_t i = 0; i < qt.size(); ++i) {
              pred.push_back(post.mean[i] + mean_shift);
              actual.push_back(te->values[i] + mean_shift);
            }
            pe.mae[name] = mae(pred, actual);
          }
          for (std::size_t kt = 0; kt < fit.schema.treatment_types.size();
               ++kt) {
            // One tied S per (covariate, type); read it off the first site.
            for (std::size_t m = 0;
                 m < fit.schema.type_of_treatment.size(); ++m)
              if (fit.schema.type_of_treatment[m] == kt) {
                pe.effect_s[name + "/" + fit.schema.treatment_types[kt]] =
                    fit.model.covariates[j].lfm.S[m];
                break;
              }
          }
          if (!config.out_dir.empty()) {
            double t_max = fit.train[j].times.empty()
                               ? 1.0
                               : fit.train[j].times.back();
            if (te && !te->times.empty())
              t_max = std::max(t_max, te->times.back() - fit.time_offset);
            const auto grid = detail::dense_query_grid(0.0, t_max, 101);
            const Posterior post =
                posterior_predict(fit.model, fit.train, j, grid);
            for (std::size_t i = 0; i < grid.size(); ++i)
              rows.push_back({name, grid[i] + fit.time_offset,
                              post.mean[i] + mean_shift, post.variance[i],
                              false, 0.0, false});
            const auto* full = record.find_covariate(name);
            for (std::size_t i = 0; i < full->times.size(); ++i)
              rows.push_back({name, full->times[i], 0.0, 0.0, true,
                              full->values[i] + mean_shift, false});
            for (const auto& ev : record.treatments)
              rows.push_back({name, ev.time, 0.0, 0.0, false, 0.0, true});
          }
        }
      } else {
        const BaselineKind kind = config.method == Method::SePer
                                      ? BaselineKind::SePer
                                      : BaselineKind::OuExp;
        const BaselineFitResult fit = fit_baseline(kind, train, config.fit);
        for (std::size_t j = 0; j < fit.models.size(); ++j) {
          const auto& name = fit.models[j].covariate;
          const double mean_shift = means.at(name);
          const auto* te = test.find_covariate(name);
          if (te && !te->times.empty()) {
            std::vector<double> qt;
            for (double t : te->times) qt.push_back(t - fit.time_offset);
            const Posterior post =
                baseline_predict(fit.models[j], fit.train[j], qt);
            std::vector<double> pred, actual;
            for (std::size_t i = 0; i < qt.size(); ++i) {
              pred.push_back(post.mean[i] + mean_shift);
              actual.push_back(te->values[i] + mean_shift);
            }
            pe.mae[name] = mae(pred, actual);
          }
          if (!config.out_dir.empty()) {
            double t_max = fit.train[j].times.empty()
                               ? 1.0
                               : fit.train[j].times.back();
            if (te && !te->times.empty())
              t_max = std::max(t_max, te->times.back() - fit.time_offset);
            const auto grid = detail::dense_query_grid(0.0, t_max, 101);
            const Posterior post =
                baseline_predict(fit.models[j], fit.train[j], grid);
            for (std::size_t i = 0; i < grid.size(); ++i)
              rows.push_back({name, grid[i] + fit.time_offset,
                              post.mean[i] + mean_shift, post.variance[i],
                              false, 0.0, false});
            const auto* full = record.find_covariate(name);
            for (std::size_t i = 0; i < full->times.size(); ++i)
              rows.push_back({name, full->times[i], 0.0, 0.0, true,
                              full->values[i] + mean_shift, false});
            for (const auto& ev : record.treatments)
              rows.push_back({name, ev.time, 0.0, 0.0, false, 0.0, true});
          }
        }
      }
      pe.ok = true;
      for (const auto& [name, v] : pe.mae) per_covariate_maes[name].push_back(v);
      if (!config.out_dir.empty())
        detail::write_trajectory_csv(config.out_dir + "/trajectory_" +
                                         pe.patient_id + "_" + report.method +
                                         ".csv",
                                     rows);
    } catch (const NumericalError& e) {
      pe.ok = false;
      pe.error = e.what();
      ++report.fit_failures;
    } catch (const DomainError& e) {
      pe.ok = false;
      pe.error = e.what();
      ++report.fit_failures;
    }
    report.patients.push_back(std::move(pe));
  }

  for (const auto& [name, maes] : per_covariate_maes) {
    CovariateStat st;
    st.n_patients = maes.size();
    for (double v : maes) st.mean_mae += v;
    st.mean_mae /= double(maes.size());
    if (maes.size() >= 2) {
      double ss = 0.0;
      for (double v : maes) ss += (v - st.mean_mae) * (v - st.mean_mae);
      st.std_error = std::sqrt(ss / double(maes.size() - 1)) /
                     std::sqrt(double(maes.size()));
      st.has_se = true;
    }
    report.covariates[name] = st;
  }

  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin)
          .count();
  if (!config.out_dir.empty()) {
    std::ofstream os(config.out_dir + "/report_" + report.method + ".json");
    if (!os) throw InputError("cannot write report in '" + config.out_dir + "'");
    os << report.to_json().dump(2) << "\n";
  }
  return report;
}

// ---------------------------------------------------------------------------
// Closed-form-vs-quadrature oracle harness

struct OracleCaseSpec {
  double t = 1.0;      // output time (first argument)
  double t2 = 1.0;     // force / second output time
  double t_m = 0.5;
  double ell = 1.0;
  double D_a = 1.0, D_b = 1.0;
  double S_a = 1.0, S_b = 1.0;
  ForceConvention conv = ForceConvention::Zeroed;
};

struct OracleCaseResult {
  double cross_closed = 0.0, cross_quad = 0.0, cross_dev = 0.0;
  double cov_closed = 0.0, cov_quad = 0.0, cov_dev = 0.0;
};

/// Evaluates one oracle case; corrupt scales the closed forms (a detector-
/// sensitivity fixture, 1.0 in normal operation).
inline OracleCaseResult evaluate_oracle_case(const OracleCaseSpec& c,
                                             double corrupt = 1.0) {
  LfmParams pa;
  pa.B = 0.0;
  pa.D = c.D_a;
  pa.S = {c.S_a};
  pa.ell = {c.ell};
  pa.t_marks = {c.t_m};
  LfmParams pb = pa;
  pb.D = c.D_b;
  pb.S = {c.S_b};

  OracleCaseResult r;
  r.cross_closed = corrupt * cross_cov_force_output(c.t, c.t2, 0, pa, c.conv);
  r.cross_quad = quadrature_cross_cov(c.t, c.t2, 0, pa, c.conv, 1e-10);
  r.cross_dev = std::abs(r.cross_closed - r.cross_quad);
  const std::vector<std::size_t> shared{0};
  r.cov_closed = corrupt * cov_output_output(c.t, c.t2, pa, pb, shared, c.conv);
  r.cov_quad = quadrature_cov_output(c.t, c.t2, pa, pb, shared, c.conv, 1e-9);
  r.cov_dev = std::abs(r.cov_closed - r.cov_quad);
  return r;
}

struct OracleReport {
  std::size_t n_cases = 0;
  unsigned seed = 0;
  double tol_cross = 1e-6;
  double tol_cov = 1e-5;
  std::map<std::string, double> max_dev;  // "<convention>/<kind>/<ordering>"
  std::vector<std::string> failures;
  bool pass = true;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["n_cases"] = n_cases;
    j["seed"] = seed;
    j["tol_cross"] = tol_cross;
    j["tol_cov"] = tol_cov;
    j["max_deviation"] = max_dev;
    j["failures"] = failures;
    j["pass"] = pass;
    return j;
  }
};

/// Samples n random parameter tuples stratified across the four time
/// orderings of t, t' relative to t_m, under both force conventions, and
/// compares every closed form against adaptive quadrature.
inline OracleReport oracle_check(std::size_t n, unsigned seed,
                                 double tol_cross = 1e-6,
                                 double tol_cov = 1e-5,
                                 double corrupt = 1.0) {
  require(n >= 1, "oracle_check: need at least one case");
  OracleReport report;
  report.n_cases = n;
  report.seed = seed;
  report.tol_cross = tol_cross;
  report.tol_cov = tol_cov;

  static const char* kOrderings[4] = {"both-after", "t-after-t2-before",
                                      "t2-after-t-before", "both-before"};
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int ordering = static_cast<int>(i % 4);
    OracleCaseSpec c;
    c.ell = 0.3 + 1.7 * u01(rng);
    c.D_a = 0.2 + 1.8 * u01(rng);
    c.D_b = 0.2 + 1.8 * u01(rng);
    c.S_a = -3.0 + 6.0 * u01(rng);
    c.S_b = -3.0 + 6.0 * u01(rng);
    c.t_m = 0.5 + 2.5 * u01(rng);
    const double before_a = c.t_m * u01(rng);
    const double before_b = c.t_m * u01(rng);
    const double after_a = c.t_m + 3.0 * c.ell * u01(rng);
    const double after_b = c.t_m + 3.0 * c.ell * u01(rng);
    switch (ordering) {
      case 0: c.t = after_a; c.t2 = after_b; break;
      case 1: c.t = after_a; c.t2 = before_b; break;
      case 2: c.t = before_a; c.t2 = after_b; break;
      default: c.t = before_a; c.t2 = before_b; break;
    }
    for (auto conv : {ForceConvention::Zeroed, ForceConvention::Unzeroed}) {
      c.conv = conv;
      const std::string prefix =
          std::string(conv == ForceConvention::Zeroed ? "zeroed" : "unzeroed") +
          "/";
      const OracleCaseResult r = evaluate_oracle_case(c, corrupt);
      auto track = [&](const std::string& key, double dev, double tol) {
        double& slot = report.max_dev[key];
        slot = std::max(slot, dev);
        if (dev > tol) {
          report.pass = false;
          report.failures.push_back(
              key + ": deviation " + std::to_string(dev) + " at t=" +
              std::to_string(c.t) + " t2=" + std::to_string(c.t2) + " t_m=" +
              std::to_string(c.t_m) + " ell=" + std::to_string(c.ell));
        }
      };
      track(prefix + "cross/" + kOrderings[ordering], r.cross_dev, tol_cross);
      track(prefix + "cov/" + kOrderings[ordering], r.cov_dev, tol_cov);
    }
  }
  return report;
}

}  // namespace ccgp
