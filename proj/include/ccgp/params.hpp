#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ccgp/errors.hpp"
#include "ccgp/gp.hpp"

namespace ccgp {

enum class Transform { Log, Identity };

inline double unconstrain_value(double x, Transform tf) {
  if (tf == Transform::Log) {
    require(x > 0.0, "unconstrain: positive-domain parameter must be > 0");
    return std::log(x);
  }
  return x;
}

inline double constrain_value(double u, Transform tf) {
  if (tf == Transform::Log) {
    // exp underflows to exactly 0 below ~-745, which would violate the
    // positive domain; floor at the smallest positive normal double.
    return std::max(std::exp(u), std::numeric_limits<double>::min());
  }
  return u;
}

/// Flat unconstrained parameterization of a GpModel, with the tying table
/// baked into the layout: per covariate {sigma1, ell1, [sigma2, ell2, p],
/// noise, B, D}, then one effect size per (covariate, treatment type), then
/// one force length scale per treatment type. Treatments of the same type
/// share S and ell by construction; D and the baseline parameters are
/// covariate-level and thus shared across all of that covariate's treatments.
struct ParamSchema {
  struct Entry {
    std::string name;
    Transform transform = Transform::Log;
  };

  GpModel base;  // structural template (names, marks, convention)
  std::vector<Entry> entries;
  std::vector<std::string> treatment_types;       // unique, in first-seen order
  std::vector<std::size_t> type_of_treatment;     // treatment index -> type
  std::vector<bool> periodic_enabled;             // per covariate

  static ParamSchema build(const GpModel& base) {
    base.validate();
    ParamSchema s;
    s.base = base;
    for (const auto& t : base.treatments) {
      std::size_t k = 0;
      for (; k < s.treatment_types.size(); ++k)
        if (s.treatment_types[k] == t.type) break;
      if (k == s.treatment_types.size()) s.treatment_types.push_back(t.type);
      s.type_of_treatment.push_back(k);
    }
    for (std::size_t j = 0; j < base.covariates.size(); ++j) {
      const auto& c = base.covariates[j];
      const std::string p = c.name + ".";
      s.periodic_enabled.push_back(c.periodic.sigma > 0.0);
      s.entries.push_back({p + "sigma1", Transform::Log});
      s.entries.push_back({p + "ell1", Transform::Log});
      if (s.periodic_enabled[j]) {
        s.entries.push_back({p + "sigma2", Transform::Log});
        s.entries.push_back({p + "ell2", Transform::Log});
        s.entries.push_back({p + "period", Transform::Log});
      }
      s.entries.push_back({p + "noise", Transform::Log});
      s.entries.push_back({p + "B", Transform::Identity});
      s.entries.push_back({p + "D", Transform::Log});
    }
    for (std::size_t j = 0; j < base.covariates.size(); ++j)
      for (const auto& type : s.treatment_types)
        s.entries.push_back(
            {base.covariates[j].name + ".S[" + type + "]",
             Transform::Identity});
    for (const auto& type : s.treatment_types)
      s.entries.push_back({"ell[" + type + "]", Transform::Log});
    return s;
  }

  std::size_t size() const { return entries.size(); }

  /// Writes an unconstrained vector into a copy of the base model.
  GpModel to_model(const Eigen::VectorXd& u) const {
    require(static_cast<std::size_t>(u.size()) == entries.size(),
            "ParamSchema::to_model: vector size mismatch");
    GpModel m = base;
    std::size_t k = 0;
    auto next = [&] {
      const double v = constrain_value(u(k), entries[k].transform);
      ++k;
      return v;
    };
    for (std::size_t j = 0; j < m.covariates.size(); ++j) {
      auto& c = m.covariates[j];
      c.se.sigma = next();
      c.se.length_scale = next();
      if (periodic_enabled[j]) {
        c.periodic.sigma = next();
        c.periodic.length_scale = next();
        c.periodic.period = next();
      } else {
        c.periodic.sigma = 0.0;
      }
      c.noise_var = next();
      c.lfm.B = next();
      c.lfm.D = next();
    }
    const std::size_t n_types = treatment_types.size();
    std::vector<double> type_s(n_types);
    for (std::size_t j = 0; j < m.covariates.size(); ++j) {
      for (std::size_t kt = 0; kt < n_types; ++kt) type_s[kt] = next();
      for (std::size_t mm = 0; mm < type_of_treatment.size(); ++mm)
        m.covariates[j].lfm.S[mm] = type_s[type_of_treatment[mm]];
    }
    for (std::size_t kt = 0; kt < n_types; ++kt) {
      const double ell = next();
      for (std::size_t mm = 0; mm < type_of_treatment.size(); ++mm)
        if (type_of_treatment[mm] == kt) m.treatments[mm].ell = ell;
    }
    m.sync_treatments();
    return m;
  }

  /// Reads a model's constrained values into the unconstrained layout.
  /// Tied sites must already agree; the first site of each tie is read.
  Eigen::VectorXd from_model(const GpModel& m) const {
    Eigen::VectorXd u(entries.size());
    std::size_t k = 0;
    auto put = [&](double x) {
      u(k) = unconstrain_value(x, entries[k].transform);
      ++k;
    };
    for (std::size_t j = 0; j < m.covariates.size(); ++j) {
      const auto& c = m.covariates[j];
      put(c.se.sigma);
      put(c.se.length_scale);
      if (periodic_enabled[j]) {
        put(c.periodic.sigma);
        put(c.periodic.length_scale);
        put(c.periodic.period);
      }
      put(c.noise_var);
      put(c.lfm.B);
      put(c.lfm.D);
    }
    const std::size_t n_types = treatment_types.size();
    for (std::size_t j = 0; j < m.covariates.size(); ++j)
      for (std::size_t kt = 0; kt < n_types; ++kt) {
        double s = 0.0;
        for (std::size_t mm = 0; mm < type_of_treatment.size(); ++mm)
          if (type_of_treatment[mm] == kt) {
            s = m.covariates[j].lfm.S[mm];
            break;
          }
        put(s);
      }
    for (std::size_t kt = 0; kt < n_types; ++kt) {
      double ell = 1.0;
      for (std::size_t mm = 0; mm < type_of_treatment.size(); ++mm)
        if (type_of_treatment[mm] == kt) {
          ell = m.treatments[mm].ell;
          break;
        }
      put(ell);
    }
    return u;
  }
};

/// Optional Gaussian penalty on the unconstrained coordinates, standing in
/// for a population-level empirical prior.
struct GaussianPrior {
  bool enabled = false;
  double mean = 0.0;
  double variance = 1.0;

  double penalty(const Eigen::VectorXd& u) const {
    if (!enabled) return 0.0;
    require(variance > 0.0, "GaussianPrior: variance must be positive");
    return (u.array() - mean).square().sum() / (2.0 * variance);
  }

  void add_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& g) const {
    if (!enabled) return;
    g += (u.array() - mean).matrix() / variance;
  }
};

}  // namespace ccgp
