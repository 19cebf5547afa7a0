#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "ccgp/data.hpp"
#include "ccgp/errors.hpp"
#include "ccgp/gp.hpp"
#include "ccgp/trainer.hpp"

namespace ccgp {

enum class BaselineKind { SePer, OuExp };

inline BaselineKind parse_baseline_kind(const std::string& s) {
  if (s == "se-per") return BaselineKind::SePer;
  if (s == "ou-exp") return BaselineKind::OuExp;
  throw InputError("unknown baseline kind '" + s + "'");
}

/// Constant-plus-exponential-decay treatment mean: c + sum over marks of
/// a_m e^{-gamma_m (t - t_m)} for t > t_m.
struct ExpDecayMean {
  double c = 0.0;
  std::vector<double> a;      // per treatment
  std::vector<double> gamma;  // per treatment, positive

  void validate(std::size_t n_marks) const {
    require(a.size() == n_marks && gamma.size() == n_marks,
            "ExpDecayMean: amplitude/decay length must match the marks");
    for (double g : gamma)
      require(g > 0.0, "ExpDecayMean: decay must be positive");
  }
};

inline double exp_decay_mean(double t, const ExpDecayMean& params,
                             const std::vector<double>& marks) {
  params.validate(marks.size());
  double v = params.c;
  for (std::size_t m = 0; m < marks.size(); ++m)
    if (t > marks[m]) v += params.a[m] * std::exp(-params.gamma[m] *
                                                  (t - marks[m]));
  return v;
}

/// One fitted univariate comparison model (either comparison baseline).
struct BaselineModel {
  BaselineKind kind = BaselineKind::SePer;
  std::string covariate;
  KernelSpec se = KernelSpec::se(1.0, 1.0);              // SePer
  KernelSpec periodic = KernelSpec::periodic(0.0, 1.0, 24.0);  // SePer
  KernelSpec ou = KernelSpec::ou(1.0, 1.0);              // OuExp
  ExpDecayMean mean;                                     // c used by both
  std::vector<double> marks;                             // treatment times
  double noise_var = 1.0;
  double jitter_rel = 1e-8;
};

inline double baseline_kernel_eval(const BaselineModel& m, double t,
                                   double t2) {
  if (m.kind == BaselineKind::SePer) {
    double v = se_kernel(t, t2, m.se.sigma, m.se.length_scale);
    if (m.periodic.sigma > 0.0)
      v += periodic_kernel(t, t2, m.periodic.sigma, m.periodic.length_scale,
                           m.periodic.period);
    return v;
  }
  return ou_kernel(t, t2, m.ou.sigma, m.ou.length_scale);
}

inline double baseline_mean_eval(const BaselineModel& m, double t) {
  if (m.kind == BaselineKind::SePer) return m.mean.c;
  return exp_decay_mean(t, m.mean, m.marks);
}

namespace detail {

inline Eigen::MatrixXd baseline_gram(const BaselineModel& m,
                                     const std::vector<double>& times,
                                     bool include_noise) {
  const Eigen::Index n = static_cast<Eigen::Index>(times.size());
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b <= a; ++b) {
      double v = baseline_kernel_eval(m, times[a], times[b]);
      if (include_noise && a == b) v += m.noise_var;
      K(a, b) = v;
      K(b, a) = v;
    }
  return K;
}

}  // namespace detail

inline double baseline_nll(const BaselineModel& m, const Series& obs) {
  require(!obs.times.empty(), "baseline_nll: need at least one observation");
  require(obs.times.size() == obs.values.size(),
          "baseline_nll: times/values mismatch");
  const Eigen::Index n = static_cast<Eigen::Index>(obs.times.size());
  const Eigen::MatrixXd K = detail::baseline_gram(m, obs.times, true);
  auto llt = cholesky_with_jitter(K, m.jitter_rel);
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i)
    r(i) = obs.values[i] - baseline_mean_eval(m, obs.times[i]);
  const Eigen::VectorXd alpha = llt.solve(r);
  double logdet = 0.0;
  const auto& L = llt.matrixLLT();
  for (Eigen::Index i = 0; i < n; ++i) logdet += 2.0 * std::log(L(i, i));
  return 0.5 * r.dot(alpha) + 0.5 * logdet +
         0.5 * double(n) * std::log(2.0 * std::numbers::pi_v<double>);
}

inline Posterior baseline_predict(const BaselineModel& m, const Series& train,
                                  const std::vector<double>& query,
                                  bool predictive_noise = false) {
  const Eigen::Index n = static_cast<Eigen::Index>(train.times.size());
  const Eigen::Index q = static_cast<Eigen::Index>(query.size());
  const Eigen::MatrixXd K = detail::baseline_gram(m, train.times, true);
  auto llt = cholesky_with_jitter(K, m.jitter_rel);
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i)
    r(i) = train.values[i] - baseline_mean_eval(m, train.times[i]);
  Eigen::MatrixXd Kxq(n, q);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < q; ++j)
      Kxq(i, j) = baseline_kernel_eval(m, train.times[i], query[j]);
  const Eigen::VectorXd alpha = llt.solve(r);
  const Eigen::MatrixXd W = llt.solve(Kxq);

  Posterior post;
  post.times = query;
  for (Eigen::Index j = 0; j < q; ++j) {
    post.mean.push_back(baseline_mean_eval(m, query[j]) +
                        Kxq.col(j).dot(alpha));
    double v = baseline_kernel_eval(m, query[j], query[j]) -
               Kxq.col(j).dot(W.col(j));
    if (predictive_noise) v += m.noise_var;
    post.variance.push_back(std::max(v, 0.0));
  }
  return post;
}

struct BaselineFitResult {
  std::vector<BaselineModel> models;     // one per fitted covariate
  std::vector<double> objectives;        // per covariate, best restart
  std::vector<Series> train;             // rebased observations
  double time_offset = 0.0;
};

namespace detail {

struct BaselineSchema {
  BaselineModel base;
  std::vector<ParamSchema::Entry> entries;
  std::vector<std::string> types;          // unique treatment types
  std::vector<std::size_t> type_of_mark;   // mark -> type index
  bool periodic_enabled = false;

  static BaselineSchema build(const BaselineModel& base,
                              const std::vector<std::string>& mark_types) {
    BaselineSchema s;
    s.base = base;
    s.periodic_enabled = base.periodic.sigma > 0.0;
    for (const auto& t : mark_types) {
      std::size_t k = 0;
      for (; k < s.types.size(); ++k)
        if (s.types[k] == t) break;
      if (k == s.types.size()) s.types.push_back(t);
      s.type_of_mark.push_back(k);
    }
    const std::string p = base.covariate + ".";
    if (base.kind == BaselineKind::SePer) {
      s.entries.push_back({p + "sigma1", Transform::Log});
      s.entries.push_back({p + "ell1", Transform::Log});
      if (s.periodic_enabled) {
        s.entries.push_back({p + "sigma2", Transform::Log});
        s.entries.push_back({p + "ell2", Transform::Log});
        s.entries.push_back({p + "period", Transform::Log});
      }
    } else {
      s.entries.push_back({p + "ou_sigma", Transform::Log});
      s.entries.push_back({p + "ou_ell", Transform::Log});
    }
    s.entries.push_back({p + "noise", Transform::Log});
    s.entries.push_back({p + "c", Transform::Identity});
    if (base.kind == BaselineKind::OuExp)
      for (const auto& t : s.types) {
        s.entries.push_back({p + "a[" + t + "]", Transform::Identity});
        s.entries.push_back({p + "gamma[" + t + "]", Transform::Log});
      }
    return s;
  }

  std::size_t size() const { return entries.size(); }

  BaselineModel to_model(const Eigen::VectorXd& u) const {
    require(static_cast<std::size_t>(u.size()) == entries.size(),
            "BaselineSchema: vector size mismatch");
    BaselineModel m = base;
    std::size_t k = 0;
    auto next = [&] {
      const double v = constrain_value(u(static_cast<Eigen::Index>(k)),
                                       entries[k].transform);
      ++k;
      return v;
    };
    if (m.kind == BaselineKind::SePer) {
      m.se.sigma = next();
      m.se.length_scale = next();
      if (periodic_enabled) {
        m.periodic.sigma = next();
        m.periodic.length_scale = next();
        m.periodic.period = next();
      } else {
        m.periodic.sigma = 0.0;
      }
    } else {
      m.ou.sigma = next();
      m.ou.length_scale = next();
    }
    m.noise_var = next();
    m.mean.c = next();
    if (m.kind == BaselineKind::OuExp) {
      std::vector<double> ta(types.size()), tg(types.size());
      for (std::size_t kt = 0; kt < types.size(); ++kt) {
        ta[kt] = next();
        tg[kt] = next();
      }
      m.mean.a.resize(type_of_mark.size());
      m.mean.gamma.resize(type_of_mark.size());
      for (std::size_t i = 0; i < type_of_mark.size(); ++i) {
        m.mean.a[i] = ta[type_of_mark[i]];
        m.mean.gamma[i] = tg[type_of_mark[i]];
      }
    }
    return m;
  }

  Eigen::VectorXd from_model(const BaselineModel& m) const {
    Eigen::VectorXd u(entries.size());
    std::size_t k = 0;
    auto put = [&](double x) {
      u(static_cast<Eigen::Index>(k)) = unconstrain_value(x,
                                                          entries[k].transform);
      ++k;
    };
    if (m.kind == BaselineKind::SePer) {
      put(m.se.sigma);
      put(m.se.length_scale);
      if (periodic_enabled) {
        put(m.periodic.sigma);
        put(m.periodic.length_scale);
        put(m.periodic.period);
      }
    } else {
      put(m.ou.sigma);
      put(m.ou.length_scale);
    }
    put(m.noise_var);
    put(m.mean.c);
    if (m.kind == BaselineKind::OuExp)
      for (std::size_t kt = 0; kt < types.size(); ++kt) {
        double a = 0.0, g = 1.0;
        for (std::size_t i = 0; i < type_of_mark.size(); ++i)
          if (type_of_mark[i] == kt) {
            a = m.mean.a[i];
            g = m.mean.gamma[i];
            break;
          }
        put(a);
        put(g);
      }
    return u;
  }
};

}  // namespace detail

/// Fits the comparison baseline models, one univariate GP per covariate, with the
/// same optimizer contract as fit_patient (restarts, determinism, rebasing).
inline BaselineFitResult fit_baseline(BaselineKind kind,
                                      const PatientRecord& record_in,
                                      const FitConfig& config) {
  require(config.restarts >= 1, "fit_baseline: need at least one restart");
  PatientRecord record = record_in;
  record.validate();
  BaselineFitResult result;
  result.time_offset = rebase_time_origin(record);

  std::vector<double> marks;
  std::vector<std::string> mark_types;
  for (const auto& e : record.treatments) {
    marks.push_back(e.time);
    mark_types.push_back(e.treatment_type);
  }
  for (const auto& c : record.covariates) {
    if (!config.covariates.empty() &&
        std::find(config.covariates.begin(), config.covariates.end(),
                  c.name) == config.covariates.end())
      continue;
    require(!c.times.empty(),
            "fit_baseline: covariate " + c.name + " has no observations");
    const double sd = empirical_std(c.values);
    const double gap = median_gap(c.times);
    double mean0 = 0.0;
    for (double v : c.values) mean0 += v;
    mean0 /= double(c.values.size());

    BaselineModel init;
    init.kind = kind;
    init.covariate = c.name;
    init.marks = marks;
    init.jitter_rel = config.jitter_rel;
    init.noise_var = std::max(0.1 * sd * sd, 1e-6);
    init.mean.c = mean0;
    if (kind == BaselineKind::SePer) {
      init.se = KernelSpec::se(sd, gap);
      init.periodic = c.times.size() >= 3 ? KernelSpec::periodic(sd, 1.0, 24.0)
                                          : KernelSpec::periodic(0.0, 1.0, 24.0);
      init.mean.a.assign(marks.size(), 0.0);
      init.mean.gamma.assign(marks.size(), 1.0);  // unused by SePer
    } else {
      init.ou = KernelSpec::ou(sd, gap);
      init.mean.a.assign(marks.size(), 0.0);
      init.mean.gamma.assign(marks.size(), 1.0 / gap);
    }

    const auto schema = detail::BaselineSchema::build(init, mark_types);
    const Eigen::VectorXd u0 = schema.from_model(init);
    const Series obs{c.times, c.values};

    auto objective = [&](const Eigen::VectorXd& u) {
      return baseline_nll(schema.to_model(u), obs) + config.prior.penalty(u);
    };
    auto fg = [&](const Eigen::VectorXd& u, Eigen::VectorXd& g) {
      double f0;
      try {
        f0 = objective(u);
      } catch (const NumericalError&) {
        throw;
      }
      g.resize(u.size());
      for (Eigen::Index k = 0; k < u.size(); ++k) {
        const double h = config.fd_step * std::max(1.0, std::abs(u(k)));
        Eigen::VectorXd up = u, dn = u;
        up(k) += h;
        dn(k) -= h;
        double fp, fm;
        try {
          fp = objective(up);
        } catch (const NumericalError&) {
          fp = std::numeric_limits<double>::quiet_NaN();
        }
        try {
          fm = objective(dn);
        } catch (const NumericalError&) {
          fm = std::numeric_limits<double>::quiet_NaN();
        }
        if (std::isfinite(fp) && std::isfinite(fm))
          g(k) = (fp - fm) / (2.0 * h);
        else if (std::isfinite(fp))
          g(k) = (fp - f0) / h;
        else if (std::isfinite(fm))
          g(k) = (f0 - fm) / h;
        else
          g(k) = 0.0;
      }
      return f0;
    };

    // Per-covariate restart stream keyed on the covariate name, so the fit
    // for one covariate is independent of which others are present.
    std::seed_seq seq{static_cast<unsigned>(config.seed),
                      static_cast<unsigned>(std::hash<std::string>{}(c.name))};
    std::mt19937 rng(seq);
    std::normal_distribution<double> jitter(0.0, 1.0);

    double best_obj = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_x;
    bool any_ok = false;
    std::string last_error;
    for (int r = 0; r < config.restarts; ++r) {
      Eigen::VectorXd u = u0;
      if (r > 0)
        for (std::size_t k = 0; k < schema.size(); ++k)
          if (schema.entries[k].name.find(".a[") != std::string::npos)
            u(static_cast<Eigen::Index>(k)) += jitter(rng);
      try {
        auto opt = minimize_lbfgs(fg, u, config.max_iter, config.grad_tol);
        if (!any_ok || opt.objective < best_obj) {
          best_obj = opt.objective;
          best_x = opt.x;
        }
        any_ok = true;
      } catch (const NumericalError& e) {
        last_error = e.what();
      }
    }
    if (!any_ok)
      throw NumericalError("fit_baseline: all restarts failed for " + c.name +
                           ": " + last_error);
    result.models.push_back(schema.to_model(best_x));
    result.objectives.push_back(best_obj);
    result.train.push_back(obs);
  }
  require(!result.models.empty(), "fit_baseline: no covariates to model");
  return result;
}

}  // namespace ccgp
