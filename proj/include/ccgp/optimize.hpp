#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "ccgp/errors.hpp"

namespace ccgp {

struct OptimResult {
  Eigen::VectorXd x;
  double objective = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;          // gradient tolerance reached
  std::vector<double> trace;       // objective per accepted iterate
};

/// Limited-memory BFGS with Armijo backtracking. The callback evaluates the
/// objective and writes its gradient; it may throw NumericalError for
/// infeasible iterates, which the line search treats as +inf.
inline OptimResult minimize_lbfgs(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& fg,
    Eigen::VectorXd x0, int max_iter = 500, double grad_tol = 1e-3,
    int history = 8) {
  const auto n = x0.size();
  OptimResult res;
  Eigen::VectorXd g(n), g_new(n);
  double f = fg(x0, g);  // evaluation failure at the start propagates
  Eigen::VectorXd x = std::move(x0);
  res.trace.push_back(f);

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;

  auto safe_eval = [&](const Eigen::VectorXd& xt, Eigen::VectorXd& gt) {
    try {
      const double ft = fg(xt, gt);
      return std::isfinite(ft) ? ft : std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  for (int it = 0; it < max_iter; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= grad_tol) {
      res.converged = true;
      break;
    }
    // Two-loop recursion for the search direction.
    Eigen::VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd dir = -q;
    double slope = g.dot(dir);
    if (slope >= 0.0) {  // not a descent direction; fall back to steepest
      dir = -g;
      slope = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    // Weak Wolfe line search (Armijo + curvature) by bisection/expansion,
    // so accepted steps always yield a usable curvature pair.
    const double c1 = 1e-4, c2 = 0.9;
    double step = 1.0, lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    bool accepted = false;
    double best_step = 0.0, best_f = f;
    Eigen::VectorXd best_g;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + step * dir;
      f_new = safe_eval(x_new, g_new);
      if (!(f_new <= f + c1 * step * slope)) {
        hi = step;
        step = 0.5 * (lo + hi);
        continue;
      }
      if (f_new < best_f) {  // remember the best Armijo point as a fallback
        best_step = step;
        best_f = f_new;
        best_g = g_new;
      }
      if (g_new.dot(dir) < c2 * slope) {
        lo = step;
        step = std::isinf(hi) ? 2.0 * step : 0.5 * (lo + hi);
        continue;
      }
      accepted = true;
      break;
    }
    if (!accepted && best_step > 0.0) {  // Armijo-only fallback
      step = best_step;
      x_new = x + step * dir;
      f_new = best_f;
      g_new = best_g;
      accepted = true;
    }
    if (!accepted) break;  // cannot improve along this direction

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = std::move(x_new);
    f = f_new;
    g = g_new;
    res.trace.push_back(f);
    res.iterations = it + 1;
  }
  if (g.lpNorm<Eigen::Infinity>() <= grad_tol) res.converged = true;
  res.x = std::move(x);
  res.objective = f;
  return res;
}

}  // namespace ccgp
