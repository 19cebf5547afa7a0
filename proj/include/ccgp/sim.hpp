#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "ccgp/data.hpp"
#include "ccgp/errors.hpp"
#include "ccgp/gp.hpp"

namespace ccgp {

enum class SamplingLaw { FixedGrid, UniformRandom, Burst };

inline SamplingLaw parse_sampling_law(const std::string& s) {
  if (s == "fixed-grid") return SamplingLaw::FixedGrid;
  if (s == "uniform-random") return SamplingLaw::UniformRandom;
  if (s == "burst") return SamplingLaw::Burst;
  throw InputError("unknown sampling law '" + s + "'");
}

struct ObservationSchedule {
  SamplingLaw law = SamplingLaw::FixedGrid;
  int count = 60;
  double t_start = 0.0;
  double t_end = 72.0;
  int bursts = 4;  // used by the burst law only
};

/// Ground-truth generative configuration. The truth model carries the LFM
/// parameters, baseline kernels, noise variances and the treatment schedule;
/// its convention selects zeroed (default) or unzeroed force sampling.
struct SimConfig {
  GpModel truth;
  ObservationSchedule schedule;
  double grid_dt = 0.05;  // integration grid resolution, hours
  unsigned seed = 0;
  std::string patient_id = "sim-patient";
  std::vector<double> doses;  // optional, one per treatment
  // The pair (S, f) is only identifiable up to a joint sign flip. When set,
  // each sampled force is negated if needed so its post-mark average is
  // nonnegative, fixing the gauge so that sign(S) is meaningful ground truth
  // for recovery experiments. Leaves all second moments unchanged.
  bool canonicalize_force_sign = false;

  void validate() const {
    truth.validate();
    require(grid_dt > 0.0, "SimConfig: grid resolution must be positive");
    require(schedule.count >= 1, "SimConfig: need at least one observation");
    require(schedule.t_end > schedule.t_start && schedule.t_start >= 0.0,
            "SimConfig: need 0 <= t_start < t_end");
    if (schedule.law == SamplingLaw::Burst)
      require(schedule.bursts >= 1, "SimConfig: need at least one burst");
    double max_d = 0.0;
    for (const auto& c : truth.covariates) max_d = std::max(max_d, c.lfm.D);
    for (const auto& t : truth.treatments)
      require(grid_dt <= t.ell / 10.0,
              "SimConfig: grid resolution must be <= min force length scale "
              "/ 10");
    if (max_d > 0.0)
      require(grid_dt <= 1.0 / (10.0 * max_d),
              "SimConfig: grid resolution must be <= 1/(10 max D)");
    if (!doses.empty())
      require(doses.size() == truth.treatments.size(),
              "SimConfig: doses must match the treatment schedule");
  }
};

struct SimResult {
  PatientRecord record;
  std::vector<double> grid;                      // integration grid
  std::vector<std::vector<double>> forces;       // per treatment, on grid
  std::vector<std::vector<double>> latent;       // noiseless output, on grid
  std::vector<Series> baseline;                  // baseline sample, obs times
};

/// Exact one-step solution of x' = -D x + S f with f held piecewise-linear
/// between grid nodes; returns the forced response with x(grid[0]) = 0.
inline std::vector<double> integrate_force(const std::vector<double>& grid,
                                           const std::vector<double>& f,
                                           double D, double S) {
  require(grid.size() == f.size(), "integrate_force: grid/force mismatch");
  require(D > 0.0, "integrate_force: D must be positive");
  std::vector<double> z(grid.size(), 0.0);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double dt = grid[k + 1] - grid[k];
    require(dt > 0.0, "integrate_force: grid must be strictly increasing");
    const double decay = std::exp(-D * dt);
    const double i0 = (1.0 - decay) / D;             // integral of the decay
    const double i1 = (dt - i0) / D;                 // first moment
    z[k + 1] = decay * z[k] +
               S * (f[k] * (i0 - i1 / dt) + f[k + 1] * (i1 / dt));
  }
  return z;
}

namespace detail {

inline std::mt19937_64 stream_rng(unsigned seed, unsigned purpose,
                                  unsigned index) {
  // Independent substreams so that, e.g., removing all treatments leaves the
  // baseline and noise draws untouched.
  std::seed_seq seq{seed, purpose, index};
  return std::mt19937_64(seq);
}

inline Eigen::VectorXd gaussian_sample(const Eigen::MatrixXd& K,
                                       double jitter_rel,
                                       std::mt19937_64& rng) {
  auto llt = cholesky_with_jitter(K, jitter_rel);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(K.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return llt.matrixL() * z;
}

inline std::vector<double> observation_schedule_times(
    const ObservationSchedule& s, std::mt19937_64& rng) {
  std::vector<double> times;
  const double span = s.t_end - s.t_start;
  switch (s.law) {
    case SamplingLaw::FixedGrid:
      for (int i = 0; i < s.count; ++i)
        times.push_back(s.count == 1
                            ? s.t_start
                            : s.t_start + span * double(i) / double(s.count - 1));
      break;
    case SamplingLaw::UniformRandom: {
      std::uniform_real_distribution<double> u(s.t_start, s.t_end);
      for (int i = 0; i < s.count; ++i) times.push_back(u(rng));
      break;
    }
    case SamplingLaw::Burst: {
      const double width = span / (4.0 * double(s.bursts));
      for (int i = 0; i < s.count; ++i) {
        const int b = i % s.bursts;
        const double center =
            s.t_start + span * (double(b) + 0.5) / double(s.bursts);
        std::uniform_real_distribution<double> u(
            std::max(s.t_start, center - width),
            std::min(s.t_end, center + width));
        times.push_back(u(rng));
      }
      break;
    }
  }
  std::sort(times.begin(), times.end());
  return times;
}

}  // namespace detail

/// Samples the full generative model: latent forces from the causal-kernel GP
/// on a fine grid, exact exponential integration of the forced linear ODE,
/// an independent baseline GP draw, and i.i.d. observation noise.
/// Observation times are snapped to grid nodes so the reported latent
/// trajectory is exact at every observation. Deterministic given the seed.
inline SimResult simulate_patient(const SimConfig& config) {
  config.validate();
  const GpModel& truth = config.truth;
  SimResult out;

  // Integration grid covering [0, t_end]; forces are defined from time 0.
  const std::size_t n_grid = static_cast<std::size_t>(
                                 std::ceil(config.schedule.t_end /
                                           config.grid_dt - 1e-9)) + 1;
  out.grid.resize(n_grid);
  for (std::size_t k = 0; k < n_grid; ++k)
    out.grid[k] = std::min(double(k) * config.grid_dt, config.schedule.t_end);

  // One force sample per treatment on the grid.
  const std::size_t n_treat = truth.treatments.size();
  out.forces.resize(n_treat);
  for (std::size_t m = 0; m < n_treat; ++m) {
    const auto& tr = truth.treatments[m];
    Eigen::MatrixXd K(n_grid, n_grid);
    for (std::size_t a = 0; a < n_grid; ++a)
      for (std::size_t b = 0; b <= a; ++b) {
        const double v = force_cov(out.grid[a], out.grid[b], tr.time, tr.ell,
                                   truth.convention);
        K(a, b) = v;
        K(b, a) = v;
      }
    auto rng = detail::stream_rng(config.seed, 1u, static_cast<unsigned>(m));
    const Eigen::VectorXd f = detail::gaussian_sample(K, truth.jitter_rel, rng);
    out.forces[m].assign(f.data(), f.data() + f.size());
    if (truth.convention == ForceConvention::Zeroed)
      for (std::size_t k = 0; k < n_grid; ++k)
        if (out.grid[k] <= tr.time) out.forces[m][k] = 0.0;
    if (config.canonicalize_force_sign) {
      // Flip on the sign of the post-mark average of the induced unit-S
      // response (slowest covariate decay, zero state at the mark), so the
      // gauge matches the sign of the output excursion rather than of the
      // raw force. Starting at the mark keeps the functional independent of
      // the weakly identified pre-mark force level.
      double d_ref = std::numeric_limits<double>::infinity();
      for (const auto& c : truth.covariates) d_ref = std::min(d_ref, c.lfm.D);
      const double horizon = tr.time + 6.0 * tr.ell;
      std::size_t k0 = 0;
      while (k0 + 1 < n_grid && out.grid[k0 + 1] <= tr.time) ++k0;
      std::vector<double> sub_grid, sub_force;
      for (std::size_t k = k0; k < n_grid && out.grid[k] <= horizon; ++k) {
        sub_grid.push_back(out.grid[k]);
        sub_force.push_back(out.forces[m][k]);
      }
      const std::vector<double> unit =
          integrate_force(sub_grid, sub_force, d_ref, 1.0);
      double acc = 0.0;
      for (std::size_t k = 0; k < sub_grid.size(); ++k)
        if (sub_grid[k] > tr.time) acc += unit[k];
      if (acc < 0.0)
        for (double& v : out.forces[m]) v = -v;
    }
  }

  // Noiseless latent trajectory per covariate: mean plus forced responses.
  out.latent.resize(truth.covariates.size());
  for (std::size_t j = 0; j < truth.covariates.size(); ++j) {
    const auto& c = truth.covariates[j];
    std::vector<double> x(n_grid, c.lfm.B / c.lfm.D);
    for (std::size_t m = 0; m < n_treat; ++m) {
      const std::vector<double> z =
          integrate_force(out.grid, out.forces[m], c.lfm.D, c.lfm.S[m]);
      for (std::size_t k = 0; k < n_grid; ++k) x[k] += z[k];
    }
    out.latent[j] = std::move(x);
  }

  // Observation times (snapped to grid nodes, preserving uniqueness of draws).
  auto sched_rng = detail::stream_rng(config.seed, 2u, 0u);
  std::vector<double> raw_times =
      detail::observation_schedule_times(config.schedule, sched_rng);
  std::vector<std::size_t> idx;
  for (double t : raw_times) {
    const std::size_t k = static_cast<std::size_t>(std::llround(
        std::min(t, out.grid.back()) / config.grid_dt));
    idx.push_back(std::min(k, n_grid - 1));
  }
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());

  // Assemble the record: latent + baseline draw + noise at observed nodes.
  out.record.patient_id = config.patient_id;
  for (std::size_t m = 0; m < n_treat; ++m)
    out.record.treatments.push_back(
        {truth.treatments[m].time, truth.treatments[m].type,
         config.doses.empty() ? 0.0 : config.doses[m], Route::Injection});
  const Eigen::Index n_obs = static_cast<Eigen::Index>(idx.size());
  for (std::size_t j = 0; j < truth.covariates.size(); ++j) {
    const auto& c = truth.covariates[j];
    std::vector<double> times;
    for (std::size_t k : idx) times.push_back(out.grid[k]);

    Eigen::MatrixXd Kb(n_obs, n_obs);
    for (Eigen::Index a = 0; a < n_obs; ++a)
      for (Eigen::Index b = 0; b <= a; ++b) {
        const double v = baseline_cov(c, times[a], times[b]);
        Kb(a, b) = v;
        Kb(b, a) = v;
      }
    auto brng = detail::stream_rng(config.seed, 3u, static_cast<unsigned>(j));
    const Eigen::VectorXd base =
        detail::gaussian_sample(Kb, truth.jitter_rel, brng);
    auto nrng = detail::stream_rng(config.seed, 4u, static_cast<unsigned>(j));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double noise_sd = std::sqrt(c.noise_var);

    NamedSeries series;
    series.name = c.name;
    series.times = times;
    Series base_series;
    base_series.times = times;
    for (Eigen::Index a = 0; a < n_obs; ++a) {
      const double b = base(a);
      base_series.values.push_back(b);
      series.values.push_back(out.latent[j][idx[a]] + b +
                              noise_sd * normal(nrng));
    }
    out.baseline.push_back(std::move(base_series));
    out.record.covariates.push_back(std::move(series));
  }
  out.record.validate();
  return out;
}

}  // namespace ccgp
