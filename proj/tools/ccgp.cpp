// Command-line front end: simulate synthetic cohorts, fit models, predict
// trajectories, run the evaluation protocol, and drive the numerical
// self-checks. Exit codes: 0 success, 2 input/validation error, 3 numerical
// failure, 4 check failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ccgp/checks.hpp"
#include "ccgp/config.hpp"
#include "ccgp/data.hpp"
#include "ccgp/eval.hpp"
#include "ccgp/sim.hpp"
#include "ccgp/trainer.hpp"

namespace {

using namespace ccgp;
using nlohmann::json;

struct GlobalOptions {
  std::string config_path;
  std::string out_dir;
  std::string method = "proposed";
  std::string convention;
  long seed = -1;  // < 0: keep the config's seed
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw InputError("cannot open config '" + path + "'");
  try {
    json j;
    is >> j;
    return j;
  } catch (const json::parse_error& e) {
    throw InputError("config parse error in '" + path + "': " + e.what());
  }
}

DataFormat format_for_path(const std::string& path) {
  return path.size() >= 4 && path.substr(path.size() - 4) == ".csv"
             ? DataFormat::CSV
             : DataFormat::JSON;
}

std::vector<PatientRecord> load_dataset(const json& config) {
  if (!config.contains("data"))
    throw InputError("config must name the dataset via a top-level \"data\" "
                     "path");
  const std::string path = config.at("data").get<std::string>();
  auto records = load_records(path, format_for_path(path));
  if (config.contains("filter")) {
    auto result = cohort_filter(
        std::move(records), cohort_criteria_from_json(config.at("filter")));
    std::cout << "cohort filter:";
    for (const auto& s : result.attrition)
      std::cout << " " << s.name << " " << s.records_in << "->"
                << s.records_out;
    std::cout << "\n";
    records = std::move(result.records);
  }
  return records;
}

FitConfig make_fit_config(const json& config, const GlobalOptions& opt) {
  FitConfig fc = config.contains("fit") ? fit_config_from_json(config.at("fit"))
                                        : FitConfig{};
  if (opt.seed >= 0) fc.seed = static_cast<unsigned>(opt.seed);
  if (!opt.convention.empty())
    fc.convention = parse_force_convention(opt.convention);
  return fc;
}

std::string require_out(const GlobalOptions& opt) {
  if (opt.out_dir.empty())
    throw InputError("this command writes files; pass --out <dir>");
  std::filesystem::create_directories(opt.out_dir);
  return opt.out_dir;
}

json fit_to_json(const FitResult& fit) {
  json j;
  j["objective"] = fit.objective;
  j["time_offset"] = fit.time_offset;
  j["convention"] = to_string(fit.model.convention);
  j["parameters"] = json::object();
  for (std::size_t k = 0; k < fit.schema.size(); ++k)
    j["parameters"][fit.schema.entries[k].name] = constrain_value(
        fit.params(static_cast<Eigen::Index>(k)), fit.schema.entries[k].transform);
  j["restarts"] = json::array();
  for (const auto& r : fit.restarts) {
    json rj;
    rj["restart"] = r.restart;
    rj["ok"] = r.ok;
    rj["objective"] = r.objective;
    if (!r.error.empty()) rj["error"] = r.error;
    j["restarts"].push_back(rj);
  }
  return j;
}

int cmd_simulate(const json& config, const GlobalOptions& opt) {
  if (!config.contains("sim"))
    throw InputError("simulate needs a \"sim\" cohort specification in the "
                     "config");
  CohortSpec spec = cohort_spec_from_json(config.at("sim"));
  if (opt.seed >= 0) spec.seed = static_cast<unsigned>(opt.seed);
  if (!opt.convention.empty())
    spec.convention = parse_force_convention(opt.convention);
  const std::string out = require_out(opt);

  std::vector<PatientRecord> records;
  json truth = json::array();
  for (const SimConfig& pc : generate_cohort(spec)) {
    const SimResult sim = simulate_patient(pc);
    records.push_back(sim.record);
    json tj;
    tj["patient_id"] = pc.patient_id;
    tj["seed"] = pc.seed;
    tj["treatments"] = json::array();
    for (std::size_t m = 0; m < pc.truth.treatments.size(); ++m) {
      json mj;
      mj["type"] = pc.truth.treatments[m].type;
      mj["time_hours"] = pc.truth.treatments[m].time;
      mj["ell"] = pc.truth.treatments[m].ell;
      for (const auto& c : pc.truth.covariates)
        mj["S"][c.name] = c.lfm.S[m];
      tj["treatments"].push_back(mj);
    }
    truth.push_back(tj);
  }
  save_records(records, out + "/dataset.json", DataFormat::JSON);
  save_records(records, out + "/dataset.csv", DataFormat::CSV);
  std::ofstream ts(out + "/truth.json");
  ts << truth.dump(2) << "\n";
  std::cout << "simulated " << records.size() << " patients into " << out
            << "\n";
  return 0;
}

int cmd_fit(const json& config, const GlobalOptions& opt) {
  const auto records = load_dataset(config);
  const FitConfig fc = make_fit_config(config, opt);
  const Method method = parse_method(opt.method);
  const std::string out = require_out(opt);
  for (const auto& record : records) {
    json j;
    if (method == Method::Proposed) {
      const FitResult fit = fit_patient(record, fc);
      j = fit_to_json(fit);
    } else {
      const BaselineKind kind = method == Method::SePer ? BaselineKind::SePer
                                                        : BaselineKind::OuExp;
      const BaselineFitResult fit = fit_baseline(kind, record, fc);
      j["time_offset"] = fit.time_offset;
      for (std::size_t i = 0; i < fit.models.size(); ++i) {
        json cj;
        cj["objective"] = fit.objectives[i];
        cj["noise_var"] = fit.models[i].noise_var;
        cj["mean_c"] = fit.models[i].mean.c;
        j["covariates"][fit.models[i].covariate] = cj;
      }
    }
    j["patient_id"] = record.patient_id;
    j["method"] = opt.method;
    std::ofstream os(out + "/fit_" + record.patient_id + ".json");
    if (!os) throw InputError("cannot write fit output in '" + out + "'");
    os << j.dump(2) << "\n";
    std::cout << "fit " << record.patient_id << " (" << opt.method << ")\n";
  }
  return 0;
}

int cmd_predict(const json& config, const GlobalOptions& opt) {
  const auto records = load_dataset(config);
  const FitConfig fc = make_fit_config(config, opt);
  const Method method = parse_method(opt.method);
  const std::string out = require_out(opt);
  const int grid_points = config.value("grid_points", 201);

  for (const auto& record : records) {
    std::vector<detail::TrajectoryRow> rows;
    auto add_rows = [&](const std::string& name, const Posterior& post,
                        double offset) {
      for (std::size_t i = 0; i < post.times.size(); ++i)
        rows.push_back({name, post.times[i] + offset, post.mean[i],
                        post.variance[i], false, 0.0, false});
    };
    if (method == Method::Proposed) {
      const FitResult fit = fit_patient(record, fc);
      for (std::size_t j = 0; j < fit.model.covariates.size(); ++j) {
        const double t_max =
            fit.train[j].times.empty() ? 1.0 : fit.train[j].times.back();
        const auto grid = detail::dense_query_grid(
            0.0, t_max, static_cast<std::size_t>(grid_points));
        add_rows(fit.model.covariates[j].name,
                 posterior_predict(fit.model, fit.train, j, grid),
                 fit.time_offset);
      }
    } else {
      const BaselineKind kind = method == Method::SePer ? BaselineKind::SePer
                                                        : BaselineKind::OuExp;
      const BaselineFitResult fit = fit_baseline(kind, record, fc);
      for (std::size_t j = 0; j < fit.models.size(); ++j) {
        const double t_max =
            fit.train[j].times.empty() ? 1.0 : fit.train[j].times.back();
        const auto grid = detail::dense_query_grid(
            0.0, t_max, static_cast<std::size_t>(grid_points));
        add_rows(fit.models[j].covariate,
                 baseline_predict(fit.models[j], fit.train[j], grid),
                 fit.time_offset);
      }
    }
    for (const auto& c : record.covariates)
      for (std::size_t i = 0; i < c.times.size(); ++i)
        rows.push_back({c.name, c.times[i], 0.0, 0.0, true, c.values[i],
                        false});
    for (const auto& c : record.covariates)
      for (const auto& ev : record.treatments)
        rows.push_back({c.name, ev.time, 0.0, 0.0, false, 0.0, true});
    detail::write_trajectory_csv(out + "/predict_" + record.patient_id + "_" +
                                     opt.method + ".csv",
                                 rows);
    std::cout << "predicted " << record.patient_id << " (" << opt.method
              << ")\n";
  }
  return 0;
}

int cmd_evaluate(const json& config, const GlobalOptions& opt) {
  const auto records = load_dataset(config);
  ExperimentConfig ec;
  ec.method = parse_method(opt.method);
  ec.fit = make_fit_config(config, opt);
  if (config.contains("split"))
    ec.train_fraction = config.at("split").value("train_fraction", 0.7);
  ec.out_dir = require_out(opt);
  const EvalReport report = run_experiment(records, ec);
  std::cout << "method " << report.method << ", " << report.patients.size()
            << " patients, " << report.fit_failures << " fit failures\n";
  for (const auto& [name, st] : report.covariates) {
    std::cout << "  " << name << ": MAE " << st.mean_mae;
    if (st.has_se) std::cout << " +/- " << st.std_error;
    std::cout << " (n=" << st.n_patients << ")\n";
  }
  return 0;
}

int cmd_oracle_check(const json& config, const GlobalOptions& opt) {
  std::size_t n = 200;
  unsigned seed = 0;
  double tol_cross = 1e-6, tol_cov = 1e-5;
  if (config.contains("oracle")) {
    const auto& oj = config.at("oracle");
    n = oj.value("n", n);
    seed = oj.value("seed", seed);
    tol_cross = oj.value("tol_cross", tol_cross);
    tol_cov = oj.value("tol_cov", tol_cov);
  }
  if (opt.seed >= 0) seed = static_cast<unsigned>(opt.seed);
  const OracleReport report = oracle_check(n, seed, tol_cross, tol_cov);
  for (const auto& [key, dev] : report.max_dev)
    std::cout << key << ": max deviation " << dev << "\n";
  for (const auto& f : report.failures) std::cout << "FAIL " << f << "\n";
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    std::ofstream os(opt.out_dir + "/oracle_check.json");
    os << report.to_json().dump(2) << "\n";
  }
  std::cout << (report.pass ? "oracle-check passed" : "oracle-check FAILED")
            << " (" << n << " cases)\n";
  return report.pass ? 0 : 4;
}

int cmd_gradcheck(const json& config, const GlobalOptions& opt) {
  std::size_t n = 20;
  unsigned seed = 0;
  double rel_tol = 1e-4, abs_floor = 1e-6;
  if (config.contains("gradcheck")) {
    const auto& gj = config.at("gradcheck");
    n = gj.value("n", n);
    seed = gj.value("seed", seed);
    rel_tol = gj.value("rel_tol", rel_tol);
    abs_floor = gj.value("abs_floor", abs_floor);
  }
  if (opt.seed >= 0) seed = static_cast<unsigned>(opt.seed);
  const GradCheckReport report = gradient_check(n, seed, rel_tol, abs_floor);
  for (const auto& f : report.failures) std::cout << "FAIL " << f << "\n";
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    std::ofstream os(opt.out_dir + "/gradcheck.json");
    os << report.to_json().dump(2) << "\n";
  }
  std::cout << (report.pass ? "gradcheck passed" : "gradcheck FAILED") << " ("
            << n << " cases, max relative error " << report.max_rel_err
            << ")\n";
  return report.pass ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal convolutional GP latent force models for "
               "intervention-response time series"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions opt;
  app.add_option("--config", opt.config_path, "JSON configuration file");
  app.add_option("--seed", opt.seed, "Override the configured RNG seed");
  app.add_option("--out", opt.out_dir, "Output directory (all files go here)");
  app.add_option("--method", opt.method,
                 "Model family: proposed, se-per, or ou-exp");
  app.add_option("--force-convention", opt.convention,
                 "Latent force convention: zeroed or unzeroed");

  auto* simulate = app.add_subcommand("simulate", "Sample a synthetic cohort");
  auto* fit = app.add_subcommand("fit", "Fit models to a dataset");
  auto* predict =
      app.add_subcommand("predict", "Fit and write posterior trajectories");
  auto* evaluate = app.add_subcommand(
      "evaluate", "Train/test evaluation protocol with MAE report");
  auto* oracle = app.add_subcommand(
      "oracle-check", "Closed-form vs quadrature covariance check");
  auto* gradcheck =
      app.add_subcommand("gradcheck", "Analytic-vs-reference gradient check");

  CLI11_PARSE(app, argc, argv);

  try {
    const nlohmann::json config = load_config(opt.config_path);
    if (simulate->parsed()) return cmd_simulate(config, opt);
    if (fit->parsed()) return cmd_fit(config, opt);
    if (predict->parsed()) return cmd_predict(config, opt);
    if (evaluate->parsed()) return cmd_evaluate(config, opt);
    if (oracle->parsed()) return cmd_oracle_check(config, opt);
    if (gradcheck->parsed()) return cmd_gradcheck(config, opt);
  } catch (const ccgp::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const ccgp::DomainError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const ccgp::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
