#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccgp/errors.hpp"
#include "ccgp/gp.hpp"

namespace ccgp {

enum class Route { Oral, Injection, Infusion };

inline std::string to_string(Route r) {
  switch (r) {
    case Route::Oral: return "oral";
    case Route::Injection: return "injection";
    case Route::Infusion: return "infusion";
  }
  throw InputError("unknown route");
}

inline Route parse_route(const std::string& s) {
  if (s == "oral") return Route::Oral;
  if (s == "injection") return Route::Injection;
  if (s == "infusion") return Route::Infusion;
  throw InputError("unknown route '" + s + "'");
}

struct TreatmentEvent {
  double time = 0.0;  // hours
  std::string treatment_type;  // drug + dose + route, e.g. "heparin:5000u:injection"
  double dose = 0.0;
  Route route = Route::Oral;
};

struct NamedSeries {
  std::string name;
  std::vector<double> times;  // nondecreasing, hours
  std::vector<double> values;
};

struct PatientRecord {
  std::string patient_id;
  std::vector<NamedSeries> covariates;
  std::vector<TreatmentEvent> treatments;
  std::map<std::string, std::string> demographics;

  const NamedSeries* find_covariate(const std::string& name) const {
    for (const auto& c : covariates)
      if (c.name == name) return &c;
    return nullptr;
  }

  void validate() const {
    for (const auto& c : covariates) {
      if (c.times.size() != c.values.size())
        throw InputError("record " + patient_id + ", covariate " + c.name +
                         ": times/values length mismatch");
      for (std::size_t i = 0; i < c.times.size(); ++i) {
        if (!std::isfinite(c.times[i]) || !std::isfinite(c.values[i]))
          throw InputError("record " + patient_id + ", covariate " + c.name +
                           ": non-finite entry at index " + std::to_string(i));
        if (i > 0 && c.times[i] < c.times[i - 1])
          throw InputError("record " + patient_id + ", covariate " + c.name +
                           ": times not nondecreasing at index " +
                           std::to_string(i));
      }
    }
    for (const auto& e : treatments)
      if (!std::isfinite(e.time))
        throw InputError("record " + patient_id +
                         ": non-finite treatment time");
  }
};

enum class DataFormat { CSV, JSON };

// ---------------------------------------------------------------------------
// JSON serialization (mirrors the structs verbatim)

inline nlohmann::json to_json(const PatientRecord& r) {
  nlohmann::json j;
  j["patient_id"] = r.patient_id;
  j["covariates"] = nlohmann::json::array();
  for (const auto& c : r.covariates)
    j["covariates"].push_back(
        {{"name", c.name}, {"times", c.times}, {"values", c.values}});
  j["treatments"] = nlohmann::json::array();
  for (const auto& e : r.treatments)
    j["treatments"].push_back({{"time", e.time},
                               {"type", e.treatment_type},
                               {"dose", e.dose},
                               {"route", to_string(e.route)}});
  j["demographics"] = r.demographics;
  return j;
}

inline PatientRecord record_from_json(const nlohmann::json& j) {
  PatientRecord r;
  r.patient_id = j.at("patient_id").get<std::string>();
  for (const auto& c : j.value("covariates", nlohmann::json::array())) {
    NamedSeries s;
    s.name = c.at("name").get<std::string>();
    s.times = c.at("times").get<std::vector<double>>();
    s.values = c.at("values").get<std::vector<double>>();
    r.covariates.push_back(std::move(s));
  }
  for (const auto& e : j.value("treatments", nlohmann::json::array())) {
    TreatmentEvent ev;
    ev.time = e.at("time").get<double>();
    ev.treatment_type = e.at("type").get<std::string>();
    ev.dose = e.value("dose", 0.0);
    ev.route = parse_route(e.value("route", std::string("oral")));
    r.treatments.push_back(ev);
  }
  if (j.contains("demographics"))
    r.demographics =
        j["demographics"].get<std::map<std::string, std::string>>();
  return r;
}

// ---------------------------------------------------------------------------
// CSV, long format:
// patient_id,stream_kind,name,time_hours,value,dose,route

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace detail

inline void save_records_csv(const std::vector<PatientRecord>& records,
                             std::ostream& os) {
  os << "patient_id,stream_kind,name,time_hours,value,dose,route\n";
  os.precision(17);
  for (const auto& r : records) {
    for (const auto& c : r.covariates)
      for (std::size_t i = 0; i < c.times.size(); ++i)
        os << r.patient_id << ",observation," << c.name << "," << c.times[i]
           << "," << c.values[i] << ",,\n";
    for (const auto& e : r.treatments)
      os << r.patient_id << ",treatment," << e.treatment_type << "," << e.time
         << ",," << e.dose << "," << to_string(e.route) << "\n";
  }
}

inline std::vector<PatientRecord> load_records_csv(std::istream& is,
                                                   bool sort_and_warn = false) {
  std::vector<PatientRecord> records;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("patient_id,", 0) == 0) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() < 5)
      throw InputError("CSV line " + std::to_string(lineno) +
                       ": expected at least 5 fields");
    auto it = index.find(f[0]);
    if (it == index.end()) {
      index[f[0]] = records.size();
      records.push_back(PatientRecord{f[0], {}, {}, {}});
      it = index.find(f[0]);
    }
    PatientRecord& r = records[it->second];
    try {
      if (f[1] == "observation") {
        NamedSeries* s = nullptr;
        for (auto& c : r.covariates)
          if (c.name == f[2]) s = &c;
        if (!s) {
          r.covariates.push_back({f[2], {}, {}});
          s = &r.covariates.back();
        }
        s->times.push_back(std::stod(f[3]));
        s->values.push_back(std::stod(f[4]));
      } else if (f[1] == "treatment") {
        TreatmentEvent e;
        e.treatment_type = f[2];
        e.time = std::stod(f[3]);
        e.dose = f.size() > 5 && !f[5].empty() ? std::stod(f[5]) : 0.0;
        e.route = f.size() > 6 && !f[6].empty() ? parse_route(f[6])
                                                : Route::Oral;
        r.treatments.push_back(e);
      } else {
        throw InputError("unknown stream_kind '" + f[1] + "'");
      }
    } catch (const std::invalid_argument& e) {
      throw InputError("CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  for (auto& r : records) {
    if (sort_and_warn)
      for (auto& c : r.covariates) {
        std::vector<std::size_t> order(c.times.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
          return c.times[a] < c.times[b];
        });
        NamedSeries sorted{c.name, {}, {}};
        for (auto i : order) {
          sorted.times.push_back(c.times[i]);
          sorted.values.push_back(c.values[i]);
        }
        c = sorted;
      }
    r.validate();
  }
  return records;
}

inline std::vector<PatientRecord> load_records(const std::string& path,
                                               DataFormat format,
                                               bool sort_and_warn = false) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open '" + path + "'");
  if (format == DataFormat::CSV) return load_records_csv(is, sort_and_warn);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("JSON parse error in '" + path + "': " + e.what());
  }
  if (j.is_null() || (j.is_array() && j.empty())) return {};
  std::vector<PatientRecord> records;
  for (const auto& item : j) records.push_back(record_from_json(item));
  for (auto& r : records) r.validate();
  return records;
}

inline void save_records(const std::vector<PatientRecord>& records,
                         const std::string& path, DataFormat format) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot open '" + path + "' for writing");
  if (format == DataFormat::CSV) {
    save_records_csv(records, os);
  } else {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : records) j.push_back(to_json(r));
    os << j.dump(2) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Normalization and the train/test split

/// Subtracts each covariate's empirical mean in place; returns the means so
/// predictions can be mapped back to original units.
inline std::map<std::string, double> normalize(PatientRecord& record) {
  std::map<std::string, double> means;
  for (auto& c : record.covariates) {
    if (c.values.empty())
      throw DomainError("normalize: covariate " + c.name + " is empty");
    double mean = 0.0;
    for (double v : c.values) mean += v;
    mean /= static_cast<double>(c.values.size());
    for (auto& v : c.values) v -= mean;
    means[c.name] = mean;
  }
  return means;
}

inline void denormalize(PatientRecord& record,
                        const std::map<std::string, double>& means) {
  for (auto& c : record.covariates) {
    auto it = means.find(c.name);
    if (it == means.end()) continue;
    for (auto& v : c.values) v += it->second;
  }
}

/// Per covariate, the first floor(fraction * T) observations (time order,
/// stable) go to train, the rest to test. Treatments stay in both halves.
inline std::pair<PatientRecord, PatientRecord> split_train_test(
    const PatientRecord& record, double fraction) {
  require(fraction > 0.0 && fraction < 1.0,
          "split_train_test: fraction must lie in (0, 1)");
  PatientRecord train = record, test = record;
  train.covariates.clear();
  test.covariates.clear();
  for (const auto& c : record.covariates) {
    const std::size_t n = c.times.size();
    const std::size_t k = static_cast<std::size_t>(
        std::floor(fraction * static_cast<double>(n)));
    NamedSeries tr{c.name, {}, {}}, te{c.name, {}, {}};
    for (std::size_t i = 0; i < n; ++i) {
      auto& dst = i < k ? tr : te;
      dst.times.push_back(c.times[i]);
      dst.values.push_back(c.values[i]);
    }
    train.covariates.push_back(std::move(tr));
    test.covariates.push_back(std::move(te));
  }
  return {train, test};
}

// ---------------------------------------------------------------------------
// Cohort filtering

struct CohortCriteria {
  std::size_t min_observations_per_covariate = 0;
  std::vector<std::string> allowed_treatment_types;  // empty = all allowed
  std::size_t min_global_treatment_count = 0;
  std::vector<std::string> excluded_drug_classes;  // substring match
};

struct FilterStep {
  std::string name;
  std::size_t records_in = 0;
  std::size_t records_out = 0;
};

struct CohortResult {
  std::vector<PatientRecord> records;
  std::vector<FilterStep> attrition;
};

inline CohortResult cohort_filter(std::vector<PatientRecord> records,
                                  const CohortCriteria& criteria) {
  CohortResult out;
  auto step = [&](const std::string& name, auto&& fn) {
    FilterStep s{name, records.size(), 0};
    fn();
    s.records_out = records.size();
    out.attrition.push_back(s);
  };

  step("min-observations-per-covariate", [&] {
    if (criteria.min_observations_per_covariate == 0) return;
    std::erase_if(records, [&](const PatientRecord& r) {
      for (const auto& c : r.covariates)
        if (c.times.size() < criteria.min_observations_per_covariate)
          return true;
      return false;
    });
  });

  step("allowed-treatment-types", [&] {
    if (criteria.allowed_treatment_types.empty()) return;
    for (auto& r : records)
      std::erase_if(r.treatments, [&](const TreatmentEvent& e) {
        return std::find(criteria.allowed_treatment_types.begin(),
                         criteria.allowed_treatment_types.end(),
                         e.treatment_type) ==
               criteria.allowed_treatment_types.end();
      });
  });

  step("min-global-treatment-count", [&] {
    if (criteria.min_global_treatment_count == 0) return;
    std::map<std::string, std::size_t> counts;
    for (const auto& r : records)
      for (const auto& e : r.treatments) counts[e.treatment_type]++;
    for (auto& r : records)
      std::erase_if(r.treatments, [&](const TreatmentEvent& e) {
        return counts[e.treatment_type] < criteria.min_global_treatment_count;
      });
  });

  step("excluded-drug-classes", [&] {
    if (criteria.excluded_drug_classes.empty()) return;
    std::erase_if(records, [&](const PatientRecord& r) {
      for (const auto& e : r.treatments)
        for (const auto& cls : criteria.excluded_drug_classes)
          if (e.treatment_type.find(cls) != std::string::npos) return true;
      return false;
    });
  });

  out.records = std::move(records);
  return out;
}

/// Rebases a record so its earliest observation sits at t = 0; treatments
/// shift by the same offset. Returns the subtracted offset.
inline double rebase_time_origin(PatientRecord& record) {
  double t0 = std::numeric_limits<double>::infinity();
  for (const auto& c : record.covariates)
    if (!c.times.empty()) t0 = std::min(t0, c.times.front());
  if (!std::isfinite(t0)) return 0.0;
  for (auto& c : record.covariates)
    for (auto& t : c.times) t -= t0;
  for (auto& e : record.treatments) e.time -= t0;
  return t0;
}

}  // namespace ccgp
