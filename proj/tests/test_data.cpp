#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>

#include "ccgp/data.hpp"

namespace {

using namespace ccgp;

PatientRecord sample_record() {
  PatientRecord r;
  r.patient_id = "p42";
  r.covariates.push_back({"heart_rate", {0.0, 1.5, 3.25}, {71.0, 73.5, 70.25}});
  r.covariates.push_back({"blood_pressure", {0.5, 2.0}, {120.0, 118.5}});
  r.treatments.push_back({1.0, "metoprolol-tartrate:25mg:oral", 25.0,
                          Route::Oral});
  r.treatments.push_back({2.5, "heparin:5000u:injection", 5000.0,
                          Route::Injection});
  r.demographics = {{"age", "63"}, {"sex", "F"}};
  return r;
}

TEST(Route, ParseAndFormat) {
  EXPECT_EQ(parse_route("oral"), Route::Oral);
  EXPECT_EQ(parse_route("injection"), Route::Injection);
  EXPECT_EQ(parse_route("infusion"), Route::Infusion);
  EXPECT_EQ(to_string(Route::Infusion), "infusion");
  EXPECT_THROW(parse_route("intravenous"), InputError);
}

TEST(Validate, RejectsNaNWithContext) {
  PatientRecord r = sample_record();
  r.covariates[0].values[1] = std::numeric_limits<double>::quiet_NaN();
  try {
    r.validate();
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("heart_rate"), std::string::npos);
    EXPECT_NE(msg.find("index 1"), std::string::npos);
  }
}

TEST(Validate, RejectsUnsortedTimesAndLengthMismatch) {
  PatientRecord r = sample_record();
  r.covariates[0].times = {0.0, 2.0, 1.0};
  EXPECT_THROW(r.validate(), InputError);
  r = sample_record();
  r.covariates[1].values.pop_back();
  EXPECT_THROW(r.validate(), InputError);
  r = sample_record();
  r.treatments[0].time = std::numeric_limits<double>::infinity();
  EXPECT_THROW(r.validate(), InputError);
}

TEST(Json, RoundTripsExactly) {
  const PatientRecord r = sample_record();
  const PatientRecord back = record_from_json(to_json(r));
  EXPECT_EQ(back.patient_id, r.patient_id);
  ASSERT_EQ(back.covariates.size(), r.covariates.size());
  for (std::size_t j = 0; j < r.covariates.size(); ++j) {
    EXPECT_EQ(back.covariates[j].name, r.covariates[j].name);
    EXPECT_EQ(back.covariates[j].times, r.covariates[j].times);
    EXPECT_EQ(back.covariates[j].values, r.covariates[j].values);
  }
  ASSERT_EQ(back.treatments.size(), r.treatments.size());
  for (std::size_t m = 0; m < r.treatments.size(); ++m) {
    EXPECT_EQ(back.treatments[m].time, r.treatments[m].time);
    EXPECT_EQ(back.treatments[m].treatment_type, r.treatments[m].treatment_type);
    EXPECT_EQ(back.treatments[m].dose, r.treatments[m].dose);
    EXPECT_EQ(back.treatments[m].route, r.treatments[m].route);
  }
  EXPECT_EQ(back.demographics, r.demographics);
}

TEST(Csv, RoundTripsExactly) {
  PatientRecord r = sample_record();
  r.covariates[0].values[0] = 71.0 + 1e-13;  // exercise full precision
  std::stringstream ss;
  save_records_csv({r}, ss);
  const auto records = load_records_csv(ss);
  ASSERT_EQ(records.size(), 1u);
  const auto& back = records[0];
  EXPECT_EQ(back.patient_id, r.patient_id);
  ASSERT_EQ(back.covariates.size(), r.covariates.size());
  for (std::size_t j = 0; j < r.covariates.size(); ++j) {
    EXPECT_EQ(back.covariates[j].times, r.covariates[j].times);
    EXPECT_EQ(back.covariates[j].values, r.covariates[j].values);
  }
  ASSERT_EQ(back.treatments.size(), r.treatments.size());
  EXPECT_EQ(back.treatments[0].dose, 25.0);
  EXPECT_EQ(back.treatments[1].route, Route::Injection);
}

TEST(Csv, EmptyInputYieldsNoRecords) {
  std::stringstream ss("");
  EXPECT_TRUE(load_records_csv(ss).empty());
  std::stringstream header_only(
      "patient_id,stream_kind,name,time_hours,value,dose,route\n");
  EXPECT_TRUE(load_records_csv(header_only).empty());
}

TEST(Csv, RejectsMalformedRows) {
  std::stringstream bad_kind("p1,unknown,hr,1.0,2.0,,\n");
  EXPECT_THROW(load_records_csv(bad_kind), InputError);
  std::stringstream short_row("p1,observation,hr\n");
  EXPECT_THROW(load_records_csv(short_row), InputError);
  std::stringstream bad_number("p1,observation,hr,abc,2.0,,\n");
  EXPECT_THROW(load_records_csv(bad_number), InputError);
}

TEST(Csv, SortAndWarnRepairsUnsortedTimes) {
  std::stringstream ss(
      "p1,observation,hr,2.0,20.0,,\n"
      "p1,observation,hr,1.0,10.0,,\n");
  EXPECT_THROW(load_records_csv(ss, false), InputError);
  std::stringstream ss2(
      "p1,observation,hr,2.0,20.0,,\n"
      "p1,observation,hr,1.0,10.0,,\n");
  const auto records = load_records_csv(ss2, true);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].covariates[0].times, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(records[0].covariates[0].values, (std::vector<double>{10.0, 20.0}));
}

TEST(Files, SaveLoadBothFormats) {
  const PatientRecord r = sample_record();
  for (auto format : {DataFormat::CSV, DataFormat::JSON}) {
    const std::string path = format == DataFormat::CSV ? "/tmp/ccgp_t.csv"
                                                       : "/tmp/ccgp_t.json";
    save_records({r}, path, format);
    const auto records = load_records(path, format);
    ASSERT_EQ(records.size(), 1u);
    EXPECT_EQ(records[0].covariates[0].values, r.covariates[0].values);
    std::remove(path.c_str());
  }
  EXPECT_THROW(load_records("/tmp/ccgp_missing_file.csv", DataFormat::CSV),
               InputError);
}

TEST(Normalize, SubtractsEmpiricalMean) {
  PatientRecord r;
  r.patient_id = "n";
  r.covariates.push_back({"hr", {0.0, 1.0, 2.0}, {1.0, 2.0, 3.0}});
  const auto means = normalize(r);
  EXPECT_EQ(r.covariates[0].values, (std::vector<double>{-1.0, 0.0, 1.0}));
  EXPECT_EQ(means.at("hr"), 2.0);

  PatientRecord single;
  single.covariates.push_back({"x", {0.0}, {5.0}});
  const auto m2 = normalize(single);
  EXPECT_EQ(single.covariates[0].values[0], 0.0);
  EXPECT_EQ(m2.at("x"), 5.0);
}

TEST(Normalize, IdempotentAndInvertible) {
  PatientRecord r = sample_record();
  PatientRecord orig = r;
  const auto means = normalize(r);
  for (const auto& c : r.covariates) {
    double mean = 0.0;
    for (double v : c.values) mean += v;
    EXPECT_NEAR(mean / double(c.values.size()), 0.0, 1e-10);
  }
  PatientRecord again = r;
  normalize(again);
  for (std::size_t j = 0; j < r.covariates.size(); ++j)
    for (std::size_t i = 0; i < r.covariates[j].values.size(); ++i)
      EXPECT_NEAR(again.covariates[j].values[i], r.covariates[j].values[i],
                  1e-10);
  denormalize(r, means);
  for (std::size_t j = 0; j < r.covariates.size(); ++j)
    for (std::size_t i = 0; i < r.covariates[j].values.size(); ++i)
      EXPECT_NEAR(r.covariates[j].values[i], orig.covariates[j].values[i],
                  1e-10);
}

TEST(Normalize, EmptyCovariateThrows) {
  PatientRecord r;
  r.covariates.push_back({"hr", {}, {}});
  EXPECT_THROW(normalize(r), DomainError);
}

TEST(Split, FloorConvention) {
  PatientRecord r;
  NamedSeries s;
  s.name = "hr";
  for (int i = 0; i < 10; ++i) {
    s.times.push_back(double(i));
    s.values.push_back(double(10 * i));
  }
  r.covariates.push_back(s);
  r.treatments.push_back({4.0, "d:1mg:oral", 1.0, Route::Oral});

  auto [train, test] = split_train_test(r, 0.7);
  EXPECT_EQ(train.covariates[0].times.size(), 7u);  // first 70%
  EXPECT_EQ(test.covariates[0].times.size(), 3u);
  EXPECT_EQ(train.covariates[0].times.back(), 6.0);
  EXPECT_EQ(test.covariates[0].times.front(), 7.0);
  // Treatments are inputs, retained on both sides.
  EXPECT_EQ(train.treatments.size(), 1u);
  EXPECT_EQ(test.treatments.size(), 1u);

  r.covariates[0].times.resize(1);
  r.covariates[0].values.resize(1);
  auto [tr1, te1] = split_train_test(r, 0.7);
  EXPECT_EQ(tr1.covariates[0].times.size(), 0u);  // floor(0.7) = 0
  EXPECT_EQ(te1.covariates[0].times.size(), 1u);

  r.covariates[0].times = {0.0, 1.0, 2.0};
  r.covariates[0].values = {0.0, 1.0, 2.0};
  auto [tr3, te3] = split_train_test(r, 0.7);
  EXPECT_EQ(tr3.covariates[0].times.size(), 2u);  // floor(2.1) = 2
  EXPECT_EQ(te3.covariates[0].times.size(), 1u);
}

TEST(Split, ConcatenationReproducesOriginal) {
  const PatientRecord r = sample_record();
  auto [train, test] = split_train_test(r, 0.7);
  for (std::size_t j = 0; j < r.covariates.size(); ++j) {
    std::vector<double> cat = train.covariates[j].times;
    cat.insert(cat.end(), test.covariates[j].times.begin(),
               test.covariates[j].times.end());
    EXPECT_EQ(cat, r.covariates[j].times);
  }
  EXPECT_THROW(split_train_test(r, 0.0), DomainError);
  EXPECT_THROW(split_train_test(r, 1.0), DomainError);
}

TEST(Split, EmptyCovariateAllowed) {
  PatientRecord r;
  r.covariates.push_back({"hr", {}, {}});
  auto [train, test] = split_train_test(r, 0.7);
  EXPECT_TRUE(train.covariates[0].times.empty());
  EXPECT_TRUE(test.covariates[0].times.empty());
}

std::vector<PatientRecord> cohort() {
  std::vector<PatientRecord> rs;
  for (int i = 0; i < 3; ++i) {
    PatientRecord r;
    r.patient_id = "c" + std::to_string(i);
    NamedSeries hr{"heart_rate", {}, {}};
    for (int k = 0; k < (i == 0 ? 4 : 6); ++k) {
      hr.times.push_back(double(k));
      hr.values.push_back(70.0);
    }
    r.covariates.push_back(hr);
    r.treatments.push_back({1.0, "metoprolol:25mg:oral", 25.0, Route::Oral});
    if (i == 2)
      r.treatments.push_back({2.0, "rare-drug:1mg:oral", 1.0, Route::Oral});
    rs.push_back(r);
  }
  return rs;
}

TEST(CohortFilter, EmptyCriteriaIsIdentity) {
  const auto result = cohort_filter(cohort(), CohortCriteria{});
  EXPECT_EQ(result.records.size(), 3u);
  ASSERT_EQ(result.attrition.size(), 4u);
  for (const auto& s : result.attrition) {
    EXPECT_EQ(s.records_in, 3u);
    EXPECT_EQ(s.records_out, 3u);
  }
}

TEST(CohortFilter, MinObservationsDropsSparseRecords) {
  CohortCriteria crit;
  crit.min_observations_per_covariate = 5;
  const auto result = cohort_filter(cohort(), crit);
  EXPECT_EQ(result.records.size(), 2u);  // c0 has only 4 points
  EXPECT_EQ(result.attrition[0].records_in, 3u);
  EXPECT_EQ(result.attrition[0].records_out, 2u);
}

TEST(CohortFilter, MinGlobalTreatmentCountDropsRareTypes) {
  CohortCriteria crit;
  crit.min_global_treatment_count = 3;  // metoprolol occurs 3x, rare-drug 1x
  const auto result = cohort_filter(cohort(), crit);
  for (const auto& r : result.records)
    for (const auto& e : r.treatments)
      EXPECT_EQ(e.treatment_type, "metoprolol:25mg:oral");
}

TEST(CohortFilter, AllowedTypesAndExclusions) {
  CohortCriteria crit;
  crit.allowed_treatment_types = {"metoprolol:25mg:oral"};
  auto result = cohort_filter(cohort(), crit);
  for (const auto& r : result.records)
    for (const auto& e : r.treatments)
      EXPECT_EQ(e.treatment_type, "metoprolol:25mg:oral");

  CohortCriteria excl;
  excl.excluded_drug_classes = {"rare-drug"};
  result = cohort_filter(cohort(), excl);
  EXPECT_EQ(result.records.size(), 2u);  // c2 co-administers rare-drug
}

TEST(CohortFilter, AddingCriteriaNeverGrowsCohort) {
  CohortCriteria loose;
  loose.min_observations_per_covariate = 5;
  CohortCriteria tight = loose;
  tight.excluded_drug_classes = {"rare-drug"};
  const auto a = cohort_filter(cohort(), loose);
  const auto b = cohort_filter(cohort(), tight);
  EXPECT_LE(b.records.size(), a.records.size());
}

TEST(Rebase, ShiftsToFirstObservation) {
  PatientRecord r = sample_record();
  const double offset = rebase_time_origin(r);
  EXPECT_EQ(offset, 0.0);  // already starts at 0
  for (auto& c : r.covariates)
    for (auto& t : c.times) t += 12.0;
  for (auto& e : r.treatments) e.time += 12.0;
  EXPECT_EQ(rebase_time_origin(r), 12.0);
  EXPECT_EQ(r.covariates[0].times[0], 0.0);
  EXPECT_EQ(r.treatments[0].time, 1.0);

  PatientRecord empty;
  EXPECT_EQ(rebase_time_origin(empty), 0.0);
}

}  // namespace
