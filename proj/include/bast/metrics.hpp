#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bast/dataset.hpp"
#include "bast/model.hpp"

BAST_NAMESPACE_BEGIN

struct EvalRecord {
  std::string sample_id;
  int azimuth_deg = 0;
  Environment environment = Environment::Anechoic;
  double ad_normalized = 0.0;  // angle / pi, in [0, 1]
  double ad_deg = 0.0;         // 180 * ad_normalized
  double sq_error = 0.0;       // squared Euclidean error, m^2
};

struct EvalSummary {
  std::vector<EvalRecord> records;
  double mean_ad_deg = 0.0;
  double mean_mse = 0.0;
};

using Coordinate = std::array<double, 2>;
// Predicts (x, y) for the given sample indices.
using CoordinatePredictor = std::function<std::vector<Coordinate>(const SampleSet&, std::span<const std::size_t>)>;

CoordinatePredictor model_predictor(const BastModel& model);

// Angle between target and prediction over pi. A prediction at the origin has
// no direction and scores 0.5 (90 degrees).
double angular_error(const Coordinate& target, const Coordinate& prediction);

EvalRecord make_record(const SampleMeta& meta, const Coordinate& prediction);
EvalSummary summarize(std::vector<EvalRecord> records);

// Eval-mode predictions over the whole set in batches of `batch_size`.
EvalSummary evaluate(const CoordinatePredictor& predictor, const SampleSet& samples, std::size_t batch_size = 32);
EvalSummary evaluate(const BastModel& model, const SampleSet& samples, std::size_t batch_size = 32);

struct AzimuthRow {
  int azimuth_deg = 0;
  bool present = false;
  std::size_t count = 0;
  double mean_ad_deg = 0.0;
  double mean_mse = 0.0;
};

// 36 rows, 0..350 degrees.
std::vector<AzimuthRow> per_azimuth(std::span<const EvalRecord> records);

struct PairedTTest {
  double mean_difference = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
};

// Paired t-test of a - b, exact Student t tail.
PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b);

// Benjamini-Hochberg step-up adjusted p-values, in input order.
std::vector<double> benjamini_hochberg(std::span<const double> p);

struct HemifieldMetric {
  std::string metric;  // "AD" or "MSE"
  std::vector<double> right_means;
  std::vector<double> left_means;
  PairedTTest test;
  double p_adjusted = 1.0;
  bool significant = false;
};

// Right-hemifield azimuths theta paired with their mirror 360 - theta.
struct HemifieldReport {
  std::string condition;
  std::vector<int> right_azimuths;
  HemifieldMetric ad;
  HemifieldMetric mse;
};

// Raw comparison for one condition; p_adjusted equals p until corrected.
HemifieldReport hemifield_compare(const std::string& condition, std::span<const EvalRecord> records);

// BH correction over every (condition, metric) test of the family.
void apply_fdr(std::vector<HemifieldReport>& reports, double alpha = 0.05);

std::vector<HemifieldReport> hemifield_test(const std::map<std::string, std::vector<EvalRecord>>& conditions,
                                            double alpha = 0.05);

struct TransferCell {
  std::string train_env;  // "AE", "RV" or "AE+RV"
  std::string test_env;   // "AE" or "RV"
  double mean_ad_deg = 0.0;
  double mean_mse = 0.0;
};

// Rows AE, RV, AE+RV; columns AE, RV.
std::vector<TransferCell> environment_transfer(const std::map<std::string, CoordinatePredictor>& models,
                                               const std::map<std::string, const SampleSet*>& tests);

// CSV writers (with JSON mirrors written next to them).
void write_overall(const std::filesystem::path& csv, const EvalSummary& summary, const std::string& label);
void write_per_azimuth(const std::filesystem::path& csv, std::span<const AzimuthRow> rows);
void write_hemifield(const std::filesystem::path& csv, std::span<const HemifieldReport> reports);
void write_env_transfer(const std::filesystem::path& csv, std::span<const TransferCell> cells);
void write_records(const std::filesystem::path& csv, std::span<const EvalRecord> records);

BAST_NAMESPACE_END
