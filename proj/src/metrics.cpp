#include "bast/metrics.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <numeric>

BAST_NAMESPACE_BEGIN

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw RunError("cannot write " + path.string());
  return os;
}

void write_json(const std::filesystem::path& csv, const nlohmann::json& j) {
  auto path = csv;
  path.replace_extension(".json");
  open_out(path) << j.dump(2) << '\n';
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

CoordinatePredictor model_predictor(const BastModel& model) {
  return [&model](const SampleSet& set, std::span<const std::size_t> idx) {
    auto result = model.predict(set.left_batch(idx), set.right_batch(idx));
    auto d = result.coords.data();
    std::vector<Coordinate> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = {d[2 * i], d[2 * i + 1]};
    return out;
  };
}

double angular_error(const Coordinate& c, const Coordinate& p) {
  const double cn = std::hypot(c[0], c[1]), pn = std::hypot(p[0], p[1]);
  if (cn == 0.0) throw InputError("ground-truth coordinate at the origin");
  if (pn == 0.0) return 0.5;
  const double u = std::clamp((c[0] * p[0] + c[1] * p[1]) / (cn * pn), -1.0, 1.0);
  return std::acos(u) / std::numbers::pi;
}

EvalRecord make_record(const SampleMeta& meta, const Coordinate& prediction) {
  const auto t = LocalizationTarget::at(meta.azimuth_deg, meta.environment);
  const Coordinate target{t.x, t.y};
  EvalRecord r;
  r.sample_id = meta.id;
  r.azimuth_deg = meta.azimuth_deg;
  r.environment = meta.environment;
  r.ad_normalized = angular_error(target, prediction);
  r.ad_deg = 180.0 * r.ad_normalized;
  const double dx = target[0] - prediction[0], dy = target[1] - prediction[1];
  r.sq_error = dx * dx + dy * dy;
  return r;
}

EvalSummary summarize(std::vector<EvalRecord> records) {
  if (records.empty()) throw ParameterError("cannot summarize an empty evaluation");
  EvalSummary s;
  double ad = 0.0, mse = 0.0;
  for (const auto& r : records) {
    ad += r.ad_deg;
    mse += r.sq_error;
  }
  s.mean_ad_deg = ad / static_cast<double>(records.size());
  s.mean_mse = mse / static_cast<double>(records.size());
  s.records = std::move(records);
  return s;
}

EvalSummary evaluate(const CoordinatePredictor& predictor, const SampleSet& samples, std::size_t batch_size) {
  if (samples.empty()) throw ParameterError("evaluation split is empty");
  if (batch_size == 0) throw ParameterError("batch size must be positive");
  std::vector<EvalRecord> records;
  records.reserve(samples.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) idx.push_back(i);
    const auto pred = predictor(samples, idx);
    for (std::size_t k = 0; k < idx.size(); ++k) records.push_back(make_record(samples.meta(idx[k]), pred[k]));
  }
  return summarize(std::move(records));
}

EvalSummary evaluate(const BastModel& model, const SampleSet& samples, std::size_t batch_size) {
  return evaluate(model_predictor(model), samples, batch_size);
}

std::vector<AzimuthRow> per_azimuth(std::span<const EvalRecord> records) {
  std::vector<AzimuthRow> rows(36);
  for (int i = 0; i < 36; ++i) rows[static_cast<std::size_t>(i)].azimuth_deg = 10 * i;
  for (const auto& r : records) {
    if (r.azimuth_deg < 0 || r.azimuth_deg >= 360 || r.azimuth_deg % 10 != 0) {
      throw InputError("record azimuth " + std::to_string(r.azimuth_deg) + " is off the 10 degree grid");
    }
    auto& row = rows[static_cast<std::size_t>(r.azimuth_deg / 10)];
    row.present = true;
    ++row.count;
    row.mean_ad_deg += r.ad_deg;
    row.mean_mse += r.sq_error;
  }
  for (auto& row : rows) {
    if (!row.present) continue;
    row.mean_ad_deg /= static_cast<double>(row.count);
    row.mean_mse /= static_cast<double>(row.count);
  }
  return rows;
}

PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw StatisticsError("paired samples differ in length");
  if (a.size() < 3) throw StatisticsError("paired t-test needs at least 3 pairs, got " + std::to_string(a.size()));
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  PairedTTest r;
  r.df = static_cast<double>(n - 1);
  r.mean_difference = mean_of(d);
  double ss = 0.0;
  for (double v : d) ss += (v - r.mean_difference) * (v - r.mean_difference);
  const double se = std::sqrt(ss / r.df / static_cast<double>(n));
  if (se == 0.0) {
    // Constant differences: no spread to test against.
    r.t = r.mean_difference == 0.0 ? 0.0 : std::copysign(INFINITY, r.mean_difference);
    r.p = r.mean_difference == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = r.mean_difference / se;
  boost::math::students_t dist(r.df);
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
  return r;
}

std::vector<double> benjamini_hochberg(std::span<const double> p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> adjusted(m);
  double running = 1.0;
  for (std::size_t k = m; k-- > 0;) {
    const std::size_t i = order[k];
    running = std::min(running, p[i] * static_cast<double>(m) / static_cast<double>(k + 1));
    adjusted[i] = running;
  }
  return adjusted;
}

HemifieldReport hemifield_compare(const std::string& condition, std::span<const EvalRecord> records) {
  const auto rows = per_azimuth(records);
  HemifieldReport rep;
  rep.condition = condition;
  rep.ad.metric = "AD";
  rep.mse.metric = "MSE";
  for (int theta = 10; theta < 180; theta += 10) {
    const auto& right = rows[static_cast<std::size_t>(theta / 10)];
    const auto& left = rows[static_cast<std::size_t>((360 - theta) / 10)];
    if (!right.present || !left.present) continue;
    rep.right_azimuths.push_back(theta);
    rep.ad.right_means.push_back(right.mean_ad_deg);
    rep.ad.left_means.push_back(left.mean_ad_deg);
    rep.mse.right_means.push_back(right.mean_mse);
    rep.mse.left_means.push_back(left.mean_mse);
  }
  if (rep.right_azimuths.size() < 3) {
    throw StatisticsError("hemifield test for '" + condition + "' has only " +
                          std::to_string(rep.right_azimuths.size()) + " mirror pairs");
  }
  for (auto* m : {&rep.ad, &rep.mse}) {
    m->test = paired_t_test(m->left_means, m->right_means);
    m->p_adjusted = m->test.p;
  }
  return rep;
}

void apply_fdr(std::vector<HemifieldReport>& reports, double alpha) {
  std::vector<double> raw;
  for (const auto& r : reports) {
    raw.push_back(r.ad.test.p);
    raw.push_back(r.mse.test.p);
  }
  const auto adj = benjamini_hochberg(raw);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    reports[i].ad.p_adjusted = adj[2 * i];
    reports[i].mse.p_adjusted = adj[2 * i + 1];
    reports[i].ad.significant = adj[2 * i] < alpha;
    reports[i].mse.significant = adj[2 * i + 1] < alpha;
  }
}

std::vector<HemifieldReport> hemifield_test(const std::map<std::string, std::vector<EvalRecord>>& conditions,
                                            double alpha) {
  std::vector<HemifieldReport> reports;
  for (const auto& [name, records] : conditions) reports.push_back(hemifield_compare(name, records));
  apply_fdr(reports, alpha);
  return reports;
}

std::vector<TransferCell> environment_transfer(const std::map<std::string, CoordinatePredictor>& models,
                                               const std::map<std::string, const SampleSet*>& tests) {
  std::vector<TransferCell> cells;
  for (const std::string train : {"AE", "RV", "AE+RV"}) {
    auto m = models.find(train);
    if (m == models.end() || !m->second) throw RunError("missing model trained on " + train);
    for (const std::string test : {"AE", "RV"}) {
      auto t = tests.find(test);
      if (t == tests.end() || !t->second) throw RunError("missing " + test + " test split");
      const auto s = evaluate(m->second, *t->second);
      cells.push_back({train, test, s.mean_ad_deg, s.mean_mse});
    }
  }
  return cells;
}

void write_overall(const std::filesystem::path& csv, const EvalSummary& summary, const std::string& label) {
  auto os = open_out(csv);
  os << "label,samples,mean_ad_deg,mean_mse\n"
     << label << ',' << summary.records.size() << ',' << fmt(summary.mean_ad_deg) << ',' << fmt(summary.mean_mse)
     << '\n';
  write_json(csv, {{"label", label},
                   {"samples", summary.records.size()},
                   {"mean_ad_deg", summary.mean_ad_deg},
                   {"mean_mse", summary.mean_mse}});
}

void write_per_azimuth(const std::filesystem::path& csv, std::span<const AzimuthRow> rows) {
  auto os = open_out(csv);
  nlohmann::json j = nlohmann::json::array();
  os << "azimuth_deg,count,mean_ad_deg,mean_mse\n";
  for (const auto& r : rows) {
    if (r.present) {
      os << r.azimuth_deg << ',' << r.count << ',' << fmt(r.mean_ad_deg) << ',' << fmt(r.mean_mse) << '\n';
      j.push_back({{"azimuth_deg", r.azimuth_deg}, {"count", r.count}, {"mean_ad_deg", r.mean_ad_deg},
                   {"mean_mse", r.mean_mse}});
    } else {
      os << r.azimuth_deg << ",0,,\n";
      j.push_back({{"azimuth_deg", r.azimuth_deg}, {"count", 0}, {"mean_ad_deg", nullptr}, {"mean_mse", nullptr}});
    }
  }
  write_json(csv, j);
}

void write_hemifield(const std::filesystem::path& csv, std::span<const HemifieldReport> reports) {
  auto os = open_out(csv);
  os << "# FDR family: every (condition, metric) paired test in this file; Benjamini-Hochberg, alpha 0.05\n";
  os << "condition,metric,pairs,mean_left_minus_right,t,df,p,p_fdr,significant\n";
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) {
    for (const auto* m : {&r.ad, &r.mse}) {
      os << r.condition << ',' << m->metric << ',' << r.right_azimuths.size() << ',' << fmt(m->test.mean_difference)
         << ',' << fmt(m->test.t) << ',' << fmt(m->test.df) << ',' << fmt(m->test.p) << ',' << fmt(m->p_adjusted)
         << ',' << (m->significant ? 1 : 0) << '\n';
      j.push_back({{"condition", r.condition},
                   {"metric", m->metric},
                   {"right_azimuths", r.right_azimuths},
                   {"left_means", m->left_means},
                   {"right_means", m->right_means},
                   {"t", m->test.t},
                   {"df", m->test.df},
                   {"p", m->test.p},
                   {"p_fdr", m->p_adjusted},
                   {"significant", m->significant}});
    }
  }
  write_json(csv, j);
}

void write_env_transfer(const std::filesystem::path& csv, std::span<const TransferCell> cells) {
  auto os = open_out(csv);
  os << "train_env,test_env,mean_ad_deg,mean_mse\n";
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : cells) {
    os << c.train_env << ',' << c.test_env << ',' << fmt(c.mean_ad_deg) << ',' << fmt(c.mean_mse) << '\n';
    j.push_back({{"train_env", c.train_env}, {"test_env", c.test_env}, {"mean_ad_deg", c.mean_ad_deg},
                 {"mean_mse", c.mean_mse}});
  }
  write_json(csv, j);
}

void write_records(const std::filesystem::path& csv, std::span<const EvalRecord> records) {
  auto os = open_out(csv);
  os << "sample_id,azimuth_deg,env,ad_deg,sq_error\n";
  for (const auto& r : records) {
    os << r.sample_id << ',' << r.azimuth_deg << ',' << environment_tag(r.environment) << ',' << fmt(r.ad_deg) << ','
       << fmt(r.sq_error) << '\n';
  }
}

BAST_NAMESPACE_END
