#include "bast/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "bast/hash.hpp"

BAST_NAMESPACE_BEGIN

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::logic_error&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

BastModel copy_model(const BastModel& m, std::uint64_t seed) {
  BastModel c(m.config(), seed);
  c.load_checkpoint(m.to_checkpoint());
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const BastModel& model) {
  std::filesystem::create_directories(path.parent_path());
  write_tensor_file(path, model.to_checkpoint());
}

std::string cell_name(const GridCell& c) {
  return loss_name(c.loss) + "_" + integration_name(c.integration) + "_" + sharing_name(c.sharing);
}

}  // namespace

std::string env_filter_name(EnvFilter f) {
  switch (f) {
    case EnvFilter::AE: return "AE";
    case EnvFilter::RV: return "RV";
    case EnvFilter::Both: return "AE+RV";
  }
  return "?";
}

EnvFilter parse_env_filter(const std::string& name) {
  if (name == "AE") return EnvFilter::AE;
  if (name == "RV") return EnvFilter::RV;
  if (name == "AE+RV" || name == "both") return EnvFilter::Both;
  throw ConfigError("unknown environment filter '" + name + "' (expected AE, RV or AE+RV)");
}

bool env_accepts(EnvFilter f, Environment env) {
  if (f == EnvFilter::Both) return true;
  return (f == EnvFilter::AE) == (env == Environment::Anechoic);
}

DatasetSpec DataConfig::spec() const {
  DatasetSpec s;
  s.sources = DatasetSpec::synthetic_sources(sources, seed, "src");
  s.test_sources = DatasetSpec::synthetic_sources(test_sources, mix(seed, 0x7e57), "test");
  s.azimuths = azimuths;
  s.environments = environments;
  s.split_ratio = split_ratio;
  s.duration_s = duration_s;
  s.seed = seed;
  return s;
}

ExperimentConfig ExperimentConfig::desk() { return ExperimentConfig{}; }

ExperimentConfig ExperimentConfig::canonical() {
  ExperimentConfig c;
  c.model = ModelConfig::canonical();
  c.batch_size = 48;
  c.epochs = 50;
  return c;
}

void ExperimentConfig::validate() const {
  model.validate();
  if (batch_size < 1) throw ConfigError("train.batch must be at least 1");
  if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("optim.lr must be positive");
  if (loss.alpha < 0.0 || loss.alpha > 1.0) throw ConfigError("loss.alpha must lie in [0, 1]");
  if (data.azimuths.empty()) throw ConfigError("data.azimuths is empty");
  for (int az : data.azimuths) {
    if (az < 0 || az >= 360 || az % 10 != 0) {
      throw ConfigError("data.azimuths: " + std::to_string(az) + " is not on the 10 degree grid [0, 350]");
    }
  }
  if (!(data.split_ratio > 0.0 && data.split_ratio < 1.0)) throw ConfigError("data.split_ratio must lie in (0, 1)");
  if (!(data.duration_s > 0.0)) throw ConfigError("data.duration must be positive");
  if (data.environments.empty()) throw ConfigError("data.environments is empty");
  const bool has_ae = std::count(data.environments.begin(), data.environments.end(), Environment::Anechoic) > 0;
  const bool has_rv = std::count(data.environments.begin(), data.environments.end(), Environment::Reverberant) > 0;
  if ((train_env == EnvFilter::AE && !has_ae) || (train_env == EnvFilter::RV && !has_rv)) {
    throw ConfigError("train.env " + env_filter_name(train_env) + " is not among data.environments");
  }
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (key.rfind("model.", 0) == 0) {
    model.set(key.substr(6), value);
  } else if (key == "loss.kind") {
    loss.kind = parse_loss(value);
  } else if (key == "loss.alpha") {
    loss.alpha = to_double(key, value);
  } else if (key == "loss.epsilon") {
    loss.epsilon = to_double(key, value);
  } else if (key == "optim.lr") {
    adam.learning_rate = to_double(key, value);
  } else if (key == "optim.beta1") {
    adam.beta1 = to_double(key, value);
  } else if (key == "optim.beta2") {
    adam.beta2 = to_double(key, value);
  } else if (key == "optim.epsilon") {
    adam.epsilon = to_double(key, value);
  } else if (key == "train.batch") {
    batch_size = to_size(key, value);
  } else if (key == "train.epochs") {
    epochs = to_size(key, value);
  } else if (key == "train.env") {
    train_env = parse_env_filter(value);
  } else if (key == "seed") {
    seed = to_size(key, value);
  } else if (key == "data.sources") {
    data.sources = to_size(key, value);
  } else if (key == "data.test_sources") {
    data.test_sources = to_size(key, value);
  } else if (key == "data.azimuths") {
    data.azimuths.clear();
    if (value == "full") {
      data.azimuths = DatasetSpec::full_circle();
    } else {
      for (const auto& a : split_list(value)) data.azimuths.push_back(static_cast<int>(to_size(key, a)));
    }
  } else if (key == "data.environments") {
    data.environments.clear();
    for (const auto& e : split_list(value)) data.environments.push_back(parse_environment(e));
  } else if (key == "data.split_ratio") {
    data.split_ratio = to_double(key, value);
  } else if (key == "data.duration") {
    data.duration_s = to_double(key, value);
  } else if (key == "data.seed") {
    data.seed = to_size(key, value);
  } else if (key == "data.corpus") {
    data.corpus = value;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

std::string ExperimentConfig::to_kv() const {
  std::ostringstream os;
  os.precision(17);
  std::istringstream m(model.to_kv());
  for (std::string line; std::getline(m, line);) os << "model." << line << '\n';
  os << "loss.kind = " << loss_name(loss.kind) << '\n'
     << "loss.alpha = " << loss.alpha << '\n'
     << "loss.epsilon = " << loss.epsilon << '\n'
     << "optim.lr = " << adam.learning_rate << '\n'
     << "optim.beta1 = " << adam.beta1 << '\n'
     << "optim.beta2 = " << adam.beta2 << '\n'
     << "optim.epsilon = " << adam.epsilon << '\n'
     << "train.batch = " << batch_size << '\n'
     << "train.epochs = " << epochs << '\n'
     << "train.env = " << env_filter_name(train_env) << '\n'
     << "seed = " << seed << '\n'
     << "data.sources = " << data.sources << '\n'
     << "data.test_sources = " << data.test_sources << '\n'
     << "data.azimuths = ";
  for (std::size_t i = 0; i < data.azimuths.size(); ++i) os << (i ? "," : "") << data.azimuths[i];
  os << "\ndata.environments = ";
  for (std::size_t i = 0; i < data.environments.size(); ++i) {
    os << (i ? "," : "") << environment_tag(data.environments[i]);
  }
  os << "\ndata.split_ratio = " << data.split_ratio << '\n'
     << "data.duration = " << data.duration_s << '\n'
     << "data.seed = " << data.seed << '\n';
  if (!data.corpus.empty()) os << "data.corpus = " << data.corpus.string() << '\n';
  return os.str();
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, ExperimentConfig base) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    }
    base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  base.validate();
  return base;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), std::move(base));
}

std::string ExperimentConfig::hash() const { return hash_hex(fnv1a64(to_kv())); }

Corpus prepare_corpus(const DataConfig& data, const FrontendConfig& frontend) {
  Corpus c;
  c.spec = data.spec();
  auto all = [](const DatasetEntry&) { return true; };
  SampleSet samples;
  if (data.corpus.empty()) {
    c.manifest = build_manifest(c.spec);
    samples = render_samples(c.spec, c.manifest, frontend, all);
  } else {
    c.manifest = read_manifest(data.corpus / "manifest.tsv");
    if (c.manifest.config_hash != c.spec.config_hash()) {
      throw ConfigError("corpus " + data.corpus.string() + " was generated with a different data config (hash " +
                        c.manifest.config_hash + ", expected " + c.spec.config_hash() + ")");
    }
    samples = load_samples(c.manifest, data.corpus, frontend, all, data.corpus / "spectrograms.bin");
  }
  c.train = samples.filter([](const SampleMeta& m) { return m.split == Split::Train; });
  c.val = samples.filter([](const SampleMeta& m) { return m.split == Split::Val; });
  c.test = samples.filter([](const SampleMeta& m) { return m.split == Split::Test; });
  return c;
}

TrainResult train(const ExperimentConfig& cfg, const SampleSet& train_set, const SampleSet& val,
                  const std::filesystem::path& out) {
  cfg.validate();
  if (train_set.empty()) throw RunError("training split is empty under filter " + env_filter_name(cfg.train_env));
  for (const SampleSet* set : {&train_set, &val}) {
    for (std::size_t i = 0; i < set->size(); ++i) {
      if (!env_accepts(cfg.train_env, set->meta(i).environment)) {
        throw ContractError("sample " + set->meta(i).id + " is outside train.env " + env_filter_name(cfg.train_env));
      }
    }
  }
  TrainResult result{BastModel(cfg.model, cfg.seed), std::nullopt, {}};
  BastModel& model = result.model;
  TrainLog& log = result.log;
  log.config_hash = cfg.hash();
  log.seed = cfg.seed;

  std::ofstream log_stream;
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    std::ofstream(out / "config.kv", std::ios::trunc) << cfg.to_kv();
    log_stream.open(out / "train_log.jsonl", std::ios::trunc);
    if (!log_stream) throw RunError("cannot write " + (out / "train_log.jsonl").string());
  }

  Adam optimizer(model.parameters(), cfg.adam);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(mix(cfg.seed, epoch, 1));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::mt19937_64 dropout_rng(mix(cfg.seed, epoch, 2));

    double loss_sum = 0.0;
    for (std::size_t b = 0; b * cfg.batch_size < order.size(); ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::span<const std::size_t> idx(order.data() + begin, std::min(cfg.batch_size, order.size() - begin));
      Graph g;
      auto fr = model.forward(g, train_set.left_batch(idx), train_set.right_batch(idx), true, dropout_rng);
      Tensor loss = compute_loss(g, cfg.loss, train_set.target_batch(idx), fr.coords);
      const double value = loss.item();
      auto abort = [&](const std::string& why) {
        if (!out.empty()) save_checkpoint(out / "checkpoints" / "last_good.bin", model);
        std::string ids;
        for (auto i : idx) ids += (ids.empty() ? "" : ",") + train_set.meta(i).id;
        throw RunError(why + " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) + " [" + ids +
                       "]; last good weights kept");
      };
      if (!std::isfinite(value)) abort("non-finite loss");
      optimizer.zero_grad();
      g.backward(loss);
      try {
        optimizer.step();
      } catch (const UpdateError& e) {
        abort(e.what());
      }
      loss_sum += value * static_cast<double>(idx.size());
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(order.size());
    if (!val.empty()) {
      const auto s = evaluate(model, val);
      entry.val_ad_deg = s.mean_ad_deg;
      entry.val_mse = s.mean_mse;
      if (!result.best || s.mean_ad_deg < log.best_val_ad_deg) {
        result.best = copy_model(model, cfg.seed);
        log.best_epoch = epoch;
        log.best_val_ad_deg = s.mean_ad_deg;
      }
    }
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.epochs.push_back(entry);
    if (log_stream) {
      nlohmann::json j = {{"epoch", entry.epoch},
                          {"train_loss", entry.train_loss},
                          {"val_ad_deg", val.empty() ? nlohmann::json(nullptr) : nlohmann::json(entry.val_ad_deg)},
                          {"val_mse", val.empty() ? nlohmann::json(nullptr) : nlohmann::json(entry.val_mse)},
                          {"seconds", entry.seconds},
                          {"seed", cfg.seed},
                          {"config_hash", log.config_hash}};
      log_stream << j.dump() << '\n' << std::flush;
    }
  }
  if (!out.empty()) {
    save_checkpoint(out / "checkpoints" / "final.bin", model);
    if (result.best) save_checkpoint(out / "checkpoints" / "best.bin", *result.best);
  }
  return result;
}

EvalSummary write_evaluation(const std::filesystem::path& out, const BastModel& model, const SampleSet& samples,
                             const std::string& label) {
  std::filesystem::create_directories(out);
  const auto summary = evaluate(model, samples);
  write_overall(out / "overall.csv", summary, label);
  write_per_azimuth(out / "per_azimuth.csv", per_azimuth(summary.records));
  write_records(out / "records.csv", summary.records);
  std::map<std::string, std::vector<EvalRecord>> conditions;
  for (const auto& r : summary.records) conditions[label + "/" + environment_tag(r.environment)].push_back(r);
  try {
    write_hemifield(out / "hemifield.csv", hemifield_test(conditions));
  } catch (const StatisticsError&) {
    std::filesystem::remove(out / "hemifield.csv");
  }
  return summary;
}

void write_grid(const std::filesystem::path& csv, std::span<const GridCell> cells) {
  std::filesystem::create_directories(csv.parent_path());
  std::ofstream os(csv, std::ios::trunc);
  if (!os) throw RunError("cannot write " + csv.string());
  nlohmann::json j = nlohmann::json::array();
  os << "loss,integration,sharing,parameters,test_ad_deg,test_mse,status\n";
  char buf[64];
  for (const auto& c : cells) {
    os << loss_name(c.loss) << ',' << integration_name(c.integration) << ',' << sharing_name(c.sharing) << ','
       << c.parameters << ',';
    nlohmann::json row = {{"loss", loss_name(c.loss)},
                          {"integration", integration_name(c.integration)},
                          {"sharing", sharing_name(c.sharing)},
                          {"parameters", c.parameters}};
    if (c.ok) {
      std::snprintf(buf, sizeof buf, "%.9g", c.test_ad_deg);
      os << buf << ',';
      row["test_ad_deg"] = c.test_ad_deg;
      if (c.loss == LossKind::AD) {
        os << "—";
        row["test_mse"] = nullptr;
      } else {
        std::snprintf(buf, sizeof buf, "%.9g", c.test_mse);
        os << buf;
        row["test_mse"] = c.test_mse;
      }
      os << ",ok\n";
      row["status"] = "ok";
    } else {
      std::string err = c.error;
      std::replace(err.begin(), err.end(), ',', ';');
      os << ",,failed: " << err << '\n';
      row["status"] = "failed: " + c.error;
    }
    j.push_back(row);
  }
  auto json_path = csv;
  json_path.replace_extension(".json");
  std::ofstream(json_path, std::ios::trunc) << j.dump(2) << '\n';
}

std::vector<GridCell> run_grid(const ExperimentConfig& base, const Corpus& corpus, const std::filesystem::path& out,
                               std::vector<LossKind> losses, std::vector<Integration> integrations,
                               std::vector<Sharing> sharings) {
  if (losses.empty() || integrations.empty() || sharings.empty()) throw ConfigError("experiment grid is empty");
  const auto keep = [&](const SampleMeta& m) { return env_accepts(base.train_env, m.environment); };
  const SampleSet train_set = corpus.train.filter(keep);
  const SampleSet val = corpus.val.filter(keep);
  std::vector<GridCell> cells;
  std::map<std::string, std::vector<EvalRecord>> conditions;
  for (auto loss : losses) {
    for (auto integration : integrations) {
      for (auto sharing : sharings) {
        GridCell cell;
        cell.loss = loss;
        cell.integration = integration;
        cell.sharing = sharing;
        try {
          ExperimentConfig cfg = base;
          cfg.loss.kind = loss;
          cfg.model.integration = integration;
          cfg.model.sharing = sharing;
          const auto dir = out / "grid" / cell_name(cell);
          auto result = train(cfg, train_set, val, dir);
          cell.parameters = result.model.count_parameters();
          const BastModel& chosen = result.best ? *result.best : result.model;
          const auto s = write_evaluation(dir / "test", chosen, corpus.test, cell_name(cell));
          cell.test_ad_deg = s.mean_ad_deg;
          cell.test_mse = s.mean_mse;
          cell.ok = true;
          for (const auto& r : s.records) {
            conditions[cell_name(cell) + "/" + environment_tag(r.environment)].push_back(r);
          }
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
        cells.push_back(cell);
        write_grid(out / "grid.csv", cells);
      }
    }
  }
  // One FDR family across every cell, environment and metric of the grid.
  if (!conditions.empty()) {
    try {
      write_hemifield(out / "hemifield.csv", hemifield_test(conditions));
    } catch (const StatisticsError&) {
    }
  }
  return cells;
}

std::vector<TransferCell> run_env_transfer(const ExperimentConfig& base, const Corpus& corpus,
                                           const std::filesystem::path& out) {
  std::vector<TrainResult> results;
  std::map<std::string, CoordinatePredictor> models;
  for (auto filter : {EnvFilter::AE, EnvFilter::RV, EnvFilter::Both}) {
    ExperimentConfig cfg = base;
    cfg.train_env = filter;
    const auto keep = [&](const SampleMeta& m) { return env_accepts(filter, m.environment); };
    const std::string name = env_filter_name(filter);
    results.push_back(train(cfg, corpus.train.filter(keep), corpus.val.filter(keep),
                            out.empty() ? out : out / "env_transfer" / (name == "AE+RV" ? "AE_RV" : name)));
  }
  const std::string names[] = {"AE", "RV", "AE+RV"};
  for (std::size_t i = 0; i < results.size(); ++i) {
    const BastModel& m = results[i].best ? *results[i].best : results[i].model;
    models[names[i]] = model_predictor(m);
  }
  const SampleSet test_ae = corpus.test.filter([](const SampleMeta& m) { return m.environment == Environment::Anechoic; });
  const SampleSet test_rv =
      corpus.test.filter([](const SampleMeta& m) { return m.environment == Environment::Reverberant; });
  const auto cells = environment_transfer(models, {{"AE", &test_ae}, {"RV", &test_rv}});
  if (!out.empty()) write_env_transfer(out / "env_transfer.csv", cells);
  return cells;
}

BAST_NAMESPACE_END
