#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "bast/trainer.hpp"

using namespace bast;

namespace {

ExperimentConfig small_config() {
  auto cfg = ExperimentConfig::desk();
  cfg.model.dim = 16;
  cfg.model.layers = 1;
  cfg.model.heads = 2;
  cfg.model.mlp_dim = 24;
  cfg.batch_size = 4;
  cfg.epochs = 1;
  cfg.seed = 3;
  cfg.data.sources = 2;
  cfg.data.test_sources = 1;
  cfg.data.azimuths = {0, 90, 180, 270};
  cfg.data.environments = {Environment::Anechoic, Environment::Reverberant};
  cfg.data.split_ratio = 0.5;
  cfg.data.seed = 3;
  return cfg;
}

const Corpus& small_corpus() {
  static const Corpus corpus = prepare_corpus(small_config().data);
  return corpus;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("experiment config round trip and validation") {
  auto cfg = small_config();
  cfg.loss.kind = LossKind::AD;
  cfg.adam.learning_rate = 3e-4;
  cfg.train_env = EnvFilter::RV;
  const auto back = ExperimentConfig::parse(cfg.to_kv());
  CHECK(back.to_kv() == cfg.to_kv());
  CHECK(back.hash() == cfg.hash());
  CHECK(back.data.azimuths == cfg.data.azimuths);
  CHECK(back.train_env == EnvFilter::RV);

  auto other = cfg;
  other.seed = 4;
  CHECK(other.hash() != cfg.hash());

  CHECK_THROWS_AS(ExperimentConfig::parse("nonsense"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("train.batch = -1"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("bogus.key = 1"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("data.azimuths = 0,45"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("loss.alpha = 2"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("data.environments = AE\ntrain.env = RV"), ConfigError);
  CHECK(ExperimentConfig::parse("data.azimuths = full").data.azimuths.size() == 36);
  CHECK(parse_env_filter("both") == EnvFilter::Both);
  CHECK_THROWS_AS(parse_env_filter("XX"), ConfigError);
}

TEST_CASE("corpus splits are stratified") {
  const auto& c = small_corpus();
  CHECK(c.train.size() == 8);
  CHECK(c.val.size() == 8);
  CHECK(c.test.size() == 8);
  CHECK(c.train.height() == 129);
  CHECK(c.train.width() == 61);
}

TEST_CASE("one epoch writes one log line and checkpoints") {
  const auto dir = fresh_dir("bast_train_one");
  const auto& c = small_corpus();
  const auto r = train(small_config(), c.train, c.val, dir);
  CHECK(r.log.epochs.size() == 1);
  CHECK(r.log.best_epoch == 1);
  CHECK(std::isfinite(r.log.epochs[0].train_loss));
  std::ifstream is(dir / "train_log.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(is, line);) ++lines;
  CHECK(lines == 1);
  CHECK(std::filesystem::exists(dir / "checkpoints" / "final.bin"));
  CHECK(std::filesystem::exists(dir / "checkpoints" / "best.bin"));
  CHECK(std::filesystem::exists(dir / "config.kv"));

  // Reloaded weights reproduce the evaluation exactly.
  BastModel reloaded(small_config().model, 99);
  reloaded.load_checkpoint(read_tensor_file(dir / "checkpoints" / "final.bin"));
  const auto a = evaluate(r.model, c.test);
  const auto b = evaluate(reloaded, c.test);
  CHECK(a.mean_ad_deg == b.mean_ad_deg);
  CHECK(a.mean_mse == b.mean_mse);
  std::filesystem::remove_all(dir);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto& c = small_corpus();
  auto cfg = small_config();
  cfg.epochs = 2;
  const auto d1 = fresh_dir("bast_train_det1"), d2 = fresh_dir("bast_train_det2");
  train(cfg, c.train, c.val, d1);
  train(cfg, c.train, c.val, d2);
  CHECK(slurp(d1 / "checkpoints" / "final.bin") == slurp(d2 / "checkpoints" / "final.bin"));
  CHECK(slurp(d1 / "checkpoints" / "best.bin") == slurp(d2 / "checkpoints" / "best.bin"));
  cfg.seed = 4;
  const auto d3 = fresh_dir("bast_train_det3");
  train(cfg, c.train, c.val, d3);
  CHECK(slurp(d1 / "checkpoints" / "final.bin") != slurp(d3 / "checkpoints" / "final.bin"));
  for (const auto& d : {d1, d2, d3}) std::filesystem::remove_all(d);
}

TEST_CASE("anechoic-only training never touches reverberant samples") {
  const auto& c = small_corpus();
  auto cfg = small_config();
  cfg.train_env = EnvFilter::AE;
  CHECK_THROWS_AS(train(cfg, c.train, c.val), ContractError);
  auto ae = [](const SampleMeta& m) { return m.environment == Environment::Anechoic; };
  const SampleSet train_ae = c.train.filter(ae), val_ae = c.val.filter(ae);
  train(cfg, train_ae, val_ae);
  CHECK_FALSE(train_ae.access_log().empty());
  for (const auto* set : {&train_ae, &val_ae}) {
    for (const auto& id : set->access_log()) CHECK(id.find("RV") == std::string::npos);
  }
}

TEST_CASE("a non-finite loss aborts with context and keeps the last good weights") {
  const auto dir = fresh_dir("bast_train_nan");
  auto cfg = small_config();
  SampleSet bad(129, 61);
  Spectrogram s;
  s.bins = 129;
  s.frames = 61;
  s.values.assign(129 * 61, 0.5f);
  bad.add({"ok_0", "s", 0, Environment::Anechoic, Split::Train}, s, s);
  s.values[17] = std::nanf("");
  bad.add({"poison_90", "s", 90, Environment::Anechoic, Split::Train}, s, s);
  try {
    train(cfg, bad, SampleSet(129, 61), dir);
    FAIL("expected RunError");
  } catch (const RunError& e) {
    const std::string what = e.what();
    CHECK(what.find("epoch 1") != std::string::npos);
    CHECK(what.find("poison_90") != std::string::npos);
  }
  CHECK(std::filesystem::exists(dir / "checkpoints" / "last_good.bin"));
  CHECK_FALSE(std::filesystem::exists(dir / "checkpoints" / "final.bin"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("evaluation bundle and grid table") {
  const auto dir = fresh_dir("bast_eval_bundle");
  const auto& c = small_corpus();
  const BastModel model(small_config().model, 1);
  const auto s = write_evaluation(dir, model, c.test, "untrained");
  CHECK(s.records.size() == c.test.size());
  for (const char* f : {"overall.csv", "per_azimuth.csv", "records.csv"}) CHECK(std::filesystem::exists(dir / f));

  std::vector<GridCell> cells(2);
  cells[0].loss = LossKind::AD;
  cells[0].ok = true;
  cells[0].test_ad_deg = 12.5;
  cells[1].error = "diverged";
  write_grid(dir / "grid.csv", cells);
  const auto text = slurp(dir / "grid.csv");
  CHECK(text.rfind("loss,integration,sharing,parameters,test_ad_deg,test_mse,status", 0) == 0);
  CHECK(text.find("diverged") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "grid.json"));
  std::filesystem::remove_all(dir);
}
