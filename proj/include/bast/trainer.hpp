#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bast/dataset.hpp"
#include "bast/losses.hpp"
#include "bast/metrics.hpp"
#include "bast/model.hpp"

BAST_NAMESPACE_BEGIN

enum class EnvFilter { AE, RV, Both };
std::string env_filter_name(EnvFilter f);  // "AE" | "RV" | "AE+RV"
EnvFilter parse_env_filter(const std::string& name);
bool env_accepts(EnvFilter f, Environment env);

// Synthetic corpus description used by every subcommand.
struct DataConfig {
  std::size_t sources = 16;      // train/val sources per azimuth and environment
  std::size_t test_sources = 4;  // held-out sources
  std::vector<int> azimuths = DatasetSpec::full_circle();
  std::vector<Environment> environments{Environment::Anechoic, Environment::Reverberant};
  double split_ratio = 0.75;
  double duration_s = 0.5;
  std::uint64_t seed = 0;
  // When set, WAVs and manifest.tsv are read from this corpus directory
  // (as written by gen-data) instead of being rendered in memory.
  std::filesystem::path corpus;

  DatasetSpec spec() const;
};

struct ExperimentConfig {
  ModelConfig model = ModelConfig::desk();
  LossConfig loss;
  AdamConfig adam;
  std::size_t batch_size = 16;
  std::size_t epochs = 50;
  EnvFilter train_env = EnvFilter::Both;
  std::uint64_t seed = 0;
  DataConfig data;

  static ExperimentConfig desk();
  // Canonical settings: full model, batch 48, 50 epochs.
  static ExperimentConfig canonical();

  void validate() const;
  // Keys: model.*, loss.kind, loss.alpha, loss.epsilon, optim.lr,
  // optim.beta1, optim.beta2, optim.epsilon, train.batch, train.epochs,
  // train.env, seed, data.sources, data.test_sources, data.azimuths,
  // data.environments, data.split_ratio, data.duration, data.seed, data.corpus.
  void set(const std::string& key, const std::string& value);
  std::string to_kv() const;
  static ExperimentConfig parse(const std::string& text, ExperimentConfig base = desk());
  static ExperimentConfig load(const std::filesystem::path& path, ExperimentConfig base = desk());
  std::string hash() const;
};

// All splits of the configured corpus after the frontend.
struct Corpus {
  DatasetSpec spec;
  DatasetManifest manifest;
  SampleSet train;
  SampleSet val;
  SampleSet test;
};

Corpus prepare_corpus(const DataConfig& data, const FrontendConfig& frontend = {});

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_ad_deg = 0.0;
  double val_mse = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_val_ad_deg = 0.0;
};

struct TrainResult {
  BastModel model;  // final weights
  std::optional<BastModel> best;
  TrainLog log;
};

// Adam on shuffled minibatches of `train` (already filtered), validation on
// `val` after each epoch. With a non-empty `out` writes
// checkpoints/{final,best}.bin, train_log.jsonl and config.kv. A non-finite
// loss or gradient writes checkpoints/last_good.bin and throws RunError.
TrainResult train(const ExperimentConfig& cfg, const SampleSet& train, const SampleSet& val,
                  const std::filesystem::path& out = {});

// Evaluation bundle: overall.csv, per_azimuth.csv, records.csv and, when the
// azimuth grid has enough mirror pairs, hemifield.csv (one condition per
// environment present).
EvalSummary write_evaluation(const std::filesystem::path& out, const BastModel& model, const SampleSet& samples,
                             const std::string& label);

struct GridCell {
  LossKind loss = LossKind::Hybrid;
  Integration integration = Integration::Sub;
  Sharing sharing = Sharing::NonShared;
  std::size_t parameters = 0;
  bool ok = false;
  double test_ad_deg = 0.0;
  double test_mse = 0.0;
  std::string error;
};

// Loss x integration x sharing (18 cells), one train + test evaluation each.
// Failures are recorded in the cell and the grid continues. Writes grid.csv
// and hemifield.csv, the latter FDR-corrected across all cells.
std::vector<GridCell> run_grid(const ExperimentConfig& base, const Corpus& corpus, const std::filesystem::path& out,
                               std::vector<LossKind> losses = {LossKind::MSE, LossKind::AD, LossKind::Hybrid},
                               std::vector<Integration> integrations = {Integration::Concat, Integration::Add,
                                                                        Integration::Sub},
                               std::vector<Sharing> sharings = {Sharing::Shared, Sharing::NonShared});

void write_grid(const std::filesystem::path& csv, std::span<const GridCell> cells);

// Trains on AE, RV and AE+RV training data and evaluates each model on the AE
// and RV test splits. Writes env_transfer.csv.
std::vector<TransferCell> run_env_transfer(const ExperimentConfig& base, const Corpus& corpus,
                                           const std::filesystem::path& out);

BAST_NAMESPACE_END
