// Command-line front end: corpus generation, training, evaluation, grids,
// environment transfer, attention rollout and parameter inspection.
#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "bast/rollout.hpp"
#include "bast/trainer.hpp"

using namespace bast;

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string profile = "desk";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Experiment config file (key = value)")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "Override a config key, e.g. --set train.epochs=5");
  cmd->add_option("--seed", o.seed, "Master seed (training and corpus)");
  cmd->add_option("--out", o.out, "Output root directory");
  cmd->add_option("--profile", o.profile, "Base profile before --config and --set")
      ->check(CLI::IsMember({"desk", "canonical"}));
}

ExperimentConfig resolve(const CommonOptions& o, const std::filesystem::path& fallback_config = {}) {
  ExperimentConfig cfg = o.profile == "canonical" ? ExperimentConfig::canonical() : ExperimentConfig::desk();
  if (!o.config.empty()) {
    cfg = ExperimentConfig::load(o.config, cfg);
  } else if (!fallback_config.empty() && std::filesystem::exists(fallback_config)) {
    cfg = ExperimentConfig::load(fallback_config, cfg);
  }
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.data.seed = *o.seed;
  }
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

BastModel load_model(const ExperimentConfig& cfg, const std::string& checkpoint) {
  BastModel model(cfg.model, cfg.seed);
  model.load_checkpoint(read_tensor_file(checkpoint));
  return model;
}

const SampleSet& pick_split(const Corpus& c, const std::string& split) {
  if (split == "train") return c.train;
  if (split == "val") return c.val;
  if (split == "test") return c.test;
  throw ConfigError("unknown split '" + split + "'");
}

std::filesystem::path config_beside(const std::string& checkpoint) {
  return std::filesystem::path(checkpoint).parent_path().parent_path() / "config.kv";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Binaural audio spectrogram transformer"};
  app.require_subcommand(1);

  CommonOptions gen_opts, train_opts, eval_opts, grid_opts, transfer_opts, rollout_opts, inspect_opts;
  std::string checkpoint, split = "test", sample;
  std::size_t rollout_count = 4;
  bool inspect_all = false;

  auto* gen = app.add_subcommand("gen-data", "Render the synthetic binaural corpus to WAV plus manifest.tsv");
  add_common(gen, gen_opts);
  auto* train_cmd = app.add_subcommand("train", "Train one model; writes checkpoints, train_log.jsonl, val metrics");
  add_common(train_cmd, train_opts);
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  auto* grid = app.add_subcommand("grid", "Loss x integration x sharing grid (18 cells)");
  add_common(grid, grid_opts);
  auto* transfer = app.add_subcommand("env-transfer", "Train on AE, RV, AE+RV; test on AE and RV");
  add_common(transfer, transfer_opts);
  auto* rollout = app.add_subcommand("rollout", "Attention rollout heat maps for test samples");
  add_common(rollout, rollout_opts);
  rollout->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  rollout->add_option("--sample", sample, "Sample id (default: the first --count test samples)");
  rollout->add_option("--count", rollout_count, "Number of samples when --sample is absent");
  auto* inspect = app.add_subcommand("inspect-params", "Print parameter counts");
  add_common(inspect, inspect_opts);
  inspect->add_flag("--all", inspect_all, "Table over integration and sharing modes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const auto cfg = resolve(gen_opts);
      const std::filesystem::path root = std::filesystem::path(gen_opts.out) / "corpus";
      const auto manifest = write_corpus(cfg.data.spec(), root);
      std::printf("wrote %zu entries (train %zu, val %zu, test %zu) to %s, config %s\n", manifest.entries.size(),
                  manifest.count(Split::Train), manifest.count(Split::Val), manifest.count(Split::Test),
                  root.c_str(), manifest.config_hash.c_str());
    } else if (*train_cmd) {
      const auto cfg = resolve(train_opts);
      const auto corpus = prepare_corpus(cfg.data);
      const auto keep = [&](const SampleMeta& m) { return env_accepts(cfg.train_env, m.environment); };
      const std::filesystem::path out = train_opts.out;
      auto result = train(cfg, corpus.train.filter(keep), corpus.val.filter(keep), out);
      for (const auto& e : result.log.epochs) {
        std::printf("epoch %3zu  loss %.6f  val AD %.3f deg  val MSE %.5f  (%.1f s)\n", e.epoch, e.train_loss,
                    e.val_ad_deg, e.val_mse, e.seconds);
      }
      const BastModel& chosen = result.best ? *result.best : result.model;
      const auto s = write_evaluation(out / "val", chosen, corpus.val.filter(keep), "val");
      std::printf("best epoch %zu, val AD %.3f deg, val MSE %.5f\n", result.log.best_epoch, s.mean_ad_deg,
                  s.mean_mse);
    } else if (*eval) {
      const auto cfg = resolve(eval_opts, config_beside(checkpoint));
      const auto model = load_model(cfg, checkpoint);
      const auto corpus = prepare_corpus(cfg.data);
      const auto s = write_evaluation(std::filesystem::path(eval_opts.out) / ("eval_" + split), model,
                                      pick_split(corpus, split), split);
      std::printf("%s: %zu samples, mean AD %.3f deg, mean MSE %.5f\n", split.c_str(), s.records.size(),
                  s.mean_ad_deg, s.mean_mse);
    } else if (*grid) {
      const auto cfg = resolve(grid_opts);
      const auto corpus = prepare_corpus(cfg.data);
      const auto cells = run_grid(cfg, corpus, grid_opts.out);
      std::size_t failed = 0;
      for (const auto& c : cells) {
        failed += c.ok ? 0 : 1;
        std::printf("%-6s %-6s %-3s  %s\n", loss_name(c.loss).c_str(), integration_name(c.integration).c_str(),
                    sharing_name(c.sharing).c_str(),
                    c.ok ? ("AD " + std::to_string(c.test_ad_deg)).c_str() : ("failed: " + c.error).c_str());
      }
      if (failed) return 2;
    } else if (*transfer) {
      const auto cfg = resolve(transfer_opts);
      const auto corpus = prepare_corpus(cfg.data);
      for (const auto& c : run_env_transfer(cfg, corpus, transfer_opts.out)) {
        std::printf("%-6s -> %-3s  AD %.3f deg  MSE %.5f\n", c.train_env.c_str(), c.test_env.c_str(), c.mean_ad_deg,
                    c.mean_mse);
      }
    } else if (*rollout) {
      const auto cfg = resolve(rollout_opts, config_beside(checkpoint));
      const auto model = load_model(cfg, checkpoint);
      const auto corpus = prepare_corpus(cfg.data);
      std::vector<std::size_t> picks;
      for (std::size_t i = 0; i < corpus.test.size(); ++i) {
        if (sample.empty() ? picks.size() < rollout_count : corpus.test.meta(i).id == sample) picks.push_back(i);
      }
      if (picks.empty()) throw ConfigError("no test sample matches '" + sample + "'");
      const std::filesystem::path dir = std::filesystem::path(rollout_opts.out) / "rollout";
      for (auto i : picks) {
        const std::size_t one[] = {i};
        const auto rec = bast_rollout(model, corpus.test.left_batch(one), corpus.test.right_batch(one));
        export_heatmap(dir, rec, corpus.test.meta(i), cfg.model.height, cfg.model.width);
        std::printf("rollout %s -> %s\n", corpus.test.meta(i).id.c_str(), dir.c_str());
      }
    } else if (*inspect) {
      const auto cfg = resolve(inspect_opts);
      auto report = [](const ModelConfig& m) {
        const BastModel model(m, 0);
        std::printf("%-6s %-3s  patches %zu (%zux%zu)  parameters %zu\n", integration_name(m.integration).c_str(),
                    sharing_name(m.sharing).c_str(), model.grid().count(), model.grid().rows, model.grid().cols,
                    model.count_parameters());
      };
      if (inspect_all) {
        for (auto mode : {Integration::Concat, Integration::Add, Integration::Sub}) {
          for (auto share : {Sharing::NonShared, Sharing::Shared}) {
            ModelConfig m = cfg.model;
            m.integration = mode;
            m.sharing = share;
            report(m);
          }
        }
      } else {
        report(cfg.model);
      }
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
