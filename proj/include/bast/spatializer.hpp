#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bast/frontend.hpp"

BAST_NAMESPACE_BEGIN

enum class Environment { Anechoic, Reverberant };

// "AE" / "RV".
std::string environment_tag(Environment env);
Environment parse_environment(const std::string& tag);

// Ground truth on the 1 m azimuth circle. 0 deg is straight ahead and angles
// grow clockwise, so (0, 180) is the right hemifield; C = (sin, cos).
struct LocalizationTarget {
  int azimuth_deg = 0;
  double x = 0.0;
  double y = 1.0;
  Environment environment = Environment::Anechoic;

  static LocalizationTarget at(int azimuth_deg, Environment env);
};

struct SceneConfig {
  std::array<double, 3> room{10.0, 14.0, 3.0};
  std::array<double, 3> listener{5.0, 5.0, 1.5};
  double source_distance = 1.0;
  double head_radius = 0.0875;
  double speed_of_sound = 343.0;
  double absorption = 0.3;
  // 0 renders the direct path only (anechoic).
  int reflection_order = 3;
  // High-frequency shelf of the head-shadow filter is 1 +/- ild_strength * sin(azimuth).
  double ild_strength = 0.9;
  double sample_rate = 16000.0;
  std::uint64_t seed = 0;

  static SceneConfig anechoic();
  static SceneConfig reverberant();
  std::string describe() const;
};

enum class SourceKind { WhiteNoise, ToneComplex, AmNoise, Chirp };

std::string source_kind_name(SourceKind kind);
SourceKind parse_source_kind(const std::string& name);

// Synthetic mono source, peak-normalized to 0.9, deterministic in `seed`.
Waveform make_source(SourceKind kind, double duration_s, std::uint64_t seed, double sample_rate = 16000.0);

// Woodworth interaural time difference in seconds; positive when the left ear
// lags (source in the right hemifield).
double woodworth_itd(double azimuth_rad, double head_radius, double speed_of_sound);

// Places `source` at the target azimuth and renders both ears: per-ear
// fractional delay from the Woodworth model, a first-order head-shadow filter,
// and image-source reflections when scene.reflection_order > 0. The output
// has the source length.
Waveform render_binaural(const Waveform& source, const LocalizationTarget& target, const SceneConfig& scene);

// ---------------------------------------------------------------------------
// Corpus generation

enum class Split { Train, Val, Test };

std::string split_name(Split split);
Split parse_split(const std::string& name);

struct SourceSpec {
  std::string id;
  SourceKind kind = SourceKind::WhiteNoise;
  std::uint64_t seed = 0;
};

struct DatasetSpec {
  std::vector<SourceSpec> sources;       // train/val pool
  std::vector<SourceSpec> test_sources;  // held out, disjoint ids
  std::vector<int> azimuths;             // degrees on the 10 deg grid
  std::vector<Environment> environments{Environment::Anechoic, Environment::Reverberant};
  double split_ratio = 0.75;
  double duration_s = 0.5;
  std::uint64_t seed = 0;
  SceneConfig anechoic = SceneConfig::anechoic();
  SceneConfig reverberant = SceneConfig::reverberant();

  // All 36 azimuths 0, 10, ..., 350.
  static std::vector<int> full_circle();
  // `per_azimuth` sources cycling through the four kinds, seeds derived from `seed`.
  static std::vector<SourceSpec> synthetic_sources(std::size_t count, std::uint64_t seed, const std::string& prefix);

  const SceneConfig& scene(Environment env) const;
  std::string config_hash() const;
};

struct DatasetEntry {
  std::string id;
  std::string source_id;
  int azimuth_deg = 0;
  Environment environment = Environment::Anechoic;
  Split split = Split::Train;
  std::string path;  // relative to the corpus root
};

struct DatasetManifest {
  std::vector<DatasetEntry> entries;
  std::string config_hash;

  std::size_t count(Split split) const;
};

// Assigns splits: every (azimuth, environment) stratum of the source pool is
// split independently at spec.split_ratio; test sources go to Split::Test.
DatasetManifest build_manifest(const DatasetSpec& spec);

const SourceSpec& find_source(const DatasetSpec& spec, const std::string& source_id);
Waveform render_entry(const DatasetSpec& spec, const DatasetEntry& entry);

// Corpus gain applied before 16-bit quantization.
inline constexpr double kCorpusGain = 0.25;

// Renders every entry to <root>/<env>/<id>.wav and writes <root>/manifest.tsv.
DatasetManifest write_corpus(const DatasetSpec& spec, const std::filesystem::path& root);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

BAST_NAMESPACE_END
