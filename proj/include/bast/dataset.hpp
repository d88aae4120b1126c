#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bast/frontend.hpp"
#include "bast/spatializer.hpp"
#include "bast/tensor.hpp"

BAST_NAMESPACE_BEGIN

struct SampleMeta {
  std::string id;
  std::string source_id;
  int azimuth_deg = 0;
  Environment environment = Environment::Anechoic;
  Split split = Split::Train;
};

// Spectrogram pairs held in memory, ready for batching.
class SampleSet {
 public:
  SampleSet() = default;
  SampleSet(std::size_t height, std::size_t width) : height_(height), width_(width) {}

  void add(SampleMeta meta, const Spectrogram& left, const Spectrogram& right);

  std::size_t size() const { return meta_.size(); }
  bool empty() const { return meta_.empty(); }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  const SampleMeta& meta(std::size_t i) const { return meta_[i]; }

  // [B, H, T] spectrogram batches and [B, 2] targets for the given indices.
  Tensor left_batch(std::span<const std::size_t> indices) const;
  Tensor right_batch(std::span<const std::size_t> indices) const;
  Tensor target_batch(std::span<const std::size_t> indices) const;

  SampleSet filter(const std::function<bool(const SampleMeta&)>& keep) const;

  // Every sample id handed out by *_batch since construction (audit trail).
  const std::vector<std::string>& access_log() const { return access_log_; }

 private:
  Tensor batch(const std::vector<float>& plane_store, std::span<const std::size_t> indices) const;

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<SampleMeta> meta_;
  std::vector<float> left_;
  std::vector<float> right_;
  mutable std::vector<std::string> access_log_;
};

// Reads the corpus WAVs of `manifest` (relative to `root`), runs the frontend,
// and returns the samples accepted by `keep`. When `cache` is non-empty the
// spectrograms are read from / written to that tensor file, tagged with the
// manifest and frontend config hash.
SampleSet load_samples(const DatasetManifest& manifest, const std::filesystem::path& root, const FrontendConfig& cfg,
                       const std::function<bool(const DatasetEntry&)>& keep,
                       const std::filesystem::path& cache = {});

// Renders `manifest` in memory (no WAV round trip) and runs the frontend.
SampleSet render_samples(const DatasetSpec& spec, const DatasetManifest& manifest, const FrontendConfig& cfg,
                         const std::function<bool(const DatasetEntry&)>& keep);

std::string frontend_hash(const FrontendConfig& cfg);

BAST_NAMESPACE_END
