#include "bast/dataset.hpp"

#include <sstream>

#include "bast/checkpoint.hpp"
#include "bast/hash.hpp"
#include "bast/wav.hpp"

BAST_NAMESPACE_BEGIN

void SampleSet::add(SampleMeta meta, const Spectrogram& left, const Spectrogram& right) {
  if (left.bins != height_ || left.frames != width_ || right.bins != height_ || right.frames != width_) {
    throw InputError("spectrogram " + std::to_string(left.bins) + "x" + std::to_string(left.frames) +
                     " does not match the sample set extent " + std::to_string(height_) + "x" + std::to_string(width_));
  }
  meta_.push_back(std::move(meta));
  left_.insert(left_.end(), left.values.begin(), left.values.end());
  right_.insert(right_.end(), right.values.begin(), right.values.end());
}

Tensor SampleSet::batch(const std::vector<float>& store, std::span<const std::size_t> indices) const {
  const std::size_t plane = height_ * width_;
  std::vector<Real> values(indices.size() * plane);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t i = indices[b];
    if (i >= meta_.size()) throw InputError("sample index out of range");
    for (std::size_t k = 0; k < plane; ++k) values[b * plane + k] = static_cast<Real>(store[i * plane + k]);
  }
  return Tensor(Shape{indices.size(), height_, width_}, std::move(values));
}

Tensor SampleSet::left_batch(std::span<const std::size_t> indices) const {
  for (auto i : indices) access_log_.push_back(meta_.at(i).id);
  return batch(left_, indices);
}

Tensor SampleSet::right_batch(std::span<const std::size_t> indices) const { return batch(right_, indices); }

Tensor SampleSet::target_batch(std::span<const std::size_t> indices) const {
  std::vector<Real> values;
  values.reserve(indices.size() * 2);
  for (auto i : indices) {
    const auto t = LocalizationTarget::at(meta_.at(i).azimuth_deg, meta_[i].environment);
    values.push_back(static_cast<Real>(t.x));
    values.push_back(static_cast<Real>(t.y));
  }
  return Tensor(Shape{indices.size(), 2}, std::move(values));
}

SampleSet SampleSet::filter(const std::function<bool(const SampleMeta&)>& keep) const {
  SampleSet out(height_, width_);
  const std::size_t plane = height_ * width_;
  for (std::size_t i = 0; i < meta_.size(); ++i) {
    if (!keep(meta_[i])) continue;
    out.meta_.push_back(meta_[i]);
    out.left_.insert(out.left_.end(), left_.begin() + static_cast<std::ptrdiff_t>(i * plane),
                     left_.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane));
    out.right_.insert(out.right_.end(), right_.begin() + static_cast<std::ptrdiff_t>(i * plane),
                      right_.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane));
  }
  return out;
}

std::string frontend_hash(const FrontendConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << cfg.sample_rate << ' ' << cfg.window << ' ' << cfg.hop << ' ' << cfg.nfft << ' ' << cfg.tukey_shape << ' '
     << cfg.log_compress << ' ' << cfg.standardize;
  return hash_hex(fnv1a64(os.str()));
}

namespace {

SampleMeta meta_of(const DatasetEntry& e) { return {e.id, e.source_id, e.azimuth_deg, e.environment, e.split}; }

Spectrogram from_tensor(const Tensor& t, const FrontendConfig& cfg) {
  Spectrogram s;
  s.bins = t.dim(0);
  s.frames = t.dim(1);
  s.hop = cfg.hop;
  s.bin_spacing_hz = cfg.sample_rate / static_cast<double>(cfg.nfft);
  s.values.assign(t.data().begin(), t.data().end());
  return s;
}

Tensor to_tensor(const Spectrogram& s) {
  return Tensor(Shape{s.bins, s.frames}, std::vector<Real>(s.values.begin(), s.values.end()));
}

}  // namespace

SampleSet load_samples(const DatasetManifest& manifest, const std::filesystem::path& root, const FrontendConfig& cfg,
                       const std::function<bool(const DatasetEntry&)>& keep, const std::filesystem::path& cache) {
  const std::string tag = "spectrograms " + manifest.config_hash + " " + frontend_hash(cfg);
  TensorFile cached;
  bool have_cache = false;
  if (!cache.empty() && std::filesystem::exists(cache)) {
    cached = read_tensor_file(cache);
    have_cache = cached.tag == tag;
  }
  TensorFile fresh;
  fresh.tag = tag;
  SampleSet out(cfg.nfft / 2 + 1, 0);
  bool sized = false;
  for (const auto& e : manifest.entries) {
    const Tensor* l = have_cache ? cached.find(e.id + ".L") : nullptr;
    const Tensor* r = have_cache ? cached.find(e.id + ".R") : nullptr;
    Spectrogram left, right;
    if (l && r) {
      left = from_tensor(*l, cfg);
      right = from_tensor(*r, cfg);
    } else {
      if (!keep(e)) continue;
      std::tie(left, right) = binaural_spectrogram(read_wav(root / e.path), cfg);
    }
    if (!cache.empty() && !have_cache) {
      fresh.tensors.push_back({e.id + ".L", to_tensor(left)});
      fresh.tensors.push_back({e.id + ".R", to_tensor(right)});
    }
    if (!keep(e)) continue;
    if (!sized) {
      out = SampleSet(left.bins, left.frames);
      sized = true;
    }
    out.add(meta_of(e), left, right);
  }
  if (!cache.empty() && !have_cache) write_tensor_file(cache, fresh);
  return out;
}

SampleSet render_samples(const DatasetSpec& spec, const DatasetManifest& manifest, const FrontendConfig& cfg,
                         const std::function<bool(const DatasetEntry&)>& keep) {
  SampleSet out;
  bool sized = false;
  for (const auto& e : manifest.entries) {
    if (!keep(e)) continue;
    auto [left, right] = binaural_spectrogram(render_entry(spec, e), cfg);
    if (!sized) {
      out = SampleSet(left.bins, left.frames);
      sized = true;
    }
    out.add(meta_of(e), left, right);
  }
  return out;
}

BAST_NAMESPACE_END
