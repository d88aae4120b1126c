#include "bast/frontend.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

BAST_NAMESPACE_BEGIN

namespace {

// FFTW planning is not thread-safe; execution with new arrays is.
fftw_plan r2c_plan(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, fftw_plan> plans;
  std::lock_guard lock(mu);
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  fftw_free(in);
  fftw_free(out);
  plans.emplace(n, p);
  return p;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

std::vector<double> tukey_window(std::size_t length, double shape) {
  if (!(shape >= 0.0 && shape <= 1.0)) throw ParameterError("Tukey shape must lie in [0, 1], got " + std::to_string(shape));
  if (length < 2) throw ParameterError("Tukey window length must be at least 2");
  std::vector<double> w(length, 1.0);
  if (shape == 0.0) return w;
  const double pi = std::numbers::pi;
  const double span = static_cast<double>(length - 1);
  for (std::size_t n = 0; n < length; ++n) {
    const double x = static_cast<double>(n) / span;
    if (x < shape / 2.0) {
      w[n] = 0.5 * (1.0 + std::cos(pi * (2.0 * x / shape - 1.0)));
    } else if (x > 1.0 - shape / 2.0) {
      w[n] = 0.5 * (1.0 + std::cos(pi * (2.0 * x / shape - 2.0 / shape + 1.0)));
    }
  }
  return w;
}

std::size_t frame_count(std::size_t samples, std::size_t window, std::size_t hop) {
  if (hop == 0 || hop > window) throw ParameterError("hop must lie in [1, window]");
  if (samples < window) return 0;
  return (samples - (window - hop)) / hop;
}

Spectrogram stft_magnitude(std::span<const double> samples, const FrontendConfig& cfg) {
  if (cfg.nfft < cfg.window) throw ParameterError("nfft must be at least the window length");
  if (samples.size() < cfg.window) {
    throw InputError("waveform of " + std::to_string(samples.size()) + " samples is shorter than one " +
                     std::to_string(cfg.window) + "-sample window");
  }
  const auto window = tukey_window(cfg.window, cfg.tukey_shape);
  Spectrogram s;
  s.bins = cfg.nfft / 2 + 1;
  s.frames = frame_count(samples.size(), cfg.window, cfg.hop);
  s.bin_spacing_hz = cfg.sample_rate / static_cast<double>(cfg.nfft);
  s.hop = cfg.hop;
  s.values.assign(s.bins * s.frames, 0.0f);

  fftw_plan plan = r2c_plan(cfg.nfft);
  std::unique_ptr<double, FftwFree> in(fftw_alloc_real(cfg.nfft));
  std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(s.bins));
  for (std::size_t f = 0; f < s.frames; ++f) {
    const std::size_t start = f * cfg.hop;
    for (std::size_t i = 0; i < cfg.nfft; ++i) {
      const double v = samples[start + i];
      if (!std::isfinite(v)) throw InputError("non-finite sample at index " + std::to_string(start + i));
      in.get()[i] = i < cfg.window ? v * window[i] : 0.0;
    }
    fftw_execute_dft_r2c(plan, in.get(), out.get());
    for (std::size_t b = 0; b < s.bins; ++b) {
      s.at(b, f) = static_cast<float>(std::hypot(out.get()[b][0], out.get()[b][1]));
    }
  }
  return s;
}

std::pair<Spectrogram, Spectrogram> binaural_spectrogram(const Waveform& wave, const FrontendConfig& cfg) {
  if (wave.channel_count() != 2) {
    throw InputError("binaural input needs 2 channels, got " + std::to_string(wave.channel_count()));
  }
  if (wave.channels[0].size() != wave.channels[1].size()) throw InputError("left and right channels differ in length");
  auto left = stft_magnitude(wave.channels[0], cfg);
  auto right = stft_magnitude(wave.channels[1], cfg);
  if (cfg.log_compress) {
    for (auto* s : {&left, &right})
      for (float& v : s->values) v = static_cast<float>(std::log1p(static_cast<double>(v)));
  }
  if (cfg.standardize) {
    double total = 0.0, sq = 0.0;
    const double n = static_cast<double>(left.values.size() + right.values.size());
    for (const auto* s : {&left, &right})
      for (float v : s->values) total += v;
    const double m = total / n;
    for (const auto* s : {&left, &right})
      for (float v : s->values) sq += (v - m) * (v - m);
    const double sd = std::sqrt(sq / n);
    const double inv = sd > 0.0 ? 1.0 / sd : 1.0;
    for (auto* s : {&left, &right})
      for (float& v : s->values) v = static_cast<float>((v - m) * inv);
  }
  return {std::move(left), std::move(right)};
}

BAST_NAMESPACE_END
