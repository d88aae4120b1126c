#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "bast/errors.hpp"

BAST_NAMESPACE_BEGIN

// PCM signal, one vector per channel.
struct Waveform {
  std::vector<std::vector<double>> channels;
  double sample_rate = 16000.0;

  std::size_t channel_count() const { return channels.size(); }
  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
};

// Magnitude grid with `bins` rows (frequency, DC first) and `frames` columns.
struct Spectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  double bin_spacing_hz = 0.0;
  std::size_t hop = 0;
  std::vector<float> values;  // row-major bins x frames

  float at(std::size_t bin, std::size_t frame) const { return values[bin * frames + frame]; }
  float& at(std::size_t bin, std::size_t frame) { return values[bin * frames + frame]; }
};

struct FrontendConfig {
  double sample_rate = 16000.0;
  std::size_t window = 256;
  std::size_t hop = 128;
  std::size_t nfft = 256;
  double tukey_shape = 0.25;
  // log(1 + |X|) compression.
  bool log_compress = true;
  // Zero mean / unit variance computed jointly over both ears.
  bool standardize = true;
};

// Symmetric Tukey (tapered cosine) window. shape = 0 gives a rectangular
// window, shape = 1 a Hann window.
std::vector<double> tukey_window(std::size_t length, double shape);

// Number of non-padded frames of `window` samples spaced `hop` apart.
std::size_t frame_count(std::size_t samples, std::size_t window, std::size_t hop);

// One-sided STFT magnitude of a single channel, no compression.
Spectrogram stft_magnitude(std::span<const double> samples, const FrontendConfig& cfg);

// Left/right spectrogram pair with the compression and standardization
// selected in `cfg`.
std::pair<Spectrogram, Spectrogram> binaural_spectrogram(const Waveform& wave, const FrontendConfig& cfg);

BAST_NAMESPACE_END
