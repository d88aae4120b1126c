#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bast/frontend.hpp"
#include "bast/wav.hpp"

using namespace bast;

namespace {

FrontendConfig raw_config() {
  FrontendConfig cfg;
  cfg.log_compress = false;
  cfg.standardize = false;
  return cfg;
}

std::vector<double> tone(double hz, std::size_t n, double amp = 0.5) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / 16000.0);
  return x;
}

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.3);
  std::vector<double> x(n);
  for (auto& v : x) v = nd(rng);
  return x;
}

}  // namespace

TEST_CASE("tukey window shapes") {
  for (double v : tukey_window(16, 0.0)) CHECK(v == 1.0);
  const auto hann = tukey_window(256, 1.0);
  for (std::size_t i = 0; i < hann.size(); ++i) {
    CHECK(hann[i] == doctest::Approx(0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / 255.0))));
  }
  const auto w = tukey_window(256, 0.25);
  CHECK(w[128] == 1.0);
  CHECK(w.front() == 0.0);
  CHECK(w.back() == 0.0);
  // Flat region spans the central (1 - shape) fraction.
  std::size_t ones = 0;
  for (double v : w) ones += v == 1.0 ? 1 : 0;
  CHECK(std::abs(static_cast<double>(ones) / 256.0 - 0.75) < 0.02);
  for (std::size_t i = 0; i < 128; ++i) CHECK(w[i] == doctest::Approx(w[255 - i]));
  CHECK_THROWS_AS(tukey_window(256, 1.5), ParameterError);
  CHECK_THROWS_AS(tukey_window(256, -0.1), ParameterError);
  CHECK_THROWS_AS(tukey_window(1, 0.5), ParameterError);
}

TEST_CASE("frame count arithmetic") {
  CHECK(frame_count(8000, 256, 128) == 61);
  CHECK(frame_count(256, 256, 128) == 1);
  CHECK(frame_count(383, 256, 128) == 1);
  CHECK(frame_count(384, 256, 128) == 2);
}

TEST_CASE("stft shape and tone bin") {
  const auto s = stft_magnitude(tone(1000.0, 8000), raw_config());
  CHECK(s.bins == 129);
  CHECK(s.frames == 61);
  CHECK(s.bin_spacing_hz == 62.5);
  for (std::size_t t = 0; t < s.frames; ++t) {
    std::size_t best = 0;
    for (std::size_t b = 1; b < s.bins; ++b) {
      if (s.at(b, t) > s.at(best, t)) best = b;
    }
    CHECK(best == 16);  // 1000 Hz / 62.5 Hz
  }
}

TEST_CASE("stft edge cases") {
  const auto z = stft_magnitude(std::vector<double>(8000, 0.0), raw_config());
  for (float v : z.values) CHECK(v == 0.0f);
  CHECK_THROWS_AS(stft_magnitude(std::vector<double>(255, 0.1), raw_config()), InputError);
}

TEST_CASE("stft magnitudes are nonnegative and scale with amplitude") {
  const auto x = noise(8000, 4);
  std::vector<double> x3(x);
  for (auto& v : x3) v *= 3.0;
  const auto a = stft_magnitude(x, raw_config());
  const auto b = stft_magnitude(x3, raw_config());
  double ea = 0.0, eb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    CHECK(a.values[i] >= 0.0f);
    ea += static_cast<double>(a.values[i]) * a.values[i];
    eb += static_cast<double>(b.values[i]) * b.values[i];
  }
  CHECK(eb / ea == doctest::Approx(9.0).epsilon(1e-5));
}

TEST_CASE("one-hop shift moves columns by one") {
  const auto x = noise(8000 + 128, 5);
  const auto a = stft_magnitude(std::span<const double>(x.data() + 128, 8000), raw_config());
  const auto b = stft_magnitude(std::span<const double>(x.data(), 8000), raw_config());
  for (std::size_t f = 0; f < a.bins; ++f) {
    for (std::size_t t = 0; t + 1 < a.frames; ++t) CHECK(std::abs(a.at(f, t) - b.at(f, t + 1)) <= 1e-5);
  }
}

TEST_CASE("binaural spectrogram contracts") {
  Waveform same{{noise(8000, 6), noise(8000, 6)}, 16000.0};
  const auto [l, r] = binaural_spectrogram(same, {});
  CHECK(l.bins == 129);
  CHECK(l.frames == 61);
  CHECK(r.bins == 129);
  CHECK(r.frames == 61);
  CHECK(l.values == r.values);

  auto left = noise(8000, 7);
  std::vector<double> right(left);
  for (auto& v : right) v *= 0.5;
  const auto [ml, mr] = binaural_spectrogram(Waveform{{left, right}, 16000.0}, raw_config());
  for (std::size_t i = 0; i < ml.values.size(); ++i) CHECK(mr.values[i] == doctest::Approx(0.5 * ml.values[i]));

  CHECK_THROWS_AS(binaural_spectrogram(Waveform{{left}, 16000.0}, {}), InputError);
  CHECK_THROWS_AS(binaural_spectrogram(Waveform{{left, std::vector<double>(7999)}, 16000.0}, {}), InputError);
}

TEST_CASE("joint standardization keeps the level difference") {
  auto left = noise(8000, 8);
  std::vector<double> right(left);
  for (auto& v : right) v *= 0.25;
  const auto [l, r] = binaural_spectrogram(Waveform{{left, right}, 16000.0}, {});
  double mean = 0.0, ml = 0.0, mr = 0.0;
  for (std::size_t i = 0; i < l.values.size(); ++i) {
    ml += l.values[i];
    mr += r.values[i];
  }
  mean = (ml + mr) / (2.0 * l.values.size());
  CHECK(std::abs(mean) < 1e-4);
  CHECK(ml > mr);
}

TEST_CASE("wav round trip") {
  const auto path = std::filesystem::temp_directory_path() / "bast_wav_roundtrip.wav";
  Waveform w{{tone(440.0, 1000), tone(880.0, 1000, 0.25)}, 16000.0};
  write_wav(path, w);
  const auto r = read_wav(path);
  CHECK(r.sample_rate == 16000.0);
  REQUIRE(r.channel_count() == 2);
  REQUIRE(r.length() == 1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    CHECK(std::abs(r.channels[0][i] - w.channels[0][i]) <= 1.0 / 32767.0);
    CHECK(std::abs(r.channels[1][i] - w.channels[1][i]) <= 1.0 / 32767.0);
  }
  std::filesystem::remove(path);
}
