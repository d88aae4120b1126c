#include "bast/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

BAST_NAMESPACE_BEGIN

namespace {

void put(std::ostream& os, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get(const unsigned char* p, int bytes) {
  std::uint32_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint32_t(p[i]) << (8 * i);
  return v;
}

}  // namespace

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  const std::uint32_t channels = static_cast<std::uint32_t>(wave.channel_count());
  if (channels == 0) throw InputError("cannot write a waveform without channels");
  for (const auto& c : wave.channels) {
    if (c.size() != wave.length()) throw InputError("channels differ in length");
  }
  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(wave.sample_rate));
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(wave.length() * channels * 2);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw RunError("cannot open " + path.string() + " for writing");
  os.write("RIFF", 4);
  put(os, 36 + data_bytes, 4);
  os.write("WAVEfmt ", 8);
  put(os, 16, 4);
  put(os, 1, 2);  // PCM
  put(os, channels, 2);
  put(os, rate, 4);
  put(os, rate * channels * 2, 4);
  put(os, channels * 2, 2);
  put(os, 16, 2);
  os.write("data", 4);
  put(os, data_bytes, 4);
  for (std::size_t i = 0; i < wave.length(); ++i) {
    for (const auto& c : wave.channels) {
      const double v = std::clamp(c[i], -1.0, 1.0);
      const auto q = static_cast<std::int16_t>(std::lround(v * 32767.0));
      put(os, static_cast<std::uint16_t>(q), 2);
    }
  }
  if (!os) throw RunError("write failed for " + path.string());
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RunError("cannot open WAV file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw InputError(path.string() + " is not a RIFF/WAVE file");
  }
  std::uint32_t channels = 0, rate = 0, bits = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = get(&bytes[pos + 4], 4);
    const unsigned char* body = &bytes[pos + 8];
    if (pos + 8 + size > bytes.size()) throw InputError("truncated chunk in " + path.string());
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
      if (get(body, 2) != 1) throw InputError("only PCM WAV is supported: " + path.string());
      channels = get(body + 2, 2);
      rate = get(body + 4, 4);
      bits = get(body + 14, 2);
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      if (bits != 16 || channels == 0) throw InputError("expected 16-bit PCM in " + path.string());
      Waveform w;
      w.sample_rate = rate;
      const std::size_t frames = size / (2 * channels);
      w.channels.assign(channels, std::vector<double>(frames));
      for (std::size_t i = 0; i < frames; ++i) {
        for (std::uint32_t c = 0; c < channels; ++c) {
          const auto q = static_cast<std::int16_t>(get(body + 2 * (i * channels + c), 2));
          w.channels[c][i] = q / 32767.0;
        }
      }
      return w;
    }
    pos += 8 + size + (size & 1);
  }
  throw InputError("no data chunk in " + path.string());
}

BAST_NAMESPACE_END
