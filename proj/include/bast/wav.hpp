#pragma once

#include <filesystem>

#include "bast/frontend.hpp"

BAST_NAMESPACE_BEGIN

// 16-bit little-endian PCM WAV. Samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const Waveform& wave);
Waveform read_wav(const std::filesystem::path& path);

BAST_NAMESPACE_END
