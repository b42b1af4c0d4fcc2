#pragma once

#include <filesystem>

#include "mpa/dsp/audio.hpp"

namespace mpa::dsp {

// 16-bit PCM mono RIFF/WAVE only. Throws IoError if the file cannot be
// opened and FormatError for anything else.
Waveform read_wav(const std::filesystem::path& path);

// Samples are clipped to [-1, 1] and quantized to PCM16. Written atomically.
void write_wav(const std::filesystem::path& path, const Waveform& w);

// The waveform read_wav returns after write_wav, without touching disk.
Waveform pcm16_round_trip(const Waveform& w);

}  // namespace mpa::dsp
