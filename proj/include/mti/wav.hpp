#pragma once

#include "mti/features.hpp"

#include <filesystem>

namespace mti {

enum class WavEncoding { pcm16, float32 };

/// Reads a mono RIFF/WAVE file (16-bit integer PCM or 32-bit IEEE float).
/// Integer samples are scaled to [-1, 1).
Waveform read_wav(const std::filesystem::path& path);

/// Writes a mono WAV file. pcm16 output is rounded to the nearest step and clipped.
void write_wav(const std::filesystem::path& path, const Waveform& wave,
               WavEncoding encoding = WavEncoding::pcm16);

}  // namespace mti
