#pragma once

#include <filesystem>

#include "phr/dsp/audio.hpp"

namespace phr::dsp {

// Reads PCM 16/24-bit or IEEE float32 RIFF/WAVE. Multi-channel input is
// downmixed by averaging channels. Anything other than 44.1 kHz is rejected
// with FormatError; there is no resampler.
AudioBuffer read_wav(const std::filesystem::path& path);

enum class WavEncoding { Float32, Pcm16 };

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio,
               WavEncoding encoding = WavEncoding::Float32);

}  // namespace phr::dsp
