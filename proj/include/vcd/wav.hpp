#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace vcd {

inline constexpr int kSampleRate = 16000;

/// Mono waveform at 16 kHz, samples nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Throws if the waveform is empty, has non-finite samples, exceeds
/// |x| <= 1 + 1e-6, or is not at 16 kHz.
void validate(const Waveform& wave);

/// Reads a RIFF/WAVE file holding 16-bit PCM mono audio at 16 kHz. Any other
/// rate, channel count or bit depth is rejected with its own error code; no
/// resampling or downmixing is attempted.
Waveform read_wav(const std::filesystem::path& path);
Waveform parse_wav(std::span<const unsigned char> bytes);

/// Writes 16-bit PCM mono. Samples are clipped to [-1, 1] and rounded.
void write_wav(const Waveform& wave, const std::filesystem::path& path);
std::vector<unsigned char> encode_wav(const Waveform& wave);

double mean_power(std::span<const double> samples);
double peak_magnitude(std::span<const double> samples);

}  // namespace vcd
