#include "vcd/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "vcd/error.hpp"

namespace vcd {
namespace {

constexpr const char* kModule = "dsp";

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

}  // namespace

void validate(const Waveform& wave) {
  if (wave.samples.empty()) throw Error(kModule, "empty_waveform", "waveform has no samples");
  if (wave.sample_rate != kSampleRate) {
    throw Error(kModule, "unsupported_sample_rate",
                "expected 16000 Hz, got " + std::to_string(wave.sample_rate));
  }
  for (double s : wave.samples) {
    if (!std::isfinite(s)) throw Error(kModule, "non_finite", "waveform has non-finite samples");
    if (std::abs(s) > 1.0 + 1e-6) {
      throw Error(kModule, "out_of_range", "sample magnitude exceeds 1");
    }
  }
}

Waveform parse_wav(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(kModule, "not_riff_wave", "missing RIFF/WAVE header");
  }
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size()) throw Error(kModule, "truncated", "short fmt chunk");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw Error(kModule, "missing_fmt", "data chunk before fmt chunk");
      if (format != 1) {
        throw Error(kModule, "unsupported_format", "only PCM (format 1) is supported, got " +
                                                        std::to_string(format));
      }
      if (channels != 1) {
        throw Error(kModule, "unsupported_channels",
                    "expected mono, got " + std::to_string(channels) + " channels");
      }
      if (bits != 16) {
        throw Error(kModule, "unsupported_bit_depth",
                    "expected 16-bit samples, got " + std::to_string(bits));
      }
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        throw Error(kModule, "unsupported_sample_rate",
                    "expected 16000 Hz, got " + std::to_string(rate));
      }
      if (size % 2 != 0 || body + size > bytes.size()) {
        throw Error(kModule, "truncated", "data chunk shorter than declared");
      }
      Waveform wave;
      wave.samples.resize(size / 2);
      for (std::size_t i = 0; i < wave.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(bytes.data() + body + 2 * i));
        wave.samples[i] = raw / 32768.0;
      }
      return wave;
    }
    pos = body + size + (size & 1u);
  }
  throw Error(kModule, have_fmt ? "truncated" : "missing_fmt", "no data chunk found");
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(kModule, "missing_file", "cannot open " + path.string(), path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes);
  } catch (const Error& e) {
    throw Error(e.module(), e.code(), path.string() + ": " + e.message(), path.string());
  }
}

std::vector<unsigned char> encode_wav(const Waveform& wave) {
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (double s : wave.samples) {
    const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

void write_wav(const Waveform& wave, const std::filesystem::path& path) {
  const auto bytes = encode_wav(wave);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(kModule, "write_failed", "cannot write " + path.string(), path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

double mean_power(std::span<const double> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return acc / static_cast<double>(samples.size());
}

double peak_magnitude(std::span<const double> samples) {
  double peak = 0.0;
  for (double s : samples) peak = std::max(peak, std::abs(s));
  return peak;
}

}  // namespace vcd
