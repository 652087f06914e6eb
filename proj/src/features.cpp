#include "vcd/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/FFT>

#include "vcd/error.hpp"

namespace vcd {
namespace {

constexpr const char* kModule = "dsp";
constexpr char kMagic[4] = {'F', 'T', '0', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 2 + 2;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::string format_ms(double ms) {
  std::ostringstream s;
  s << ms;
  return s.str();
}

}  // namespace

void validate(const FeatureSequence& feat) {
  if (feat.frames.rows() < 1 || feat.frames.cols() < 1) {
    throw Error(kModule, "empty_features", "feature sequence needs at least one frame and dim");
  }
  if (!feat.frames.allFinite()) {
    throw Error(kModule, "non_finite", "feature sequence contains non-finite values");
  }
}

// --- configuration -----------------------------------------------------------

int FeatureConfig::window_samples() const {
  return static_cast<int>(std::lround(window_ms * kSampleRate / 1000.0));
}

int FeatureConfig::hop_samples() const {
  return static_cast<int>(std::lround(hop_ms * kSampleRate / 1000.0));
}

std::uint16_t FeatureConfig::frame_rate() const {
  return static_cast<std::uint16_t>(std::lround(1000.0 / hop_ms));
}

std::string FeatureConfig::id() const {
  return "logmel:w" + format_ms(window_ms) + ":h" + format_ms(hop_ms) + ":n" +
         std::to_string(n_fft) + ":m" + std::to_string(n_mels);
}

void validate(const FeatureConfig& cfg) {
  if (!(cfg.hop_ms > 0.0) || cfg.hop_samples() < 1) {
    throw Error(kModule, "invalid_config", "hop must be positive");
  }
  if (cfg.window_samples() < cfg.hop_samples()) {
    throw Error(kModule, "invalid_config", "window must be at least one hop");
  }
  if (cfg.n_fft < cfg.window_samples()) {
    throw Error(kModule, "invalid_config", "n_fft must cover the window");
  }
  if (cfg.n_mels < 1 || cfg.n_mels > cfg.n_fft / 2 + 1) {
    throw Error(kModule, "invalid_config", "n_mels must be in [1, n_fft/2 + 1]");
  }
  if (!(cfg.floor > 0.0)) throw Error(kModule, "invalid_config", "log floor must be positive");
}

std::size_t frame_count(std::size_t length, const FeatureConfig& cfg) {
  const auto window = static_cast<std::size_t>(cfg.window_samples());
  const auto hop = static_cast<std::size_t>(cfg.hop_samples());
  if (length < window) return 0;
  return 1 + (length - window) / hop;
}

// --- mel filterbank ----------------------------------------------------------

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::vector<double> mel_edges_hz(const FeatureConfig& cfg, int sample_rate) {
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  }
  return edges;
}

}  // namespace

std::vector<double> mel_center_frequencies(const FeatureConfig& cfg, int sample_rate) {
  auto edges = mel_edges_hz(cfg, sample_rate);
  return {edges.begin() + 1, edges.end() - 1};
}

Matrix mel_filterbank(const FeatureConfig& cfg, int sample_rate) {
  const int bins = cfg.n_fft / 2 + 1;
  const auto edges = mel_edges_hz(cfg, sample_rate);
  Matrix bank = Matrix::Zero(cfg.n_mels, bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / cfg.n_fft;
      const double up = (f - lo) / (mid - lo);
      const double down = (hi - f) / (hi - mid);
      bank(m, k) = std::max(0.0, std::min(up, down));
    }
  }
  return bank;
}

// --- log-mel -------------------------------------------------------------------

FeatureSequence logmel(const Waveform& wave, const FeatureConfig& cfg) {
  validate(cfg);
  validate(wave);
  const int window = cfg.window_samples();
  const int hop = cfg.hop_samples();
  const std::size_t frames = frame_count(wave.samples.size(), cfg);
  if (frames == 0) {
    throw Error(kModule, "too_short",
                "waveform of " + std::to_string(wave.samples.size()) +
                    " samples is shorter than one window (" + std::to_string(window) + ")");
  }

  std::vector<double> hann(static_cast<std::size_t>(window));
  for (int n = 0; n < window; ++n) {
    hann[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / window);
  }
  const Matrix bank = mel_filterbank(cfg);
  const int bins = cfg.n_fft / 2 + 1;

  Eigen::FFT<double> fft;
  std::vector<double> buffer(static_cast<std::size_t>(cfg.n_fft), 0.0);
  std::vector<std::complex<double>> spectrum;
  Vector power(bins);

  FeatureSequence out;
  out.frames.resize(static_cast<Eigen::Index>(frames), cfg.n_mels);
  out.frame_rate = cfg.frame_rate();
  out.config_id = cfg.id();

  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * static_cast<std::size_t>(hop);
    for (int n = 0; n < window; ++n) buffer[n] = wave.samples[start + n] * hann[n];
    fft.fwd(spectrum, buffer);
    for (int k = 0; k < bins; ++k) power[k] = std::norm(spectrum[k]);
    const Vector energy = bank * power;
    for (int m = 0; m < cfg.n_mels; ++m) {
      out.frames(static_cast<Eigen::Index>(t), m) = std::log(std::max(energy[m], cfg.floor));
    }
  }
  return out;
}

// --- FT01 ------------------------------------------------------------------------

std::vector<unsigned char> encode_features(const FeatureSequence& feat) {
  validate(feat);
  constexpr auto u32_max = std::numeric_limits<std::uint32_t>::max();
  if (static_cast<std::uint64_t>(feat.frames.rows()) > u32_max ||
      static_cast<std::uint64_t>(feat.frames.cols()) > u32_max) {
    throw Error(kModule, "dimension_overflow", "feature matrix exceeds 32-bit dimensions");
  }
  if (feat.config_id.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw Error(kModule, "dimension_overflow", "config id longer than 65535 bytes");
  }
  std::vector<unsigned char> out;
  out.reserve(kHeaderBytes + feat.config_id.size() +
              static_cast<std::size_t>(feat.frames.size()) * 4);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(feat.frames.rows()));
  put_u32(out, static_cast<std::uint32_t>(feat.frames.cols()));
  put_u16(out, feat.frame_rate);
  put_u16(out, static_cast<std::uint16_t>(feat.config_id.size()));
  out.insert(out.end(), feat.config_id.begin(), feat.config_id.end());
  for (Eigen::Index t = 0; t < feat.frames.rows(); ++t) {
    for (Eigen::Index f = 0; f < feat.frames.cols(); ++f) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(feat.frames(t, f))));
    }
  }
  return out;
}

FeatureSequence decode_features(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(kModule, "bad_magic", "feature file does not start with FT01");
  }
  if (bytes.size() < kHeaderBytes) throw Error(kModule, "truncated", "feature header truncated");
  const std::uint64_t rows = get_u32(bytes.data() + 4);
  const std::uint64_t cols = get_u32(bytes.data() + 8);
  const std::uint16_t rate = get_u16(bytes.data() + 12);
  const std::size_t id_len = get_u16(bytes.data() + 14);
  if (rows == 0 || cols == 0) throw Error(kModule, "empty_features", "feature file declares 0 frames or dims");

  // rows, cols < 2^32, so the element count fits in 64 bits; the byte count
  // must also fit in size_t and stay addressable.
  const std::uint64_t count = rows * cols;
  if (count > (std::numeric_limits<std::size_t>::max() - kHeaderBytes - id_len) / 4 ||
      count > static_cast<std::uint64_t>(std::numeric_limits<Eigen::Index>::max())) {
    throw Error(kModule, "dimension_overflow", "declared dimensions overflow");
  }
  const std::size_t expected = kHeaderBytes + id_len + static_cast<std::size_t>(count) * 4;
  if (bytes.size() < expected) {
    throw Error(kModule, "truncated",
                "payload has " + std::to_string(bytes.size()) + " bytes, header implies " +
                    std::to_string(expected));
  }
  if (bytes.size() > expected) throw Error(kModule, "trailing_bytes", "unexpected bytes after payload");

  FeatureSequence feat;
  feat.frame_rate = rate;
  feat.config_id.assign(reinterpret_cast<const char*>(bytes.data() + kHeaderBytes), id_len);
  feat.frames.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const unsigned char* p = bytes.data() + kHeaderBytes + id_len;
  for (Eigen::Index t = 0; t < feat.frames.rows(); ++t) {
    for (Eigen::Index f = 0; f < feat.frames.cols(); ++f, p += 4) {
      feat.frames(t, f) = std::bit_cast<float>(get_u32(p));
    }
  }
  if (!feat.frames.allFinite()) throw Error(kModule, "non_finite", "feature file has non-finite values");
  return feat;
}

void save_features(const FeatureSequence& feat, const std::filesystem::path& path) {
  const auto bytes = encode_features(feat);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(kModule, "write_failed", "cannot write " + path.string(), path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(kModule, "write_failed", "short write to " + path.string(), path.string());
}

FeatureSequence load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(kModule, "missing_file", "cannot open " + path.string(), path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return decode_features(bytes);
  } catch (const Error& e) {
    throw Error(e.module(), e.code(), path.string() + ": " + e.message(), path.string());
  }
}

}  // namespace vcd
