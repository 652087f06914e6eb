#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "vcd/wav.hpp"

namespace vcd {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Frame-level features: one row per frame, one column per dimension.
struct FeatureSequence {
  Matrix frames;
  std::uint16_t frame_rate = 100;
  std::string config_id;

  Eigen::Index num_frames() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
};

/// Throws unless the sequence has >= 1 frame, >= 1 dimension and only finite
/// values.
void validate(const FeatureSequence& feat);

/// Features keyed by record id.
using FeatureTable = std::unordered_map<std::string, FeatureSequence>;

struct FeatureConfig {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int n_fft = 512;
  int n_mels = 80;
  double floor = 1e-10;

  int window_samples() const;
  int hop_samples() const;
  std::uint16_t frame_rate() const;
  /// e.g. "logmel:w25:h10:n512:m80"
  std::string id() const;
};

void validate(const FeatureConfig& cfg);

/// 1 + floor((length - window) / hop), or 0 when length < window.
std::size_t frame_count(std::size_t length, const FeatureConfig& cfg);

/// Triangular filters on the HTK mel scale spanning 0 Hz .. Nyquist.
/// Shape (n_mels x (n_fft/2 + 1)).
Matrix mel_filterbank(const FeatureConfig& cfg, int sample_rate = kSampleRate);
/// Center frequency (Hz) of each mel band.
std::vector<double> mel_center_frequencies(const FeatureConfig& cfg, int sample_rate = kSampleRate);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Log mel energies over full Hann windows only (no padding):
/// frame t = log(max(mel_energy_t, floor)).
FeatureSequence logmel(const Waveform& wave, const FeatureConfig& cfg = {});

// --- "FT01" feature files ----------------------------------------------------
// magic "FT01" | u32 T | u32 F | u16 frame_rate | u16 id_len | id bytes |
// T*F float32, row-major; all little-endian.

std::vector<unsigned char> encode_features(const FeatureSequence& feat);
FeatureSequence decode_features(std::span<const unsigned char> bytes);
void save_features(const FeatureSequence& feat, const std::filesystem::path& path);
FeatureSequence load_features(const std::filesystem::path& path);

}  // namespace vcd
