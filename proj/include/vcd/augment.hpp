#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vcd/features.hpp"
#include "vcd/wav.hpp"

namespace vcd {

enum class MaskFill { zero, per_band_mean };

struct SpecAugmentParams {
  int time_mask_max = 40;
  int time_mask_count = 2;
  int freq_mask_max = 12;
  int freq_mask_count = 2;
  double stretch_low = 0.9;
  double stretch_high = 1.1;
  MaskFill fill = MaskFill::per_band_mean;
};

void validate(const SpecAugmentParams& params);

/// Time stretch (linear interpolation along time), then time masks, then
/// frequency masks. Mask widths are drawn uniformly from [0, max].
FeatureSequence spec_augment(const FeatureSequence& feat, const SpecAugmentParams& params,
                             std::uint64_t seed);

/// Linear-interpolation resampling of the time axis to `frames` rows,
/// endpoints preserved. Returns a copy when `frames` equals the input length.
Matrix stretch_time(const Matrix& frames, Eigen::Index target_frames);

/// Shifts pitch by `semitones` (|s| <= 12) while keeping the duration:
/// band-limited resampling by 2^(s/12) followed by a WSOLA time stretch back
/// to the input length. semitones == 0 returns the input unchanged.
Waveform pitch_shift(const Waveform& wave, double semitones);

struct NoiseSpec {
  Waveform noise;
  /// Drawn uniformly from [0, 20] dB when unset.
  std::optional<double> snr_db;
};

/// Gain applied to noise of power `noise_power` so that the mix has
/// `snr_db` relative to `signal_power`.
double noise_gain(double signal_power, double noise_power, double snr_db);

struct NoiseMix {
  Waveform wave;
  double snr_db = 0.0;
  double gain = 0.0;
  /// Factor applied to the whole mix to keep |x| <= 1 (1 when not needed).
  double normalization = 1.0;
  std::size_t noise_offset = 0;
};

/// add_noise with the intermediate quantities exposed.
NoiseMix mix_noise(const Waveform& wave, const NoiseSpec& spec, std::uint64_t seed);
Waveform add_noise(const Waveform& wave, const NoiseSpec& spec, std::uint64_t seed);

/// Full linear convolution truncated to the input length, rescaled so the
/// output peak equals the input peak.
Waveform rir_convolve(const Waveform& wave, const Waveform& rir);

// --- recipes -------------------------------------------------------------------

enum class AugmentKind { spec_augment, pitch_shift, rir, noise };

std::string to_string(AugmentKind kind);
AugmentKind parse_augment_kind(std::string_view text);

/// One recipe entry. Each entry yields at most one augmented copy per record,
/// produced with probability `probability`.
struct RecipeStep {
  AugmentKind kind = AugmentKind::spec_augment;
  double probability = 1.0;
  SpecAugmentParams spec;
  double semitones_low = -4.0;
  double semitones_high = 4.0;
  std::filesystem::path rir_path;
  std::filesystem::path noise_path;
  std::optional<double> snr_db;
};

/// JSON array of {"kind": ..., "probability": ..., "params": {...}}.
std::vector<RecipeStep> load_recipe(const std::filesystem::path& path);
std::vector<RecipeStep> parse_recipe(std::string_view json_text);

}  // namespace vcd
