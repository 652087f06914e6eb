#include "vcd/augment.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <unsupported/Eigen/FFT>

#include "json.hpp"
#include "vcd/error.hpp"

namespace vcd {
namespace {

constexpr const char* kModule = "augment";

// Windowed-sinc interpolation half-width, in zero crossings of the prototype.
constexpr int kSincZeroCrossings = 16;
// WSOLA frame length, synthesis hop and alignment search radius (samples).
constexpr int kOlaWindow = 1024;
constexpr int kOlaHop = kOlaWindow / 2;
constexpr int kOlaSearch = 256;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

/// y[m] = x(m * step) using a Hann-windowed sinc low-passed at `cutoff`
/// (fraction of Nyquist).
std::vector<double> resample(std::span<const double> x, double step, std::size_t out_len,
                             double cutoff) {
  const double half_width = kSincZeroCrossings / cutoff;
  std::vector<double> y(out_len, 0.0);
  const auto n_in = static_cast<std::ptrdiff_t>(x.size());
  for (std::size_t m = 0; m < out_len; ++m) {
    const double t = static_cast<double>(m) * step;
    const auto lo = static_cast<std::ptrdiff_t>(std::ceil(t - half_width));
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(t + half_width));
    double acc = 0.0;
    for (std::ptrdiff_t n = std::max<std::ptrdiff_t>(lo, 0); n <= std::min(hi, n_in - 1); ++n) {
      const double d = t - static_cast<double>(n);
      const double w = 0.5 + 0.5 * std::cos(std::numbers::pi * d / half_width);
      acc += x[static_cast<std::size_t>(n)] * cutoff * sinc(cutoff * d) * w;
    }
    y[m] = acc;
  }
  return y;
}

/// WSOLA: stretches `y` to `out_len` samples. Each synthesis frame is taken
/// near its nominal analysis position, shifted to best correlate with the
/// natural continuation of the previous frame.
std::vector<double> wsola(std::span<const double> y, std::size_t out_len) {
  const std::ptrdiff_t pad = kOlaWindow + 2 * kOlaSearch + kOlaHop;
  std::vector<double> padded(y.size() + 2 * static_cast<std::size_t>(pad), 0.0);
  std::copy(y.begin(), y.end(), padded.begin() + pad);
  auto at = [&](std::ptrdiff_t i) { return padded[static_cast<std::size_t>(i + pad)]; };

  std::vector<double> window(kOlaWindow);
  for (int n = 0; n < kOlaWindow; ++n) {
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kOlaWindow);
  }
  const double rate = static_cast<double>(y.size()) / static_cast<double>(out_len);
  const std::size_t frames = out_len / kOlaHop + 2;
  std::vector<double> out(frames * kOlaHop + kOlaWindow, 0.0);
  std::vector<double> weight(out.size(), 0.0);

  std::ptrdiff_t prev = 0;
  for (std::size_t m = 0; m < frames; ++m) {
    const auto nominal = static_cast<std::ptrdiff_t>(std::llround(static_cast<double>(m * kOlaHop) * rate));
    std::ptrdiff_t chosen = nominal;
    if (m > 0) {
      const std::ptrdiff_t continuation = prev + kOlaHop;
      double best = -std::numeric_limits<double>::infinity();
      for (std::ptrdiff_t d = -kOlaSearch; d <= kOlaSearch; ++d) {
        double corr = 0.0;
        for (int n = 0; n < kOlaWindow; ++n) corr += at(nominal + d + n) * at(continuation + n);
        if (corr > best) {
          best = corr;
          chosen = nominal + d;
        }
      }
    }
    const std::size_t base = m * kOlaHop;
    for (int n = 0; n < kOlaWindow; ++n) {
      out[base + n] += window[n] * at(chosen + n);
      weight[base + n] += window[n];
    }
    prev = chosen;
  }
  out.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    if (weight[i] > 1e-8) out[i] /= weight[i];
  }
  return out;
}

std::vector<double> convolve_direct(std::span<const double> x, std::span<const double> h) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const std::size_t taps = std::min(h.size(), n + 1);
    double acc = 0.0;
    for (std::size_t j = 0; j < taps; ++j) acc += h[j] * x[n - j];
    y[n] = acc;
  }
  return y;
}

std::vector<double> convolve_fft(std::span<const double> x, std::span<const double> h) {
  std::size_t n_fft = 1;
  while (n_fft < x.size() + h.size() - 1) n_fft <<= 1;
  std::vector<double> xa(n_fft, 0.0), ha(n_fft, 0.0);
  std::copy(x.begin(), x.end(), xa.begin());
  std::copy(h.begin(), h.end(), ha.begin());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> xf, hf;
  fft.fwd(xf, xa);
  fft.fwd(hf, ha);
  for (std::size_t i = 0; i < xf.size(); ++i) xf[i] *= hf[i];
  std::vector<double> y;
  fft.inv(y, xf);
  y.resize(x.size());
  return y;
}

}  // namespace

// --- SpecAugment -------------------------------------------------------------------

void validate(const SpecAugmentParams& p) {
  if (p.time_mask_max < 0 || p.freq_mask_max < 0 || p.time_mask_count < 0 || p.freq_mask_count < 0) {
    throw Error(kModule, "invalid_params", "mask widths and counts must be >= 0");
  }
  if (!(p.stretch_low > 0.0) || !(p.stretch_low <= p.stretch_high)) {
    throw Error(kModule, "invalid_params", "stretch range must satisfy 0 < low <= high");
  }
}

Matrix stretch_time(const Matrix& frames, Eigen::Index target_frames) {
  const Eigen::Index n = frames.rows();
  if (target_frames == n) return frames;
  Matrix out(target_frames, frames.cols());
  for (Eigen::Index j = 0; j < target_frames; ++j) {
    const double pos = target_frames == 1 ? 0.0
                                          : static_cast<double>(j) * static_cast<double>(n - 1) /
                                                static_cast<double>(target_frames - 1);
    const auto lo = std::min(static_cast<Eigen::Index>(std::floor(pos)), n - 1);
    const auto hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    out.row(j) = (1.0 - frac) * frames.row(lo) + frac * frames.row(hi);
  }
  return out;
}

FeatureSequence spec_augment(const FeatureSequence& feat, const SpecAugmentParams& params,
                             std::uint64_t seed) {
  validate(params);
  validate(feat);
  std::mt19937_64 rng(seed);

  double factor = params.stretch_low;
  if (params.stretch_high > params.stretch_low) {
    factor = std::uniform_real_distribution<double>(params.stretch_low, params.stretch_high)(rng);
  }
  const auto frames = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::llround(static_cast<double>(feat.num_frames()) * factor)));

  FeatureSequence out;
  out.frames = stretch_time(feat.frames, frames);
  out.frame_rate = feat.frame_rate;
  out.config_id = feat.config_id;

  const Eigen::Index dims = out.dim();
  if (params.time_mask_count > 0 && params.time_mask_max >= frames) {
    throw Error(kModule, "mask_too_wide",
                "time mask up to " + std::to_string(params.time_mask_max) +
                    " frames is not narrower than the " + std::to_string(frames) +
                    "-frame stretched sequence");
  }
  if (params.freq_mask_count > 0 && params.freq_mask_max >= dims) {
    throw Error(kModule, "mask_too_wide",
                "frequency mask up to " + std::to_string(params.freq_mask_max) +
                    " bands is not narrower than " + std::to_string(dims) + " bands");
  }

  Eigen::RowVectorXd fill = Eigen::RowVectorXd::Zero(dims);
  if (params.fill == MaskFill::per_band_mean) fill = out.frames.colwise().mean();

  for (int i = 0; i < params.time_mask_count; ++i) {
    const int width = std::uniform_int_distribution<int>(0, params.time_mask_max)(rng);
    const auto start = std::uniform_int_distribution<Eigen::Index>(0, frames - width)(rng);
    for (Eigen::Index t = start; t < start + width; ++t) out.frames.row(t) = fill;
  }
  for (int i = 0; i < params.freq_mask_count; ++i) {
    const int width = std::uniform_int_distribution<int>(0, params.freq_mask_max)(rng);
    const auto start = std::uniform_int_distribution<Eigen::Index>(0, dims - width)(rng);
    for (Eigen::Index f = start; f < start + width; ++f) out.frames.col(f).setConstant(fill[f]);
  }
  return out;
}

// --- pitch shift -------------------------------------------------------------------

Waveform pitch_shift(const Waveform& wave, double semitones) {
  if (!std::isfinite(semitones) || std::abs(semitones) > 12.0) {
    throw Error(kModule, "semitones_out_of_range", "pitch shift must be within +/-12 semitones");
  }
  validate(wave);
  if (semitones == 0.0) return wave;

  const double ratio = std::pow(2.0, semitones / 12.0);
  const std::size_t n = wave.samples.size();
  const auto shifted_len =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) / ratio)));
  const auto raised = resample(wave.samples, ratio, shifted_len, std::min(1.0, 1.0 / ratio));

  Waveform out;
  out.sample_rate = wave.sample_rate;
  out.samples = wsola(raised, n);
  const double peak = peak_magnitude(out.samples);
  if (peak > 1.0) {
    for (double& s : out.samples) s /= peak;
  }
  return out;
}

// --- additive noise ----------------------------------------------------------------

double noise_gain(double signal_power, double noise_power, double snr_db) {
  if (!(signal_power > 0.0)) throw Error(kModule, "silent_signal", "signal power is zero");
  if (!(noise_power > 0.0)) throw Error(kModule, "silent_noise", "noise power is zero");
  return std::sqrt(signal_power / (noise_power * std::pow(10.0, snr_db / 10.0)));
}

NoiseMix mix_noise(const Waveform& wave, const NoiseSpec& spec, std::uint64_t seed) {
  validate(wave);
  if (spec.noise.samples.empty()) throw Error(kModule, "silent_noise", "noise waveform is empty");
  validate(spec.noise);
  const double signal_power = mean_power(wave.samples);
  if (!(signal_power > 0.0)) throw Error(kModule, "silent_signal", "signal power is zero");
  if (!(mean_power(spec.noise.samples) > 0.0)) {
    throw Error(kModule, "silent_noise", "noise power is zero");
  }

  std::mt19937_64 rng(seed);
  NoiseMix mix;
  mix.snr_db = spec.snr_db ? *spec.snr_db : std::uniform_real_distribution<double>(0.0, 20.0)(rng);
  const std::size_t noise_len = spec.noise.samples.size();
  mix.noise_offset = std::uniform_int_distribution<std::size_t>(0, noise_len - 1)(rng);

  const std::size_t n = wave.samples.size();
  std::vector<double> segment(n);
  for (std::size_t i = 0; i < n; ++i) segment[i] = spec.noise.samples[(mix.noise_offset + i) % noise_len];
  const double noise_power = mean_power(segment);
  if (!(noise_power > 0.0)) {
    throw Error(kModule, "silent_noise", "selected noise segment is silent");
  }
  mix.gain = noise_gain(signal_power, noise_power, mix.snr_db);

  mix.wave.sample_rate = wave.sample_rate;
  mix.wave.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) mix.wave.samples[i] = wave.samples[i] + mix.gain * segment[i];
  const double peak = peak_magnitude(mix.wave.samples);
  if (peak > 1.0) {
    mix.normalization = 1.0 / peak;
    for (double& s : mix.wave.samples) s *= mix.normalization;
  }
  return mix;
}

Waveform add_noise(const Waveform& wave, const NoiseSpec& spec, std::uint64_t seed) {
  return mix_noise(wave, spec, seed).wave;
}

// --- room impulse response ---------------------------------------------------------

Waveform rir_convolve(const Waveform& wave, const Waveform& rir) {
  if (rir.samples.empty()) throw Error(kModule, "empty_rir", "impulse response is empty");
  validate(wave);
  validate(rir);
  if (rir.samples.size() >= wave.samples.size()) {
    throw Error(kModule, "rir_too_long", "impulse response must be shorter than the signal");
  }
  // Direct form below ~4M multiply-adds; FFT beyond.
  constexpr std::size_t kDirectLimit = std::size_t{1} << 22;
  Waveform out;
  out.sample_rate = wave.sample_rate;
  out.samples = wave.samples.size() * rir.samples.size() <= kDirectLimit
                    ? convolve_direct(wave.samples, rir.samples)
                    : convolve_fft(wave.samples, rir.samples);

  const double peak_in = peak_magnitude(wave.samples);
  const double peak_out = peak_magnitude(out.samples);
  if (peak_in == 0.0) return out;
  if (peak_out == 0.0) throw Error(kModule, "silent_rir", "convolution output is silent");
  const double scale = peak_in / peak_out;
  for (double& s : out.samples) s *= scale;
  return out;
}

// --- recipes -----------------------------------------------------------------------

std::string to_string(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::spec_augment: return "spec_augment";
    case AugmentKind::pitch_shift: return "pitch_shift";
    case AugmentKind::rir: return "rir";
    case AugmentKind::noise: return "noise";
  }
  return "spec_augment";
}

AugmentKind parse_augment_kind(std::string_view text) {
  for (auto k : {AugmentKind::spec_augment, AugmentKind::pitch_shift, AugmentKind::rir, AugmentKind::noise}) {
    if (to_string(k) == text) return k;
  }
  throw Error(kModule, "unknown_kind", "unknown augmentation kind '" + std::string(text) + "'",
              std::string(text));
}

std::vector<RecipeStep> parse_recipe(std::string_view json_text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(kModule, "malformed_recipe", e.what());
  }
  if (!doc.is_array()) throw Error(kModule, "malformed_recipe", "recipe must be a JSON array");

  static const std::map<AugmentKind, std::set<std::string>> allowed = {
      {AugmentKind::spec_augment,
       {"time_mask_max", "time_mask_count", "freq_mask_max", "freq_mask_count", "stretch_low",
        "stretch_high", "fill"}},
      {AugmentKind::pitch_shift, {"semitones", "semitones_low", "semitones_high"}},
      {AugmentKind::rir, {"path"}},
      {AugmentKind::noise, {"path", "snr_db"}},
  };

  std::vector<RecipeStep> steps;
  std::set<AugmentKind> seen;
  for (const auto& entry : doc) {
    try {
      for (const auto& [key, value] : entry.items()) {
        if (key != "kind" && key != "probability" && key != "params") {
          throw Error(kModule, "malformed_recipe", "unknown recipe key '" + key + "'");
        }
      }
      RecipeStep step;
      step.kind = parse_augment_kind(entry.at("kind").get<std::string>());
      if (!seen.insert(step.kind).second) {
        throw Error(kModule, "duplicate_kind",
                    to_string(step.kind) + " appears twice; augmented ids would collide");
      }
      step.probability = entry.value("probability", 1.0);
      if (!(step.probability >= 0.0 && step.probability <= 1.0)) {
        throw Error(kModule, "malformed_recipe", "probability must be in [0, 1]");
      }
      const json params = entry.value("params", json::object());
      for (const auto& [key, value] : params.items()) {
        if (!allowed.at(step.kind).count(key)) {
          throw Error(kModule, "malformed_recipe",
                      "unknown parameter '" + key + "' for " + to_string(step.kind));
        }
      }
      auto& sp = step.spec;
      sp.time_mask_max = params.value("time_mask_max", sp.time_mask_max);
      sp.time_mask_count = params.value("time_mask_count", sp.time_mask_count);
      sp.freq_mask_max = params.value("freq_mask_max", sp.freq_mask_max);
      sp.freq_mask_count = params.value("freq_mask_count", sp.freq_mask_count);
      sp.stretch_low = params.value("stretch_low", sp.stretch_low);
      sp.stretch_high = params.value("stretch_high", sp.stretch_high);
      if (params.contains("fill")) {
        const auto fill = params.at("fill").get<std::string>();
        if (fill == "zero") {
          sp.fill = MaskFill::zero;
        } else if (fill == "per_band_mean") {
          sp.fill = MaskFill::per_band_mean;
        } else {
          throw Error(kModule, "malformed_recipe", "unknown fill '" + fill + "'");
        }
      }
      if (params.contains("semitones")) {
        step.semitones_low = step.semitones_high = params.at("semitones").get<double>();
      }
      step.semitones_low = params.value("semitones_low", step.semitones_low);
      step.semitones_high = params.value("semitones_high", step.semitones_high);
      if (params.contains("path")) {
        const auto path = params.at("path").get<std::string>();
        (step.kind == AugmentKind::rir ? step.rir_path : step.noise_path) = path;
      }
      if (params.contains("snr_db")) step.snr_db = params.at("snr_db").get<double>();

      if ((step.kind == AugmentKind::rir && step.rir_path.empty()) ||
          (step.kind == AugmentKind::noise && step.noise_path.empty())) {
        throw Error(kModule, "malformed_recipe", to_string(step.kind) + " needs a 'path' parameter");
      }
      if (step.kind == AugmentKind::spec_augment) validate(step.spec);
      if (step.semitones_low > step.semitones_high) {
        throw Error(kModule, "malformed_recipe", "semitones_low exceeds semitones_high");
      }
      steps.push_back(std::move(step));
    } catch (const json::exception& e) {
      throw Error(kModule, "malformed_recipe", e.what());
    }
  }
  return steps;
}

std::vector<RecipeStep> load_recipe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(kModule, "missing_file", "cannot open recipe " + path.string(), path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  auto steps = parse_recipe(buf.str());
  // Relative audio paths resolve against the recipe's directory.
  for (auto& s : steps) {
    if (!s.rir_path.empty() && s.rir_path.is_relative()) s.rir_path = path.parent_path() / s.rir_path;
    if (!s.noise_path.empty() && s.noise_path.is_relative()) s.noise_path = path.parent_path() / s.noise_path;
  }
  return steps;
}

}  // namespace vcd
