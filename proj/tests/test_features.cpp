#include <cstring>

#include "doctest.h"
#include "helpers.hpp"
#include "vcd/error.hpp"
#include "vcd/features.hpp"
#include "vcd/wav.hpp"

using namespace vcd;
using testing::error_code;

namespace {

void put(std::vector<unsigned char>& b, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

/// Hand-built canonical 44-byte-header WAV.
std::vector<unsigned char> wav_bytes(const std::vector<std::int16_t>& samples, std::uint32_t rate = 16000,
                                     std::uint16_t channels = 1, std::uint16_t bits = 16) {
  std::vector<unsigned char> b;
  const std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put(b, 36 + data_size, 4);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put(b, 16, 4);
  put(b, 1, 2);
  put(b, channels, 2);
  put(b, rate, 4);
  put(b, rate * channels * bits / 8, 4);
  put(b, channels * bits / 8, 2);
  put(b, bits, 2);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put(b, data_size, 4);
  for (auto s : samples) put(b, static_cast<std::uint16_t>(s), 2);
  return b;
}

}  // namespace

TEST_SUITE("dsp-features") {
  TEST_CASE("one second of digital silence") {
    const Waveform w = parse_wav(wav_bytes(std::vector<std::int16_t>(16000, 0)));
    CHECK(w.size() == 16000);
    for (double s : w.samples) CHECK(s == 0.0);
  }

  TEST_CASE("-32768 scales to -1") {
    const Waveform w = parse_wav(wav_bytes({-32768, 16384, 0}));
    CHECK(w.samples[0] == -1.0);
    CHECK(w.samples[1] == 0.5);
  }

  TEST_CASE("unsupported formats each have their own error") {
    CHECK(error_code([] { parse_wav(wav_bytes({0, 0}, 8000)); }) == "unsupported_sample_rate");
    CHECK(error_code([] { parse_wav(wav_bytes({0, 0}, 16000, 2)); }) == "unsupported_channels");
    CHECK(error_code([] { parse_wav(wav_bytes({0, 0}, 16000, 1, 8)); }) == "unsupported_bit_depth");
    auto truncated = wav_bytes({1, 2, 3, 4});
    truncated.resize(truncated.size() - 3);
    CHECK(error_code([&] { parse_wav(truncated); }) == "truncated");
    CHECK(error_code([] { parse_wav(std::vector<unsigned char>(8, 'x')); }) == "not_riff_wave");
    CHECK(error_code([] { read_wav("/nonexistent.wav"); }) == "missing_file");
  }

  TEST_CASE("wav write/read round trip") {
    Waveform w;
    w.samples = {0.0, 0.25, -0.5, 0.999, -1.0};
    const Waveform back = parse_wav(encode_wav(w));
    REQUIRE(back.size() == w.size());
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(back.samples[i] == doctest::Approx(w.samples[i]).epsilon(1.0 / 32768));
  }

  TEST_CASE("1 s at 25/10 ms gives 98 frames of 80 dims") {
    Waveform w;
    w.samples = testing::sine(300.0, 1.0);
    const FeatureSequence f = logmel(w);
    CHECK(f.num_frames() == 98);
    CHECK(f.dim() == 80);
    CHECK(f.frame_rate == 100);
    CHECK(f.config_id == FeatureConfig{}.id());
  }

  TEST_CASE("frame count formula over random lengths") {
    const FeatureConfig cfg;
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> len(400, 4000);
    for (int i = 0; i < 30; ++i) {
      Waveform w;
      w.samples = oracle::random_vector(rng, len(rng), -0.5, 0.5);
      const auto expected = 1 + (w.size() - 400) / 160;
      CHECK(frame_count(w.size(), cfg) == expected);
      CHECK(static_cast<std::size_t>(logmel(w, cfg).num_frames()) == expected);
    }
    Waveform short_wave;
    short_wave.samples.assign(399, 0.1);
    CHECK(error_code([&] { logmel(short_wave, cfg); }) == "too_short");
  }

  TEST_CASE("all-zero waveform sits at the floor") {
    Waveform w;
    w.samples.assign(2000, 0.0);
    const FeatureSequence f = logmel(w);
    CHECK((f.frames.array() == std::log(1e-10)).all());
  }

  TEST_CASE("1 kHz sine peaks in the band whose center is nearest 1 kHz") {
    Waveform w;
    w.samples = testing::sine(1000.0, 0.5);
    const FeatureSequence f = logmel(w);
    const auto centers = mel_center_frequencies(FeatureConfig{});
    std::size_t nearest = 0;
    for (std::size_t b = 1; b < centers.size(); ++b) {
      if (std::abs(centers[b] - 1000.0) < std::abs(centers[nearest] - 1000.0)) nearest = b;
    }
    for (Eigen::Index t = 0; t < f.num_frames(); ++t) {
      Eigen::Index best;
      f.frames.row(t).maxCoeff(&best);
      CHECK(static_cast<std::size_t>(best) == nearest);
    }
  }

  TEST_CASE("scaling the waveform by g adds 2 log g above the floor") {
    std::mt19937_64 rng(5);
    Waveform w;
    w.samples = oracle::random_vector(rng, 3200, -0.4, 0.4);
    Waveform scaled = w;
    for (double& s : scaled.samples) s *= 0.5;
    const FeatureSequence a = logmel(w), b = logmel(scaled);
    CHECK(((b.frames - a.frames).array() - 2.0 * std::log(0.5)).abs().maxCoeff() < 1e-9);
  }

  TEST_CASE("mel filterbank matches a DFT-based band energy") {
    // Frame 0 energies recomputed from the naive DFT of the Hann-windowed frame.
    std::mt19937_64 rng(9);
    Waveform w;
    w.samples = oracle::random_vector(rng, 400, -0.5, 0.5);
    const FeatureConfig cfg;
    const FeatureSequence f = logmel(w, cfg);
    std::vector<double> frame(512, 0.0);
    for (int n = 0; n < 400; ++n) {
      frame[n] = w.samples[n] * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / 400));
    }
    const auto mag = oracle::dft_magnitude(frame);
    const Matrix fb = mel_filterbank(cfg);
    for (Eigen::Index m = 0; m < fb.rows(); ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < mag.size(); ++k) e += fb(m, static_cast<Eigen::Index>(k)) * mag[k] * mag[k];
      CHECK(f.frames(0, m) == doctest::Approx(std::log(std::max(e, 1e-10))).epsilon(1e-9));
    }
  }

  TEST_CASE("FT01 round trip of a 3x2 matrix") {
    FeatureSequence f;
    f.frames.resize(3, 2);
    f.frames << 0.1, -2.5, 3.14159, 1e-3, 7.0, -0.3;
    f.frame_rate = 50;
    f.config_id = "external:test";
    const auto dir = testing::temp_dir("ft01");
    save_features(f, dir / "a.ft");
    const FeatureSequence back = load_features(dir / "a.ft");
    CHECK(back.frame_rate == 50);
    CHECK(back.config_id == "external:test");
    REQUIRE(back.frames.rows() == 3);
    for (Eigen::Index i = 0; i < f.frames.size(); ++i) {
      CHECK(back.frames.data()[i] == static_cast<double>(static_cast<float>(f.frames.data()[i])));
    }
  }

  TEST_CASE("FT01 random round trip stays within float quantization") {
    std::mt19937_64 rng(1);
    FeatureSequence f = testing::sequence(testing::random_matrix(rng, 17, 9, -100, 100));
    const FeatureSequence back = decode_features(encode_features(f));
    const double err = (back.frames - f.frames).cwiseAbs().maxCoeff();
    CHECK(err <= 100.0 * std::numeric_limits<float>::epsilon());
  }

  TEST_CASE("FT01 format guards") {
    FeatureSequence f = testing::sequence(Matrix::Ones(2, 2));
    auto bytes = encode_features(f);
    auto bad = bytes;
    std::memcpy(bad.data(), "XXXX", 4);
    CHECK(error_code([&] { decode_features(bad); }) == "bad_magic");

    // Header claiming 10x10 with only 50 floats.
    std::vector<unsigned char> b{'F', 'T', '0', '1'};
    put(b, 10, 4);
    put(b, 10, 4);
    put(b, 100, 2);
    put(b, 0, 2);
    b.resize(b.size() + 50 * 4, 0);
    CHECK(error_code([&] { decode_features(b); }) == "truncated");

    std::vector<unsigned char> huge{'F', 'T', '0', '1'};
    put(huge, 0xFFFFFFFFu, 4);
    put(huge, 0xFFFFFFFFu, 4);
    put(huge, 100, 2);
    put(huge, 0, 2);
    CHECK(error_code([&] { decode_features(huge); }) == "dimension_overflow");

    bytes.push_back(0);
    CHECK(error_code([&] { decode_features(bytes); }) == "trailing_bytes");
  }
}
