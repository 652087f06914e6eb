#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vcd/classifier.hpp"
#include "vcd/core.hpp"
#include "vcd/eval.hpp"
#include "vcd/features.hpp"
#include "vcd/vc.hpp"

namespace vcd {

/// Generative model: frame = codebook[c] + speaker offset + noise, with the
/// code c drawn from a per-dialect distribution. Speakers never cross dialects,
/// which is what makes speaker identity a usable shortcut.
struct SynthConfig {
  int n_dialects = 5;
  int speakers_per_dialect_train = 96;
  int speakers_test = 40;  // unseen, per dialect
  int utterances_per_speaker = 2;
  int utterances_per_test_speaker = 3;
  int frames_per_utterance = 60;
  int feature_dim = 256;
  int codebook_size = 16;
  double dialect_separation = 1.0;  // Dirichlet concentration of the code distributions
  double speaker_sigma = 0.16;      // per-dimension std of speaker offsets
  double frame_noise = 0.04;
  double domain_shift = 0.05;  // per-dimension std of each shifted domain's offset
  int shifted_domains = 4;
  int shared_voices = 4;
  int voices_per_dialect = 4;
  int voice_frames = 600;  // matching material per target voice
  std::uint64_t seed = 1;
};

void validate(const SynthConfig& cfg);

/// Flat "key = value" text; '#' starts a comment. Unknown keys are rejected.
SynthConfig parse_synth_config(std::string_view text, SynthConfig base = {});
SynthConfig load_synth_config(const std::filesystem::path& path);
std::string to_text(const SynthConfig& cfg);

/// Labels used for `n` synthetic dialects: the default five names when n == 5,
/// otherwise d0, d1, ...
LabelSet synth_labels(int n);

struct SynthCorpus {
  /// Natural train records plus test records: domain "synthetic" for the
  /// in-domain test set and "shifted<i>" for the offset copies.
  Dataset data;
  FeatureTable features;
  /// Target voices with uniform code usage. Shared voices carry placeholder
  /// dialects (round robin); biased voices carry the dialect they serve.
  Dataset shared_voices;
  Dataset biased_voices;
  FeatureTable voice_features;
  Matrix codebook;           // P x F, unit rows
  Matrix code_distribution;  // n_dialects x P
};

inline constexpr const char* kInDomain = "synthetic";

SynthCorpus gen_corpus(const SynthConfig& cfg);

/// Writes manifest.jsonl, voices_shared.jsonl, voices_biased.jsonl and one
/// FT01 file per record under `dir/features`.
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

/// Training setup used by the bias experiment unless overridden.
TrainConfig bias_train_config();

struct ConditionResult {
  std::string name;  // baseline_natural | vc_unbiased | vc_biased
  std::size_t train_size = 0;
  DomainReport report;  // in-domain column + shifted domains; deltas vs baseline
};

struct ExperimentReport {
  SynthConfig config;
  std::vector<ConditionResult> conditions;

  const ConditionResult& condition(std::string_view name) const;
};

/// Trains the three conditions on (1) natural data, (2) data converted to the
/// shared voices, (3) data converted to each dialect's own voices, and tests
/// each on natural unseen-speaker data.
ExperimentReport run_bias_experiment(const SynthConfig& cfg, const VCConfig& vc_cfg = {},
                                     const TrainConfig& train_cfg = bias_train_config(),
                                     unsigned threads = 1);

std::string experiment_json(const ExperimentReport& report);
std::string experiment_table(const ExperimentReport& report);

}  // namespace vcd
