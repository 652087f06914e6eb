#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>

#include "vcd/core.hpp"
#include "vcd/features.hpp"

namespace vcd {

/// Concatenated frames of one target speaker; the kNN search space.
struct MatchingSet {
  std::string speaker_id;
  Matrix pool;
  std::size_t source_count = 0;

  Eigen::Index size() const { return pool.rows(); }
  Eigen::Index dim() const { return pool.cols(); }
};

struct VCConfig {
  int k = 4;
  /// Matching sets shorter than this many frames trigger a warning
  /// (60 s at 100 frames/s).
  Eigen::Index min_pool_warn = 6000;
  /// Lower bound applied to vector norms before dividing.
  double epsilon = 1e-12;
};

void validate(const VCConfig& cfg);

/// Row-wise concatenation of `segments` in input order.
MatchingSet build_matching_set(std::string speaker_id, std::span<const FeatureSequence> segments,
                               const VCConfig& cfg = {});

/// Replaces every source frame with the mean of the `cfg.k` pool frames of
/// highest cosine similarity. Ties go to the lower pool row. Frame rate is
/// kept; config_id gains a "+vc:<speaker>" suffix.
FeatureSequence knn_convert(const FeatureSequence& src, const MatchingSet& target,
                            const VCConfig& cfg = {});

/// Target speaker id -> matching set.
using VoiceBank = std::map<std::string, MatchingSet, std::less<>>;

struct Resynthesized {
  Dataset dataset;
  FeatureTable features;
};

/// Converts every (source, target) pair of `plan`. Each output record copies
/// the source's label, domain and split, takes the target as speaker and
/// carries resynthesized(target) provenance. Records come out in plan order
/// regardless of `threads`.
Resynthesized execute_plan(const ConversionPlan& plan, const Dataset& sources,
                           const FeatureTable& features, const VoiceBank& voices,
                           const VCConfig& cfg = {}, unsigned threads = 1);

}  // namespace vcd
