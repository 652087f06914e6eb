#include "vcd/vc.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <numeric>
#include <optional>
#include <thread>
#include <vector>

#include "vcd/diagnostics.hpp"
#include "vcd/error.hpp"

namespace vcd {
namespace {

constexpr const char* kModule = "vc";
// Source frames scored per GEMM block; bounds the similarity buffer.
constexpr Eigen::Index kBlockRows = 256;

Vector guarded_row_norms(const Matrix& m, double epsilon) {
  Vector norms = m.rowwise().norm();
  return norms.cwiseMax(epsilon);
}

}  // namespace

void validate(const VCConfig& cfg) {
  if (cfg.k < 1) throw Error(kModule, "invalid_config", "k must be >= 1");
  if (!(cfg.epsilon > 0.0)) throw Error(kModule, "invalid_config", "epsilon must be positive");
}

MatchingSet build_matching_set(std::string speaker_id, std::span<const FeatureSequence> segments,
                               const VCConfig& cfg) {
  if (segments.empty()) {
    throw Error(kModule, "empty_matching_set", "no segments for speaker '" + speaker_id + "'",
                speaker_id);
  }
  const Eigen::Index dim = segments.front().dim();
  Eigen::Index total = 0;
  for (const auto& seg : segments) {
    validate(seg);
    if (seg.dim() != dim) {
      throw Error(kModule, "dimension_mismatch",
                  "speaker '" + speaker_id + "': segment dims " + std::to_string(seg.dim()) +
                      " and " + std::to_string(dim),
                  speaker_id);
    }
    total += seg.num_frames();
  }

  MatchingSet set;
  set.speaker_id = std::move(speaker_id);
  set.source_count = segments.size();
  set.pool.resize(total, dim);
  Eigen::Index row = 0;
  for (const auto& seg : segments) {
    set.pool.middleRows(row, seg.num_frames()) = seg.frames;
    row += seg.num_frames();
  }
  if (total < cfg.min_pool_warn) {
    warn(kModule, "matching set for '" + set.speaker_id + "' has " + std::to_string(total) +
                      " frames (< " + std::to_string(cfg.min_pool_warn) + ")");
  }
  return set;
}

FeatureSequence knn_convert(const FeatureSequence& src, const MatchingSet& target,
                            const VCConfig& cfg) {
  validate(cfg);
  validate(src);
  const Eigen::Index pool_size = target.pool.rows();
  if (pool_size < 1) {
    throw Error(kModule, "empty_matching_set", "matching set '" + target.speaker_id + "' is empty",
                target.speaker_id);
  }
  if (src.dim() != target.dim()) {
    throw Error(kModule, "dimension_mismatch",
                "source dim " + std::to_string(src.dim()) + " vs pool dim " +
                    std::to_string(target.dim()),
                target.speaker_id);
  }
  if (cfg.k > pool_size) {
    throw Error(kModule, "k_exceeds_pool",
                "k=" + std::to_string(cfg.k) + " exceeds pool of " + std::to_string(pool_size) +
                    " frames",
                target.speaker_id);
  }

  const Vector pool_norms = guarded_row_norms(target.pool, cfg.epsilon);
  const Vector src_norms = guarded_row_norms(src.frames, cfg.epsilon);
  const auto k = static_cast<std::size_t>(cfg.k);

  FeatureSequence out;
  out.frames.resize(src.num_frames(), src.dim());
  out.frame_rate = src.frame_rate;
  out.config_id = src.config_id + "+vc:" + target.speaker_id;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(pool_size));
  Matrix sims;
  for (Eigen::Index start = 0; start < src.num_frames(); start += kBlockRows) {
    const Eigen::Index rows = std::min(kBlockRows, src.num_frames() - start);
    sims.noalias() = src.frames.middleRows(start, rows) * target.pool.transpose();
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double src_norm = src_norms[start + i];
      auto score = [&](Eigen::Index j) { return sims(i, j) / (src_norm * pool_norms[j]); };
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](Eigen::Index a, Eigen::Index b) {
                          const double sa = score(a), sb = score(b);
                          return sa > sb || (sa == sb && a < b);
                        });
      auto row = out.frames.row(start + i);
      row.setZero();
      for (std::size_t n = 0; n < k; ++n) row += target.pool.row(order[n]);
      row /= static_cast<double>(k);
    }
  }
  return out;
}

Resynthesized execute_plan(const ConversionPlan& plan, const Dataset& sources,
                           const FeatureTable& features, const VoiceBank& voices,
                           const VCConfig& cfg, unsigned threads) {
  validate(cfg);
  struct Job {
    const UtteranceRecord* record;
    const FeatureSequence* features;
    const MatchingSet* voice;
  };
  std::vector<Job> jobs;
  jobs.reserve(plan.pairs.size());
  for (const auto& pair : plan.pairs) {
    const auto* rec = sources.find(pair.source_id);
    if (!rec) {
      throw Error(kModule, "unresolved_source", "plan references unknown record '" + pair.source_id + "'",
                  pair.source_id);
    }
    if (rec->split != Split::train || !rec->provenance.is_natural()) {
      throw Error(kModule, "not_training_record",
                  "record '" + rec->id + "' is not a natural training record; only training "
                  "data is converted",
                  rec->id);
    }
    auto feat = features.find(pair.source_id);
    if (feat == features.end()) {
      throw Error(kModule, "missing_features", "no features for record '" + pair.source_id + "'",
                  pair.source_id);
    }
    auto voice = voices.find(pair.target_id);
    if (voice == voices.end()) {
      throw Error(kModule, "unresolved_target", "plan references unknown voice '" + pair.target_id + "'",
                  pair.target_id);
    }
    jobs.push_back({rec, &feat->second, &voice->second});
  }

  std::vector<std::optional<FeatureSequence>> converted(jobs.size());
  std::vector<std::exception_ptr> failures(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        converted[i] = knn_convert(*jobs[i].features, *jobs[i].voice, cfg);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs.size())));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  Resynthesized out{Dataset(sources.labels()), {}};
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& pair = plan.pairs[i];
    if (failures[i]) {
      try {
        std::rethrow_exception(failures[i]);
      } catch (const Error& e) {
        throw Error(kModule, e.code(),
                    "pair (" + pair.source_id + " -> " + pair.target_id + "): " + e.message(),
                    pair.source_id);
      }
    }
    UtteranceRecord rec = *jobs[i].record;
    rec.provenance = Provenance::resynthesized(pair.target_id);
    rec.id = derived_id(rec.id, rec.provenance);
    rec.speaker = pair.target_id;
    rec.source.clear();
    out.features.emplace(rec.id, std::move(*converted[i]));
    out.dataset.add(std::move(rec));
  }
  return out;
}

}  // namespace vcd
