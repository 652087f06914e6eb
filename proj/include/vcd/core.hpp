#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vcd {

/// Closed, ordered set of dialect labels. Order defines class indices.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> names);

  /// msa, gulf, levantine, maghrebi, egyptian
  static LabelSet default_set();
  /// Parses a comma-separated list ("msa,gulf,egyptian").
  static LabelSet parse(std::string_view csv);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t index) const { return names_.at(index); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  bool contains(std::string_view name) const { return index_of(name).has_value(); }
  std::string to_string() const;

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::vector<std::string> names_;
};

enum class Split { train, dev, test };

std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view text);

enum class ProvenanceKind { natural, resynthesized, augmented };

/// Where a record's audio/features came from. `detail` holds the target
/// speaker for resynthesized records and the augmentation kind for augmented
/// ones; it is empty for natural records.
struct Provenance {
  ProvenanceKind kind = ProvenanceKind::natural;
  std::string detail;

  static Provenance natural() { return {}; }
  static Provenance resynthesized(std::string target_speaker) {
    return {ProvenanceKind::resynthesized, std::move(target_speaker)};
  }
  static Provenance augmented(std::string kind) {
    return {ProvenanceKind::augmented, std::move(kind)};
  }

  bool is_natural() const { return kind == ProvenanceKind::natural; }
  /// "natural", "resynthesized" or "augmented:<kind>"
  std::string to_string() const;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct UtteranceRecord {
  std::string id;
  std::string source;
  std::string dialect;
  std::string speaker;
  std::string domain;
  Split split = Split::train;
  Provenance provenance;

  const std::string* target_speaker() const {
    return provenance.kind == ProvenanceKind::resynthesized ? &provenance.detail : nullptr;
  }

  friend bool operator==(const UtteranceRecord&, const UtteranceRecord&) = default;
};

/// Ordered collection of records over a fixed label set. `add` enforces the
/// record-level invariants (unique id, known label, provenance consistency).
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(LabelSet labels) : labels_(std::move(labels)) {}

  void add(UtteranceRecord record);

  const LabelSet& labels() const { return labels_; }
  const std::vector<UtteranceRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const UtteranceRecord& operator[](std::size_t i) const { return records_[i]; }
  const UtteranceRecord* find(std::string_view id) const;

  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

  /// Records whose split equals `split`, in dataset order.
  Dataset subset(Split split) const;
  /// Index of `record.dialect` in the label set.
  std::size_t label_index(const UtteranceRecord& record) const;

 private:
  LabelSet labels_;
  std::vector<UtteranceRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

// --- manifests -------------------------------------------------------------
// One JSON object per line with exactly the keys id, source, dialect, speaker,
// domain, split, provenance and (for resynthesized records) target_speaker.

Dataset parse_manifest(std::istream& in, const LabelSet& labels,
                       std::string_view origin = "<stream>");
Dataset load_manifest(const std::filesystem::path& path,
                      const LabelSet& labels = LabelSet::default_set());
void write_manifest(std::ostream& out, const Dataset& dataset);
void save_manifest(const Dataset& dataset, const std::filesystem::path& path);

// --- target voices and conversion plans ------------------------------------

/// Target speakers available for conversion. `by_dialect` is the explicit
/// dialect -> speakers map used by the biased_disjoint policy; it may be
/// empty for the other policies.
struct VoicePool {
  std::vector<std::string> speakers;
  std::map<std::string, std::vector<std::string>> by_dialect;

  std::size_t size() const { return speakers.size(); }
  bool contains(std::string_view speaker) const;

  /// Builds a pool from a voice manifest: one entry per distinct speaker in
  /// first-seen order, grouped by the record's dialect.
  static VoicePool from_dataset(const Dataset& voices);
};

enum class Policy { fixed_single, uniform_draw, per_voice_full, unbiased_shared, biased_disjoint };

std::string_view to_string(Policy policy);
Policy parse_policy(std::string_view text);

struct PlanPair {
  std::string source_id;
  std::string target_id;
  friend bool operator==(const PlanPair&, const PlanPair&) = default;
};

struct ConversionPlan {
  std::vector<PlanPair> pairs;
  Policy policy = Policy::per_voice_full;
  std::uint64_t seed = 0;
  friend bool operator==(const ConversionPlan&, const ConversionPlan&) = default;
};

/// Pairs every natural training record of `dataset` with target speakers
/// according to `policy`. Dev/test records are never planned for conversion.
ConversionPlan assign_targets(const Dataset& dataset, const VoicePool& pool, Policy policy,
                              std::uint64_t seed);

void save_plan(const ConversionPlan& plan, const std::filesystem::path& path);
ConversionPlan load_plan(const std::filesystem::path& path);

/// Natural records followed by the derived ones. Derived record ids are
/// suffixed with "@<target>" (resynthesized) or "#<kind>" (augmented) unless
/// already suffixed.
Dataset concat_train(const Dataset& natural, const Dataset& derived);

/// Id a derived record receives inside a training union.
std::string derived_id(std::string_view source_id, const Provenance& provenance);

}  // namespace vcd
