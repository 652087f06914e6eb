#include "vcd/core.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vcd/error.hpp"

namespace vcd {
namespace {

using nlohmann::json;

constexpr const char* kModule = "core";

const std::set<std::string>& manifest_keys() {
  static const std::set<std::string> keys = {"id",     "source", "dialect",    "speaker",
                                             "domain", "split",  "provenance", "target_speaker"};
  return keys;
}

Provenance parse_provenance(const std::string& text, const std::string* target,
                            const std::string& where) {
  if (text == "natural") {
    if (target) {
      throw Error(kModule, "natural_with_target",
                  where + ": natural record carries target_speaker");
    }
    return Provenance::natural();
  }
  if (text == "resynthesized") {
    if (!target || target->empty()) {
      throw Error(kModule, "missing_target", where + ": resynthesized record needs target_speaker");
    }
    return Provenance::resynthesized(*target);
  }
  constexpr std::string_view aug = "augmented:";
  if (text.rfind(aug, 0) == 0 && text.size() > aug.size()) {
    if (target) {
      throw Error(kModule, "augmented_with_target",
                  where + ": augmented record carries target_speaker");
    }
    return Provenance::augmented(text.substr(aug.size()));
  }
  throw Error(kModule, "invalid_provenance", where + ": unknown provenance '" + text + "'");
}

}  // namespace

// --- LabelSet ----------------------------------------------------------------

LabelSet::LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() < 2) {
    throw Error(kModule, "invalid_labels", "label set needs at least two labels");
  }
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw Error(kModule, "invalid_labels", "empty label name");
    if (!seen.insert(n).second) {
      throw Error(kModule, "invalid_labels", "label '" + n + "' listed twice", n);
    }
  }
}

LabelSet LabelSet::default_set() {
  return LabelSet({"msa", "gulf", "levantine", "maghrebi", "egyptian"});
}

LabelSet LabelSet::parse(std::string_view csv) {
  std::vector<std::string> names;
  std::string item;
  std::istringstream in{std::string(csv)};
  while (std::getline(in, item, ',')) names.push_back(item);
  return LabelSet(std::move(names));
}

std::optional<std::size_t> LabelSet::index_of(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::string LabelSet::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (i) out += ',';
    out += names_[i];
  }
  return out;
}

// --- enums -------------------------------------------------------------------

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "dev") return Split::dev;
  if (text == "test") return Split::test;
  return std::nullopt;
}

std::string Provenance::to_string() const {
  switch (kind) {
    case ProvenanceKind::natural: return "natural";
    case ProvenanceKind::resynthesized: return "resynthesized";
    case ProvenanceKind::augmented: return "augmented:" + detail;
  }
  return "natural";
}

std::string_view to_string(Policy policy) {
  switch (policy) {
    case Policy::fixed_single: return "fixed_single";
    case Policy::uniform_draw: return "uniform_draw";
    case Policy::per_voice_full: return "per_voice_full";
    case Policy::unbiased_shared: return "unbiased_shared";
    case Policy::biased_disjoint: return "biased_disjoint";
  }
  return "per_voice_full";
}

Policy parse_policy(std::string_view text) {
  for (Policy p : {Policy::fixed_single, Policy::uniform_draw, Policy::per_voice_full,
                   Policy::unbiased_shared, Policy::biased_disjoint}) {
    if (to_string(p) == text) return p;
  }
  throw Error(kModule, "unknown_policy", "unknown policy '" + std::string(text) + "'",
              std::string(text));
}

// --- Dataset -----------------------------------------------------------------

void Dataset::add(UtteranceRecord record) {
  if (record.id.empty()) throw Error(kModule, "invalid_record", "record without id");
  if (!labels_.contains(record.dialect)) {
    throw Error(kModule, "unknown_label",
                "record '" + record.id + "' has label '" + record.dialect +
                    "' outside {" + labels_.to_string() + "}",
                record.id);
  }
  if (record.provenance.kind != ProvenanceKind::natural && record.provenance.detail.empty()) {
    throw Error(kModule, "invalid_provenance",
                "record '" + record.id + "' has derived provenance without detail", record.id);
  }
  if (record.provenance.is_natural() && !record.provenance.detail.empty()) {
    throw Error(kModule, "natural_with_target",
                "natural record '" + record.id + "' carries a target speaker", record.id);
  }
  auto [it, inserted] = index_.emplace(record.id, records_.size());
  if (!inserted) {
    throw Error(kModule, "duplicate_id", "duplicate record id '" + record.id + "'", record.id);
  }
  records_.push_back(std::move(record));
}

const UtteranceRecord* Dataset::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

Dataset Dataset::subset(Split split) const {
  Dataset out(labels_);
  for (const auto& r : records_) {
    if (r.split == split) out.add(r);
  }
  return out;
}

std::size_t Dataset::label_index(const UtteranceRecord& record) const {
  return *labels_.index_of(record.dialect);
}

// --- manifests ---------------------------------------------------------------

Dataset parse_manifest(std::istream& in, const LabelSet& labels, std::string_view origin) {
  Dataset dataset(labels);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);

    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(kModule, "malformed_line", where + ": " + e.what());
    }
    if (!obj.is_object()) throw Error(kModule, "malformed_line", where + ": expected an object");

    for (const auto& [key, value] : obj.items()) {
      if (!manifest_keys().count(key)) {
        throw Error(kModule, "unknown_key", where + ": unknown key '" + key + "'");
      }
      if (!value.is_string()) {
        throw Error(kModule, "malformed_line", where + ": value of '" + key + "' must be a string");
      }
    }
    auto field = [&](const char* key) -> std::string {
      auto it = obj.find(key);
      if (it == obj.end()) {
        throw Error(kModule, "missing_key", where + ": missing key '" + key + "'");
      }
      return it->get<std::string>();
    };

    UtteranceRecord r;
    r.id = field("id");
    r.source = field("source");
    r.dialect = field("dialect");
    r.speaker = field("speaker");
    r.domain = field("domain");
    const std::string split = field("split");
    auto parsed_split = parse_split(split);
    if (!parsed_split) throw Error(kModule, "invalid_split", where + ": unknown split '" + split + "'", r.id);
    r.split = *parsed_split;

    std::optional<std::string> target;
    if (auto it = obj.find("target_speaker"); it != obj.end()) target = it->get<std::string>();
    r.provenance = parse_provenance(field("provenance"), target ? &*target : nullptr, where);

    try {
      dataset.add(std::move(r));
    } catch (const Error& e) {
      throw Error(e.module(), e.code(), where + ": " + e.message(), e.subject());
    }
  }
  if (dataset.empty()) {
    throw Error(kModule, "empty_manifest", std::string(origin) + ": no records");
  }
  return dataset;
}

Dataset load_manifest(const std::filesystem::path& path, const LabelSet& labels) {
  std::ifstream in(path);
  if (!in) throw Error(kModule, "missing_file", "cannot open manifest " + path.string(), path.string());
  return parse_manifest(in, labels, path.string());
}

void write_manifest(std::ostream& out, const Dataset& dataset) {
  for (const auto& r : dataset) {
    json obj = {{"id", r.id},
                {"source", r.source},
                {"dialect", r.dialect},
                {"speaker", r.speaker},
                {"domain", r.domain},
                {"split", std::string(to_string(r.split))},
                {"provenance", r.provenance.to_string()}};
    if (const auto* t = r.target_speaker()) obj["target_speaker"] = *t;
    out << obj.dump() << '\n';
  }
}

void save_manifest(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(kModule, "write_failed", "cannot write " + path.string(), path.string());
  write_manifest(out, dataset);
}

// --- voice pools & plans -------------------------------------------------------

bool VoicePool::contains(std::string_view speaker) const {
  return std::find(speakers.begin(), speakers.end(), speaker) != speakers.end();
}

VoicePool VoicePool::from_dataset(const Dataset& voices) {
  VoicePool pool;
  std::map<std::string, std::string> dialect_of;
  for (const auto& r : voices) {
    auto [it, inserted] = dialect_of.emplace(r.speaker, r.dialect);
    if (inserted) {
      pool.speakers.push_back(r.speaker);
      pool.by_dialect[r.dialect].push_back(r.speaker);
    } else if (it->second != r.dialect) {
      throw Error(kModule, "speaker_in_two_dialects",
                  "voice '" + r.speaker + "' is listed under '" + it->second + "' and '" +
                      r.dialect + "'",
                  r.speaker);
    }
  }
  return pool;
}

namespace {

void check_biased_partition(const VoicePool& pool, const LabelSet& labels) {
  std::set<std::string> used;
  std::size_t set_size = 0;
  for (const auto& label : labels.names()) {
    auto it = pool.by_dialect.find(label);
    if (it == pool.by_dialect.end() || it->second.empty()) {
      throw Error(kModule, "incomplete_partition",
                  "biased_disjoint: no target speakers for dialect '" + label + "'", label);
    }
    if (set_size == 0) set_size = it->second.size();
    if (it->second.size() != set_size) {
      throw Error(kModule, "incomplete_partition",
                  "biased_disjoint: dialect speaker sets differ in size", label);
    }
    for (const auto& s : it->second) {
      if (!pool.contains(s)) {
        throw Error(kModule, "unknown_voice", "speaker '" + s + "' missing from pool", s);
      }
      if (!used.insert(s).second) {
        throw Error(kModule, "incomplete_partition",
                    "biased_disjoint: speaker '" + s + "' serves two dialects", s);
      }
    }
  }
  for (const auto& [dialect, speakers] : pool.by_dialect) {
    if (!labels.contains(dialect)) {
      throw Error(kModule, "unknown_label", "voice pool dialect '" + dialect + "' not in label set",
                  dialect);
    }
  }
}

}  // namespace

ConversionPlan assign_targets(const Dataset& dataset, const VoicePool& pool, Policy policy,
                              std::uint64_t seed) {
  if (pool.speakers.empty()) throw Error(kModule, "empty_pool", "voice pool is empty");
  {
    std::set<std::string> unique(pool.speakers.begin(), pool.speakers.end());
    if (unique.size() != pool.speakers.size()) {
      throw Error(kModule, "duplicate_voice", "voice pool lists a speaker twice");
    }
  }
  std::vector<const UtteranceRecord*> sources;
  for (const auto& r : dataset) {
    if (r.split == Split::train && r.provenance.is_natural()) sources.push_back(&r);
  }
  if (sources.empty()) {
    throw Error(kModule, "no_training_records", "dataset has no natural training records");
  }

  ConversionPlan plan;
  plan.policy = policy;
  plan.seed = seed;
  std::mt19937_64 rng(seed);

  switch (policy) {
    case Policy::fixed_single:
      if (pool.size() != 1) {
        throw Error(kModule, "pool_size", "fixed_single needs exactly one voice, pool has " +
                                               std::to_string(pool.size()));
      }
      for (const auto* r : sources) plan.pairs.push_back({r->id, pool.speakers.front()});
      break;
    case Policy::uniform_draw:
    case Policy::unbiased_shared: {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      for (const auto* r : sources) plan.pairs.push_back({r->id, pool.speakers[pick(rng)]});
      break;
    }
    case Policy::per_voice_full:
      plan.pairs.reserve(sources.size() * pool.size());
      for (const auto* r : sources) {
        for (const auto& v : pool.speakers) plan.pairs.push_back({r->id, v});
      }
      break;
    case Policy::biased_disjoint: {
      check_biased_partition(pool, dataset.labels());
      for (const auto* r : sources) {
        const auto& own = pool.by_dialect.at(r->dialect);
        std::uniform_int_distribution<std::size_t> pick(0, own.size() - 1);
        plan.pairs.push_back({r->id, own[pick(rng)]});
      }
      break;
    }
  }
  return plan;
}

void save_plan(const ConversionPlan& plan, const std::filesystem::path& path) {
  json pairs = json::array();
  for (const auto& p : plan.pairs) pairs.push_back({{"source", p.source_id}, {"target", p.target_id}});
  json obj = {{"policy", std::string(to_string(plan.policy))}, {"seed", plan.seed}, {"pairs", pairs}};
  std::ofstream out(path);
  if (!out) throw Error(kModule, "write_failed", "cannot write " + path.string(), path.string());
  out << obj.dump(1) << '\n';
}

ConversionPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(kModule, "missing_file", "cannot open plan " + path.string(), path.string());
  ConversionPlan plan;
  try {
    json obj = json::parse(in);
    plan.policy = parse_policy(obj.at("policy").get<std::string>());
    plan.seed = obj.at("seed").get<std::uint64_t>();
    for (const auto& p : obj.at("pairs")) {
      plan.pairs.push_back({p.at("source").get<std::string>(), p.at("target").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw Error(kModule, "malformed_plan", path.string() + ": " + e.what(), path.string());
  }
  return plan;
}

// --- training-set union --------------------------------------------------------

std::string derived_id(std::string_view source_id, const Provenance& provenance) {
  std::string suffix;
  switch (provenance.kind) {
    case ProvenanceKind::natural: return std::string(source_id);
    case ProvenanceKind::resynthesized: suffix = "@" + provenance.detail; break;
    case ProvenanceKind::augmented: suffix = "#" + provenance.detail; break;
  }
  if (source_id.size() >= suffix.size() &&
      source_id.substr(source_id.size() - suffix.size()) == suffix) {
    return std::string(source_id);
  }
  return std::string(source_id) + suffix;
}

Dataset concat_train(const Dataset& natural, const Dataset& derived) {
  if (!(natural.labels() == derived.labels())) {
    throw Error(kModule, "label_mismatch",
                "label sets differ: {" + natural.labels().to_string() + "} vs {" +
                    derived.labels().to_string() + "}");
  }
  Dataset out = natural;
  for (const auto& r : derived) {
    if (r.provenance.is_natural()) {
      throw Error(kModule, "not_derived",
                  "record '" + r.id + "' in the resynthesized set has natural provenance", r.id);
    }
    UtteranceRecord copy = r;
    copy.id = derived_id(r.id, r.provenance);
    if (out.find(copy.id)) {
      throw Error(kModule, "id_collision", "id '" + copy.id + "' collides after suffixing", copy.id);
    }
    out.add(std::move(copy));
  }
  return out;
}

}  // namespace vcd
