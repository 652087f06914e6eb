#include "vcd/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "vcd/augment.hpp"
#include "vcd/classifier.hpp"
#include "vcd/core.hpp"
#include "vcd/error.hpp"
#include "vcd/eval.hpp"
#include "vcd/features.hpp"
#include "vcd/seed.hpp"
#include "vcd/synthlab.hpp"
#include "vcd/vc.hpp"
#include "vcd/wav.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace vcd {
namespace {

constexpr const char* kModule = "cli";
constexpr const char* kRunFormat = "vcd-run/1";

// --- helpers -----------------------------------------------------------------------

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(kModule, "missing_file", "cannot open " + path.string(), path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(kModule, "write_failed", "cannot write " + path.string(), path.string());
  out << text;
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  std::vector<std::exception_ptr> failures(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const unsigned count = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
  }
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
}

/// Records configuration, input digests and outputs of one run so that the
/// run can be replayed and its outputs compared byte for byte.
class RunRecord {
 public:
  RunRecord(std::string subcommand, const std::vector<std::string>& args, fs::path out_dir)
      : out_dir_(std::move(out_dir)) {
    doc_["format"] = kRunFormat;
    doc_["subcommand"] = std::move(subcommand);
    doc_["cwd"] = fs::current_path().string();
    doc_["argv"] = args;
    doc_["config"] = json::object();
    doc_["inputs"] = json::object();
    doc_["outputs"] = json::object();
  }

  json& config() { return doc_["config"]; }
  json& info() { return doc_["info"]; }

  void input(const fs::path& path) {
    const auto abs = fs::absolute(path).lexically_normal().string();
    if (!doc_["inputs"].contains(abs)) doc_["inputs"][abs] = file_digest(path);
  }
  void output(const fs::path& path) {
    doc_["outputs"][fs::relative(path, out_dir_).generic_string()] = file_digest(path);
  }

  fs::path write() const {
    const fs::path p = out_dir_ / ("run-" + doc_["subcommand"].get<std::string>() + ".json");
    write_text(p, doc_.dump(2) + "\n");
    return p;
  }

 private:
  fs::path out_dir_;
  json doc_;
};

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  fs::path out_dir = ".";
  std::string labels;
};

struct Context {
  Globals g;
  RunRecord* run = nullptr;
  std::ostream* out = nullptr;

  LabelSet labels() const { return g.labels.empty() ? LabelSet::default_set() : LabelSet::parse(g.labels); }
  fs::path features_out() const { return g.out_dir / "features"; }
};

Dataset load_manifest_input(Context& ctx, const fs::path& path) {
  ctx.run->input(path);
  return load_manifest(path, ctx.labels());
}

/// Loads the FT01 file of every record, searching `dirs` in order.
FeatureTable load_feature_table(Context& ctx, const Dataset& data, const std::vector<fs::path>& dirs) {
  FeatureTable table;
  for (const auto& rec : data) {
    bool found = false;
    for (const auto& dir : dirs) {
      const fs::path p = feature_path(dir, rec.id);
      if (!fs::exists(p)) continue;
      ctx.run->input(p);
      try {
        table.emplace(rec.id, load_features(p));
      } catch (const Error& e) {
        throw Error(e.module(), e.code(), e.message() + " (record '" + rec.id + "')", rec.id);
      }
      found = true;
      break;
    }
    if (!found) {
      throw Error(kModule, "missing_features", "no feature file for record '" + rec.id + "'", rec.id);
    }
  }
  return table;
}

void save_feature_table(Context& ctx, const Dataset& data, const FeatureTable& table) {
  fs::create_directories(ctx.features_out());
  for (const auto& rec : data) {
    const fs::path p = feature_path(ctx.features_out(), rec.id);
    save_features(table.at(rec.id), p);
    ctx.run->output(p);
  }
}

fs::path resolve_source(const fs::path& manifest, const std::string& source) {
  const fs::path p(source);
  return p.is_absolute() ? p : manifest.parent_path() / p;
}

// --- subcommands -------------------------------------------------------------------

struct ExtractArgs {
  fs::path manifest;
  int n_mels = 80;
  double max_seconds = 10.0;
};

void cmd_extract(Context& ctx, const ExtractArgs& a) {
  const Dataset data = load_manifest_input(ctx, a.manifest);
  FeatureConfig fc;
  fc.n_mels = a.n_mels;
  validate(fc);
  std::vector<FeatureSequence> feats(data.size());
  std::vector<fs::path> sources(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    sources[i] = resolve_source(a.manifest, data[i].source);
    ctx.run->input(sources[i]);
  }
  parallel_for(data.size(), ctx.g.threads, [&](std::size_t i) {
    try {
      const Waveform w = read_wav(sources[i]);
      if (w.duration_seconds() > a.max_seconds) {
        throw Error(kModule, "too_long",
                    std::to_string(w.duration_seconds()) + " s exceeds --max-seconds " + std::to_string(a.max_seconds),
                    sources[i].string());
      }
      feats[i] = logmel(w, fc);
    } catch (const Error& e) {
      throw Error(e.module(), e.code(), e.message() + " (record '" + data[i].id + "')", data[i].id);
    }
  });
  FeatureTable table;
  for (std::size_t i = 0; i < data.size(); ++i) table.emplace(data[i].id, std::move(feats[i]));
  save_feature_table(ctx, data, table);
  *ctx.out << "extract: " << data.size() << " records -> " << ctx.features_out().string() << "\n";
}

struct PlanArgs {
  fs::path manifest, voices;
  std::string policy = "per_voice_full";
};

void cmd_plan(Context& ctx, const PlanArgs& a) {
  const Dataset data = load_manifest_input(ctx, a.manifest);
  const Dataset voices = load_manifest_input(ctx, a.voices);
  const ConversionPlan plan =
      assign_targets(data, VoicePool::from_dataset(voices), parse_policy(a.policy), ctx.g.seed);
  const fs::path p = ctx.g.out_dir / "plan.json";
  save_plan(plan, p);
  ctx.run->output(p);
  *ctx.out << "plan: " << plan.pairs.size() << " pairs (" << a.policy << ")\n";
}

struct ConvertArgs {
  fs::path plan, manifest, voices;
  std::vector<fs::path> features_dirs, voice_features_dirs;
  int k = 4;
};

void cmd_convert(Context& ctx, const ConvertArgs& a) {
  ctx.run->input(a.plan);
  const ConversionPlan plan = load_plan(a.plan);
  const Dataset data = load_manifest_input(ctx, a.manifest);
  const Dataset voices = load_manifest_input(ctx, a.voices);

  Dataset sources(data.labels());
  std::map<std::string, bool> wanted;
  for (const auto& p : plan.pairs) wanted[p.source_id] = true;
  for (const auto& rec : data) {
    if (wanted.count(rec.id)) sources.add(rec);
  }
  const FeatureTable features = load_feature_table(ctx, sources, a.features_dirs);
  const auto& vdirs = a.voice_features_dirs.empty() ? a.features_dirs : a.voice_features_dirs;
  const FeatureTable voice_features = load_feature_table(ctx, voices, vdirs);

  VCConfig vc;
  vc.k = a.k;
  std::map<std::string, std::vector<FeatureSequence>> segments;
  for (const auto& rec : voices) segments[rec.speaker].push_back(voice_features.at(rec.id));
  VoiceBank bank;
  for (auto& [speaker, segs] : segments) bank.emplace(speaker, build_matching_set(speaker, segs, vc));

  const Resynthesized res = execute_plan(plan, data, features, bank, vc, ctx.g.threads);
  const fs::path m = ctx.g.out_dir / "resynth.jsonl";
  save_manifest(res.dataset, m);
  ctx.run->output(m);
  save_feature_table(ctx, res.dataset, res.features);
  *ctx.out << "convert: " << res.dataset.size() << " resynthesized records\n";
}

struct AugmentArgs {
  fs::path manifest, recipe;
  std::vector<fs::path> features_dirs;
};

void cmd_augment(Context& ctx, const AugmentArgs& a) {
  const Dataset data = load_manifest_input(ctx, a.manifest);
  ctx.run->input(a.recipe);
  const auto steps = load_recipe(a.recipe);

  std::vector<const UtteranceRecord*> sources;
  for (const auto& rec : data) {
    if (rec.split == Split::train && rec.provenance.is_natural()) sources.push_back(&rec);
  }
  std::map<fs::path, Waveform> audio;
  bool needs_features = false, needs_wave = false;
  for (const auto& s : steps) {
    needs_features |= s.kind == AugmentKind::spec_augment;
    needs_wave |= s.kind != AugmentKind::spec_augment;
    for (const auto* p : {&s.rir_path, &s.noise_path}) {
      if (!p->empty() && !audio.count(*p)) {
        ctx.run->input(*p);
        audio.emplace(*p, read_wav(*p));
      }
    }
  }
  FeatureTable features;
  if (needs_features) {
    Dataset subset(data.labels());
    for (const auto* r : sources) subset.add(*r);
    features = load_feature_table(ctx, subset, a.features_dirs);
  }
  if (needs_wave) {
    for (const auto* r : sources) ctx.run->input(resolve_source(a.manifest, r->source));
  }

  // One slot per (record, step); empty when the step's coin flip says no.
  const std::size_t n = sources.size() * steps.size();
  std::vector<std::optional<FeatureSequence>> results(n);
  parallel_for(n, ctx.g.threads, [&](std::size_t i) {
    const UtteranceRecord& rec = *sources[i / steps.size()];
    const RecipeStep& step = steps[i % steps.size()];
    const std::string kind = to_string(step.kind);
    std::mt19937_64 rng(derive_seed(ctx.g.seed, rec.id, kind));
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= step.probability) return;
    const std::uint64_t seed = derive_seed(ctx.g.seed, rec.id, kind, "apply");
    try {
      if (step.kind == AugmentKind::spec_augment) {
        results[i] = spec_augment(features.at(rec.id), step.spec, seed);
        return;
      }
      const Waveform wave = read_wav(resolve_source(a.manifest, rec.source));
      Waveform augmented;
      switch (step.kind) {
        case AugmentKind::pitch_shift: {
          const double s = std::uniform_real_distribution<double>(step.semitones_low, step.semitones_high)(rng);
          augmented = pitch_shift(wave, s);
          break;
        }
        case AugmentKind::rir:
          augmented = rir_convolve(wave, audio.at(step.rir_path));
          break;
        case AugmentKind::noise:
          augmented = add_noise(wave, {audio.at(step.noise_path), step.snr_db}, seed);
          break;
        case AugmentKind::spec_augment:
          break;
      }
      results[i] = logmel(augmented);
    } catch (const Error& e) {
      throw Error(e.module(), e.code(), e.message() + " (record '" + rec.id + "')", rec.id);
    }
  });

  Dataset out(data.labels());
  FeatureTable table;
  for (std::size_t i = 0; i < n; ++i) {
    if (!results[i]) continue;
    UtteranceRecord rec = *sources[i / steps.size()];
    rec.provenance = Provenance::augmented(to_string(steps[i % steps.size()].kind));
    rec.id = derived_id(rec.id, rec.provenance);
    table.emplace(rec.id, std::move(*results[i]));
    out.add(std::move(rec));
  }
  const fs::path m = ctx.g.out_dir / "augmented.jsonl";
  save_manifest(out, m);
  ctx.run->output(m);
  save_feature_table(ctx, out, table);
  *ctx.out << "augment: " << out.size() << " augmented records from " << sources.size() << " sources\n";
}

struct TrainArgs {
  std::vector<fs::path> manifests;
  std::vector<fs::path> features_dirs;
  std::optional<int> epochs;
  double lr = 1e-3;
  int batch = 32;
  int hidden = 128;
  bool no_standardize = false;
};

void cmd_train(Context& ctx, const TrainArgs& a) {
  Dataset train_set;
  for (std::size_t i = 0; i < a.manifests.size(); ++i) {
    const Dataset part = load_manifest_input(ctx, a.manifests[i]).subset(Split::train);
    train_set = i == 0 ? part : concat_train(train_set, part);
  }
  const auto natural = static_cast<std::size_t>(std::count_if(
      train_set.begin(), train_set.end(), [](const UtteranceRecord& r) { return r.provenance.is_natural(); }));
  const std::size_t derived = train_set.size() - natural;
  *ctx.out << "train: |D_train| = " << natural << " + " << derived << " = " << train_set.size()
           << " (natural + derived)\n";
  ctx.run->info()["train_size"] = {{"natural", natural}, {"derived", derived}, {"total", train_set.size()}};

  const FeatureTable features = load_feature_table(ctx, train_set, a.features_dirs);
  TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.epochs = a.epochs ? *a.epochs : default_epochs(train_set);
  tc.batch_size = a.batch;
  tc.hidden_dim = a.hidden;
  tc.standardize = !a.no_standardize;
  tc.seed = ctx.g.seed;
  ctx.run->info()["epochs"] = tc.epochs;

  const TrainResult result = train(train_set, features, tc);
  const fs::path model = ctx.g.out_dir / "model.md01";
  const fs::path trace = ctx.g.out_dir / "loss.txt";
  save_model(result.model, model);
  save_loss_trace(result.loss_trace, trace);
  ctx.run->output(model);
  ctx.run->output(trace);
  *ctx.out << "train: " << tc.epochs << " epochs, loss " << result.loss_trace.front() << " -> "
           << result.loss_trace.back() << "\n";
}

struct EvaluateArgs {
  fs::path model, manifest;
  std::vector<fs::path> features_dirs;
  std::string split = "test";
  std::string in_domain;
  fs::path baseline_report;
};

void cmd_evaluate(Context& ctx, const EvaluateArgs& a) {
  ctx.run->input(a.model);
  const ClassifierModel model = load_model(a.model);
  const Dataset data = load_manifest_input(ctx, a.manifest);
  const auto split = parse_split(a.split);
  if (!split) throw Error(kModule, "invalid_split", "unknown split '" + a.split + "'", a.split);

  Dataset scored(data.labels());
  for (const auto& rec : data) {
    if (rec.split == *split) scored.add(rec);
  }
  const FeatureTable features = load_feature_table(ctx, scored, a.features_dirs);
  auto by_domain = evaluate_by_domain(model, scored, features, *split);

  std::optional<std::pair<std::string, Metrics>> in_domain;
  if (!a.in_domain.empty()) {
    auto it = std::find_if(by_domain.begin(), by_domain.end(), [&](const auto& d) { return d.first == a.in_domain; });
    if (it == by_domain.end()) {
      throw Error(kModule, "unknown_domain", "no records in domain '" + a.in_domain + "'", a.in_domain);
    }
    if (by_domain.size() > 1) {
      in_domain = *it;
      by_domain.erase(it);
    }
  }
  std::optional<DomainReport> baseline;
  if (!a.baseline_report.empty()) {
    ctx.run->input(a.baseline_report);
    baseline = load_report(a.baseline_report);
  }
  const DomainReport report = domain_report(std::move(by_domain), std::move(in_domain),
                                            baseline ? &*baseline : nullptr, a.model.filename().string());
  const fs::path j = ctx.g.out_dir / "report.json";
  const fs::path t = ctx.g.out_dir / "report.txt";
  save_report(report, j, t);
  ctx.run->output(j);
  ctx.run->output(t);
  *ctx.out << report_table(report);
}

struct SynthArgs {
  fs::path config;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<int> batch;
  int k = 4;
};

SynthConfig synth_config(Context& ctx, const fs::path& path, bool seed_given) {
  SynthConfig cfg;
  if (!path.empty()) {
    ctx.run->input(path);
    cfg = load_synth_config(path);
  }
  if (seed_given) cfg.seed = ctx.g.seed;
  ctx.run->info()["synth_config"] = to_text(cfg);
  return cfg;
}

void cmd_bias_experiment(Context& ctx, const SynthArgs& a, bool seed_given) {
  const SynthConfig cfg = synth_config(ctx, a.config, seed_given);
  TrainConfig tc = bias_train_config();
  if (a.epochs) tc.epochs = *a.epochs;
  if (a.lr) tc.learning_rate = *a.lr;
  if (a.batch) tc.batch_size = *a.batch;
  VCConfig vc;
  vc.k = a.k;
  const ExperimentReport report = run_bias_experiment(cfg, vc, tc, ctx.g.threads);
  const fs::path j = ctx.g.out_dir / "experiment.json";
  const fs::path t = ctx.g.out_dir / "experiment.txt";
  write_text(j, experiment_json(report));
  write_text(t, experiment_table(report));
  ctx.run->output(j);
  ctx.run->output(t);
  *ctx.out << experiment_table(report);
}

void cmd_gen_synth(Context& ctx, const SynthArgs& a, bool seed_given) {
  const SynthConfig cfg = synth_config(ctx, a.config, seed_given);
  const SynthCorpus corpus = gen_corpus(cfg);
  write_corpus(corpus, ctx.g.out_dir);
  for (const char* m : {"manifest.jsonl", "voices_shared.jsonl", "voices_biased.jsonl"}) {
    ctx.run->output(ctx.g.out_dir / m);
  }
  for (const auto* d : {&corpus.data, &corpus.shared_voices, &corpus.biased_voices}) {
    for (const auto& rec : *d) ctx.run->output(feature_path(ctx.g.out_dir / "features", rec.id));
  }
  *ctx.out << "gen-synth: " << corpus.data.size() << " records, "
           << corpus.shared_voices.size() + corpus.biased_voices.size() << " voice segments -> "
           << ctx.g.out_dir.string() << "\n";
}

/// Re-executes a recorded run into `out_dir` and checks every recorded output
/// for byte equality.
int cmd_replay(const fs::path& manifest, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  json doc;
  try {
    doc = json::parse(std::string_view(
        [&] {
          auto b = read_bytes(manifest);
          return std::string(b.begin(), b.end());
        }()));
  } catch (const json::parse_error& e) {
    throw Error(kModule, "malformed_run_manifest", e.what(), manifest.string());
  }
  if (doc.value("format", "") != kRunFormat) {
    throw Error(kModule, "malformed_run_manifest", "unknown run-manifest format", manifest.string());
  }
  for (const auto& [path, digest] : doc.at("inputs").items()) {
    if (!fs::exists(path) || file_digest(path) != digest.get<std::string>()) {
      throw Error(kModule, "input_changed", "input " + path + " differs from the recorded run", path);
    }
  }

  std::vector<std::string> args;
  const auto recorded = doc.at("argv").get<std::vector<std::string>>();
  const fs::path target = fs::absolute(out_dir);
  for (std::size_t i = 0; i < recorded.size(); ++i) {
    if (recorded[i] == "--out-dir" && i + 1 < recorded.size()) {
      ++i;
      continue;
    }
    if (recorded[i].rfind("--out-dir=", 0) == 0) continue;
    args.push_back(recorded[i]);
  }
  args.insert(args.begin(), {"--out-dir", target.string()});

  const fs::path previous = fs::current_path();
  fs::current_path(doc.at("cwd").get<std::string>());
  int rc;
  try {
    rc = run_cli(args, out, err);
  } catch (...) {
    fs::current_path(previous);
    throw;
  }
  fs::current_path(previous);
  if (rc != 0) return rc;

  std::size_t checked = 0;
  for (const auto& [rel, digest] : doc.at("outputs").items()) {
    const fs::path p = target / rel;
    if (!fs::exists(p) || file_digest(p) != digest.get<std::string>()) {
      throw Error(kModule, "output_mismatch", "replayed output " + rel + " differs from the recorded run", rel);
    }
    ++checked;
  }
  out << "replay: " << checked << " outputs identical\n";
  return 0;
}

void report_error(std::ostream& err, const std::string& module, const std::string& code,
                  const std::string& subject, const std::string& message) {
  json e;
  e["error"] = {{"module", module}, {"code", code}, {"subject", subject}, {"message", message}};
  err << e.dump() << "\n";
}

}  // namespace

fs::path feature_path(const fs::path& dir, std::string_view id) {
  std::string name;
  for (char c : id) {
    if (c == '/' || c == '%' || c == '\\') {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", static_cast<unsigned char>(c));
      name += buf;
    } else {
      name += c;
    }
  }
  return dir / (name + ".ft");
}

std::string file_digest(const fs::path& path) {
  const auto bytes = read_bytes(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Voice-conversion data augmentation toolkit for dialect identification", "vcd"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Global seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads for extract/convert/augment")
      ->check(CLI::Range(1u, 1024u))
      ->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--labels", g.labels, "Comma-separated dialect labels (default: five-way set)");

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "Manifest of audio -> log-mel feature files");
  extract->add_option("--manifest", ex.manifest)->required();
  extract->add_option("--n-mels", ex.n_mels)->capture_default_str();
  extract->add_option("--max-seconds", ex.max_seconds, "Reject recordings longer than this")->capture_default_str();

  PlanArgs pl;
  auto* plan = app.add_subcommand("plan", "Manifest + voices + policy -> conversion plan");
  plan->add_option("--manifest", pl.manifest)->required();
  plan->add_option("--voices", pl.voices, "Manifest of target-speaker material")->required();
  plan->add_option("--policy", pl.policy)
      ->check(CLI::IsMember({"fixed_single", "uniform_draw", "per_voice_full", "unbiased_shared", "biased_disjoint"}))
      ->capture_default_str();

  ConvertArgs cv;
  auto* convert = app.add_subcommand("convert", "Plan -> resynthesized manifest + features");
  convert->add_option("--plan", cv.plan)->required();
  convert->add_option("--manifest", cv.manifest)->required();
  convert->add_option("--voices", cv.voices)->required();
  convert->add_option("--features-dir", cv.features_dirs)->required();
  convert->add_option("--voice-features-dir", cv.voice_features_dirs, "Defaults to --features-dir");
  convert->add_option("--k", cv.k)->check(CLI::PositiveNumber)->capture_default_str();

  AugmentArgs au;
  auto* augment = app.add_subcommand("augment", "Manifest + recipe -> augmented manifest + features");
  augment->add_option("--manifest", au.manifest)->required();
  augment->add_option("--recipe", au.recipe)->required();
  augment->add_option("--features-dir", au.features_dirs);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Manifests -> model file + loss trace");
  train_cmd->add_option("--train-manifest", tr.manifests, "Repeat to concatenate natural and derived sets")
      ->required();
  train_cmd->add_option("--features-dir", tr.features_dirs)->required();
  train_cmd->add_option("--epochs", tr.epochs, "Default 6 (natural only) or 3 (with derived data)")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tr.lr)->check(CLI::NonNegativeNumber)->capture_default_str();
  train_cmd->add_option("--batch", tr.batch)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--hidden", tr.hidden)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_flag("--no-standardize", tr.no_standardize, "Feed raw pooled features to the network");

  EvaluateArgs ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Model + manifest -> report");
  evaluate_cmd->add_option("--model", ev.model)->required();
  evaluate_cmd->add_option("--manifest", ev.manifest)->required();
  evaluate_cmd->add_option("--features-dir", ev.features_dirs)->required();
  evaluate_cmd->add_option("--split", ev.split)->capture_default_str();
  evaluate_cmd->add_option("--in-domain", ev.in_domain, "Domain reported as the in-domain column");
  evaluate_cmd->add_option("--baseline-report", ev.baseline_report, "report.json to compute deltas against");

  SynthArgs sa;
  auto* bias = app.add_subcommand("bias-experiment", "Synthetic corpus -> baseline/unbiased/biased report");
  bias->add_option("--config", sa.config, "Flat key = value synthetic corpus config");
  bias->add_option("--epochs", sa.epochs)->check(CLI::PositiveNumber);
  bias->add_option("--lr", sa.lr)->check(CLI::NonNegativeNumber);
  bias->add_option("--batch", sa.batch)->check(CLI::PositiveNumber);
  bias->add_option("--k", sa.k)->check(CLI::PositiveNumber)->capture_default_str();

  auto* gen = app.add_subcommand("gen-synth", "Synthetic corpus -> manifests + feature files");
  gen->add_option("--config", sa.config, "Flat key = value synthetic corpus config");

  fs::path replay_manifest;
  auto* replay = app.add_subcommand("replay", "Re-run a recorded run into --out-dir and compare outputs");
  replay->add_option("--run-manifest", replay_manifest)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report_error(err, kModule, "usage", "", e.what());
    err << app.help();
    return 2;
  }

  auto* sub = app.get_subcommands().front();
  try {
    fs::create_directories(g.out_dir);
    if (sub == replay) return cmd_replay(replay_manifest, g.out_dir, out, err);

    RunRecord run(sub->get_name(), args, g.out_dir);
    for (const CLI::App* opts : {static_cast<const CLI::App*>(&app), static_cast<const CLI::App*>(sub)}) {
      for (const auto* opt : opts->get_options()) {
        if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
        if (opt->count() > 0) {
          run.config()[opt->get_name()] = opt->results();
        } else if (!opt->get_default_str().empty()) {
          run.config()[opt->get_name()] = opt->get_default_str();
        }
      }
    }
    run.config()["--seed"] = std::to_string(g.seed);
    Context ctx{g, &run, &out};
    const bool seed_given = seed_opt->count() > 0;
    if (sub == extract) cmd_extract(ctx, ex);
    else if (sub == plan) cmd_plan(ctx, pl);
    else if (sub == convert) cmd_convert(ctx, cv);
    else if (sub == augment) cmd_augment(ctx, au);
    else if (sub == train_cmd) cmd_train(ctx, tr);
    else if (sub == evaluate_cmd) cmd_evaluate(ctx, ev);
    else if (sub == bias) cmd_bias_experiment(ctx, sa, seed_given);
    else if (sub == gen) cmd_gen_synth(ctx, sa, seed_given);
    run.write();
    return 0;
  } catch (const Error& e) {
    report_error(err, e.module(), e.code(), e.subject(), e.message());
    return 1;
  } catch (const fs::filesystem_error& e) {
    report_error(err, kModule, "filesystem", e.path1().string(), e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error(err, kModule, "internal", "", e.what());
    return 1;
  }
}

}  // namespace vcd
