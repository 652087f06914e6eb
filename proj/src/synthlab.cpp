#include "vcd/synthlab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"
#include "vcd/diagnostics.hpp"
#include "vcd/error.hpp"
#include "vcd/seed.hpp"

namespace vcd {
namespace {

constexpr const char* kModule = "synthlab";
constexpr int kCodebookAttempts = 10000;

struct Field {
  std::function<void(SynthConfig&, const std::string&)> set;
  std::function<std::string(const SynthConfig&)> get;
};

template <typename T>
Field field(T SynthConfig::*member) {
  return {[member](SynthConfig& c, const std::string& v) {
            std::istringstream in(v);
            T parsed{};
            in >> parsed;
            if (!in || !(in >> std::ws).eof()) throw std::invalid_argument(v);
            c.*member = parsed;
          },
          [member](const SynthConfig& c) {
            std::ostringstream out;
            out.precision(17);
            out << c.*member;
            return out.str();
          }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"n_dialects", field(&SynthConfig::n_dialects)},
      {"speakers_per_dialect_train", field(&SynthConfig::speakers_per_dialect_train)},
      {"speakers_test", field(&SynthConfig::speakers_test)},
      {"utterances_per_speaker", field(&SynthConfig::utterances_per_speaker)},
      {"utterances_per_test_speaker", field(&SynthConfig::utterances_per_test_speaker)},
      {"frames_per_utterance", field(&SynthConfig::frames_per_utterance)},
      {"feature_dim", field(&SynthConfig::feature_dim)},
      {"codebook_size", field(&SynthConfig::codebook_size)},
      {"dialect_separation", field(&SynthConfig::dialect_separation)},
      {"speaker_sigma", field(&SynthConfig::speaker_sigma)},
      {"frame_noise", field(&SynthConfig::frame_noise)},
      {"domain_shift", field(&SynthConfig::domain_shift)},
      {"shifted_domains", field(&SynthConfig::shifted_domains)},
      {"shared_voices", field(&SynthConfig::shared_voices)},
      {"voices_per_dialect", field(&SynthConfig::voices_per_dialect)},
      {"voice_frames", field(&SynthConfig::voice_frames)},
      {"seed", field(&SynthConfig::seed)},
  };
  return table;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

Vector normal_vector(std::mt19937_64& rng, Eigen::Index n, double sigma) {
  Vector v(n);
  if (sigma == 0.0) return v.setZero();
  std::normal_distribution<double> dist(0.0, sigma);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

Matrix make_codebook(const SynthConfig& cfg) {
  std::mt19937_64 rng(derive_seed(cfg.seed, "codebook"));
  const Eigen::Index f = cfg.feature_dim;
  Matrix book(cfg.codebook_size, f);
  int accepted = 0;
  for (int attempt = 0; attempt < kCodebookAttempts && accepted < cfg.codebook_size; ++attempt) {
    Vector v = normal_vector(rng, f, 1.0);
    const double norm = v.norm();
    if (norm == 0.0) continue;
    v /= norm;
    bool ok = true;
    for (int j = 0; j < accepted && ok; ++j) ok = book.row(j).dot(v) < 0.5;
    if (ok) book.row(accepted++) = v.transpose();
  }
  if (accepted < cfg.codebook_size) {
    throw Error(kModule, "codebook_rejection",
                "could not place " + std::to_string(cfg.codebook_size) +
                    " codes with pairwise cosine < 0.5 in dimension " + std::to_string(f));
  }
  return book;
}

Vector dirichlet(std::mt19937_64& rng, int n, double alpha) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Vector q(n);
  for (int i = 0; i < n; ++i) q[i] = gamma(rng);
  const double total = q.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    // Concentration so small that every draw underflowed: the limit is one-hot.
    q.setZero();
    q[std::uniform_int_distribution<int>(0, n - 1)(rng)] = 1.0;
    return q;
  }
  return q / total;
}

FeatureSequence speak(const Matrix& codebook, const Vector& code_probs, const Vector& offset,
                      int frames, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> code(code_probs.data(), code_probs.data() + code_probs.size());
  std::normal_distribution<double> eps(0.0, noise > 0.0 ? noise : 1.0);
  FeatureSequence seq;
  seq.frame_rate = 100;
  seq.config_id = "synth";
  seq.frames.resize(frames, codebook.cols());
  for (int t = 0; t < frames; ++t) {
    seq.frames.row(t) = codebook.row(code(rng)) + offset.transpose();
    if (noise > 0.0) {
      for (Eigen::Index d = 0; d < codebook.cols(); ++d) seq.frames(t, d) += eps(rng);
    }
  }
  return seq;
}

VoiceBank voice_bank(const Dataset& voices, const FeatureTable& features, const VCConfig& vc_cfg) {
  std::map<std::string, std::vector<FeatureSequence>> segments;
  for (const auto& rec : voices) segments[rec.speaker].push_back(features.at(rec.id));
  VoiceBank bank;
  for (auto& [speaker, segs] : segments) bank.emplace(speaker, build_matching_set(speaker, segs, vc_cfg));
  return bank;
}

DomainReport score(const ClassifierModel& model, const SynthCorpus& corpus,
                   const DomainReport* baseline, const std::string& title) {
  auto by_domain = evaluate_by_domain(model, corpus.data, corpus.features, Split::test);
  std::optional<std::pair<std::string, Metrics>> in_domain;
  std::vector<std::pair<std::string, Metrics>> shifted;
  for (auto& d : by_domain) {
    if (d.first == kInDomain) {
      in_domain = std::move(d);
    } else {
      shifted.push_back(std::move(d));
    }
  }
  return domain_report(std::move(shifted), std::move(in_domain), baseline, title);
}

}  // namespace

void validate(const SynthConfig& c) {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw Error(kModule, "invalid_config", std::string(name) + " must be >= 1");
  };
  positive(c.n_dialects, "n_dialects");
  positive(c.speakers_per_dialect_train, "speakers_per_dialect_train");
  positive(c.speakers_test, "speakers_test");
  positive(c.utterances_per_speaker, "utterances_per_speaker");
  positive(c.utterances_per_test_speaker, "utterances_per_test_speaker");
  positive(c.frames_per_utterance, "frames_per_utterance");
  positive(c.feature_dim, "feature_dim");
  positive(c.codebook_size, "codebook_size");
  positive(c.shifted_domains, "shifted_domains");
  positive(c.shared_voices, "shared_voices");
  positive(c.voices_per_dialect, "voices_per_dialect");
  positive(c.voice_frames, "voice_frames");
  if (c.n_dialects < 2) throw Error(kModule, "invalid_config", "n_dialects must be >= 2");
  if (!(c.dialect_separation > 0.0)) {
    throw Error(kModule, "invalid_config", "dialect_separation must be > 0");
  }
  for (double s : {c.speaker_sigma, c.frame_noise, c.domain_shift}) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw Error(kModule, "invalid_config", "noise scales must be finite and >= 0");
    }
  }
}

SynthConfig parse_synth_config(std::string_view text, SynthConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(kModule, "malformed_config", "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(), [&](const auto& f) { return f.first == key; });
    if (it == table.end()) {
      throw Error(kModule, "unknown_key", "line " + std::to_string(line_no) + ": unknown key '" + key + "'", key);
    }
    try {
      it->second.set(base, value);
    } catch (const std::invalid_argument&) {
      throw Error(kModule, "malformed_config",
                  "line " + std::to_string(line_no) + ": bad value '" + value + "' for " + key, key);
    }
  }
  validate(base);
  return base;
}

SynthConfig load_synth_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(kModule, "missing_file", "cannot open " + path.string(), path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_synth_config(buf.str());
}

std::string to_text(const SynthConfig& cfg) {
  std::string out;
  for (const auto& [key, f] : fields()) out += key + " = " + f.get(cfg) + "\n";
  return out;
}

LabelSet synth_labels(int n) {
  if (n == 5) return LabelSet::default_set();
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back("d" + std::to_string(i));
  return LabelSet(std::move(names));
}

SynthCorpus gen_corpus(const SynthConfig& cfg) {
  validate(cfg);
  if (cfg.speaker_sigma <= cfg.frame_noise) {
    warn(kModule, "speaker_sigma <= frame_noise: the speaker shortcut is weaker than frame noise");
  }
  const LabelSet labels = synth_labels(cfg.n_dialects);
  const Eigen::Index f = cfg.feature_dim;

  SynthCorpus out;
  out.data = Dataset(labels);
  out.shared_voices = Dataset(labels);
  out.biased_voices = Dataset(labels);
  out.codebook = make_codebook(cfg);
  out.code_distribution.resize(cfg.n_dialects, cfg.codebook_size);
  for (int y = 0; y < cfg.n_dialects; ++y) {
    std::mt19937_64 rng(derive_seed(cfg.seed, "dialect", static_cast<std::uint64_t>(y)));
    out.code_distribution.row(y) = dirichlet(rng, cfg.codebook_size, cfg.dialect_separation).transpose();
  }
  std::vector<Vector> shifts;
  for (int i = 0; i < cfg.shifted_domains; ++i) {
    std::mt19937_64 rng(derive_seed(cfg.seed, "domain", static_cast<std::uint64_t>(i)));
    shifts.push_back(normal_vector(rng, f, cfg.domain_shift));
  }

  auto offset_of = [&](const std::string& speaker) {
    std::mt19937_64 rng(derive_seed(cfg.seed, "speaker", speaker));
    return normal_vector(rng, f, cfg.speaker_sigma);
  };

  // Natural speakers: train, then unseen test speakers with shifted copies.
  for (int y = 0; y < cfg.n_dialects; ++y) {
    const std::string& dialect = labels.name(static_cast<std::size_t>(y));
    const Vector q = out.code_distribution.row(y).transpose();
    for (int test = 0; test < 2; ++test) {
      const int speakers = test ? cfg.speakers_test : cfg.speakers_per_dialect_train;
      const int utts = test ? cfg.utterances_per_test_speaker : cfg.utterances_per_speaker;
      for (int k = 0; k < speakers; ++k) {
        const std::string speaker = std::string(test ? "test_" : "train_") + dialect + "_" + std::to_string(k);
        const Vector offset = offset_of(speaker);
        for (int u = 0; u < utts; ++u) {
          UtteranceRecord rec;
          rec.id = speaker + "_u" + std::to_string(u);
          rec.dialect = dialect;
          rec.speaker = speaker;
          rec.domain = kInDomain;
          rec.split = test ? Split::test : Split::train;
          rec.source = "synth:" + rec.id;
          FeatureSequence seq = speak(out.codebook, q, offset, cfg.frames_per_utterance, cfg.frame_noise,
                                      derive_seed(cfg.seed, "utterance", rec.id));
          if (test) {
            for (int i = 0; i < cfg.shifted_domains; ++i) {
              UtteranceRecord copy = rec;
              copy.id = rec.id + "~shift" + std::to_string(i + 1);
              copy.domain = "shifted" + std::to_string(i + 1);
              copy.source = "synth:" + copy.id;
              FeatureSequence shifted = seq;
              shifted.frames.rowwise() += shifts[static_cast<std::size_t>(i)].transpose();
              out.features.emplace(copy.id, std::move(shifted));
              out.data.add(std::move(copy));
            }
          }
          out.features.emplace(rec.id, std::move(seq));
          out.data.add(std::move(rec));
        }
      }
    }
  }

  // Target voices use every code equally often.
  const Vector uniform = Vector::Constant(cfg.codebook_size, 1.0 / cfg.codebook_size);
  auto add_voice = [&](Dataset& into, const std::string& speaker, const std::string& dialect) {
    const Vector offset = offset_of(speaker);
    int remaining = cfg.voice_frames;
    for (int u = 0; remaining > 0; ++u) {
      const int frames = std::min(remaining, cfg.frames_per_utterance);
      remaining -= frames;
      UtteranceRecord rec;
      rec.id = speaker + "_u" + std::to_string(u);
      rec.dialect = dialect;
      rec.speaker = speaker;
      rec.domain = "voices";
      rec.split = Split::train;
      rec.source = "synth:" + rec.id;
      out.voice_features.emplace(rec.id, speak(out.codebook, uniform, offset, frames, cfg.frame_noise,
                                               derive_seed(cfg.seed, "utterance", rec.id)));
      into.add(std::move(rec));
    }
  };
  for (int v = 0; v < cfg.shared_voices; ++v) {
    add_voice(out.shared_voices, "voice_shared_" + std::to_string(v),
              labels.name(static_cast<std::size_t>(v % cfg.n_dialects)));
  }
  for (int y = 0; y < cfg.n_dialects; ++y) {
    const std::string& dialect = labels.name(static_cast<std::size_t>(y));
    for (int v = 0; v < cfg.voices_per_dialect; ++v) {
      add_voice(out.biased_voices, "voice_" + dialect + "_" + std::to_string(v), dialect);
    }
  }
  return out;
}

void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "features");
  save_manifest(corpus.data, dir / "manifest.jsonl");
  save_manifest(corpus.shared_voices, dir / "voices_shared.jsonl");
  save_manifest(corpus.biased_voices, dir / "voices_biased.jsonl");
  for (const auto* table : {&corpus.features, &corpus.voice_features}) {
    for (const auto& [id, feat] : *table) save_features(feat, dir / "features" / (id + ".ft"));
  }
}

TrainConfig bias_train_config() {
  TrainConfig cfg;
  cfg.learning_rate = 0.03;
  cfg.epochs = 100;
  cfg.batch_size = 32;
  cfg.hidden_dim = 128;
  cfg.standardize = false;
  return cfg;
}

const ConditionResult& ExperimentReport::condition(std::string_view name) const {
  for (const auto& c : conditions) {
    if (c.name == name) return c;
  }
  throw Error(kModule, "unknown_condition", "no condition '" + std::string(name) + "'", std::string(name));
}

ExperimentReport run_bias_experiment(const SynthConfig& cfg, const VCConfig& vc_cfg,
                                     const TrainConfig& train_cfg, unsigned threads) {
  const SynthCorpus corpus = gen_corpus(cfg);
  const Dataset natural_train = corpus.data.subset(Split::train);

  TrainConfig tc = train_cfg;
  tc.seed = derive_seed(cfg.seed, "train");

  ExperimentReport report;
  report.config = cfg;
  auto run = [&](const std::string& name, const Dataset& train_set, const FeatureTable& features) {
    ConditionResult c;
    c.name = name;
    c.train_size = train_set.size();
    const auto model = train(train_set, features, tc).model;
    const DomainReport* baseline = report.conditions.empty() ? nullptr : &report.conditions.front().report;
    c.report = score(model, corpus, baseline, name);
    report.conditions.push_back(std::move(c));
  };

  run("baseline_natural", natural_train, corpus.features);

  // One notice instead of one per voice: synthetic voices are small by construction.
  VCConfig vc = vc_cfg;
  if (cfg.voice_frames < vc.min_pool_warn) {
    warn(kModule, "target voices have " + std::to_string(cfg.voice_frames) + " frames each (< " +
                      std::to_string(vc.min_pool_warn) + ")");
    vc.min_pool_warn = 0;
  }
  const struct {
    const char* name;
    const Dataset* voices;
    Policy policy;
  } converted[] = {{"vc_unbiased", &corpus.shared_voices, Policy::unbiased_shared},
                   {"vc_biased", &corpus.biased_voices, Policy::biased_disjoint}};
  for (const auto& c : converted) {
    const VoiceBank bank = voice_bank(*c.voices, corpus.voice_features, vc);
    const ConversionPlan plan =
        assign_targets(natural_train, VoicePool::from_dataset(*c.voices), c.policy, derive_seed(cfg.seed, "plan", c.name));
    const Resynthesized res = execute_plan(plan, natural_train, corpus.features, bank, vc, threads);
    run(c.name, res.dataset, res.features);
  }
  return report;
}

std::string experiment_json(const ExperimentReport& report) {
  nlohmann::ordered_json j;
  j["header.backbone"] = kBackboneNote;
  j["header.averaging"] = kAveragingNote;
  for (const auto& [key, f] : fields()) j["config." + key] = f.get(report.config);
  for (const auto& c : report.conditions) {
    const std::string p = c.name + ".";
    j[p + "train_size"] = c.train_size;
    if (c.report.in_domain) {
      const Metrics& m = c.report.in_domain->second;
      j[p + "in_domain.accuracy"] = 100.0 * m.accuracy;
      j[p + "in_domain.macro_precision"] = 100.0 * m.macro_precision;
      j[p + "in_domain.macro_recall"] = 100.0 * m.macro_recall;
    }
    for (const auto& [domain, m] : c.report.per_domain) j[p + domain + ".accuracy"] = 100.0 * m.accuracy;
    j[p + "shifted.average_accuracy"] = c.report.average_accuracy;
    for (const auto& d : c.report.deltas) j[p + "delta." + d.name] = d.value;
  }
  return j.dump(2) + "\n";
}

std::string experiment_table(const ExperimentReport& report) {
  std::ostringstream out;
  out << "# " << kBackboneNote << "\n# " << kAveragingNote << "\n";
  out << "# synthetic corpus, seed " << report.config.seed << "\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-18s | %10s | %9s | %9s | %9s | %9s\n", "condition", "train size",
                "in-domain", "shifted", "Delta in", "Delta sh");
  out << line;
  for (const auto& c : report.conditions) {
    const double in = c.report.in_domain ? 100.0 * c.report.in_domain->second.accuracy : 0.0;
    std::string d_in = "", d_sh = "";
    for (const auto& d : c.report.deltas) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%+.2f", round_half_even(d.value, 2));
      (d.name == "in_domain" ? d_in : d_sh) = buf;
    }
    std::snprintf(line, sizeof line, "%-18s | %10zu | %9.2f | %9.2f | %9s | %9s\n", c.name.c_str(),
                  c.train_size, round_half_even(in, 2), round_half_even(c.report.average_accuracy, 2),
                  d_in.c_str(), d_sh.c_str());
    out << line;
  }
  return out.str();
}

}  // namespace vcd
