#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "pipeline.hpp"
#include "vcd/diagnostics.hpp"
#include "vcd/features.hpp"
#include "vcd/vc.hpp"

#include "json.hpp"

using namespace vcd;

namespace {

int cli(const std::vector<std::string>& args, std::string* out = nullptr, std::string* err = nullptr) {
  std::ostringstream o, e;
  const int rc = run_cli(args, o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return rc;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("feature paths escape separators") {
    CHECK(feature_path("/d", "a/b%c") == std::filesystem::path("/d/a%2Fb%25c.ft"));
    CHECK(feature_path("/d", "plain") == std::filesystem::path("/d/plain.ft"));
  }

  TEST_CASE("usage errors exit 2 and print help") {
    std::string out, err;
    CHECK(cli({"frobnicate"}, &out, &err) == 2);
    CHECK(err.find("Usage") != std::string::npos);
    CHECK(cli({}, &out, &err) == 2);
    CHECK(cli({"plan", "--manifest", "x"}, &out, &err) == 2);
  }

  TEST_CASE("pipeline errors are one JSON line") {
    const auto dir = testing::temp_dir("cli_err");
    std::string err;
    CHECK(cli({"--out-dir", dir.string(), "train", "--train-manifest", "/no/such.jsonl", "--features-dir", "/tmp"},
              nullptr, &err) == 1);
    const auto j = nlohmann::json::parse(err);
    CHECK(j["error"]["code"] == "missing_file");
    CHECK(j["error"]["subject"] == "/no/such.jsonl");
  }

  TEST_CASE("full pipeline runs, logs the training size and replays bit-identically") {
    ScopedWarningHandler quiet([](std::string_view, std::string_view) {});
    const auto root = testing::temp_dir("cli_pipeline");
    const auto steps = pipeline::run_all(root);
    REQUIRE(steps.size() == 7);
    for (const auto& s : steps) {
      INFO(s.name << ": " << s.err);
      CHECK(s.rc == 0);
    }
    const auto& train = steps[4];
    // 30 natural training records, 2 voices each, one augmented copy each.
    CHECK(train.out.find("train: |D_train| = 30 + 90 = 120 (natural + derived)") != std::string::npos);
    CHECK(std::filesystem::exists(root / "extract" / "features" / "w3.ft"));
    CHECK(load_features(root / "extract" / "features" / "w3.ft").dim() == 80);
    CHECK(load_features(root / "convert" / "features" / "train_msa_0_u0@voice_shared_1.ft").config_id.find("+vc:voice_shared_1") !=
          std::string::npos);

    const auto manifest = nlohmann::json::parse(pipeline::slurp(root / "train" / "run-train.json"));
    CHECK(manifest["format"] == "vcd-run/1");
    CHECK(manifest["outputs"].contains("model.md01"));
    CHECK(manifest["config"]["--seed"] == "7");

    for (const auto& s : steps) {
      const auto r = pipeline::replay(s, root / ("replay_" + s.name));
      INFO(s.name << ": " << r.err);
      CHECK(r.rc == 0);
      CHECK(r.compared > 0);
      CHECK(r.identical == r.compared);
    }
  }

  TEST_CASE("extract rejects recordings over the duration cap") {
    const auto root = testing::temp_dir("cli_too_long");
    const auto manifest = pipeline::write_wav_corpus(root);
    std::string err;
    CHECK(cli({"--out-dir", (root / "out").string(), "extract", "--manifest", manifest.string(), "--max-seconds", "0.2"},
              nullptr, &err) == 1);
    CHECK(nlohmann::json::parse(err)["error"]["code"] == "too_long");
  }

  TEST_CASE("replay notices changed inputs") {
    ScopedWarningHandler quiet([](std::string_view, std::string_view) {});
    const auto root = testing::temp_dir("cli_replay_changed");
    std::ofstream(root / "synth.cfg") << pipeline::kSmallCorpus;
    const auto gen = pipeline::run("gen-synth", root / "gen", {"gen-synth", "--config", (root / "synth.cfg").string()});
    REQUIRE(gen.rc == 0);
    std::ofstream(root / "synth.cfg", std::ios::app) << "seed = 99\n";
    const auto r = pipeline::replay(gen, root / "again");
    CHECK(r.rc == 1);
    CHECK(nlohmann::json::parse(r.err)["error"]["code"] == "input_changed");
  }
}
