#include <map>
#include <tuple>
#include <set>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "vcd/core.hpp"
#include "vcd/error.hpp"

using namespace vcd;
using testing::error_code;

namespace {

std::string line(const std::string& id, const std::string& dialect, const std::string& split = "train",
                 const std::string& provenance = "natural", const std::string& extra = "") {
  return R"({"id":")" + id + R"(","source":"a/)" + id + R"(.wav","dialect":")" + dialect +
         R"(","speaker":"s_)" + id + R"(","domain":"radio","split":")" + split + R"(","provenance":")" +
         provenance + "\"" + extra + "}\n";
}

Dataset natural_set(int n, const LabelSet& labels = LabelSet::default_set()) {
  Dataset d(labels);
  for (int i = 0; i < n; ++i) {
    UtteranceRecord r;
    r.id = "u" + std::to_string(i);
    r.dialect = labels.name(static_cast<std::size_t>(i) % labels.size());
    r.speaker = "spk" + std::to_string(i);
    r.domain = "radio";
    d.add(r);
  }
  return d;
}

VoicePool pool_of(int t) {
  VoicePool p;
  for (int i = 0; i < t; ++i) p.speakers.push_back("v" + std::to_string(i));
  return p;
}

}  // namespace

TEST_SUITE("core") {
  TEST_CASE("three-line manifest with a custom label set") {
    const LabelSet labels = LabelSet::parse("msa,gulf,egyptian");
    std::istringstream in(line("a", "msa") + line("b", "gulf") + line("c", "egyptian", "test"));
    const Dataset d = parse_manifest(in, labels);
    CHECK(d.size() == 3);
    CHECK(d.labels() == labels);
    CHECK(d[0].id == "a");
    CHECK(d[2].split == Split::test);
    CHECK(d.label_index(d[2]) == 2);
  }

  TEST_CASE("duplicate id names the record") {
    std::istringstream in(line("u1", "msa") + line("u1", "gulf"));
    try {
      parse_manifest(in, LabelSet::default_set());
      FAIL("expected duplicate_id");
    } catch (const Error& e) {
      CHECK(e.code() == "duplicate_id");
      CHECK(e.subject() == "u1");
    }
  }

  TEST_CASE("label outside the set is rejected") {
    std::istringstream in(line("u1", "berber"));
    CHECK(error_code([&] { parse_manifest(in, LabelSet::default_set()); }) == "unknown_label");
  }

  TEST_CASE("malformed lines carry the line number") {
    std::istringstream in(line("u1", "msa") + "{not json\n");
    try {
      parse_manifest(in, LabelSet::default_set());
      FAIL("expected malformed_line");
    } catch (const Error& e) {
      CHECK(e.code() == "malformed_line");
      CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
  }

  TEST_CASE("unknown and missing keys") {
    std::istringstream extra(line("u1", "msa", "train", "natural", R"(,"gender":"f")"));
    CHECK(error_code([&] { parse_manifest(extra, LabelSet::default_set()); }) == "unknown_key");
    std::istringstream missing(R"({"id":"u1","dialect":"msa"})" "\n");
    CHECK(error_code([&] { parse_manifest(missing, LabelSet::default_set()); }) == "missing_key");
  }

  TEST_CASE("provenance consistency") {
    std::istringstream natural_target(line("u1", "msa", "train", "natural", R"(,"target_speaker":"v1")"));
    CHECK(error_code([&] { parse_manifest(natural_target, LabelSet::default_set()); }) == "natural_with_target");
    std::istringstream resynth_no_target(line("u1", "msa", "train", "resynthesized"));
    CHECK(error_code([&] { parse_manifest(resynth_no_target, LabelSet::default_set()); }) == "missing_target");
    std::istringstream ok(line("u1@v1", "msa", "train", "resynthesized", R"(,"target_speaker":"v1")") +
                          line("u1#noise", "msa", "train", "augmented:noise"));
    const Dataset d = parse_manifest(ok, LabelSet::default_set());
    REQUIRE(d[0].target_speaker());
    CHECK(*d[0].target_speaker() == "v1");
    CHECK(d[1].provenance == Provenance::augmented("noise"));
  }

  TEST_CASE("missing file and empty manifest") {
    CHECK(error_code([] { load_manifest("/nonexistent/manifest.jsonl"); }) == "missing_file");
    std::istringstream empty("");
    CHECK(error_code([&] { parse_manifest(empty, LabelSet::default_set()); }) == "empty_manifest");
  }

  TEST_CASE("manifest round trip") {
    std::istringstream in(line("a", "msa") + line("b@v", "gulf", "train", "resynthesized", R"(,"target_speaker":"v")") +
                          line("c", "egyptian", "dev"));
    const Dataset d = parse_manifest(in, LabelSet::default_set());
    const auto dir = testing::temp_dir("core_roundtrip");
    save_manifest(d, dir / "m.jsonl");
    const Dataset back = load_manifest(dir / "m.jsonl");
    REQUIRE(back.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(back[i] == d[i]);
  }

  TEST_CASE("fixed_single: N=4, T=1 gives four pairs to the same voice") {
    const auto plan = assign_targets(natural_set(4), pool_of(1), Policy::fixed_single, 7);
    CHECK(plan.pairs.size() == 4);
    for (const auto& p : plan.pairs) CHECK(p.target_id == "v0");
    CHECK(error_code([] { assign_targets(natural_set(4), pool_of(2), Policy::fixed_single, 7); }) == "pool_size");
  }

  TEST_CASE("per_voice_full: N=10, T=4 gives 40 pairs and 5N with natural data") {
    const Dataset d = natural_set(10);
    const auto plan = assign_targets(d, pool_of(4), Policy::per_voice_full, 1);
    CHECK(plan.pairs.size() == 40);
    std::map<std::string, std::set<std::string>> targets;
    for (const auto& p : plan.pairs) targets[p.source_id].insert(p.target_id);
    for (const auto& [src, t] : targets) CHECK(t.size() == 4);
    CHECK(d.size() + plan.pairs.size() == 5 * d.size());
  }

  TEST_CASE("uniform_draw: seeds differ, per-voice counts stay within binomial bounds") {
    const Dataset d = natural_set(100);
    const auto a = assign_targets(d, pool_of(4), Policy::uniform_draw, 1);
    const auto b = assign_targets(d, pool_of(4), Policy::uniform_draw, 2);
    CHECK(a.pairs.size() == 100);
    CHECK(a.pairs != b.pairs);
    // Binomial(100, 1/4): 99% two-sided interval is [14, 37].
    for (const auto* plan : {&a, &b}) {
      std::map<std::string, int> counts;
      for (const auto& p : plan->pairs) ++counts[p.target_id];
      for (const auto& [v, c] : counts) {
        CHECK(c >= 14);
        CHECK(c <= 37);
      }
    }
    CHECK(assign_targets(d, pool_of(4), Policy::uniform_draw, 1) == a);
  }

  TEST_CASE("unbiased_shared draws every dialect from the same set") {
    const Dataset d = natural_set(500);
    const auto plan = assign_targets(d, pool_of(4), Policy::unbiased_shared, 3);
    std::map<std::string, std::set<std::string>> per_dialect;
    for (const auto& p : plan.pairs) per_dialect[d.find(p.source_id)->dialect].insert(p.target_id);
    for (const auto& [dialect, voices] : per_dialect) CHECK(voices.size() == 4);
  }

  TEST_CASE("biased_disjoint keeps each record within its dialect's speakers") {
    const LabelSet labels = LabelSet::parse("a,b");
    const Dataset d = natural_set(20, labels);
    VoicePool pool;
    pool.speakers = {"a1", "a2", "b1", "b2"};
    pool.by_dialect = {{"a", {"a1", "a2"}}, {"b", {"b1", "b2"}}};
    const auto plan = assign_targets(d, pool, Policy::biased_disjoint, 5);
    CHECK(plan.pairs.size() == 20);
    for (const auto& p : plan.pairs) {
      const auto& own = pool.by_dialect.at(d.find(p.source_id)->dialect);
      CHECK(std::find(own.begin(), own.end(), p.target_id) != own.end());
    }

    VoicePool overlap = pool;
    overlap.by_dialect["b"] = {"a1", "b2"};
    CHECK(error_code([&] { assign_targets(d, overlap, Policy::biased_disjoint, 5); }) == "incomplete_partition");
    VoicePool unequal = pool;
    unequal.by_dialect["b"] = {"b1"};
    CHECK(error_code([&] { assign_targets(d, unequal, Policy::biased_disjoint, 5); }) == "incomplete_partition");
    VoicePool missing = pool;
    missing.by_dialect.erase("b");
    CHECK(error_code([&] { assign_targets(d, missing, Policy::biased_disjoint, 5); }) == "incomplete_partition");
  }

  TEST_CASE("empty pool and unknown policy") {
    CHECK(error_code([] { assign_targets(natural_set(3), VoicePool{}, Policy::uniform_draw, 1); }) == "empty_pool");
    CHECK(error_code([] { parse_policy("round_robin"); }) == "unknown_policy");
    CHECK(parse_policy("biased_disjoint") == Policy::biased_disjoint);
  }

  TEST_CASE("only natural training records are planned") {
    Dataset d = natural_set(3);
    UtteranceRecord test_rec = d[0];
    test_rec.id = "t0";
    test_rec.split = Split::test;
    d.add(test_rec);
    const auto plan = assign_targets(d, pool_of(2), Policy::per_voice_full, 1);
    CHECK(plan.pairs.size() == 6);
    for (const auto& p : plan.pairs) CHECK(p.source_id != "t0");
  }

  TEST_CASE("plan round trip") {
    const auto plan = assign_targets(natural_set(5), pool_of(3), Policy::uniform_draw, 11);
    const auto dir = testing::temp_dir("core_plan");
    save_plan(plan, dir / "plan.json");
    CHECK(load_plan(dir / "plan.json") == plan);
  }

  TEST_CASE("concat_train sizes and suffixes") {
    const Dataset natural = natural_set(10);
    auto derived = [&](int voices) {
      Dataset r(natural.labels());
      for (int v = 0; v < voices; ++v) {
        for (const auto& rec : natural) {
          UtteranceRecord c = rec;
          c.provenance = Provenance::resynthesized("v" + std::to_string(v));
          c.speaker = "v" + std::to_string(v);
          c.id = derived_id(rec.id, c.provenance);
          r.add(c);
        }
      }
      return r;
    };
    CHECK(concat_train(natural, derived(1)).size() == 20);
    CHECK(concat_train(natural, derived(4)).size() == 50);
    const Dataset same = concat_train(natural, Dataset(natural.labels()));
    REQUIRE(same.size() == natural.size());
    for (std::size_t i = 0; i < same.size(); ++i) CHECK(same[i] == natural[i]);

    const Dataset joined = concat_train(natural, derived(2));
    for (std::size_t i = 0; i < 10; ++i) CHECK(joined[i].provenance.is_natural());
    CHECK(joined[10].id == "u0@v0");
    CHECK(error_code([&] { concat_train(concat_train(natural, derived(1)), derived(2)); }) == "id_collision");
  }

  TEST_CASE("concat_train errors") {
    const Dataset natural = natural_set(4);
    CHECK(error_code([&] { concat_train(natural, natural_set(2)); }) == "not_derived");
    CHECK(error_code([&] { concat_train(natural, Dataset(LabelSet::parse("x,y"))); }) == "label_mismatch");
    Dataset clash(natural.labels());
    UtteranceRecord r = natural[0];
    r.provenance = Provenance::resynthesized("v");
    r.id = "u0@v";
    clash.add(r);
    CHECK(error_code([&] { concat_train(concat_train(natural, clash), clash); }) == "id_collision");
  }

  TEST_CASE("voice pool from a voice manifest") {
    const LabelSet labels = LabelSet::parse("a,b");
    Dataset voices(labels);
    for (const auto& [id, spk, dialect] : std::vector<std::tuple<std::string, std::string, std::string>>{
             {"x1", "va", "a"}, {"x2", "va", "a"}, {"x3", "vb", "b"}}) {
      UtteranceRecord r;
      r.id = id;
      r.speaker = spk;
      r.dialect = dialect;
      voices.add(r);
    }
    const VoicePool pool = VoicePool::from_dataset(voices);
    CHECK(pool.speakers == std::vector<std::string>{"va", "vb"});
    CHECK(pool.by_dialect.at("a") == std::vector<std::string>{"va"});
    UtteranceRecord r;
    r.id = "x4";
    r.speaker = "va";
    r.dialect = "b";
    voices.add(r);
    CHECK(error_code([&] { VoicePool::from_dataset(voices); }) == "speaker_in_two_dialects");
  }
}
