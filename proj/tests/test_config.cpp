#include <string>

#include "doctest.h"
#include "growlen/config.hpp"
#include "growlen/digest.hpp"

using namespace growlen;

namespace {

const char* kBaseConfig = R"(
# desk experiment
[model]
vocab_size = 256
d_model = 64
n_layers = 2
n_heads = 2
seed = 5

[data]
corpus = corpus.bin
tokens_per_batch = 512
seed = 5
eval_fraction = 0.1

[schedule]
lengths = 32,64,128,256
budget_kind = tokens

[optimizer]
lr = 0.002

[train]
total_tokens = 51200
out_dir = out/test
)";

}  // namespace

TEST_CASE("a plain config parses into one arm with defaults applied") {
  const LoadedExperiment exp = parse_config_text(kBaseConfig, "test.cfg");
  REQUIRE(exp.arms.size() == 1);
  const ExperimentConfig& cfg = exp.arms[0];
  CHECK(cfg.name == "run");
  CHECK(cfg.model.d_model == 64);
  CHECK(cfg.model.head_dim == 32);
  CHECK(cfg.lengths == std::vector<int>{32, 64, 128, 256});
  REQUIRE(cfg.shares.size() == 4);
  CHECK(cfg.shares[0] == doctest::Approx(0.25));
  CHECK(cfg.optimizer.lr == doctest::Approx(0.002));
  CHECK(cfg.total_tokens == 51200);
}

TEST_CASE("unknown keys are rejected with their line number") {
  const std::string bad = std::string(kBaseConfig) + "\n[model]\nbogus_knob = 3\n";
  try {
    parse_config_text(bad, "bad.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bogus_knob") != std::string::npos);
    CHECK(msg.find("bad.cfg:") != std::string::npos);
  }
}

TEST_CASE("unknown sections and malformed lines are rejected") {
  CHECK_THROWS_AS(parse_config_text("[mystery]\nx = 1\n", "a.cfg"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[model]\nno equals sign\n", "a.cfg"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("stray = 1\n", "a.cfg"), ConfigError);
}

TEST_CASE("duplicate keys are rejected") {
  const std::string dup = "[model]\nd_model = 64\nd_model = 32\n";
  CHECK_THROWS_AS(parse_config_text(dup, "dup.cfg"), ConfigError);
}

TEST_CASE("arm sections override the base and multiply the run list") {
  const std::string text = std::string(kBaseConfig) + R"(
[arm fixed32]
schedule.lengths = 32
schedule.shares = 1.0

[arm grow]
schedule.lengths = 32,64
schedule.shares = 0.5,0.5

[arm fixed256]
schedule.lengths = 256
schedule.shares = 1.0
)";
  const LoadedExperiment exp = parse_config_text(text, "arms.cfg");
  REQUIRE(exp.arms.size() == 3);
  CHECK(exp.arms[0].name == "fixed32");
  CHECK(exp.arms[0].lengths == std::vector<int>{32});
  CHECK(exp.arms[1].name == "grow");
  CHECK(exp.arms[1].lengths == std::vector<int>{32, 64});
  CHECK(exp.arms[2].lengths == std::vector<int>{256});
  // base fields untouched in every arm
  for (const auto& arm : exp.arms) CHECK(arm.total_tokens == 51200);
}

TEST_CASE("arm keys must name a known section.key") {
  const std::string text = std::string(kBaseConfig) + "\n[arm x]\nlengths = 32\n";
  CHECK_THROWS_AS(parse_config_text(text, "armkey.cfg"), ConfigError);
  const std::string text2 = std::string(kBaseConfig) + "\n[arm x]\nschedule.bogus = 32\n";
  CHECK_THROWS_AS(parse_config_text(text2, "armkey.cfg"), ConfigError);
}

TEST_CASE("cross-field validation runs at load time") {
  // total_tokens not a whole number of batches
  const std::string bad =
      "[data]\ntokens_per_batch = 512\n[schedule]\nlengths = 32\n[train]\ntotal_tokens = 1000\n";
  CHECK_THROWS_AS(parse_config_text(bad, "cross.cfg"), ConfigError);
  // non-monotone schedule
  const std::string bad2 =
      "[data]\ntokens_per_batch = 512\n[schedule]\nlengths = 64,32\n[train]\ntotal_tokens = 512\n";
  CHECK_THROWS_AS(parse_config_text(bad2, "cross.cfg"), ScheduleError);
}

TEST_CASE("canonical round-trip keeps the digest stable") {
  const LoadedExperiment exp = parse_config_text(kBaseConfig, "t.cfg");
  const ExperimentConfig& cfg = exp.arms[0];
  const std::string canonical = cfg.canonical_text();
  const LoadedExperiment reloaded = parse_config_text(canonical, "canonical.cfg");
  CHECK(reloaded.arms[0].digest() == cfg.digest());
  CHECK(reloaded.arms[0].canonical_text() == canonical);
}

TEST_CASE("manifest lists artifacts and provenance") {
  const LoadedExperiment exp = parse_config_text(kBaseConfig, "t.cfg");
  const RunManifest m = make_manifest(exp.arms[0], 0xabcdef, {"a.jsonl", "b.ckpt"});
  const std::string json = m.to_json();
  CHECK(json.find("\"run_name\":\"run\"") != std::string::npos);
  CHECK(json.find("a.jsonl") != std::string::npos);
  CHECK(json.find("b.ckpt") != std::string::npos);
  CHECK(json.find(hex_digest(0xabcdef)) != std::string::npos);
  CHECK(json.find("started_at") != std::string::npos);
}
