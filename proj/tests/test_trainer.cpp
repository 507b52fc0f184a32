#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "growlen/corpusgen.hpp"
#include "growlen/trainer.hpp"

using namespace growlen;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("growlen_trainer_" + name)).string();
}

Corpus test_corpus(uint64_t seed = 7, uint64_t size = 1 << 18) {
  CorpusGenSpec spec;
  spec.size_bytes = size;
  spec.seed = seed;
  return corpus_from_bytes(generate_corpus(spec), 256);
}

TrainerConfig small_config(uint64_t seed, std::vector<int> lengths, int64_t total_tokens,
                           int64_t tokens_per_batch = 512) {
  TrainerConfig tc;
  tc.model = ModelConfig::small(seed);
  std::vector<double> shares(lengths.size(), 1.0 / static_cast<double>(lengths.size()));
  tc.schedule = build_schedule(lengths, shares, BudgetKind::tokens);
  tc.optimizer.lr = 2e-3;
  tc.tokens_per_batch = tokens_per_batch;
  tc.data_seed = seed;
  tc.total_tokens = total_tokens;
  return tc;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("repeated steps on one fixed batch overfit it") {
  const Corpus corpus = test_corpus();
  ModelParams params = init(ModelConfig::tiny(256, 1));
  OptimizerState opt = OptimizerState::init(params);
  OptimizerConfig ocfg;
  ocfg.lr = 1e-2;
  const RopeTable table = build_table(params.config.rope, 16);
  ChunkLoader loader = make_loader(corpus, 16, 64, 1);
  const Batch batch = loader.next_batch();

  const float initial = single_train_step(params, opt, ocfg, batch, table, ocfg.lr);
  float last = initial;
  for (int i = 0; i < 199; ++i) last = single_train_step(params, opt, ocfg, batch, table, ocfg.lr);
  CHECK(last < 0.1f * initial);
}

TEST_CASE("initial loss on a byte vocab sits near log 256") {
  const Corpus corpus = test_corpus();
  TrainerConfig tc = small_config(3, {32}, 512 * 4);
  auto run = init_run(tc, corpus);
  const Batch batch = run->loader->next_batch();
  const MetricsRecord rec = train_step(*run, batch);
  CHECK(std::abs(rec.loss - std::log(256.0)) < 0.5);
}

TEST_CASE("same seed and corpus give a bitwise-identical loss trajectory") {
  const Corpus corpus = test_corpus();
  std::vector<float> first;
  for (int repeat = 0; repeat < 2; ++repeat) {
    TrainerConfig tc = small_config(11, {32, 64}, 512 * 20);
    auto run = init_run(tc, corpus);
    const TrainResult result = run_experiment(*run);
    if (repeat == 0) {
      for (const auto& r : result.records) first.push_back(r.loss);
    } else {
      REQUIRE(result.records.size() == first.size());
      for (size_t i = 0; i < first.size(); ++i) CHECK(result.records[i].loss == first[i]);
    }
  }
}

TEST_CASE("token accounting is exact across a staged run") {
  const Corpus corpus = test_corpus();
  TrainerConfig tc = small_config(5, {32, 64, 128}, 512 * 30);
  auto run = init_run(tc, corpus);
  const TrainResult result = run_experiment(*run);
  CHECK(result.tokens_seen == tc.total_tokens);
  CHECK(result.steps == 30);
  for (size_t i = 0; i < result.records.size(); ++i) {
    CHECK(result.records[i].step == static_cast<int64_t>(i) + 1);
    CHECK(result.records[i].tokens_seen == static_cast<int64_t>(i + 1) * 512);
  }
}

TEST_CASE("transition leaves parameters and moments untouched") {
  const Corpus corpus = test_corpus();
  TrainerConfig tc = small_config(9, {32, 64}, 512 * 8);
  auto run = init_run(tc, corpus);
  for (int i = 0; i < 3; ++i) train_step(*run, run->loader->next_batch());

  const uint64_t params_before = run->params.checksum();
  const int64_t opt_step_before = run->opt.step;
  const auto m_before = run->opt.m;
  transition(*run, 1);
  CHECK(run->params.checksum() == params_before);
  CHECK(run->opt.step == opt_step_before);
  CHECK(run->opt.m == m_before);
  CHECK(run->current_seq_len() == 64);
  CHECK(run->table.max_position() == 64);

  // counters continue across the boundary
  train_step(*run, run->loader->next_batch());
  CHECK(run->opt.step == opt_step_before + 1);
}

TEST_CASE("transition only moves to a strictly later stage") {
  const Corpus corpus = test_corpus();
  TrainerConfig tc = small_config(2, {32, 64}, 512 * 4);
  auto run = init_run(tc, corpus);
  CHECK_THROWS_AS(transition(*run, 0), ContractError);
  CHECK_THROWS_AS(transition(*run, 2), ContractError);
}

TEST_CASE("single-stage run equals a hand-rolled fixed-length loop bitwise") {
  const Corpus corpus = test_corpus();
  const int64_t tpb = 512;
  const int64_t steps = 12;
  TrainerConfig tc = small_config(21, {64}, tpb * steps);

  auto run = init_run(tc, corpus);
  const TrainResult scheduled = run_experiment(*run);

  // fixed-length trainer written against the primitives, no schedule machinery
  ModelParams params = init(tc.model);
  OptimizerState opt = OptimizerState::init(params);
  const RopeTable table = build_table(tc.model.rope, 64);
  ChunkLoader loader = make_loader(corpus, 64, tpb, stage_loader_seed(tc.data_seed, 0));
  std::vector<float> losses;
  for (int64_t s = 0; s < steps; ++s) {
    const Batch batch = loader.next_batch();
    const double lr = lr_at(tc.optimizer, s, steps);
    losses.push_back(single_train_step(params, opt, tc.optimizer, batch, table, lr));
  }

  REQUIRE(scheduled.records.size() == losses.size());
  for (size_t i = 0; i < losses.size(); ++i) CHECK(scheduled.records[i].loss == losses[i]);
  CHECK(run->params.checksum() == params.checksum());
}

TEST_CASE("metrics jsonl is byte-identical across reruns") {
  const Corpus corpus = test_corpus();
  const std::string path_a = temp_path("metrics_a.jsonl");
  const std::string path_b = temp_path("metrics_b.jsonl");
  for (const auto& path : {path_a, path_b}) {
    TrainerConfig tc = small_config(33, {32, 64}, 512 * 10);
    tc.metrics_path = path;
    auto run = init_run(tc, corpus);
    run_experiment(*run);
  }
  const std::string a = read_file(path_a);
  CHECK(!a.empty());
  CHECK(a == read_file(path_b));
  std::filesystem::remove(path_a);
  std::filesystem::remove(path_b);
}

TEST_CASE("non-finite loss aborts with a numeric error and diagnostic line") {
  const Corpus corpus = test_corpus();
  const std::string path = temp_path("abort.jsonl");
  TrainerConfig tc = small_config(4, {32}, 512 * 4);
  tc.metrics_path = path;
  auto run = init_run(tc, corpus);
  const Batch batch = run->loader->next_batch();
  // poison the embedding row of a token that actually occurs in the batch
  const int d = tc.model.d_model;
  run->params.embedding.data()[static_cast<size_t>(batch.inputs[0]) * d] = std::nanf("");
  CHECK_THROWS_AS(train_step(*run, batch), NumericError);
  const std::string log = read_file(path);
  CHECK(log.find("abort") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint round-trips bitwise and resumes exactly") {
  const Corpus corpus = test_corpus();
  const std::string ckpt = temp_path("roundtrip.ckpt");
  const std::string ckpt2 = temp_path("roundtrip2.ckpt");

  TrainerConfig tc = small_config(55, {32, 64}, 512 * 20);
  auto run = init_run(tc, corpus);
  // stop mid-stage: 7 steps of 10 in stage 0
  for (int i = 0; i < 7; ++i) {
    train_step(*run, run->loader->next_batch());
    run->cursor->advance(static_cast<double>(run->tokens_seen));
  }
  save_checkpoint(*run, ckpt);

  // save -> load -> save produces identical bytes
  auto loaded = load_checkpoint(ckpt, corpus);
  CHECK(loaded->params.checksum() == run->params.checksum());
  CHECK(loaded->step == run->step);
  save_checkpoint(*loaded, ckpt2);
  CHECK(read_file(ckpt) == read_file(ckpt2));

  // an unbroken run and the resumed run agree on the next 10+ records;
  // the unbroken result also carries the 7 pre-checkpoint records
  const TrainResult resumed = run_experiment(*loaded);
  const TrainResult unbroken = run_experiment(*run);
  REQUIRE(resumed.records.size() == 13);
  REQUIRE(unbroken.records.size() == 20);
  for (size_t i = 0; i < resumed.records.size(); ++i) {
    CHECK(resumed.records[i].loss == unbroken.records[i + 7].loss);
    CHECK(resumed.records[i].seq_len == unbroken.records[i + 7].seq_len);
    CHECK(resumed.records[i].tokens_seen == unbroken.records[i + 7].tokens_seen);
  }
  CHECK(loaded->params.checksum() == run->params.checksum());

  std::filesystem::remove(ckpt);
  std::filesystem::remove(ckpt2);
}

TEST_CASE("a corrupted checkpoint byte fails closed") {
  const Corpus corpus = test_corpus();
  const std::string ckpt = temp_path("corrupt.ckpt");
  TrainerConfig tc = small_config(66, {32}, 512 * 4);
  auto run = init_run(tc, corpus);
  train_step(*run, run->loader->next_batch());
  save_checkpoint(*run, ckpt);

  std::string bytes = read_file(ckpt);
  bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
  std::ofstream out(ckpt, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  CHECK_THROWS_AS(load_checkpoint(ckpt, corpus), IntegrityError);
  std::filesystem::remove(ckpt);
}

TEST_CASE("a version-bumped checkpoint is a format error") {
  const Corpus corpus = test_corpus();
  const std::string ckpt = temp_path("version.ckpt");
  TrainerConfig tc = small_config(88, {32}, 512 * 4);
  auto run = init_run(tc, corpus);
  save_checkpoint(*run, ckpt);

  // bump the version field (bytes 4..7) and re-sign the trailing digest
  std::string bytes = read_file(ckpt);
  bytes[4] = static_cast<char>(bytes[4] + 1);
  uint64_t digest = 0xcbf29ce484222325ull;
  for (size_t i = 0; i + 8 < bytes.size(); ++i) {
    digest ^= static_cast<unsigned char>(bytes[i]);
    digest *= 0x100000001b3ull;
  }
  std::memcpy(bytes.data() + bytes.size() - 8, &digest, 8);
  std::ofstream out(ckpt, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  CHECK_THROWS_AS(load_checkpoint(ckpt, corpus), FormatError);
  std::filesystem::remove(ckpt);
}

TEST_CASE("loading against a different corpus is rejected") {
  const Corpus corpus = test_corpus(7);
  const Corpus other = test_corpus(8);
  const std::string ckpt = temp_path("othercorpus.ckpt");
  TrainerConfig tc = small_config(77, {32}, 512 * 4);
  auto run = init_run(tc, corpus);
  save_checkpoint(*run, ckpt);
  CHECK_THROWS_AS(load_checkpoint(ckpt, other), DataError);
  std::filesystem::remove(ckpt);
}

TEST_CASE("wall-time budgets require non-deterministic mode") {
  TrainerConfig tc = small_config(1, {32}, 0);
  tc.schedule = build_schedule({32}, {1.0}, BudgetKind::wall_time);
  tc.total_seconds = 5.0;
  tc.total_tokens = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc.deterministic = false;
  CHECK_NOTHROW(tc.validate());
}

TEST_CASE("a wall-time run stops within one batch of the deadline") {
  const Corpus corpus = test_corpus();
  TrainerConfig tc = small_config(2, {32}, 0, 512);
  tc.schedule = build_schedule({32}, {1.0}, BudgetKind::wall_time);
  tc.total_tokens = 0;
  tc.total_seconds = 1.5;
  tc.deterministic = false;
  auto run = init_run(tc, corpus);
  const TrainResult result = run_experiment(*run);
  CHECK(result.steps >= 1);
  // finished at most one step past the deadline
  CHECK(result.records.back().wall_time_s >= 0.0);
  CHECK(result.wall_seconds < tc.total_seconds + 0.5);
}
