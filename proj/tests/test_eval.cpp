#include <cmath>

#include "doctest.h"
#include "growlen/corpusgen.hpp"
#include "growlen/eval.hpp"
#include "growlen/trainer.hpp"
#include "ref_model.hpp"

using namespace growlen;

namespace {

Corpus eval_corpus(uint64_t seed = 17, uint64_t size = 1 << 16) {
  CorpusGenSpec spec;
  spec.size_bytes = size;
  spec.seed = seed;
  return corpus_from_bytes(generate_corpus(spec), 256);
}

// All-zero parameters emit constant logits: a uniform predictor.
ModelParams uniform_model(int vocab) {
  ModelConfig cfg;
  cfg.vocab_size = vocab;
  cfg.d_model = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 1;
  cfg.head_dim = 16;
  cfg.rope = RopeConfig{16, 10000.0, 1.0};
  ModelParams params = init(cfg);
  params.visit([](const std::string&, Tensor& t) {
    for (auto& v : t.data()) v = 0.0f;
  });
  return params;
}

}  // namespace

TEST_CASE("a uniform predictor scores exactly the vocab size") {
  const ModelParams params = uniform_model(256);
  const Corpus corpus = eval_corpus();
  const double ppl = perplexity(params, corpus, 32, EvalMode::extrapolation, 32, 4096);
  CHECK(std::abs(ppl - 256.0) < 0.3);
  CHECK(std::abs(ppl - 256.0) / 256.0 < 0.002);
}

TEST_CASE("interpolation at factor one equals extrapolation") {
  const ModelParams params = uniform_model(256);
  const ModelParams trained = init(ModelConfig::small(3));
  const Corpus corpus = eval_corpus();
  for (const ModelParams* p : {&params, &trained}) {
    const double extrap = perplexity(*p, corpus, 64, EvalMode::extrapolation, 64, 8192);
    const double interp = perplexity(*p, corpus, 64, EvalMode::interpolation, 64, 8192);
    CHECK(std::abs(extrap - interp) < 1e-6);
  }
}

TEST_CASE("interpolation below the trained length is rejected") {
  const ModelParams params = uniform_model(256);
  const Corpus corpus = eval_corpus();
  CHECK_THROWS_AS(perplexity(params, corpus, 32, EvalMode::interpolation, 64, 0), ConfigError);
}

TEST_CASE("corpus shorter than one window is a data error") {
  const ModelParams params = uniform_model(256);
  Corpus tiny = eval_corpus();
  tiny = tiny.slice(0, 16);
  CHECK_THROWS_AS(perplexity(params, tiny, 32, EvalMode::extrapolation, 32, 0), DataError);
}

TEST_CASE("perplexity matches a scalar NLL loop on a tiny model") {
  const ModelConfig cfg = ModelConfig::tiny(256, 9);
  const ModelParams params = init(cfg);
  Corpus corpus = eval_corpus();
  corpus = corpus.slice(0, 24);  // three windows of 8
  const double got = perplexity(params, corpus, 8, EvalMode::extrapolation, 8, 0);

  // independent double-precision loop: a window's 7 in-window predictions
  // equal the mean loss of the length-7 shifted sequence (causality)
  const ref::RefParams rp = ref::RefParams::from(params);
  double nll = 0;
  int64_t count = 0;
  for (int w = 0; w < 3; ++w) {
    std::vector<int32_t> inputs(corpus.tokens.begin() + w * 8, corpus.tokens.begin() + w * 8 + 7);
    std::vector<int32_t> targets(corpus.tokens.begin() + w * 8 + 1,
                                 corpus.tokens.begin() + w * 8 + 8);
    const double mean7 = ref::forward_loss(rp, inputs, targets);
    nll += mean7 * 7;
    count += 7;
  }
  const double expect = std::exp(nll / static_cast<double>(count));
  CHECK(got == doctest::Approx(expect).epsilon(1e-4));
}

TEST_CASE("sweep emits one row per requested length, duplicates identical") {
  const ModelParams params = uniform_model(256);
  const Corpus corpus = eval_corpus();
  EvalConfig ec;
  ec.context_lengths = {16, 16, 32};
  ec.max_eval_tokens = 2048;
  const PerplexityReport rep = sweep(params, corpus, ec, 32);
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.rows[0].perplexity == rep.rows[1].perplexity);
  CHECK(rep.rows[0].ctx_len == 16);
  CHECK(rep.rows[2].ctx_len == 32);
  for (const auto& r : rep.rows) CHECK(r.perplexity >= 1.0);
}

TEST_CASE("training improves held-out perplexity over the random init") {
  CorpusGenSpec spec;
  spec.size_bytes = 1 << 18;
  spec.seed = 23;
  const Corpus full = corpus_from_bytes(generate_corpus(spec), 256);
  const Corpus train = full.slice(0, (1 << 18) - 8192);
  const Corpus held = full.slice((1 << 18) - 8192, 1 << 18);

  TrainerConfig tc;
  tc.model = ModelConfig::small(7);
  tc.schedule = build_schedule({32}, {1.0}, BudgetKind::tokens);
  tc.optimizer.lr = 2e-3;
  tc.tokens_per_batch = 1024;
  tc.total_tokens = 1024 * 120;
  tc.data_seed = 7;

  const ModelParams before = init(tc.model);
  const double ppl_before = perplexity(before, held, 32, EvalMode::extrapolation, 32, 4096);

  auto run = init_run(tc, train);
  run_experiment(*run);
  const double ppl_after = perplexity(run->params, held, 32, EvalMode::extrapolation, 32, 4096);
  CHECK(ppl_after < ppl_before);
}

TEST_CASE("comparing a report to itself yields unit ratios") {
  const ModelParams params = uniform_model(256);
  const Corpus corpus = eval_corpus();
  EvalConfig ec;
  ec.context_lengths = {16, 32};
  ec.max_eval_tokens = 1024;
  const PerplexityReport rep = sweep(params, corpus, ec, 32, "a");
  const ComparisonTable table = compare_runs({rep, rep}, 0);
  for (const auto& row : table.rows) {
    CHECK(row.ratios[0] == doctest::Approx(1.0));
    CHECK(row.ratios[1] == doctest::Approx(1.0));
  }
}

TEST_CASE("the winner flag marks the lowest perplexity per row") {
  PerplexityReport a, b;
  for (int ctx : {16, 32}) {
    PerplexityRow ra{"a", ctx, EvalMode::extrapolation, ctx == 16 ? 10.0 : 50.0, 100};
    PerplexityRow rb{"b", ctx, EvalMode::extrapolation, ctx == 16 ? 20.0 : 40.0, 100};
    a.rows.push_back(ra);
    b.rows.push_back(rb);
  }
  const ComparisonTable table = compare_runs({a, b}, 0);
  CHECK(table.rows[0].winner == 0);
  CHECK(table.rows[1].winner == 1);
  CHECK(table.to_csv().find("winner") != std::string::npos);
}

TEST_CASE("mismatched context lengths across reports are rejected") {
  PerplexityReport a, b;
  a.rows.push_back(PerplexityRow{"a", 16, EvalMode::extrapolation, 10.0, 100});
  b.rows.push_back(PerplexityRow{"b", 32, EvalMode::extrapolation, 10.0, 100});
  CHECK_THROWS_AS(compare_runs({a, b}, 0), ConfigError);
}
