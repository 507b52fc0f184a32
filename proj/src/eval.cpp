#include "growlen/eval.hpp"

#include <cmath>
#include <cstdio>

namespace growlen {

void EvalConfig::validate() const {
  if (context_lengths.empty()) throw ConfigError("eval: no context lengths");
  for (size_t i = 0; i < context_lengths.size(); ++i) {
    if (context_lengths[i] < 2) throw ConfigError("eval: context lengths must be >= 2");
    if (i > 0 && context_lengths[i] < context_lengths[i - 1])
      throw ConfigError("eval: context lengths must be sorted ascending");
  }
}

const char* eval_mode_name(EvalMode mode) {
  return mode == EvalMode::extrapolation ? "extrapolation" : "interpolation";
}

double perplexity(const ModelParams& params, const Corpus& corpus, int ctx_len, EvalMode mode,
                  int trained_len, int64_t max_eval_tokens) {
  if (ctx_len < 2) throw ConfigError("perplexity: ctx_len must be >= 2");
  if (corpus.size() < ctx_len + 1)
    throw DataError("perplexity: corpus of " + std::to_string(corpus.size()) +
                    " tokens is shorter than ctx_len+1 = " + std::to_string(ctx_len + 1));

  RopeConfig rope = params.config.rope;
  if (mode == EvalMode::interpolation && ctx_len != trained_len) {
    if (trained_len < 1) throw ConfigError("perplexity: interpolation needs the trained length");
    if (ctx_len < trained_len)
      throw ConfigError("perplexity: interpolation requires ctx_len >= trained_len (" +
                        std::to_string(ctx_len) + " < " + std::to_string(trained_len) + ")");
    rope = rope.with_interpolation(static_cast<double>(ctx_len) / trained_len);
  }
  const RopeTable table = build_table(rope, ctx_len);

  int64_t windows = corpus.size() / ctx_len;
  if (max_eval_tokens > 0) windows = std::min(windows, max_eval_tokens / ctx_len);
  if (windows < 1) windows = 1;

  double nll_sum = 0.0;
  int64_t predicted = 0;
  for (int64_t w = 0; w < windows; ++w) {
    const int32_t* window = corpus.tokens.data() + w * ctx_len;
    // no tape: evaluation is a pure forward pass
    const Tensor logits = forward(params, std::span<const int32_t>(window, static_cast<size_t>(ctx_len)),
                                  table);
    const float* ld = logits.data().data();
    const int v = params.config.vocab_size;
    for (int t = 0; t + 1 < ctx_len; ++t) {
      const float* row = ld + static_cast<size_t>(t) * v;
      float mx = row[0];
      for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
      double total = 0.0;
      for (int j = 0; j < v; ++j) total += std::exp(static_cast<double>(row[j]) - mx);
      const int32_t target = window[t + 1];
      nll_sum += std::log(total) - (static_cast<double>(row[target]) - mx);
      predicted += 1;
    }
  }
  return std::exp(nll_sum / static_cast<double>(predicted));
}

PerplexityReport sweep(const ModelParams& params, const Corpus& corpus, const EvalConfig& config,
                       int trained_len, const std::string& run_id) {
  config.validate();
  // equal evaluated-token budgets across lengths where the corpus allows
  int64_t budget = config.max_eval_tokens > 0 ? config.max_eval_tokens : corpus.size();
  budget = std::min(budget, corpus.size());

  PerplexityReport rep;
  for (int ctx : config.context_lengths) {
    PerplexityRow row;
    row.run_id = run_id;
    row.ctx_len = ctx;
    row.mode = config.mode;
    row.perplexity = perplexity(params, corpus, ctx, config.mode, trained_len, budget);
    const int64_t windows = std::max<int64_t>(1, std::min(corpus.size() / ctx, budget / ctx));
    row.tokens_evaluated = windows * (ctx - 1);
    rep.rows.push_back(row);
  }
  return rep;
}

std::string PerplexityReport::to_csv() const {
  std::string out = "run_id,ctx_len,mode,perplexity,tokens_evaluated\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%s,%.6f,%lld\n", r.run_id.c_str(), r.ctx_len,
                  eval_mode_name(r.mode), r.perplexity, static_cast<long long>(r.tokens_evaluated));
    out += buf;
  }
  return out;
}

std::string PerplexityReport::to_json() const {
  std::string out = "[";
  char buf[256];
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::snprintf(buf, sizeof(buf),
                  "%s{\"run_id\":\"%s\",\"ctx_len\":%d,\"mode\":\"%s\",\"perplexity\":%.6f,"
                  "\"tokens_evaluated\":%lld}",
                  i ? "," : "", r.run_id.c_str(), r.ctx_len, eval_mode_name(r.mode), r.perplexity,
                  static_cast<long long>(r.tokens_evaluated));
    out += buf;
  }
  return out + "]";
}

ComparisonTable compare_runs(const std::vector<PerplexityReport>& reports, size_t baseline) {
  if (reports.empty()) throw ConfigError("compare: no reports");
  if (baseline >= reports.size()) throw ConfigError("compare: baseline index out of range");
  const size_t n_rows = reports[0].rows.size();
  for (const auto& rep : reports) {
    if (rep.rows.size() != n_rows) throw ConfigError("compare: reports have different lengths");
    for (size_t i = 0; i < n_rows; ++i)
      if (rep.rows[i].ctx_len != reports[0].rows[i].ctx_len)
        throw ConfigError("compare: reports have mismatched context lengths");
  }

  ComparisonTable table;
  for (const auto& rep : reports)
    table.run_ids.push_back(rep.rows.empty() ? "?" : rep.rows[0].run_id);
  for (size_t i = 0; i < n_rows; ++i) {
    ComparisonRow row;
    row.ctx_len = reports[0].rows[i].ctx_len;
    const double base = reports[baseline].rows[i].perplexity;
    for (const auto& rep : reports) {
      row.perplexities.push_back(rep.rows[i].perplexity);
      row.ratios.push_back(rep.rows[i].perplexity / base);
    }
    row.winner = 0;
    for (size_t r = 1; r < row.perplexities.size(); ++r)
      if (row.perplexities[r] < row.perplexities[row.winner]) row.winner = r;
    table.rows.push_back(row);
  }
  return table;
}

std::string ComparisonTable::to_csv() const {
  std::string out = "ctx_len";
  for (const auto& id : run_ids) out += "," + id + "_ppl," + id + "_ratio";
  out += ",winner\n";
  char buf[128];
  for (const auto& row : rows) {
    out += std::to_string(row.ctx_len);
    for (size_t r = 0; r < row.perplexities.size(); ++r) {
      std::snprintf(buf, sizeof(buf), ",%.6f,%.4f", row.perplexities[r], row.ratios[r]);
      out += buf;
    }
    out += "," + run_ids[row.winner] + "\n";
  }
  return out;
}

}  // namespace growlen
