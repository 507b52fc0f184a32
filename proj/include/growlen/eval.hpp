#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "growlen/data.hpp"
#include "growlen/model.hpp"

namespace growlen {

enum class EvalMode { extrapolation, interpolation };

struct EvalConfig {
  std::vector<int> context_lengths;  // positive, ascending
  EvalMode mode = EvalMode::extrapolation;
  int64_t max_eval_tokens = 0;  // 0 = use the whole corpus

  void validate() const;
};

struct PerplexityRow {
  std::string run_id;
  int ctx_len = 0;
  EvalMode mode = EvalMode::extrapolation;
  double perplexity = 0.0;
  int64_t tokens_evaluated = 0;
};

struct PerplexityReport {
  std::vector<PerplexityRow> rows;
  std::string to_csv() const;
  std::string to_json() const;
};

const char* eval_mode_name(EvalMode mode);

// exp(mean next-token NLL) over non-overlapping windows of ctx_len. The
// first token of each window has no prediction and is excluded.
// Extrapolation builds an unscaled table of extent ctx_len; interpolation
// rescales positions by ctx_len / trained_len (requires ctx_len >
// trained_len; equal lengths reduce to extrapolation exactly).
double perplexity(const ModelParams& params, const Corpus& corpus, int ctx_len, EvalMode mode,
                  int trained_len, int64_t max_eval_tokens = 0);

// One perplexity per requested context length, equal evaluated-token
// budgets per length where the corpus allows.
PerplexityReport sweep(const ModelParams& params, const Corpus& corpus, const EvalConfig& config,
                       int trained_len, const std::string& run_id = "run");

struct ComparisonRow {
  int ctx_len = 0;
  std::vector<double> perplexities;  // one per report, report order
  std::vector<double> ratios;        // vs the baseline report
  size_t winner = 0;                 // index of the lowest perplexity
};

struct ComparisonTable {
  std::vector<std::string> run_ids;
  std::vector<ComparisonRow> rows;
  std::string to_csv() const;
};

// Per-length perplexity ratios against reports[baseline]; all reports must
// share identical context lengths.
ComparisonTable compare_runs(const std::vector<PerplexityReport>& reports, size_t baseline = 0);

}  // namespace growlen
