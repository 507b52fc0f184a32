#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "growlen/data.hpp"
#include "growlen/eval.hpp"
#include "growlen/schedule.hpp"
#include "growlen/trainer.hpp"

namespace growlen {

extern const char* kCodeVersion;

// One experiment arm, fully resolved. Loaded from the sectioned key-value
// config format; unknown keys are rejected with line numbers.
struct ExperimentConfig {
  std::string name = "run";

  ModelConfig model = ModelConfig::small();

  // [data]
  std::string corpus_path;
  CorpusFormat corpus_format = CorpusFormat::raw_bytes;
  int64_t tokens_per_batch = 16384;
  uint64_t data_seed = 0;
  double eval_fraction = 0.1;

  // [schedule]
  std::vector<int> lengths = {128, 256, 512, 1024};
  std::vector<double> shares;  // empty = equal shares
  BudgetKind budget_kind = BudgetKind::tokens;
  double gap_threshold = 4.0;

  OptimizerConfig optimizer;

  // [train]
  int64_t total_tokens = 0;
  double total_seconds = 0.0;
  bool deterministic = true;
  std::string out_dir = "out";

  // [eval]
  std::vector<int> eval_lengths;
  std::string eval_mode = "extrapolation";  // extrapolation | interpolation | both
  int64_t max_eval_tokens = 0;

  Schedule make_schedule() const;
  TrainerConfig trainer_config() const;

  // Fixed-order serialization; reloading it reproduces the same digest.
  std::string canonical_text() const;
  uint64_t digest() const;
};

struct LoadedExperiment {
  // One config per arm; a config without [arm ...] sections yields a
  // single arm named "run".
  std::vector<ExperimentConfig> arms;
};

LoadedExperiment parse_config_text(const std::string& text, const std::string& source_name);
LoadedExperiment load_config_file(const std::string& path);

// Corpus loading with the held-out eval split: the leading
// (1 - eval_fraction) of the stream trains, the tail evaluates.
struct SplitCorpus {
  Corpus train;
  Corpus eval;
  uint64_t source_digest = 0;
};
SplitCorpus load_split_corpus(const ExperimentConfig& cfg);

// Immutable run provenance written before training starts.
struct RunManifest {
  std::string run_name;
  std::string config_digest;
  std::string corpus_digest;
  std::string code_version;
  uint64_t seed = 0;
  std::string started_at;  // ISO-8601 UTC
  std::vector<std::string> artifacts;

  std::string to_json() const;
};

RunManifest make_manifest(const ExperimentConfig& cfg, uint64_t corpus_digest,
                          const std::vector<std::string>& artifacts);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace growlen
