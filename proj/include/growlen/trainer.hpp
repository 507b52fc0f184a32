#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "growlen/data.hpp"
#include "growlen/model.hpp"
#include "growlen/optim.hpp"
#include "growlen/schedule.hpp"

namespace growlen {

struct MetricsRecord {
  int64_t step = 0;
  int stage_index = 0;
  int seq_len = 0;
  float loss = 0.0f;
  int64_t tokens_seen = 0;
  double wall_time_s = 0.0;

  // One JSON object, fixed field order and formatting.
  std::string to_jsonl() const;
};

struct TrainerConfig {
  ModelConfig model;
  Schedule schedule;
  OptimizerConfig optimizer;

  int64_t tokens_per_batch = 16384;
  uint64_t data_seed = 0;

  // Budget; which one applies follows schedule.budget_kind. Token budgets
  // must be a whole number of batches so stage boundaries land on batch
  // boundaries and the final token count is exact.
  int64_t total_tokens = 0;
  double total_seconds = 0.0;

  // Deterministic mode: single worker, virtual wall_time_s (0) in the
  // metrics log so reruns are byte-identical. Wall-time budgets require
  // deterministic = false.
  bool deterministic = true;

  // Optional JSONL sink; streamed per step so aborted runs keep partials.
  std::string metrics_path;

  void validate() const;
};

// Live experiment state. Owns the training split of the corpus; not
// movable once running (the loader points into it).
struct TrainRun {
  TrainerConfig cfg;
  Corpus corpus;           // training split
  uint64_t source_digest;  // original (unsplit) corpus digest
  ModelParams params;
  OptimizerState opt;
  std::optional<ScheduleCursor> cursor;
  std::optional<ChunkLoader> loader;
  RopeTable table;

  int stage_index = 0;
  int64_t step = 0;
  int64_t tokens_seen = 0;
  int64_t total_steps = 0;  // 0 under wall-time budgets
  std::vector<MetricsRecord> records;

  std::ofstream metrics_out;
  std::chrono::steady_clock::time_point wall_start;
  double wall_offset = 0.0;

  TrainRun() = default;
  TrainRun(const TrainRun&) = delete;
  TrainRun& operator=(const TrainRun&) = delete;

  // (Re)attach a JSONL metrics sink, e.g. after load_checkpoint.
  void attach_metrics(const std::string& path, bool append);

  double wall_seconds() const;
  int current_seq_len() const { return cfg.schedule.stages[static_cast<size_t>(stage_index)].seq_len; }
};

uint64_t stage_loader_seed(uint64_t data_seed, int stage_index);

// Fresh run over `corpus` (already split by the caller if a holdout is
// wanted); positions the loader and rope table for stage 0.
std::unique_ptr<TrainRun> init_run(const TrainerConfig& cfg, Corpus corpus);

// One forward/backward/update on an explicit batch; shared by the trainer
// and the profiler. Gradients are zeroed after the update.
float single_train_step(ModelParams& params, OptimizerState& opt, const OptimizerConfig& cfg,
                        const Batch& batch, const RopeTable& table, double lr);

// One training step off the run's loader; appends and returns the metrics
// record. Non-finite loss aborts with a diagnostic line in the metrics
// stream.
MetricsRecord train_step(TrainRun& run, const Batch& batch);

// Advance to a longer stage: swaps the loader and rope-table extent,
// leaves parameters and optimizer moments untouched.
void transition(TrainRun& run, int next_stage_index);

struct TrainResult {
  std::vector<MetricsRecord> records;
  int64_t steps = 0;
  int64_t tokens_seen = 0;
  double wall_seconds = 0.0;
  int trained_len = 0;  // final stage seq_len
};

// Execute the full schedule to its budget. `run` remains inspectable
// afterwards (final params, counters).
TrainResult run_experiment(TrainRun& run);

// --- checkpointing ---------------------------------------------------------

// Versioned binary snapshot of everything a resume needs: config, corpus
// digest, parameters, optimizer moments, schedule progress, loader replay
// position, and a trailing content digest.
void save_checkpoint(const TrainRun& run, const std::string& path);

// Rebuilds a run from a checkpoint plus the corpus it was trained on.
// The corpus digest must match the one recorded at save time.
std::unique_ptr<TrainRun> load_checkpoint(const std::string& path, Corpus corpus);

// Header-only peek used by evaluation: model config, parameter arrays and
// the trained length, without requiring the corpus.
struct CheckpointModel {
  ModelConfig config;
  ModelParams params;
  int trained_len = 0;
  uint64_t source_digest = 0;
};
CheckpointModel load_checkpoint_model(const std::string& path);

}  // namespace growlen
