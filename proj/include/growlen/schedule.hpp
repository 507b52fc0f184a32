#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "growlen/errors.hpp"

namespace growlen {

enum class BudgetKind { tokens, wall_time };

// One fixed-length segment of the curriculum. `share` is the stage's
// fraction of the total budget (tokens or wall time).
struct Stage {
  int seq_len = 0;
  double share = 0.0;
};

// Ordered length stages with strictly increasing seq_len. A single stage
// reproduces a fixed-length baseline.
struct Schedule {
  std::vector<Stage> stages;
  BudgetKind budget_kind = BudgetKind::tokens;

  int final_seq_len() const { return stages.back().seq_len; }
};

// Validates lengths (strictly increasing) and budgets. Wall-time budgets
// must be shares summing to 1. Token budgets may be shares summing to 1 or
// absolute token counts, which are normalized into shares.
Schedule build_schedule(const std::vector<int>& lengths, const std::vector<double>& budgets,
                        BudgetKind kind);

struct PreviewRow {
  int stage_index = 0;
  int seq_len = 0;
  int64_t budget_tokens = 0;   // tokens kind
  double budget_seconds = 0;   // wall_time kind
  double predicted_steps = 0;  // budget / tokens_per_batch when provided
};

// Largest-remainder split of an integral total across shares; allocations
// sum to the total exactly, ties resolved toward later stages.
std::vector<int64_t> allocate_integral(const std::vector<double>& shares, int64_t total);

// Resolve shares against a total budget. Token budgets use
// largest-remainder rounding (ties to later stages) so they sum to the
// total exactly. tokens_per_batch of 0 skips step prediction.
std::vector<PreviewRow> preview(const Schedule& schedule, double total_budget,
                                int64_t tokens_per_batch = 0);

// Warnings for consecutive stage pairs whose seq_len ratio exceeds the
// threshold; large jumps risk a loss spike at the transition. A lint, not
// an error.
std::vector<std::string> gap_warning(const Schedule& schedule, double threshold = 4.0);

struct AdvanceResult {
  int stage_index = 0;
  std::vector<int> transitions;  // target stage indices crossed by this call
  bool done = false;
};

// Walks a schedule against monotone progress (tokens consumed or elapsed
// seconds). Emits each transition exactly once and `done` idempotently
// after the final budget is exhausted.
class ScheduleCursor {
 public:
  ScheduleCursor(const Schedule& schedule, double total_budget);
  // Explicit cumulative stage boundaries (the trainer quantizes token
  // budgets to whole batches before building its cursor).
  ScheduleCursor(const Schedule& schedule, std::vector<double> cumulative_budgets);

  AdvanceResult advance(double progress);

  const Schedule& schedule() const { return schedule_; }
  double stage_boundary(int stage_index) const;  // cumulative budget through stage
  double total_budget() const { return total_; }
  int stage_index() const { return stage_index_; }
  bool done() const { return done_; }

  // Checkpoint restore.
  void restore(int stage_index, double progress, bool done);

 private:
  Schedule schedule_;
  std::vector<double> cumulative_;
  double total_ = 0;
  double last_progress_ = 0;
  int stage_index_ = 0;
  bool done_ = false;
};

}  // namespace growlen
