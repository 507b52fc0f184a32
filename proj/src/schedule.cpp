#include "growlen/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace growlen {

Schedule build_schedule(const std::vector<int>& lengths, const std::vector<double>& budgets,
                        BudgetKind kind) {
  if (lengths.empty()) throw ConfigError("schedule: at least one stage required");
  if (lengths.size() != budgets.size())
    throw ConfigError("schedule: " + std::to_string(lengths.size()) + " lengths but " +
                      std::to_string(budgets.size()) + " budgets");
  for (size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] < 2) throw ScheduleError("schedule: seq_len must be >= 2");
    if (i > 0 && lengths[i] <= lengths[i - 1])
      throw ScheduleError("schedule: lengths must be strictly increasing, got " +
                          std::to_string(lengths[i - 1]) + " then " + std::to_string(lengths[i]));
    if (!(budgets[i] > 0)) throw ConfigError("schedule: budgets must be positive");
  }

  const double total = std::accumulate(budgets.begin(), budgets.end(), 0.0);
  const bool is_shares = std::abs(total - 1.0) <= 1e-9;
  if (kind == BudgetKind::wall_time && !is_shares)
    throw ConfigError("schedule: wall-time shares sum to " + std::to_string(total) + ", expected 1");

  Schedule s;
  s.budget_kind = kind;
  for (size_t i = 0; i < lengths.size(); ++i)
    s.stages.push_back(Stage{lengths[i], is_shares ? budgets[i] : budgets[i] / total});
  return s;
}

std::vector<int64_t> allocate_integral(const std::vector<double>& shares, int64_t total) {
  const size_t n = shares.size();
  std::vector<int64_t> alloc(n);
  std::vector<double> frac(n);
  int64_t used = 0;
  for (size_t i = 0; i < n; ++i) {
    const double exact = shares[i] * static_cast<double>(total);
    alloc[i] = static_cast<int64_t>(std::floor(exact));
    frac[i] = exact - std::floor(exact);
    used += alloc[i];
  }
  int64_t leftover = total - used;
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&frac](size_t a, size_t b) {
    if (frac[a] != frac[b]) return frac[a] > frac[b];
    return a > b;  // tie: later stage first
  });
  for (size_t j = 0; leftover > 0; j = (j + 1) % n, --leftover) alloc[order[j]] += 1;
  return alloc;
}

std::vector<PreviewRow> preview(const Schedule& schedule, double total_budget,
                                int64_t tokens_per_batch) {
  if (!(total_budget > 0)) throw ConfigError("preview: total budget must be positive");
  const size_t n = schedule.stages.size();
  std::vector<PreviewRow> rows(n);
  std::vector<double> shares(n);
  for (size_t i = 0; i < n; ++i) {
    rows[i].stage_index = static_cast<int>(i);
    rows[i].seq_len = schedule.stages[i].seq_len;
    shares[i] = schedule.stages[i].share;
  }

  if (schedule.budget_kind == BudgetKind::tokens) {
    const auto alloc = allocate_integral(shares, static_cast<int64_t>(std::llround(total_budget)));
    for (size_t i = 0; i < n; ++i) {
      rows[i].budget_tokens = alloc[i];
      if (tokens_per_batch > 0)
        rows[i].predicted_steps = static_cast<double>(alloc[i]) / static_cast<double>(tokens_per_batch);
    }
  } else {
    for (size_t i = 0; i < n; ++i) rows[i].budget_seconds = schedule.stages[i].share * total_budget;
  }
  return rows;
}

std::vector<std::string> gap_warning(const Schedule& schedule, double threshold) {
  std::vector<std::string> warnings;
  for (size_t i = 1; i < schedule.stages.size(); ++i) {
    const double ratio = static_cast<double>(schedule.stages[i].seq_len) /
                         static_cast<double>(schedule.stages[i - 1].seq_len);
    if (ratio > threshold) {
      warnings.push_back("stage " + std::to_string(i - 1) + " -> " + std::to_string(i) +
                         ": seq_len jump " + std::to_string(schedule.stages[i - 1].seq_len) + " -> " +
                         std::to_string(schedule.stages[i].seq_len) + " (ratio " +
                         std::to_string(ratio) + " > " + std::to_string(threshold) +
                         ") risks a loss spike at the transition");
    }
  }
  return warnings;
}

ScheduleCursor::ScheduleCursor(const Schedule& schedule, double total_budget)
    : schedule_(schedule), total_(total_budget) {
  if (schedule.stages.empty()) throw ConfigError("cursor: empty schedule");
  if (!(total_budget > 0)) throw ConfigError("cursor: total budget must be positive");
  double acc = 0;
  if (schedule.budget_kind == BudgetKind::tokens) {
    const auto rows = preview(schedule, total_budget, 0);
    for (const auto& r : rows) {
      acc += static_cast<double>(r.budget_tokens);
      cumulative_.push_back(acc);
    }
  } else {
    for (const auto& st : schedule.stages) {
      acc += st.share * total_budget;
      cumulative_.push_back(acc);
    }
    cumulative_.back() = total_budget;
  }
}

ScheduleCursor::ScheduleCursor(const Schedule& schedule, std::vector<double> cumulative_budgets)
    : schedule_(schedule), cumulative_(std::move(cumulative_budgets)) {
  if (schedule.stages.empty()) throw ConfigError("cursor: empty schedule");
  if (cumulative_.size() != schedule.stages.size())
    throw ConfigError("cursor: boundary count does not match stage count");
  total_ = cumulative_.back();
}

double ScheduleCursor::stage_boundary(int stage_index) const {
  return cumulative_.at(static_cast<size_t>(stage_index));
}

AdvanceResult ScheduleCursor::advance(double progress) {
  if (progress < last_progress_)
    throw ContractError("cursor: progress regressed from " + std::to_string(last_progress_) +
                        " to " + std::to_string(progress));
  last_progress_ = progress;

  AdvanceResult out;
  if (done_) {
    out.stage_index = stage_index_;
    out.done = true;
    return out;
  }
  while (stage_index_ < static_cast<int>(cumulative_.size()) &&
         progress >= cumulative_[static_cast<size_t>(stage_index_)]) {
    if (stage_index_ + 1 < static_cast<int>(cumulative_.size())) {
      stage_index_ += 1;
      out.transitions.push_back(stage_index_);
    } else {
      done_ = true;
      break;
    }
  }
  out.stage_index = stage_index_;
  out.done = done_;
  return out;
}

void ScheduleCursor::restore(int stage_index, double progress, bool done) {
  if (stage_index < 0 || stage_index >= static_cast<int>(schedule_.stages.size()))
    throw ContractError("cursor: restore stage out of range");
  stage_index_ = stage_index;
  last_progress_ = progress;
  done_ = done;
}

}  // namespace growlen
