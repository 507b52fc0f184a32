#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "growlen/config.hpp"
#include "growlen/corpusgen.hpp"
#include "growlen/digest.hpp"
#include "growlen/profiler.hpp"

namespace fs = std::filesystem;
using namespace growlen;

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numeric: return 4;
    case ErrorKind::io: return 5;
    case ErrorKind::format: return 6;
  }
  return 1;
}

std::string iso_now() {
  char buf[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

std::vector<int> parse_lengths(const std::string& csv) {
  std::vector<int> out;
  std::string cur;
  for (char c : csv + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(std::stoi(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (out.empty()) throw ConfigError("--lengths: expected a comma-separated list");
  return out;
}

int cmd_train(const std::string& config_path) {
  const LoadedExperiment exp = load_config_file(config_path);
  for (const auto& arm : exp.arms) {
    fs::create_directories(arm.out_dir);
    const std::string prefix = arm.out_dir + "/" + arm.name;
    const std::string metrics_path = prefix + ".metrics.jsonl";
    const std::string ckpt_path = prefix + ".ckpt";
    const std::string summary_path = prefix + ".summary.json";

    SplitCorpus split = load_split_corpus(arm);
    const RunManifest manifest =
        make_manifest(arm, split.source_digest, {metrics_path, ckpt_path, summary_path});
    write_text_file(prefix + ".manifest.json", manifest.to_json());

    TrainerConfig tc = arm.trainer_config();
    tc.metrics_path = metrics_path;
    auto run = init_run(tc, std::move(split.train));
    std::printf("[%s] training: %zu stage(s), final seq_len %d\n", arm.name.c_str(),
                tc.schedule.stages.size(), tc.schedule.final_seq_len());
    const TrainResult result = run_experiment(*run);
    save_checkpoint(*run, ckpt_path);

    char buf[384];
    std::snprintf(buf, sizeof(buf),
                  "{\"run_name\":\"%s\",\"ended_at\":\"%s\",\"steps\":%lld,\"tokens_seen\":%lld,"
                  "\"wall_seconds\":%.3f,\"final_loss\":%.6f}",
                  arm.name.c_str(), iso_now().c_str(), static_cast<long long>(result.steps),
                  static_cast<long long>(result.tokens_seen), result.wall_seconds,
                  result.records.empty() ? 0.0 : static_cast<double>(result.records.back().loss));
    write_text_file(summary_path, buf);
    std::printf("[%s] done: %lld steps, %lld tokens, %.1f s, final loss %.4f\n", arm.name.c_str(),
                static_cast<long long>(result.steps), static_cast<long long>(result.tokens_seen),
                result.wall_seconds,
                result.records.empty() ? 0.0 : static_cast<double>(result.records.back().loss));
  }
  return 0;
}

int cmd_profile(const std::string& config_path, const std::string& lengths_csv, int trials,
                int64_t tokens_per_batch, int64_t capacity_values, const std::string& out_path) {
  const LoadedExperiment exp = load_config_file(config_path);
  const ExperimentConfig& cfg = exp.arms.front();
  const auto lengths = parse_lengths(lengths_csv);
  const int64_t tpb = tokens_per_batch > 0 ? tokens_per_batch : cfg.tokens_per_batch;

  std::vector<StepProfile> profiles;
  for (int len : lengths) {
    std::fprintf(stderr, "profiling seq_len %d (%d trials)...\n", len, trials);
    profiles.push_back(profile_step_time(cfg.model, len, tpb, trials));
  }
  const ProfileReport rep = report(profiles, capacity_values, &cfg.model);
  const std::string csv = rep.to_csv();
  std::fputs(csv.c_str(), stdout);
  if (!out_path.empty()) write_text_file(out_path, csv);
  return 0;
}

int cmd_eval(const std::vector<std::string>& checkpoints, const std::string& corpus_path,
             const std::string& format, const std::string& lengths_csv, const std::string& mode,
             int64_t max_tokens, double tail_fraction, const std::string& out_prefix) {
  const auto lengths = parse_lengths(lengths_csv);
  std::vector<PerplexityReport> reports;

  for (const auto& ckpt_path : checkpoints) {
    const CheckpointModel model = load_checkpoint_model(ckpt_path);
    Corpus corpus = load_corpus(corpus_path, model.config.vocab_size,
                                format == "u32" ? CorpusFormat::u32le : CorpusFormat::raw_bytes);
    if (tail_fraction > 0) {
      const auto cut =
          static_cast<int64_t>(static_cast<double>(corpus.size()) * (1.0 - tail_fraction));
      corpus = corpus.slice(cut, corpus.size());
    }
    const std::string run_id = fs::path(ckpt_path).stem().string();

    PerplexityReport rep;
    auto run_sweep = [&](EvalMode m, const std::vector<int>& lens) {
      EvalConfig ec;
      ec.context_lengths = lens;
      ec.mode = m;
      ec.max_eval_tokens = max_tokens;
      const PerplexityReport r = sweep(model.params, corpus, ec, model.trained_len, run_id);
      rep.rows.insert(rep.rows.end(), r.rows.begin(), r.rows.end());
    };
    if (mode == "extrapolation" || mode == "both") run_sweep(EvalMode::extrapolation, lengths);
    if (mode == "interpolation" || mode == "both") {
      std::vector<int> interp_lens;
      for (int l : lengths)
        if (mode == "interpolation" || l > model.trained_len) interp_lens.push_back(l);
      if (!interp_lens.empty()) run_sweep(EvalMode::interpolation, interp_lens);
    }
    std::fputs(rep.to_csv().c_str(), stdout);
    if (!out_prefix.empty()) {
      write_text_file(out_prefix + "." + run_id + ".csv", rep.to_csv());
      write_text_file(out_prefix + "." + run_id + ".json", rep.to_json());
    }
    reports.push_back(std::move(rep));
  }

  if (reports.size() > 1) {
    // comparison only covers rows every report shares (the extrapolation sweep)
    std::vector<PerplexityReport> extrap;
    for (const auto& rep : reports) {
      PerplexityReport e;
      for (const auto& row : rep.rows)
        if (row.mode == EvalMode::extrapolation) e.rows.push_back(row);
      extrap.push_back(std::move(e));
    }
    const ComparisonTable table = compare_runs(extrap, 0);
    std::fputs("\n", stdout);
    std::fputs(table.to_csv().c_str(), stdout);
    if (!out_prefix.empty()) write_text_file(out_prefix + ".compare.csv", table.to_csv());
  }
  return 0;
}

int cmd_schedule_preview(const std::string& config_path, double budget) {
  const LoadedExperiment exp = load_config_file(config_path);
  for (const auto& arm : exp.arms) {
    const Schedule schedule = arm.make_schedule();
    const double total = budget > 0 ? budget
                         : schedule.budget_kind == BudgetKind::tokens
                             ? static_cast<double>(arm.total_tokens)
                             : arm.total_seconds;
    if (!(total > 0)) throw ConfigError("no budget: pass --budget or set it in [train]");
    const auto rows = preview(schedule, total, arm.tokens_per_batch);
    std::printf("arm %s (%s budget %.0f)\n", arm.name.c_str(),
                schedule.budget_kind == BudgetKind::tokens ? "token" : "wall-time", total);
    std::printf("  %-6s %-8s %-14s %s\n", "stage", "seq_len", "budget", "steps");
    for (const auto& r : rows) {
      if (schedule.budget_kind == BudgetKind::tokens)
        std::printf("  %-6d %-8d %-14lld %.1f\n", r.stage_index, r.seq_len,
                    static_cast<long long>(r.budget_tokens), r.predicted_steps);
      else
        std::printf("  %-6d %-8d %-14.1fs -\n", r.stage_index, r.seq_len, r.budget_seconds);
    }
    for (const auto& w : gap_warning(schedule, arm.gap_threshold))
      std::printf("  warning: %s\n", w.c_str());
  }
  return 0;
}

int cmd_gen_corpus(int64_t size, int64_t seed, const std::string& out_path) {
  CorpusGenSpec spec;
  spec.size_bytes = static_cast<uint64_t>(size);
  spec.seed = static_cast<uint64_t>(seed);
  const uint64_t digest = write_corpus(spec, out_path);
  std::printf("%s: %lld bytes, digest %s\n", out_path.c_str(), static_cast<long long>(size),
              hex_digest(digest).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale pretraining lab for growing-length transformer training"};
  app.require_subcommand(1);

  std::string config_path, lengths_csv, out_path, mode = "extrapolation", format = "raw";
  std::string corpus_path;
  std::vector<std::string> checkpoints;
  int trials = 5;
  int64_t tokens_per_batch = 0, capacity_values = 64ll << 20, max_tokens = 0;
  int64_t size = 0, seed = 0;
  double budget = 0, tail_fraction = 0;

  auto* train = app.add_subcommand("train", "run the configured training experiment");
  train->add_option("config", config_path, "experiment config file")->required();

  auto* profile = app.add_subcommand("profile", "step-time and memory-model sweep over lengths");
  profile->add_option("config", config_path, "experiment config file")->required();
  profile->add_option("--lengths", lengths_csv, "comma-separated sequence lengths")->required();
  profile->add_option("--trials", trials, "timed trials per length (>= 3)");
  profile->add_option("--tokens-per-batch", tokens_per_batch, "override [data] tokens_per_batch");
  profile->add_option("--capacity-values", capacity_values,
                      "memory budget (32-bit values) for the tokens-at-capacity column");
  profile->add_option("--out", out_path, "also write the CSV here");

  auto* evalc = app.add_subcommand("eval", "perplexity across context lengths for checkpoints");
  evalc->add_option("checkpoints", checkpoints, "checkpoint files")->required()->expected(-1);
  evalc->add_option("--corpus", corpus_path, "evaluation corpus")->required();
  evalc->add_option("--format", format, "corpus format: raw | u32");
  evalc->add_option("--lengths", lengths_csv, "comma-separated context lengths")->required();
  evalc->add_option("--mode", mode, "extrapolation | interpolation | both");
  evalc->add_option("--max-tokens", max_tokens, "token budget per context length");
  evalc->add_option("--tail-fraction", tail_fraction, "evaluate only this trailing corpus fraction");
  evalc->add_option("--out", out_path, "output file prefix");

  auto* prev = app.add_subcommand("schedule-preview", "per-stage budgets, steps and gap warnings");
  prev->add_option("config", config_path, "experiment config file")->required();
  prev->add_option("--budget", budget, "total budget (tokens or seconds)");

  auto* gen = app.add_subcommand("gen-corpus", "write a synthetic training corpus");
  gen->add_option("--size", size, "bytes to generate")->required();
  gen->add_option("--seed", seed, "generator seed")->required();
  gen->add_option("--out", out_path, "output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config_path);
    if (*profile)
      return cmd_profile(config_path, lengths_csv, trials, tokens_per_batch, capacity_values,
                         out_path);
    if (*evalc) {
      if (mode != "extrapolation" && mode != "interpolation" && mode != "both")
        throw ConfigError("--mode must be extrapolation, interpolation or both");
      return cmd_eval(checkpoints, corpus_path, format, lengths_csv, mode, max_tokens,
                      tail_fraction, out_path);
    }
    if (*prev) return cmd_schedule_preview(config_path, budget);
    if (*gen) return cmd_gen_corpus(size, seed, out_path);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
