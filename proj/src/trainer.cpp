#include "growlen/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "growlen/digest.hpp"
#include "growlen/rng.hpp"

namespace growlen {

std::string MetricsRecord::to_jsonl() const {
  char buf[224];
  std::snprintf(buf, sizeof(buf),
                "{\"step\":%lld,\"stage_index\":%d,\"seq_len\":%d,\"loss\":%.9g,"
                "\"tokens_seen\":%lld,\"wall_time_s\":%.6f}",
                static_cast<long long>(step), stage_index, seq_len, static_cast<double>(loss),
                static_cast<long long>(tokens_seen), wall_time_s);
  return std::string(buf);
}

void TrainerConfig::validate() const {
  model.validate();
  optimizer.validate();
  if (model.rope.interpolation_factor != 1.0)
    throw ConfigError("trainer: training uses an unscaled rope table (interpolation is "
                      "an evaluation-time mode)");
  if (schedule.stages.empty()) throw ConfigError("trainer: empty schedule");
  if (tokens_per_batch < 1) throw ConfigError("trainer: tokens_per_batch must be positive");
  for (const auto& st : schedule.stages)
    if (tokens_per_batch % st.seq_len != 0)
      throw ConfigError("trainer: tokens_per_batch " + std::to_string(tokens_per_batch) +
                        " not divisible by stage seq_len " + std::to_string(st.seq_len));
  if (schedule.budget_kind == BudgetKind::tokens) {
    if (total_tokens < 1) throw ConfigError("trainer: total_tokens must be positive");
    if (total_tokens % tokens_per_batch != 0)
      throw ConfigError("trainer: total_tokens " + std::to_string(total_tokens) +
                        " must be a whole number of " + std::to_string(tokens_per_batch) +
                        "-token batches");
  } else {
    if (!(total_seconds > 0)) throw ConfigError("trainer: total_seconds must be positive");
    if (deterministic)
      throw ConfigError("trainer: wall-time budgets are timing-dependent; set deterministic=false");
  }
}

void TrainRun::attach_metrics(const std::string& path, bool append) {
  cfg.metrics_path = path;
  metrics_out.close();
  metrics_out.clear();
  metrics_out.open(path, append ? std::ios::app : std::ios::trunc);
  if (!metrics_out) throw IoError("cannot open metrics path: " + path);
}

double TrainRun::wall_seconds() const {
  const auto now = std::chrono::steady_clock::now();
  return wall_offset + std::chrono::duration<double>(now - wall_start).count();
}

uint64_t stage_loader_seed(uint64_t data_seed, int stage_index) {
  return derive_seed(data_seed, 0x6c6f6164ull + static_cast<uint64_t>(stage_index));
}

namespace {

void enter_stage(TrainRun& run, int stage_index) {
  run.stage_index = stage_index;
  const int seq_len = run.cfg.schedule.stages[static_cast<size_t>(stage_index)].seq_len;
  run.loader.emplace(run.corpus, seq_len, run.cfg.tokens_per_batch,
                     stage_loader_seed(run.cfg.data_seed, stage_index));
  run.table = build_table(run.cfg.model.rope, seq_len);
}

std::vector<double> token_boundaries(const TrainerConfig& cfg) {
  std::vector<double> shares;
  for (const auto& st : cfg.schedule.stages) shares.push_back(st.share);
  const int64_t total_steps = cfg.total_tokens / cfg.tokens_per_batch;
  const auto steps = allocate_integral(shares, total_steps);
  std::vector<double> cumulative;
  int64_t acc = 0;
  for (int64_t s : steps) {
    acc += s;
    cumulative.push_back(static_cast<double>(acc * cfg.tokens_per_batch));
  }
  return cumulative;
}

}  // namespace

std::unique_ptr<TrainRun> init_run(const TrainerConfig& cfg, Corpus corpus) {
  cfg.validate();
  auto run = std::make_unique<TrainRun>();
  run->cfg = cfg;
  run->corpus = std::move(corpus);
  run->source_digest = run->corpus.source_digest;
  run->params = init(cfg.model);
  run->opt = OptimizerState::init(run->params);
  if (cfg.schedule.budget_kind == BudgetKind::tokens) {
    run->total_steps = cfg.total_tokens / cfg.tokens_per_batch;
    run->cursor.emplace(cfg.schedule, token_boundaries(cfg));
  } else {
    run->total_steps = 0;
    run->cursor.emplace(cfg.schedule, cfg.total_seconds);
  }
  enter_stage(*run, 0);
  if (!cfg.metrics_path.empty()) {
    run->metrics_out.open(cfg.metrics_path, std::ios::trunc);
    if (!run->metrics_out) throw IoError("cannot open metrics path: " + cfg.metrics_path);
  }
  run->wall_start = std::chrono::steady_clock::now();
  return run;
}

float single_train_step(ModelParams& params, OptimizerState& opt, const OptimizerConfig& cfg,
                        const Batch& batch, const RopeTable& table, double lr) {
  Tape tape;
  Tensor loss = loss_batch(params, batch.inputs, batch.targets, batch.batch_size, batch.seq_len, table);
  const float loss_value = loss.scalar();
  if (!std::isfinite(loss_value))
    throw NumericError("non-finite loss " + std::to_string(loss_value));
  tape.backward(loss);
  clip_gradients(params, cfg.grad_clip);
  adamw_step(params, opt, cfg, lr);
  params.visit([](const std::string&, Tensor& t) { t.zero_grad(); });
  return loss_value;
}

MetricsRecord train_step(TrainRun& run, const Batch& batch) {
  if (batch.seq_len != run.current_seq_len())
    throw ContractError("train_step: batch seq_len " + std::to_string(batch.seq_len) +
                        " does not match active stage seq_len " +
                        std::to_string(run.current_seq_len()));
  const double lr = lr_at(run.cfg.optimizer, run.step, run.total_steps);
  float loss_value = 0.0f;
  try {
    loss_value = single_train_step(run.params, run.opt, run.cfg.optimizer, batch, run.table, lr);
  } catch (const NumericError& e) {
    if (run.metrics_out.is_open()) {
      run.metrics_out << "{\"step\":" << (run.step + 1) << ",\"event\":\"abort\",\"reason\":\""
                      << e.what() << "\"}\n";
      run.metrics_out.flush();
    }
    throw NumericError(std::string(e.what()) + " at step " + std::to_string(run.step + 1));
  }
  run.step += 1;
  run.tokens_seen += static_cast<int64_t>(batch.inputs.size());

  MetricsRecord rec;
  rec.step = run.step;
  rec.stage_index = run.stage_index;
  rec.seq_len = batch.seq_len;
  rec.loss = loss_value;
  rec.tokens_seen = run.tokens_seen;
  rec.wall_time_s = run.cfg.deterministic ? 0.0 : run.wall_seconds();
  run.records.push_back(rec);
  if (run.metrics_out.is_open()) {
    run.metrics_out << rec.to_jsonl() << "\n";
    run.metrics_out.flush();
  }
  return rec;
}

void transition(TrainRun& run, int next_stage_index) {
  if (next_stage_index <= run.stage_index ||
      next_stage_index >= static_cast<int>(run.cfg.schedule.stages.size()))
    throw ContractError("transition: stage " + std::to_string(next_stage_index) +
                        " is not after current stage " + std::to_string(run.stage_index));
  enter_stage(run, next_stage_index);
}

TrainResult run_experiment(TrainRun& run) {
  const bool token_kind = run.cfg.schedule.budget_kind == BudgetKind::tokens;
  while (true) {
    if (run.cursor->done()) break;
    if (!token_kind && run.wall_seconds() >= run.cursor->total_budget()) break;
    Batch batch = run.loader->next_batch();
    train_step(run, batch);
    const double progress = token_kind ? static_cast<double>(run.tokens_seen) : run.wall_seconds();
    const auto adv = run.cursor->advance(progress);
    if (adv.done) break;
    if (!adv.transitions.empty()) transition(run, adv.stage_index);
  }
  TrainResult result;
  result.records = run.records;
  result.steps = run.step;
  result.tokens_seen = run.tokens_seen;
  result.wall_seconds = run.wall_seconds();
  result.trained_len = run.cfg.schedule.final_seq_len();
  return result;
}

// --- checkpointing ---------------------------------------------------------

namespace {

constexpr uint32_t kMagic = 0x4b434c47;  // "GLCK"
constexpr uint32_t kVersion = 1;

struct Writer {
  std::string buf;
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_bytes(const void* p, size_t n) { buf.append(static_cast<const char*>(p), n); }
  void put_string(const std::string& s) {
    put(static_cast<uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  void put_floats(const std::vector<float>& v) {
    put(static_cast<uint64_t>(v.size()));
    put_bytes(v.data(), v.size() * sizeof(float));
  }
};

struct Reader {
  const uint8_t* p;
  size_t remaining;
  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    if (remaining < sizeof(T)) throw IntegrityError("checkpoint truncated");
    T v;
    std::memcpy(&v, p, sizeof(T));
    p += sizeof(T);
    remaining -= sizeof(T);
    return v;
  }
  void get_bytes(void* out, size_t n) {
    if (remaining < n) throw IntegrityError("checkpoint truncated");
    std::memcpy(out, p, n);
    p += n;
    remaining -= n;
  }
  std::string get_string() {
    const auto n = get<uint32_t>();
    if (remaining < n) throw IntegrityError("checkpoint truncated");
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    remaining -= n;
    return s;
  }
  std::vector<float> get_floats() {
    const auto n = get<uint64_t>();
    if (remaining < n * sizeof(float)) throw IntegrityError("checkpoint truncated");
    std::vector<float> v(static_cast<size_t>(n));
    get_bytes(v.data(), static_cast<size_t>(n) * sizeof(float));
    return v;
  }
};

void write_config(Writer& w, const TrainerConfig& cfg) {
  const auto& m = cfg.model;
  w.put<int32_t>(m.vocab_size);
  w.put<int32_t>(m.d_model);
  w.put<int32_t>(m.n_layers);
  w.put<int32_t>(m.n_heads);
  w.put<int32_t>(m.head_dim);
  w.put<int32_t>(m.ffn_mult);
  w.put<double>(m.rope.base);
  w.put<double>(m.rope.interpolation_factor);
  w.put<uint64_t>(m.seed);
  w.put<int64_t>(cfg.tokens_per_batch);
  w.put<uint64_t>(cfg.data_seed);
  w.put<uint8_t>(cfg.schedule.budget_kind == BudgetKind::tokens ? 0 : 1);
  w.put<int64_t>(cfg.total_tokens);
  w.put<double>(cfg.total_seconds);
  w.put<uint8_t>(cfg.deterministic ? 1 : 0);
  const auto& o = cfg.optimizer;
  w.put<double>(o.lr);
  w.put<double>(o.beta1);
  w.put<double>(o.beta2);
  w.put<double>(o.eps);
  w.put<double>(o.weight_decay);
  w.put<double>(o.grad_clip);
  w.put<double>(o.warmup_frac);
  w.put<double>(o.min_lr_ratio);
  w.put<uint32_t>(static_cast<uint32_t>(cfg.schedule.stages.size()));
  for (const auto& st : cfg.schedule.stages) {
    w.put<int32_t>(st.seq_len);
    w.put<double>(st.share);
  }
}

TrainerConfig read_config(Reader& r) {
  TrainerConfig cfg;
  auto& m = cfg.model;
  m.vocab_size = r.get<int32_t>();
  m.d_model = r.get<int32_t>();
  m.n_layers = r.get<int32_t>();
  m.n_heads = r.get<int32_t>();
  m.head_dim = r.get<int32_t>();
  m.ffn_mult = r.get<int32_t>();
  m.rope.head_dim = m.head_dim;
  m.rope.base = r.get<double>();
  m.rope.interpolation_factor = r.get<double>();
  m.seed = r.get<uint64_t>();
  cfg.tokens_per_batch = r.get<int64_t>();
  cfg.data_seed = r.get<uint64_t>();
  const auto kind = r.get<uint8_t>();
  cfg.total_tokens = r.get<int64_t>();
  cfg.total_seconds = r.get<double>();
  cfg.deterministic = r.get<uint8_t>() != 0;
  auto& o = cfg.optimizer;
  o.lr = r.get<double>();
  o.beta1 = r.get<double>();
  o.beta2 = r.get<double>();
  o.eps = r.get<double>();
  o.weight_decay = r.get<double>();
  o.grad_clip = r.get<double>();
  o.warmup_frac = r.get<double>();
  o.min_lr_ratio = r.get<double>();
  const auto n_stages = r.get<uint32_t>();
  cfg.schedule.budget_kind = kind == 0 ? BudgetKind::tokens : BudgetKind::wall_time;
  for (uint32_t i = 0; i < n_stages; ++i) {
    Stage st;
    st.seq_len = r.get<int32_t>();
    st.share = r.get<double>();
    cfg.schedule.stages.push_back(st);
  }
  return cfg;
}

std::string serialize_checkpoint(const TrainRun& run) {
  Writer w;
  w.put<uint32_t>(kMagic);
  w.put<uint32_t>(kVersion);
  write_config(w, run.cfg);

  w.put<int64_t>(run.step);
  w.put<int64_t>(run.tokens_seen);
  w.put<int64_t>(run.total_steps);
  w.put<int32_t>(run.stage_index);
  w.put<int64_t>(run.loader->epoch());
  w.put<int64_t>(run.loader->cursor());
  w.put<double>(run.cfg.deterministic ? 0.0 : run.wall_seconds());
  w.put<uint64_t>(run.source_digest);
  // rng stream state: all generators are replayable from these seeds
  w.put<uint64_t>(run.cfg.data_seed);
  w.put<uint64_t>(stage_loader_seed(run.cfg.data_seed, run.stage_index));
  w.put<int32_t>(run.cfg.schedule.final_seq_len());

  uint32_t count = 0;
  run.params.visit([&count](const std::string&, const Tensor&) { count += 1; });
  w.put<uint32_t>(count);
  run.params.visit([&w](const std::string& name, const Tensor& t) {
    w.put_string(name);
    w.put<uint32_t>(static_cast<uint32_t>(t.ndim()));
    for (int d : t.shape()) w.put<int32_t>(d);
    w.put<uint64_t>(static_cast<uint64_t>(t.size()));
    w.put_bytes(t.data().data(), t.data().size() * sizeof(float));
  });

  w.put<int64_t>(run.opt.step);
  for (const auto& m : run.opt.m) w.put_floats(m);
  for (const auto& v : run.opt.v) w.put_floats(v);

  const uint64_t digest = fnv1a(w.buf.data(), w.buf.size());
  w.put<uint64_t>(digest);
  return std::move(w.buf);
}

}  // namespace

void save_checkpoint(const TrainRun& run, const std::string& path) {
  const std::string bytes = serialize_checkpoint(run);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint path: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on checkpoint: " + path);
}

namespace {

std::vector<uint8_t> read_checkpoint_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw IntegrityError("checkpoint too short: " + path);
  uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  const uint64_t actual = fnv1a(bytes.data(), bytes.size() - 8);
  if (stored != actual)
    throw IntegrityError("checkpoint digest mismatch in " + path + " (file corrupted)");
  return bytes;
}

struct ParsedCheckpoint {
  TrainerConfig cfg;
  int64_t step, tokens_seen, total_steps;
  int32_t stage_index;
  int64_t loader_epoch, loader_cursor;
  double wall_offset;
  uint64_t source_digest;
  int32_t trained_len;
  ModelParams params;
  OptimizerState opt;
};

ParsedCheckpoint parse_checkpoint(const std::string& path) {
  const auto bytes = read_checkpoint_bytes(path);
  Reader r{bytes.data(), bytes.size() - 8};

  const auto magic = r.get<uint32_t>();
  if (magic != kMagic) throw FormatError("not a checkpoint file: " + path);
  const auto version = r.get<uint32_t>();
  if (version != kVersion)
    throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kVersion) + ")");

  ParsedCheckpoint pc;
  pc.cfg = read_config(r);
  pc.step = r.get<int64_t>();
  pc.tokens_seen = r.get<int64_t>();
  pc.total_steps = r.get<int64_t>();
  pc.stage_index = r.get<int32_t>();
  pc.loader_epoch = r.get<int64_t>();
  pc.loader_cursor = r.get<int64_t>();
  pc.wall_offset = r.get<double>();
  pc.source_digest = r.get<uint64_t>();
  (void)r.get<uint64_t>();  // rng: data seed (replayable)
  (void)r.get<uint64_t>();  // rng: active loader seed
  pc.trained_len = r.get<int32_t>();

  pc.params = init(pc.cfg.model);  // shapes; data overwritten below
  const auto count = r.get<uint32_t>();
  uint32_t expected = 0;
  pc.params.visit([&expected](const std::string&, const Tensor&) { expected += 1; });
  if (count != expected) throw FormatError("checkpoint parameter count mismatch");
  pc.params.visit([&r](const std::string& name, Tensor& t) {
    const std::string stored_name = r.get_string();
    if (stored_name != name) throw FormatError("checkpoint parameter order mismatch at " + name);
    const auto ndim = r.get<uint32_t>();
    if (ndim != static_cast<uint32_t>(t.ndim())) throw FormatError("checkpoint shape mismatch at " + name);
    for (int i = 0; i < t.ndim(); ++i)
      if (r.get<int32_t>() != t.dim(i)) throw FormatError("checkpoint shape mismatch at " + name);
    const auto numel = r.get<uint64_t>();
    if (numel != static_cast<uint64_t>(t.size()))
      throw FormatError("checkpoint size mismatch at " + name);
    r.get_bytes(t.data().data(), static_cast<size_t>(numel) * sizeof(float));
  });

  pc.opt = OptimizerState::init(pc.params);
  pc.opt.step = r.get<int64_t>();
  for (auto& m : pc.opt.m) {
    auto loaded = r.get_floats();
    if (loaded.size() != m.size()) throw FormatError("checkpoint optimizer slot size mismatch");
    m = std::move(loaded);
  }
  for (auto& v : pc.opt.v) {
    auto loaded = r.get_floats();
    if (loaded.size() != v.size()) throw FormatError("checkpoint optimizer slot size mismatch");
    v = std::move(loaded);
  }
  if (r.remaining != 0) throw FormatError("checkpoint has trailing bytes");
  return pc;
}

}  // namespace

std::unique_ptr<TrainRun> load_checkpoint(const std::string& path, Corpus corpus) {
  ParsedCheckpoint pc = parse_checkpoint(path);
  if (corpus.source_digest != pc.source_digest)
    throw DataError("checkpoint was trained on a different corpus (digest mismatch)");

  auto run = std::make_unique<TrainRun>();
  run->cfg = pc.cfg;
  run->corpus = std::move(corpus);
  run->source_digest = pc.source_digest;
  run->params = std::move(pc.params);
  run->opt = std::move(pc.opt);
  run->step = pc.step;
  run->tokens_seen = pc.tokens_seen;
  run->total_steps = pc.total_steps;
  if (pc.cfg.schedule.budget_kind == BudgetKind::tokens)
    run->cursor.emplace(pc.cfg.schedule, token_boundaries(pc.cfg));
  else
    run->cursor.emplace(pc.cfg.schedule, pc.cfg.total_seconds);
  const double progress = pc.cfg.schedule.budget_kind == BudgetKind::tokens
                              ? static_cast<double>(pc.tokens_seen)
                              : pc.wall_offset;
  run->cursor->restore(pc.stage_index, progress, progress >= run->cursor->total_budget());
  enter_stage(*run, pc.stage_index);
  run->loader->seek(pc.loader_epoch, pc.loader_cursor);
  run->wall_offset = pc.wall_offset;
  run->wall_start = std::chrono::steady_clock::now();
  // metrics sinks are not part of the snapshot; callers reattach one by
  // setting cfg.metrics_path before resuming if they want a log.
  return run;
}

CheckpointModel load_checkpoint_model(const std::string& path) {
  ParsedCheckpoint pc = parse_checkpoint(path);
  CheckpointModel out;
  out.config = pc.cfg.model;
  out.params = std::move(pc.params);
  out.trained_len = pc.trained_len;
  out.source_digest = pc.source_digest;
  return out;
}

}  // namespace growlen
