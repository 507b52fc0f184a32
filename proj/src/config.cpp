#include "growlen/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <set>

#include "growlen/digest.hpp"

namespace growlen {

const char* kCodeVersion = "growlen 0.1.0";

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

struct Entry {
  std::string section;  // "model", "data", ... or "arm:NAME"
  std::string key;
  std::string value;
  int line = 0;
};

// section -> allowed keys
const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> k = {
      {"model",
       {"vocab_size", "d_model", "n_layers", "n_heads", "head_dim", "ffn_mult", "rope_base", "seed"}},
      {"data", {"corpus", "format", "tokens_per_batch", "seed", "eval_fraction"}},
      {"schedule", {"lengths", "shares", "budget_kind", "gap_threshold"}},
      {"optimizer",
       {"lr", "beta1", "beta2", "eps", "weight_decay", "grad_clip", "warmup_frac", "min_lr_ratio"}},
      {"train", {"total_tokens", "total_seconds", "deterministic", "out_dir"}},
      {"eval", {"lengths", "mode", "max_eval_tokens"}},
  };
  return k;
}

[[noreturn]] void fail(const std::string& source, int line, const std::string& msg) {
  throw ConfigError(source + ":" + std::to_string(line) + ": " + msg);
}

int64_t parse_int(const std::string& source, int line, const std::string& v) {
  try {
    size_t used = 0;
    const int64_t out = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    fail(source, line, "expected an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& source, int line, const std::string& v) {
  try {
    size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    fail(source, line, "expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& source, int line, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  fail(source, line, "expected true or false, got '" + v + "'");
}

std::vector<std::string> split_csv(const std::string& v) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(trim(cur));
  return parts;
}

std::vector<int> parse_int_list(const std::string& source, int line, const std::string& v) {
  std::vector<int> out;
  for (const auto& p : split_csv(v)) out.push_back(static_cast<int>(parse_int(source, line, p)));
  return out;
}

std::vector<double> parse_double_list(const std::string& source, int line, const std::string& v) {
  std::vector<double> out;
  for (const auto& p : split_csv(v)) out.push_back(parse_double(source, line, p));
  return out;
}

void apply_entry(ExperimentConfig& cfg, const Entry& e, const std::string& source,
                 const std::string& section, const std::string& key) {
  const int line = e.line;
  const std::string& v = e.value;
  if (section == "model") {
    if (key == "vocab_size") cfg.model.vocab_size = static_cast<int>(parse_int(source, line, v));
    else if (key == "d_model") cfg.model.d_model = static_cast<int>(parse_int(source, line, v));
    else if (key == "n_layers") cfg.model.n_layers = static_cast<int>(parse_int(source, line, v));
    else if (key == "n_heads") cfg.model.n_heads = static_cast<int>(parse_int(source, line, v));
    else if (key == "head_dim") cfg.model.head_dim = static_cast<int>(parse_int(source, line, v));
    else if (key == "ffn_mult") cfg.model.ffn_mult = static_cast<int>(parse_int(source, line, v));
    else if (key == "rope_base") cfg.model.rope.base = parse_double(source, line, v);
    else if (key == "seed") cfg.model.seed = static_cast<uint64_t>(parse_int(source, line, v));
  } else if (section == "data") {
    if (key == "corpus") cfg.corpus_path = v;
    else if (key == "format") {
      if (v == "raw") cfg.corpus_format = CorpusFormat::raw_bytes;
      else if (v == "u32") cfg.corpus_format = CorpusFormat::u32le;
      else fail(source, line, "format must be raw or u32, got '" + v + "'");
    } else if (key == "tokens_per_batch") cfg.tokens_per_batch = parse_int(source, line, v);
    else if (key == "seed") cfg.data_seed = static_cast<uint64_t>(parse_int(source, line, v));
    else if (key == "eval_fraction") cfg.eval_fraction = parse_double(source, line, v);
  } else if (section == "schedule") {
    if (key == "lengths") cfg.lengths = parse_int_list(source, line, v);
    else if (key == "shares") cfg.shares = parse_double_list(source, line, v);
    else if (key == "budget_kind") {
      if (v == "tokens") cfg.budget_kind = BudgetKind::tokens;
      else if (v == "wall_time") cfg.budget_kind = BudgetKind::wall_time;
      else fail(source, line, "budget_kind must be tokens or wall_time, got '" + v + "'");
    } else if (key == "gap_threshold") cfg.gap_threshold = parse_double(source, line, v);
  } else if (section == "optimizer") {
    if (key == "lr") cfg.optimizer.lr = parse_double(source, line, v);
    else if (key == "beta1") cfg.optimizer.beta1 = parse_double(source, line, v);
    else if (key == "beta2") cfg.optimizer.beta2 = parse_double(source, line, v);
    else if (key == "eps") cfg.optimizer.eps = parse_double(source, line, v);
    else if (key == "weight_decay") cfg.optimizer.weight_decay = parse_double(source, line, v);
    else if (key == "grad_clip") cfg.optimizer.grad_clip = parse_double(source, line, v);
    else if (key == "warmup_frac") cfg.optimizer.warmup_frac = parse_double(source, line, v);
    else if (key == "min_lr_ratio") cfg.optimizer.min_lr_ratio = parse_double(source, line, v);
  } else if (section == "train") {
    if (key == "total_tokens") cfg.total_tokens = parse_int(source, line, v);
    else if (key == "total_seconds") cfg.total_seconds = parse_double(source, line, v);
    else if (key == "deterministic") cfg.deterministic = parse_bool(source, line, v);
    else if (key == "out_dir") cfg.out_dir = v;
  } else if (section == "eval") {
    if (key == "lengths") cfg.eval_lengths = parse_int_list(source, line, v);
    else if (key == "mode") {
      if (v != "extrapolation" && v != "interpolation" && v != "both")
        fail(source, line, "mode must be extrapolation, interpolation or both");
      cfg.eval_mode = v;
    } else if (key == "max_eval_tokens") cfg.max_eval_tokens = parse_int(source, line, v);
  }
}

}  // namespace

LoadedExperiment parse_config_text(const std::string& text, const std::string& source_name) {
  std::vector<Entry> entries;
  std::vector<std::string> arm_names;
  std::string section;
  std::set<std::string> seen;  // "section\x1fkey" duplicates

  int line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    line_no += 1;

    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail(source_name, line_no, "unterminated section header");
      const std::string inner = trim(line.substr(1, line.size() - 2));
      if (inner.rfind("arm ", 0) == 0) {
        const std::string name = trim(inner.substr(4));
        if (name.empty()) fail(source_name, line_no, "arm needs a name");
        section = "arm:" + name;
        if (std::find(arm_names.begin(), arm_names.end(), name) == arm_names.end())
          arm_names.push_back(name);
      } else {
        if (known_keys().find(inner) == known_keys().end())
          fail(source_name, line_no, "unknown section '" + inner + "'");
        section = inner;
      }
      continue;
    }

    const size_t eq = line.find('=');
    if (eq == std::string::npos) fail(source_name, line_no, "expected key = value");
    if (section.empty()) fail(source_name, line_no, "key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(source_name, line_no, "empty key");

    if (section.rfind("arm:", 0) == 0) {
      // arm keys are section.key overrides
      const size_t dot = key.find('.');
      if (dot == std::string::npos)
        fail(source_name, line_no, "arm keys must be section.key, got '" + key + "'");
      const std::string sec = key.substr(0, dot);
      const std::string sub = key.substr(dot + 1);
      const auto it = known_keys().find(sec);
      if (it == known_keys().end() || it->second.find(sub) == it->second.end())
        fail(source_name, line_no, "unknown key '" + key + "' in [" + section + "]");
    } else {
      const auto it = known_keys().find(section);
      if (it->second.find(key) == it->second.end())
        fail(source_name, line_no, "unknown key '" + key + "' in [" + section + "]");
    }
    const std::string dedup = section + "\x1f" + key;
    if (!seen.insert(dedup).second)
      fail(source_name, line_no, "duplicate key '" + key + "' in [" + section + "]");
    entries.push_back(Entry{section, key, value, line_no});
  }

  ExperimentConfig base;
  for (const auto& e : entries)
    if (e.section.rfind("arm:", 0) != 0) apply_entry(base, e, source_name, e.section, e.key);
  // keep head_dim consistent when only d_model / n_heads were given
  if (base.model.d_model % std::max(1, base.model.n_heads) == 0 &&
      base.model.head_dim * base.model.n_heads != base.model.d_model)
    base.model.head_dim = base.model.d_model / base.model.n_heads;
  base.model.rope.head_dim = base.model.head_dim;

  LoadedExperiment out;
  if (arm_names.empty()) {
    out.arms.push_back(base);
  } else {
    for (const auto& name : arm_names) {
      ExperimentConfig arm = base;
      arm.name = name;
      for (const auto& e : entries) {
        if (e.section != "arm:" + name) continue;
        const size_t dot = e.key.find('.');
        apply_entry(arm, e, source_name, e.key.substr(0, dot), e.key.substr(dot + 1));
      }
      if (arm.model.d_model % std::max(1, arm.model.n_heads) == 0)
        arm.model.head_dim = arm.model.d_model / arm.model.n_heads;
      arm.model.rope.head_dim = arm.model.head_dim;
      out.arms.push_back(std::move(arm));
    }
  }

  for (auto& arm : out.arms) {
    if (arm.shares.empty())
      arm.shares.assign(arm.lengths.size(), 1.0 / static_cast<double>(arm.lengths.size()));
    arm.trainer_config().validate();  // cross-field checks up front
    if (!arm.eval_lengths.empty()) {
      EvalConfig ec;
      ec.context_lengths = arm.eval_lengths;
      ec.validate();
    }
  }
  return out;
}

LoadedExperiment load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text, path);
}

Schedule ExperimentConfig::make_schedule() const {
  std::vector<double> s = shares;
  if (s.empty()) s.assign(lengths.size(), 1.0 / static_cast<double>(lengths.size()));
  return build_schedule(lengths, s, budget_kind);
}

TrainerConfig ExperimentConfig::trainer_config() const {
  TrainerConfig tc;
  tc.model = model;
  tc.schedule = make_schedule();
  tc.optimizer = optimizer;
  tc.tokens_per_batch = tokens_per_batch;
  tc.data_seed = data_seed;
  tc.total_tokens = total_tokens;
  tc.total_seconds = total_seconds;
  tc.deterministic = deterministic;
  return tc;
}

std::string ExperimentConfig::canonical_text() const {
  char buf[128];
  std::string t;
  auto kv = [&t](const std::string& k, const std::string& v) { t += k + " = " + v + "\n"; };
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  t += "[model]\n";
  kv("vocab_size", std::to_string(model.vocab_size));
  kv("d_model", std::to_string(model.d_model));
  kv("n_layers", std::to_string(model.n_layers));
  kv("n_heads", std::to_string(model.n_heads));
  kv("head_dim", std::to_string(model.head_dim));
  kv("ffn_mult", std::to_string(model.ffn_mult));
  kv("rope_base", num(model.rope.base));
  kv("seed", std::to_string(model.seed));
  t += "[data]\n";
  kv("corpus", corpus_path);
  kv("format", corpus_format == CorpusFormat::raw_bytes ? "raw" : "u32");
  kv("tokens_per_batch", std::to_string(tokens_per_batch));
  kv("seed", std::to_string(data_seed));
  kv("eval_fraction", num(eval_fraction));
  t += "[schedule]\n";
  std::string ls, ss;
  for (size_t i = 0; i < lengths.size(); ++i) ls += (i ? "," : "") + std::to_string(lengths[i]);
  for (size_t i = 0; i < shares.size(); ++i) ss += (i ? "," : "") + num(shares[i]);
  kv("lengths", ls);
  kv("shares", ss);
  kv("budget_kind", budget_kind == BudgetKind::tokens ? "tokens" : "wall_time");
  kv("gap_threshold", num(gap_threshold));
  t += "[optimizer]\n";
  kv("lr", num(optimizer.lr));
  kv("beta1", num(optimizer.beta1));
  kv("beta2", num(optimizer.beta2));
  kv("eps", num(optimizer.eps));
  kv("weight_decay", num(optimizer.weight_decay));
  kv("grad_clip", num(optimizer.grad_clip));
  kv("warmup_frac", num(optimizer.warmup_frac));
  kv("min_lr_ratio", num(optimizer.min_lr_ratio));
  t += "[train]\n";
  kv("total_tokens", std::to_string(total_tokens));
  kv("total_seconds", num(total_seconds));
  kv("deterministic", deterministic ? "true" : "false");
  kv("out_dir", out_dir);
  t += "[eval]\n";
  if (!eval_lengths.empty()) {
    std::string es;
    for (size_t i = 0; i < eval_lengths.size(); ++i)
      es += (i ? "," : "") + std::to_string(eval_lengths[i]);
    kv("lengths", es);
  }
  kv("mode", eval_mode);
  kv("max_eval_tokens", std::to_string(max_eval_tokens));
  return t;
}

uint64_t ExperimentConfig::digest() const { return fnv1a(canonical_text()); }

SplitCorpus load_split_corpus(const ExperimentConfig& cfg) {
  if (cfg.corpus_path.empty()) throw ConfigError("no corpus configured ([data] corpus = ...)");
  if (cfg.eval_fraction < 0 || cfg.eval_fraction >= 1)
    throw ConfigError("eval_fraction must be in [0, 1)");
  Corpus full = load_corpus(cfg.corpus_path, cfg.model.vocab_size, cfg.corpus_format);
  SplitCorpus out;
  out.source_digest = full.source_digest;
  if (cfg.eval_fraction == 0) {
    out.train = full;
    out.eval = Corpus{};
  } else {
    const auto cut = static_cast<int64_t>(static_cast<double>(full.size()) * (1.0 - cfg.eval_fraction));
    out.train = full.slice(0, cut);
    out.eval = full.slice(cut, full.size());
  }
  return out;
}

RunManifest make_manifest(const ExperimentConfig& cfg, uint64_t corpus_digest,
                          const std::vector<std::string>& artifacts) {
  RunManifest m;
  m.run_name = cfg.name;
  m.config_digest = hex_digest(cfg.digest());
  m.corpus_digest = hex_digest(corpus_digest);
  m.code_version = kCodeVersion;
  m.seed = cfg.model.seed;
  char buf[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  m.started_at = buf;
  m.artifacts = artifacts;
  return m;
}

std::string RunManifest::to_json() const {
  std::string out = "{";
  out += "\"run_name\":\"" + run_name + "\",";
  out += "\"config_digest\":\"" + config_digest + "\",";
  out += "\"corpus_digest\":\"" + corpus_digest + "\",";
  out += "\"code_version\":\"" + std::string(code_version) + "\",";
  out += "\"seed\":" + std::to_string(seed) + ",";
  out += "\"started_at\":\"" + started_at + "\",";
  out += "\"artifacts\":[";
  for (size_t i = 0; i < artifacts.size(); ++i)
    out += std::string(i ? "," : "") + "\"" + artifacts[i] + "\"";
  out += "]}";
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("write failure on " + path);
}

}  // namespace growlen
