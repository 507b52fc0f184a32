#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "growlen/config.hpp"
#include "growlen/corpusgen.hpp"
#include "growlen/eval.hpp"
#include "growlen/profiler.hpp"
#include "growlen/rope.hpp"
#include "growlen/trainer.hpp"

namespace py = pybind11;
using namespace growlen;

namespace {

RopeConfig make_rope_config(int head_dim, double base, double interpolation_factor) {
  RopeConfig cfg{head_dim, base, interpolation_factor};
  cfg.validate();
  return cfg;
}

ModelConfig make_model_config(int vocab_size, int d_model, int n_layers, int n_heads, int ffn_mult,
                              double rope_base, uint64_t seed) {
  ModelConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.d_model = d_model;
  cfg.n_layers = n_layers;
  cfg.n_heads = n_heads;
  cfg.head_dim = d_model / n_heads;
  cfg.ffn_mult = ffn_mult;
  cfg.rope = RopeConfig{cfg.head_dim, rope_base, 1.0};
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

Corpus corpus_from_pybytes(const py::bytes& data, int vocab_size) {
  const std::string s = data;
  return corpus_from_bytes(std::vector<uint8_t>(s.begin(), s.end()), vocab_size);
}

EvalMode mode_from_name(const std::string& name) {
  if (name == "extrapolation") return EvalMode::extrapolation;
  if (name == "interpolation") return EvalMode::interpolation;
  throw ConfigError("mode must be extrapolation or interpolation, got '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "growing-length transformer pretraining lab (C++ core)";

  py::register_exception<Error>(m, "GrowlenError");

  // --- rope -----------------------------------------------------------
  py::class_<RopeTable>(m, "RopeTable")
      .def_property_readonly("head_dim", &RopeTable::head_dim)
      .def_property_readonly("max_position", &RopeTable::max_position)
      .def_property_readonly("interpolation_factor", &RopeTable::interpolation_factor);

  m.def(
      "frequencies",
      [](int head_dim, double base) { return frequencies(RopeConfig{head_dim, base, 1.0}); },
      py::arg("head_dim"), py::arg("base") = 10000.0,
      "Per-pair rotation frequencies, strictly decreasing from exactly 1.");

  m.def(
      "build_table",
      [](int head_dim, int max_position, double base, double interpolation_factor) {
        return build_table(make_rope_config(head_dim, base, interpolation_factor), max_position);
      },
      py::arg("head_dim"), py::arg("max_position"), py::arg("base") = 10000.0,
      py::arg("interpolation_factor") = 1.0);

  m.def(
      "apply_rotary",
      [](const std::vector<float>& vec, int position, const RopeTable& table) {
        return apply_rotary(vec, position, table);
      },
      py::arg("vec"), py::arg("position"), py::arg("table"));

  m.def(
      "relative_score",
      [](const std::vector<float>& q, const std::vector<float>& k, int mpos, int npos,
         const RopeTable& table) { return relative_score(q, k, mpos, npos, table); },
      py::arg("q"), py::arg("k"), py::arg("m"), py::arg("n"), py::arg("table"));

  // --- corpus ---------------------------------------------------------
  m.def(
      "generate_corpus",
      [](uint64_t size_bytes, uint64_t seed) {
        CorpusGenSpec spec;
        spec.size_bytes = size_bytes;
        spec.seed = seed;
        const auto bytes = generate_corpus(spec);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("size_bytes"), py::arg("seed"),
      "Deterministic synthetic byte corpus with long-range echoes.");

  // --- model ----------------------------------------------------------
  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init(&make_model_config), py::arg("vocab_size") = 256, py::arg("d_model") = 64,
           py::arg("n_layers") = 2, py::arg("n_heads") = 2, py::arg("ffn_mult") = 4,
           py::arg("rope_base") = 10000.0, py::arg("seed") = 0)
      .def_readonly("vocab_size", &ModelConfig::vocab_size)
      .def_readonly("d_model", &ModelConfig::d_model)
      .def_readonly("n_layers", &ModelConfig::n_layers)
      .def_readonly("n_heads", &ModelConfig::n_heads)
      .def_readonly("head_dim", &ModelConfig::head_dim)
      .def_readonly("seed", &ModelConfig::seed);

  py::class_<ModelParams>(m, "ModelParams")
      .def_property_readonly("config", [](const ModelParams& p) { return p.config; })
      .def("param_count", &ModelParams::param_count)
      .def("checksum", &ModelParams::checksum);

  m.def("init_params", &init, py::arg("config"));
  m.def("param_count", py::overload_cast<const ModelConfig&>(&param_count), py::arg("config"));

  m.def(
      "forward_logits",
      [](const ModelParams& params, const std::vector<int32_t>& tokens, int max_position) {
        const int t = static_cast<int>(tokens.size());
        const RopeTable table =
            build_table(params.config.rope, std::max(max_position, t));
        const Tensor logits = forward(params, tokens, table);
        py::array_t<float> out({t, params.config.vocab_size});
        std::copy(logits.data().begin(), logits.data().end(), out.mutable_data());
        return out;
      },
      py::arg("params"), py::arg("tokens"), py::arg("max_position") = 0,
      "Causal logits [T x vocab] for one token sequence.");

  // --- schedule ---------------------------------------------------------
  py::class_<Schedule>(m, "Schedule");

  m.def(
      "build_schedule",
      [](const std::vector<int>& lengths, const std::vector<double>& budgets,
         const std::string& kind) {
        return build_schedule(lengths, budgets,
                              kind == "wall_time" ? BudgetKind::wall_time : BudgetKind::tokens);
      },
      py::arg("lengths"), py::arg("budgets"), py::arg("budget_kind") = "tokens");

  m.def(
      "preview_schedule",
      [](const Schedule& schedule, double total_budget, int64_t tokens_per_batch) {
        py::list rows;
        for (const auto& r : preview(schedule, total_budget, tokens_per_batch)) {
          py::dict row;
          row["stage_index"] = r.stage_index;
          row["seq_len"] = r.seq_len;
          row["budget_tokens"] = r.budget_tokens;
          row["budget_seconds"] = r.budget_seconds;
          row["predicted_steps"] = r.predicted_steps;
          rows.append(row);
        }
        return rows;
      },
      py::arg("schedule"), py::arg("total_budget"), py::arg("tokens_per_batch") = 0);

  m.def("gap_warnings", &gap_warning, py::arg("schedule"), py::arg("threshold") = 4.0);

  // --- profiler ---------------------------------------------------------
  m.def(
      "estimate_memory",
      [](const ModelConfig& config, int seq_len, int batch_size) {
        const MemoryEstimate e = estimate_memory(config, seq_len, batch_size);
        py::dict out;
        out["parameters"] = e.parameters;
        out["optimizer_moments"] = e.optimizer_moments;
        out["gradients"] = e.gradients;
        out["activations_linear"] = e.activations_linear;
        out["activations_attention"] = e.activations_attention;
        out["total"] = e.total();
        return out;
      },
      py::arg("config"), py::arg("seq_len"), py::arg("batch_size"));

  m.def("max_tokens_at_capacity", &max_tokens_at_capacity, py::arg("config"), py::arg("seq_len"),
        py::arg("memory_budget_values"));

  // --- training / eval --------------------------------------------------
  m.def(
      "train_on_bytes",
      [](const ModelConfig& model, const py::bytes& corpus_bytes, const std::vector<int>& lengths,
         int64_t total_tokens, int64_t tokens_per_batch, double lr, uint64_t data_seed) {
        TrainerConfig tc;
        tc.model = model;
        std::vector<double> shares(lengths.size(), 1.0 / static_cast<double>(lengths.size()));
        tc.schedule = build_schedule(lengths, shares, BudgetKind::tokens);
        tc.optimizer.lr = lr;
        tc.tokens_per_batch = tokens_per_batch;
        tc.data_seed = data_seed;
        tc.total_tokens = total_tokens;
        auto run = init_run(tc, corpus_from_pybytes(corpus_bytes, model.vocab_size));
        const TrainResult result = run_experiment(*run);
        py::list out;
        for (const auto& rec : result.records) {
          py::dict row;
          row["step"] = rec.step;
          row["stage_index"] = rec.stage_index;
          row["seq_len"] = rec.seq_len;
          row["loss"] = rec.loss;
          row["tokens_seen"] = rec.tokens_seen;
          out.append(row);
        }
        return out;
      },
      py::arg("model"), py::arg("corpus"), py::arg("lengths"), py::arg("total_tokens"),
      py::arg("tokens_per_batch"), py::arg("lr") = 1e-3, py::arg("data_seed") = 0,
      "Equal-share growing-length training over an in-memory corpus; returns per-step metrics.");

  m.def(
      "perplexity",
      [](const ModelParams& params, const py::bytes& corpus_bytes, int ctx_len,
         const std::string& mode, int trained_len, int64_t max_eval_tokens) {
        const Corpus corpus = corpus_from_pybytes(corpus_bytes, params.config.vocab_size);
        return perplexity(params, corpus, ctx_len, mode_from_name(mode), trained_len,
                          max_eval_tokens);
      },
      py::arg("params"), py::arg("corpus"), py::arg("ctx_len"),
      py::arg("mode") = "extrapolation", py::arg("trained_len") = 0,
      py::arg("max_eval_tokens") = 0);

  m.attr("__version__") = kCodeVersion;
}
