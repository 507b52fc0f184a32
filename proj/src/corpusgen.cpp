#include "growlen/corpusgen.hpp"

#include <fstream>

#include "growlen/digest.hpp"
#include "growlen/errors.hpp"
#include "growlen/rng.hpp"

namespace growlen {

namespace {

constexpr int kAlphabet = 64;
constexpr int kFanout = 8;  // candidate successors per order-2 state
constexpr uint8_t kEchoOpen = '[';
constexpr uint8_t kEchoClose = ']';

const char* symbol_bytes() {
  static const char syms[kAlphabet + 1] =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 .";
  return syms;
}

}  // namespace

std::vector<uint8_t> generate_corpus(const CorpusGenSpec& spec) {
  if (spec.size_bytes == 0) throw ConfigError("gen-corpus: size must be positive");
  if (spec.echo_lags.empty() || spec.echo_min_len < 1 || spec.echo_max_len < spec.echo_min_len)
    throw ConfigError("gen-corpus: invalid echo parameters");
  for (int lag : spec.echo_lags)
    if (lag < 2) throw ConfigError("gen-corpus: echo lags must be >= 2");

  Rng table_rng(derive_seed(spec.seed, 0x7461626cull));  // transition tables
  Rng walk_rng(derive_seed(spec.seed, 0x77616c6bull));   // the emission walk

  // Sparse order-2 transitions: per (prev2, prev1) state, kFanout candidate
  // successors drawn once, sampled under a fixed weight profile (total 22).
  const int weights[kFanout] = {8, 5, 3, 2, 1, 1, 1, 1};
  std::vector<uint8_t> successors(static_cast<size_t>(kAlphabet) * kAlphabet * kFanout);
  for (auto& s : successors) s = static_cast<uint8_t>(table_rng.next_below(kAlphabet));

  const char* syms = symbol_bytes();
  std::vector<uint8_t> out;
  out.reserve(spec.size_bytes);

  int prev2 = 0, prev1 = 1;
  int echo_left = 0;
  int echo_lag = 0;

  auto emit_markov = [&]() {
    const size_t state = (static_cast<size_t>(prev2) * kAlphabet + prev1) * kFanout;
    int pick = static_cast<int>(walk_rng.next_below(22));
    int idx = 0;
    while (pick >= weights[idx]) {
      pick -= weights[idx];
      idx += 1;
    }
    const int sym = successors[state + static_cast<size_t>(idx)];
    prev2 = prev1;
    prev1 = sym;
    out.push_back(static_cast<uint8_t>(syms[sym]));
  };

  while (out.size() < spec.size_bytes) {
    if (echo_left > 0) {
      // verbatim copy from echo_lag back (may itself contain markers)
      out.push_back(out[out.size() - static_cast<size_t>(echo_lag)]);
      echo_left -= 1;
      if (echo_left == 0 && out.size() < spec.size_bytes) out.push_back(kEchoClose);
      continue;
    }
    if (walk_rng.next_double() < spec.echo_entry_prob) {
      const int lag = spec.echo_lags[walk_rng.next_below(spec.echo_lags.size())];
      if (static_cast<uint64_t>(lag) <= out.size()) {
        echo_lag = lag;
        echo_left = spec.echo_min_len +
                    static_cast<int>(walk_rng.next_below(
                        static_cast<uint64_t>(spec.echo_max_len - spec.echo_min_len + 1)));
        out.push_back(kEchoOpen);
        continue;
      }
    }
    emit_markov();
  }
  out.resize(spec.size_bytes);
  return out;
}

uint64_t write_corpus(const CorpusGenSpec& spec, const std::string& path) {
  const auto bytes = generate_corpus(spec);
  std::ofstream outf(path, std::ios::binary | std::ios::trunc);
  if (!outf) throw IoError("gen-corpus: cannot open " + path + " for writing");
  outf.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!outf) throw IoError("gen-corpus: write failure on " + path);
  return fnv1a(bytes.data(), bytes.size());
}

}  // namespace growlen
