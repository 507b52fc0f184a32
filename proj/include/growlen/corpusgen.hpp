#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace growlen {

// Deterministic synthetic byte corpus: an order-3 Markov source over a
// 64-symbol alphabet, interleaved with echo segments that copy verbatim
// from a fixed long lag and are bracketed by marker bytes. The echoes put
// real information at distances beyond a short context window, so longer
// training contexts have something genuine to learn; the markers make the
// copy rule learnable without deep induction circuitry.
struct CorpusGenSpec {
  uint64_t size_bytes = 0;
  uint64_t seed = 0;
  // echo structure; defaults give roughly 40% echoed bytes
  std::vector<int> echo_lags = {40};
  int echo_min_len = 24;
  int echo_max_len = 96;
  double echo_entry_prob = 1.0 / 64.0;
};

std::vector<uint8_t> generate_corpus(const CorpusGenSpec& spec);

// Generate and write; returns the content digest.
uint64_t write_corpus(const CorpusGenSpec& spec, const std::string& path);

}  // namespace growlen
