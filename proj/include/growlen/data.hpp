#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "growlen/errors.hpp"

namespace growlen {

enum class CorpusFormat { raw_bytes, u32le };

// Token stream plus provenance digest. Byte-level tokenization is the
// default: with vocab 256 every byte is its own id.
struct Corpus {
  std::vector<int32_t> tokens;
  int vocab_size = 256;
  uint64_t source_digest = 0;

  int64_t size() const { return static_cast<int64_t>(tokens.size()); }
  // Sub-range view (copying); used to split off a held-out eval range.
  Corpus slice(int64_t begin, int64_t end) const;
};

Corpus load_corpus(const std::string& path, int vocab_size,
                   CorpusFormat format = CorpusFormat::raw_bytes);
Corpus corpus_from_bytes(const std::vector<uint8_t>& bytes, int vocab_size = 256);

struct Batch {
  int batch_size = 0;
  int seq_len = 0;
  std::vector<int32_t> inputs;   // batch_size x seq_len, row-major
  std::vector<int32_t> targets;  // same shape, shifted by one in the stream
};

// Fixed-length chunk loader with token-constant batches:
// batch_size = tokens_per_batch / seq_len. Chunk boundaries are fixed per
// seq_len; chunk order reshuffles each epoch under a seed derived from
// (seed, epoch). Never yields partial batches.
class ChunkLoader {
 public:
  ChunkLoader(const Corpus& corpus, int seq_len, int64_t tokens_per_batch, uint64_t seed);

  Batch next_batch();

  int seq_len() const { return seq_len_; }
  int batch_size() const { return batch_size_; }
  int64_t tokens_per_batch() const { return static_cast<int64_t>(batch_size_) * seq_len_; }
  int64_t chunks_per_epoch() const { return chunks_per_epoch_; }
  int64_t batches_per_epoch() const { return chunks_per_epoch_ / batch_size_; }

  // Replayable position: rebuilding a loader and seeking to (epoch, cursor)
  // reproduces the stream exactly.
  int64_t epoch() const { return epoch_; }
  int64_t cursor() const { return cursor_; }
  void seek(int64_t epoch, int64_t cursor);

 private:
  void reshuffle();
  const Corpus* corpus_;
  int seq_len_;
  int batch_size_;
  int64_t chunks_per_epoch_;
  uint64_t seed_;
  int64_t epoch_ = 0;
  int64_t cursor_ = 0;  // next chunk index within the shuffled order
  std::vector<int64_t> order_;
};

ChunkLoader make_loader(const Corpus& corpus, int seq_len, int64_t tokens_per_batch, uint64_t seed);

// One batch of as many full sequences as a token budget admits, taken from
// the front of the corpus. Callers derive the budget from the profiler's
// memory model (max_tokens_at_capacity) for capacity-style packing.
Batch capacity_pack(const Corpus& corpus, int seq_len, int64_t token_budget);

}  // namespace growlen
