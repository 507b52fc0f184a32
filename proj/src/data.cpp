#include "growlen/data.hpp"

#include <cstdio>
#include <fstream>

#include "growlen/digest.hpp"
#include "growlen/rng.hpp"

namespace growlen {

Corpus Corpus::slice(int64_t begin, int64_t end) const {
  if (begin < 0 || end > size() || begin >= end)
    throw DataError("corpus slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                    ") is not a valid sub-range of " + std::to_string(size()) + " tokens");
  Corpus out;
  out.tokens.assign(tokens.begin() + begin, tokens.begin() + end);
  out.vocab_size = vocab_size;
  Fnv1a h;
  h.update(&source_digest, sizeof(source_digest));
  h.update(&begin, sizeof(begin));
  h.update(&end, sizeof(end));
  out.source_digest = h.value();
  return out;
}

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on corpus file: " + path);
  return bytes;
}

}  // namespace

Corpus corpus_from_bytes(const std::vector<uint8_t>& bytes, int vocab_size) {
  if (bytes.empty()) throw DataError("corpus is empty");
  Corpus c;
  c.vocab_size = vocab_size;
  c.source_digest = fnv1a(bytes.data(), bytes.size());
  c.tokens.reserve(bytes.size());
  for (uint8_t b : bytes) {
    if (static_cast<int>(b) >= vocab_size)
      throw DataError("corpus byte " + std::to_string(static_cast<int>(b)) + " >= vocab_size " +
                      std::to_string(vocab_size));
    c.tokens.push_back(static_cast<int32_t>(b));
  }
  return c;
}

Corpus load_corpus(const std::string& path, int vocab_size, CorpusFormat format) {
  if (vocab_size < 2) throw ConfigError("corpus: vocab_size must be >= 2");
  const auto bytes = read_file(path);
  if (bytes.empty()) throw DataError("corpus file is empty: " + path);

  if (format == CorpusFormat::raw_bytes) return corpus_from_bytes(bytes, vocab_size);

  if (bytes.size() % 4 != 0)
    throw DataError("u32 corpus length " + std::to_string(bytes.size()) + " is not a multiple of 4");
  Corpus c;
  c.vocab_size = vocab_size;
  c.source_digest = fnv1a(bytes.data(), bytes.size());
  c.tokens.reserve(bytes.size() / 4);
  for (size_t i = 0; i < bytes.size(); i += 4) {
    const uint32_t id = static_cast<uint32_t>(bytes[i]) | (static_cast<uint32_t>(bytes[i + 1]) << 8) |
                        (static_cast<uint32_t>(bytes[i + 2]) << 16) |
                        (static_cast<uint32_t>(bytes[i + 3]) << 24);
    if (id >= static_cast<uint32_t>(vocab_size))
      throw DataError("corpus id " + std::to_string(id) + " >= vocab_size " + std::to_string(vocab_size));
    c.tokens.push_back(static_cast<int32_t>(id));
  }
  return c;
}

ChunkLoader::ChunkLoader(const Corpus& corpus, int seq_len, int64_t tokens_per_batch, uint64_t seed)
    : corpus_(&corpus), seq_len_(seq_len), seed_(seed) {
  if (seq_len < 1) throw ConfigError("loader: seq_len must be >= 1");
  if (tokens_per_batch % seq_len != 0)
    throw ConfigError("loader: tokens_per_batch " + std::to_string(tokens_per_batch) +
                      " not divisible by seq_len " + std::to_string(seq_len));
  batch_size_ = static_cast<int>(tokens_per_batch / seq_len);
  chunks_per_epoch_ = (corpus.size() - 1) / seq_len;
  if (chunks_per_epoch_ < batch_size_)
    throw DataError("loader: corpus of " + std::to_string(corpus.size()) + " tokens yields " +
                    std::to_string(chunks_per_epoch_) + " chunks, fewer than batch size " +
                    std::to_string(batch_size_));
  reshuffle();
}

void ChunkLoader::reshuffle() {
  order_.resize(static_cast<size_t>(chunks_per_epoch_));
  for (int64_t i = 0; i < chunks_per_epoch_; ++i) order_[static_cast<size_t>(i)] = i;
  Rng rng(derive_seed(seed_, static_cast<uint64_t>(epoch_)));
  rng.shuffle(order_.data(), order_.size());
}

void ChunkLoader::seek(int64_t epoch, int64_t cursor) {
  if (epoch < 0 || cursor < 0 || cursor > chunks_per_epoch_)
    throw ContractError("loader: invalid seek position");
  epoch_ = epoch;
  cursor_ = cursor;
  reshuffle();
}

Batch ChunkLoader::next_batch() {
  // drop the trailing partial batch of each epoch
  if (cursor_ + batch_size_ > chunks_per_epoch_) {
    epoch_ += 1;
    cursor_ = 0;
    reshuffle();
  }
  Batch b;
  b.batch_size = batch_size_;
  b.seq_len = seq_len_;
  b.inputs.resize(static_cast<size_t>(batch_size_) * seq_len_);
  b.targets.resize(static_cast<size_t>(batch_size_) * seq_len_);
  const auto& toks = corpus_->tokens;
  for (int i = 0; i < batch_size_; ++i) {
    const int64_t chunk = order_[static_cast<size_t>(cursor_ + i)];
    const int64_t from = chunk * seq_len_;
    std::copy_n(toks.begin() + from, seq_len_, b.inputs.begin() + static_cast<int64_t>(i) * seq_len_);
    std::copy_n(toks.begin() + from + 1, seq_len_, b.targets.begin() + static_cast<int64_t>(i) * seq_len_);
  }
  cursor_ += batch_size_;
  return b;
}

ChunkLoader make_loader(const Corpus& corpus, int seq_len, int64_t tokens_per_batch, uint64_t seed) {
  return ChunkLoader(corpus, seq_len, tokens_per_batch, seed);
}

Batch capacity_pack(const Corpus& corpus, int seq_len, int64_t token_budget) {
  if (seq_len < 1) throw ConfigError("capacity_pack: seq_len must be >= 1");
  if (token_budget < seq_len)
    throw DataError("capacity_pack: budget " + std::to_string(token_budget) +
                    " below one sequence of " + std::to_string(seq_len));
  const int64_t want = token_budget / seq_len;
  const int64_t have = (corpus.size() - 1) / seq_len;
  if (have < 1) throw DataError("capacity_pack: corpus too small for one sequence");
  const int64_t n = std::min(want, have);
  Batch b;
  b.batch_size = static_cast<int>(n);
  b.seq_len = seq_len;
  b.inputs.resize(static_cast<size_t>(n) * seq_len);
  b.targets.resize(static_cast<size_t>(n) * seq_len);
  for (int64_t i = 0; i < n; ++i) {
    const int64_t from = i * seq_len;
    std::copy_n(corpus.tokens.begin() + from, seq_len, b.inputs.begin() + i * seq_len);
    std::copy_n(corpus.tokens.begin() + from + 1, seq_len, b.targets.begin() + i * seq_len);
  }
  return b;
}

}  // namespace growlen
