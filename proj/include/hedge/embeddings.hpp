#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "hedge/tensor.hpp"

namespace hedge::emb {

// Token -> vector map backing either the frozen pretrained word table or the
// trainable part-of-speech table. Row 0 is PAD (all-zero, never updated),
// row 1 is UNK.
struct EmbeddingTable {
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  std::size_t dim = 0;
  ad::Tensor rows;                                    // [V, dim]
  std::vector<std::string> tokens;                    // by row id
  std::unordered_map<std::string, int> token_index;   // token -> row id
  bool trainable = false;

  std::size_t size() const { return tokens.size(); }

  int id_of(const std::string& tok) const {
    auto it = token_index.find(tok);
    return it == token_index.end() ? kUnkId : it->second;
  }

  bool has(const std::string& tok) const { return token_index.count(tok) != 0; }

  // fingerprint of the token list in row order
  std::uint64_t vocab_hash() const { return hash_strings(tokens); }

  void save(const std::string& path) const;
  static EmbeddingTable load(const std::string& path);
};

// id-ordered vocabulary built from a corpus: PAD=0, UNK=1, then tokens by
// descending frequency with lexicographic tie-break
struct Vocab {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;
  std::size_t size() const { return id_to_token.size(); }
};

Vocab build_vocab(const std::vector<std::vector<std::string>>& token_lists);

struct LoadReport {
  std::size_t file_rows = 0;        // data lines seen
  std::size_t loaded = 0;           // rows kept (in-vocab)
  std::size_t malformed = 0;        // skipped lines
  std::size_t vocab_size = 0;       // corpus vocab queried
  std::size_t covered = 0;          // vocab tokens with a vector
  double coverage() const {
    return vocab_size ? static_cast<double>(covered) / static_cast<double>(vocab_size)
                      : 0.0;
  }
};

// Streams a word2vec/GloVe text file (optional "count dim" header) and keeps
// only rows for tokens in corpus_vocab. UNK becomes the mean of the kept
// vectors unless zero_unk. Row order is PAD, UNK, then covered tokens
// lexicographically, so the table is independent of file line order.
EmbeddingTable load_vectors(const std::string& path,
                            const std::set<std::string>& corpus_vocab,
                            LoadReport* report = nullptr, bool zero_unk = false);

// Trainable table for the tag set: uniform(-0.1, 0.1) rows, zero frozen PAD.
// Tags are laid out sorted, after PAD and UNK.
EmbeddingTable init_pos_table(const std::vector<std::string>& tagset,
                              std::size_t dim, std::uint64_t seed);

}  // namespace hedge::emb
