#pragma once

// Shared synthetic fixtures for the unit and acceptance suites.

#include <set>
#include <string>
#include <vector>

#include "hedge/corpus.hpp"
#include "hedge/embeddings.hpp"
#include "hedge/rng.hpp"

namespace hedge::testfix {

// deterministic synthetic word table over exactly the given tokens
inline emb::EmbeddingTable make_table(const std::set<std::string>& vocab,
                                      std::size_t dim, std::uint64_t seed) {
  emb::EmbeddingTable t;
  t.dim = dim;
  t.trainable = false;
  t.tokens = {emb::EmbeddingTable::kPadToken, emb::EmbeddingTable::kUnkToken};
  t.tokens.insert(t.tokens.end(), vocab.begin(), vocab.end());
  Rng rng(seed);
  std::vector<double> data(t.tokens.size() * dim, 0.0);
  for (std::size_t r = 2; r < t.tokens.size(); ++r)
    for (std::size_t j = 0; j < dim; ++j) data[r * dim + j] = rng.uniform(-0.5, 0.5);
  t.rows = ad::Tensor::from_data({t.tokens.size(), dim}, std::move(data), false);
  for (std::size_t i = 0; i < t.tokens.size(); ++i)
    t.token_index[t.tokens[i]] = static_cast<int>(i);
  return t;
}

inline std::set<std::string> vocab_of(const std::vector<corpus::Sentence>& xs) {
  std::set<std::string> v;
  for (const auto& s : xs)
    for (const auto& t : s.tokens) v.insert(t);
  return v;
}

// 64 short sentences, half carrying an unmistakable hedge marker, with
// heuristic tags attached; small enough to memorize quickly
inline std::vector<corpus::Sentence> overfit_corpus() {
  const std::vector<std::string> subjects = {"the report", "the study",  "the film",
                                             "the bridge", "the treaty", "the album",
                                             "the garden", "the engine"};
  const std::vector<std::string> hedges = {"may", "might", "possibly", "perhaps"};
  const std::vector<std::string> verbs = {"was finished", "was signed", "was released",
                                          "was repaired"};

  std::vector<corpus::Sentence> out;
  int id = 0;
  for (const auto& subj : subjects) {
    for (std::size_t k = 0; k < 8; ++k) {
      corpus::Sentence s;
      s.id = "f" + std::to_string(++id);
      const bool uncertain = k % 2 == 0;
      std::string text = subj + " ";
      if (uncertain) text += hedges[k / 2] + " have been " +
                             verbs[(id + static_cast<int>(k)) % verbs.size()].substr(4);
      else text += verbs[k / 2];
      text += " in 19" + std::to_string(10 + id) + " .";
      s.tokens = corpus::tokenize_clean(text);
      s.pos = corpus::heuristic_pos_tag(s.tokens);
      s.uncertain = uncertain;
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace hedge::testfix
