#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hedge/corpus.hpp"
#include "hedge/embeddings.hpp"
#include "hedge/layers.hpp"

namespace hedge::model {

enum class Arch { Cnn, Rnn, Transformer, PosOnly, JointInput, JointLatent };

const char* arch_name(Arch a);
Arch arch_from_name(const std::string& name);

// Declarative description of one architecture; enough to rebuild the model.
struct ModelSpec {
  std::string preset;  // display name
  Arch arch = Arch::Rnn;
  nn::Cell word_cell = nn::Cell::Gru;
  nn::Cell pos_cell = nn::Cell::Lstm;
  bool word_attention = false;
  bool pos_attention = false;
  std::size_t hidden = 64;
  std::size_t layers = 2;
  std::size_t pos_dim = 8;
  std::size_t attn_dim = 64;
  double dropout = 0.5;
  bool bidirectional = true;
  bool finetune_words = false;     // word table stays frozen by default
  std::size_t heads = 4;           // transformer
  std::size_t ff_mult = 4;         // transformer feed-forward width = ff_mult * D
  std::vector<std::size_t> conv_windows{3, 4, 5};
  std::size_t conv_filters = 64;

  bool uses_words() const { return arch != Arch::PosOnly; }
  bool uses_pos() const {
    return arch == Arch::PosOnly || arch == Arch::JointInput || arch == Arch::JointLatent;
  }
  void validate() const;  // throws ConfigError

  std::string to_json() const;
  static ModelSpec from_json(const std::string& json_text);
};

// the 18 named configurations
std::vector<std::string> preset_names();
ModelSpec preset(const std::string& name);  // ConfigError listing valid names

// One branch: an RNN stack plus optional attention pooling on top of the last
// layer's state sequence.
struct Branch {
  std::vector<nn::RnnLayer> rnn;
  std::optional<nn::AttnPoolParams> attn;
};

struct Model {
  ModelSpec spec;
  std::uint64_t build_seed = 0;

  emb::EmbeddingTable words;  // engaged iff spec.uses_words()
  emb::EmbeddingTable tags;   // engaged iff spec.uses_pos(); trainable

  Branch word_branch;
  Branch pos_branch;
  std::optional<nn::ConvParams> conv;
  std::vector<nn::AttnPoolParams> conv_attn;  // cnn with attention pooling
  std::vector<nn::MhsaParams> blocks;         // transformer
  nn::DenseParams head;

  // every trainable tensor, in a fixed traversal order
  nn::ParamList params;

  std::uint64_t vocab_hash = 0;
  std::uint64_t tagset_hash = 0;
};

// Builds all parameters from `seed`; two builds with the same inputs are
// bit-identical. `tagset` may be empty for word-only kinds.
Model build_model(const ModelSpec& spec, emb::EmbeddingTable words,
                  const std::vector<std::string>& tagset, std::uint64_t seed);

std::size_t parameter_count(const Model& m);

// per-token concatenation of word and tag embeddings: [T,Dw] + [T,Dp] -> [T,Dw+Dp]
ad::Tensor joint_input_combine(const ad::Tensor& word_emb, const ad::Tensor& pos_emb);

// final-layer fusion of the two branch sentence vectors: [Hw] + [Hp] -> [Hw+Hp]
ad::Tensor joint_latent_combine(const ad::Tensor& h_word, const ad::Tensor& h_pos);

// P(uncertain) for one encoded sentence; the returned scalar stays connected
// to the tape so callers can backpropagate a loss through it
ad::Tensor forward_one(const Model& m, const corpus::Encoded& x, bool training,
                       Rng& rng);

// inference probabilities for a batch (no graph kept)
std::vector<double> forward(const Model& m, const std::vector<corpus::Encoded>& batch);

// label = uncertain iff probability >= threshold
std::vector<int> predict(const Model& m, const std::vector<corpus::Encoded>& batch,
                         double threshold = 0.5);

// encode against the model's own vocab/tagset; empty sentences come back with
// length 0 and must not reach forward_one
corpus::Encoded encode_sentence(const Model& m, const corpus::Sentence& s,
                                std::size_t max_len = corpus::kMaxLen);
std::vector<corpus::Encoded> encode_sentences(const Model& m,
                                              const std::vector<corpus::Sentence>& xs);

// sentence-level prediction with the empty-sentence fallback (predicted
// certain), so evaluation covers every input row
std::vector<int> predict_sentences(const Model& m,
                                   const std::vector<corpus::Sentence>& xs,
                                   double threshold = 0.5,
                                   std::vector<double>* probs_out = nullptr);

// ---- checkpoint container ----------------------------------------------------

void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace hedge::model
