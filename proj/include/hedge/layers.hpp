#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hedge/embeddings.hpp"
#include "hedge/rng.hpp"
#include "hedge/tensor.hpp"

namespace hedge::nn {

using ad::Tensor;

enum class Cell { Gru, Lstm };

// ordered named parameter list; order fixes the init draw sequence and the
// checkpoint layout
using ParamList = std::vector<std::pair<std::string, Tensor>>;

// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weight draw
Tensor init_weight(std::size_t rows, std::size_t cols, Rng& rng);

struct GruParams {
  Tensor W_z, W_r, W_h;  // [D_in, H]
  Tensor U_z, U_r, U_h;  // [H, H]
  Tensor b_z, b_r, b_h;  // [H]
  static GruParams init(std::size_t in_dim, std::size_t hidden, Rng& rng);
  static GruParams zeros(std::size_t in_dim, std::size_t hidden);
  void collect(const std::string& prefix, ParamList& out) const;
  std::size_t hidden() const { return b_z.numel(); }
};

struct LstmParams {
  Tensor W_i, W_f, W_o, W_g;  // [D_in, H]
  Tensor U_i, U_f, U_o, U_g;  // [H, H]
  Tensor b_i, b_f, b_o, b_g;  // [H]
  static LstmParams init(std::size_t in_dim, std::size_t hidden, Rng& rng);
  static LstmParams zeros(std::size_t in_dim, std::size_t hidden);
  void collect(const std::string& prefix, ParamList& out) const;
  std::size_t hidden() const { return b_i.numel(); }
};

using CellParams = std::variant<GruParams, LstmParams>;

std::size_t cell_hidden(const CellParams& p);

// one recurrent layer, optionally bidirectional
struct RnnLayer {
  bool bidirectional = true;
  CellParams fwd;
  CellParams bwd;  // meaningful iff bidirectional
  static RnnLayer init(Cell cell, std::size_t in_dim, std::size_t hidden,
                       bool bidirectional, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct AttnPoolParams {
  Tensor W;  // [H_state, H_attn]
  Tensor v;  // [H_attn]
  static AttnPoolParams init(std::size_t state_dim, std::size_t attn_dim, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct MhsaParams {
  std::size_t heads = 4;
  Tensor Wq, Wk, Wv;          // [D, D], head h owns columns [h*D/heads, (h+1)*D/heads)
  Tensor Wo;                  // [D, D]
  Tensor Wff1, Wff2;          // [D, D_ff], [D_ff, D]
  Tensor ln1_gain, ln1_bias;  // [D]
  Tensor ln2_gain, ln2_bias;
  static MhsaParams init(std::size_t d_model, std::size_t heads, std::size_t d_ff,
                         Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct ConvParams {
  std::vector<std::size_t> windows;  // e.g. {3, 4, 5}
  std::size_t filters = 64;          // per window
  std::vector<Tensor> banks;         // per window: [window * D_in, filters]
  std::vector<Tensor> biases;        // per window: [filters]
  static ConvParams init(std::size_t in_dim, std::vector<std::size_t> windows,
                         std::size_t filters, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
  std::size_t out_dim() const { return windows.size() * filters; }
};

struct DenseParams {
  Tensor W;  // [D_in, D_out]
  Tensor b;  // [D_out]
  static DenseParams init(std::size_t in_dim, std::size_t out_dim, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

// ---- forward functions -----------------------------------------------------

// rows of `ids` under a true mask become table rows; masked slots are zero and
// contribute no table gradient
Tensor embedding_lookup(const emb::EmbeddingTable& table, const std::vector<int>& ids,
                        const Mask& mask);

// z = sig(xW_z + hU_z + b_z); r = sig(xW_r + hU_r + b_r)
// htilde = tanh(xW_h + (r.h)U_h + b_h); h' = (1-z).h + z.htilde
Tensor gru_step(const Tensor& x, const Tensor& h_prev, const GruParams& p);

// returns (h', c')
std::pair<Tensor, Tensor> lstm_step(const Tensor& x, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmParams& p);

Tensor cell_step(const Tensor& x, Tensor& h_state, Tensor& c_state, const CellParams& p);

// [T, D] -> [T, 2H] (or [T, H] unidirectional); `mask` must be a prefix.
// Masked rows are zero and are never read by either direction.
Tensor birnn_forward(const Tensor& seq, const Mask& mask, const CellParams& fwd,
                     const CellParams* bwd);

Tensor rnn_forward(const Tensor& seq, const Mask& mask, const RnnLayer& layer);

struct AttnPoolResult {
  Tensor context;  // [H_state]
  Tensor weights;  // [T], zero at masked slots
};

// additive scoring: u_t = v . tanh(states_t W); weights = softmax over live t
AttnPoolResult attention_pool(const Tensor& states, const Mask& mask,
                              const AttnPoolParams& p);

// sinusoidal table, PE[t, 2i] = sin(t / 10000^(2i/D)), PE[t, 2i+1] = cos(same)
Tensor positional_encoding(std::size_t t_len, std::size_t d_model);

// captured attention weights for inspection: per head a row-major [T, T] matrix
struct MhsaDebug {
  std::size_t t_len = 0;
  std::vector<std::vector<double>> head_weights;
};

// scaled dot-product self-attention with key-side masking, output projection,
// residual + layer norm, position-wise feed-forward, residual + layer norm;
// masked rows zeroed on output
Tensor mhsa_block(const Tensor& states, const Mask& mask, const MhsaParams& p,
                  MhsaDebug* debug = nullptr);

// relu conv over the unmasked span (zero-padded up to the window when shorter)
// then max over time, all windows concatenated -> [windows * filters]
Tensor conv1d_maxpool(const Tensor& seq, const Mask& mask, const ConvParams& p);

// the +attention CNN variant: attention pooling over time instead of max
Tensor conv1d_attnpool(const Tensor& seq, const Mask& mask, const ConvParams& p,
                       const std::vector<AttnPoolParams>& pool);

// inverted dropout: zero with probability `rate`, survivors scaled by
// 1/(1-rate); identity when !training or rate == 0
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

Tensor dense(const Tensor& x, const DenseParams& p);

}  // namespace hedge::nn
