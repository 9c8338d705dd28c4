#include "hedge/layers.hpp"

#include <cmath>

namespace hedge::nn {

using ad::Tensor;

Tensor init_weight(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::vector<double> data(rows * cols);
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from_data({rows, cols}, std::move(data), true);
}

// ---- parameter structs -------------------------------------------------------

GruParams GruParams::init(std::size_t in_dim, std::size_t hidden, Rng& rng) {
  GruParams p;
  p.W_z = init_weight(in_dim, hidden, rng);
  p.W_r = init_weight(in_dim, hidden, rng);
  p.W_h = init_weight(in_dim, hidden, rng);
  p.U_z = init_weight(hidden, hidden, rng);
  p.U_r = init_weight(hidden, hidden, rng);
  p.U_h = init_weight(hidden, hidden, rng);
  p.b_z = Tensor::zeros({hidden}, true);
  p.b_r = Tensor::zeros({hidden}, true);
  p.b_h = Tensor::zeros({hidden}, true);
  return p;
}

GruParams GruParams::zeros(std::size_t in_dim, std::size_t hidden) {
  GruParams p;
  p.W_z = Tensor::zeros({in_dim, hidden}, true);
  p.W_r = Tensor::zeros({in_dim, hidden}, true);
  p.W_h = Tensor::zeros({in_dim, hidden}, true);
  p.U_z = Tensor::zeros({hidden, hidden}, true);
  p.U_r = Tensor::zeros({hidden, hidden}, true);
  p.U_h = Tensor::zeros({hidden, hidden}, true);
  p.b_z = Tensor::zeros({hidden}, true);
  p.b_r = Tensor::zeros({hidden}, true);
  p.b_h = Tensor::zeros({hidden}, true);
  return p;
}

void GruParams::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".W_z", W_z);
  out.emplace_back(prefix + ".W_r", W_r);
  out.emplace_back(prefix + ".W_h", W_h);
  out.emplace_back(prefix + ".U_z", U_z);
  out.emplace_back(prefix + ".U_r", U_r);
  out.emplace_back(prefix + ".U_h", U_h);
  out.emplace_back(prefix + ".b_z", b_z);
  out.emplace_back(prefix + ".b_r", b_r);
  out.emplace_back(prefix + ".b_h", b_h);
}

LstmParams LstmParams::init(std::size_t in_dim, std::size_t hidden, Rng& rng) {
  LstmParams p;
  p.W_i = init_weight(in_dim, hidden, rng);
  p.W_f = init_weight(in_dim, hidden, rng);
  p.W_o = init_weight(in_dim, hidden, rng);
  p.W_g = init_weight(in_dim, hidden, rng);
  p.U_i = init_weight(hidden, hidden, rng);
  p.U_f = init_weight(hidden, hidden, rng);
  p.U_o = init_weight(hidden, hidden, rng);
  p.U_g = init_weight(hidden, hidden, rng);
  p.b_i = Tensor::zeros({hidden}, true);
  p.b_f = Tensor::zeros({hidden}, true);
  p.b_o = Tensor::zeros({hidden}, true);
  p.b_g = Tensor::zeros({hidden}, true);
  return p;
}

LstmParams LstmParams::zeros(std::size_t in_dim, std::size_t hidden) {
  LstmParams p;
  p.W_i = Tensor::zeros({in_dim, hidden}, true);
  p.W_f = Tensor::zeros({in_dim, hidden}, true);
  p.W_o = Tensor::zeros({in_dim, hidden}, true);
  p.W_g = Tensor::zeros({in_dim, hidden}, true);
  p.U_i = Tensor::zeros({hidden, hidden}, true);
  p.U_f = Tensor::zeros({hidden, hidden}, true);
  p.U_o = Tensor::zeros({hidden, hidden}, true);
  p.U_g = Tensor::zeros({hidden, hidden}, true);
  p.b_i = Tensor::zeros({hidden}, true);
  p.b_f = Tensor::zeros({hidden}, true);
  p.b_o = Tensor::zeros({hidden}, true);
  p.b_g = Tensor::zeros({hidden}, true);
  return p;
}

void LstmParams::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".W_i", W_i);
  out.emplace_back(prefix + ".W_f", W_f);
  out.emplace_back(prefix + ".W_o", W_o);
  out.emplace_back(prefix + ".W_g", W_g);
  out.emplace_back(prefix + ".U_i", U_i);
  out.emplace_back(prefix + ".U_f", U_f);
  out.emplace_back(prefix + ".U_o", U_o);
  out.emplace_back(prefix + ".U_g", U_g);
  out.emplace_back(prefix + ".b_i", b_i);
  out.emplace_back(prefix + ".b_f", b_f);
  out.emplace_back(prefix + ".b_o", b_o);
  out.emplace_back(prefix + ".b_g", b_g);
}

std::size_t cell_hidden(const CellParams& p) {
  return std::visit([](const auto& c) { return c.hidden(); }, p);
}

RnnLayer RnnLayer::init(Cell cell, std::size_t in_dim, std::size_t hidden,
                        bool bidirectional, Rng& rng) {
  RnnLayer l;
  l.bidirectional = bidirectional;
  if (cell == Cell::Gru) {
    l.fwd = GruParams::init(in_dim, hidden, rng);
    if (bidirectional) l.bwd = GruParams::init(in_dim, hidden, rng);
  } else {
    l.fwd = LstmParams::init(in_dim, hidden, rng);
    if (bidirectional) l.bwd = LstmParams::init(in_dim, hidden, rng);
  }
  return l;
}

void RnnLayer::collect(const std::string& prefix, ParamList& out) const {
  std::visit([&](const auto& c) { c.collect(prefix + ".fwd", out); }, fwd);
  if (bidirectional)
    std::visit([&](const auto& c) { c.collect(prefix + ".bwd", out); }, bwd);
}

AttnPoolParams AttnPoolParams::init(std::size_t state_dim, std::size_t attn_dim,
                                    Rng& rng) {
  if (attn_dim == 0) throw ConfigError("attention dim must be positive");
  AttnPoolParams p;
  p.W = init_weight(state_dim, attn_dim, rng);
  std::vector<double> v(attn_dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(attn_dim));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  p.v = Tensor::from_data({attn_dim}, std::move(v), true);
  return p;
}

void AttnPoolParams::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".W", W);
  out.emplace_back(prefix + ".v", v);
}

MhsaParams MhsaParams::init(std::size_t d_model, std::size_t heads, std::size_t d_ff,
                            Rng& rng) {
  if (heads == 0 || d_model % heads != 0)
    throw ConfigError("model dim " + std::to_string(d_model) +
                      " not divisible by head count " + std::to_string(heads));
  MhsaParams p;
  p.heads = heads;
  p.Wq = init_weight(d_model, d_model, rng);
  p.Wk = init_weight(d_model, d_model, rng);
  p.Wv = init_weight(d_model, d_model, rng);
  p.Wo = init_weight(d_model, d_model, rng);
  p.Wff1 = init_weight(d_model, d_ff, rng);
  p.Wff2 = init_weight(d_ff, d_model, rng);
  p.ln1_gain = Tensor::full({d_model}, 1.0, true);
  p.ln1_bias = Tensor::zeros({d_model}, true);
  p.ln2_gain = Tensor::full({d_model}, 1.0, true);
  p.ln2_bias = Tensor::zeros({d_model}, true);
  return p;
}

void MhsaParams::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".Wq", Wq);
  out.emplace_back(prefix + ".Wk", Wk);
  out.emplace_back(prefix + ".Wv", Wv);
  out.emplace_back(prefix + ".Wo", Wo);
  out.emplace_back(prefix + ".Wff1", Wff1);
  out.emplace_back(prefix + ".Wff2", Wff2);
  out.emplace_back(prefix + ".ln1_gain", ln1_gain);
  out.emplace_back(prefix + ".ln1_bias", ln1_bias);
  out.emplace_back(prefix + ".ln2_gain", ln2_gain);
  out.emplace_back(prefix + ".ln2_bias", ln2_bias);
}

ConvParams ConvParams::init(std::size_t in_dim, std::vector<std::size_t> windows,
                            std::size_t filters, Rng& rng) {
  if (windows.empty() || filters == 0)
    throw ConfigError("conv layer needs windows and filters");
  ConvParams p;
  p.windows = std::move(windows);
  p.filters = filters;
  for (std::size_t w : p.windows) {
    p.banks.push_back(init_weight(w * in_dim, filters, rng));
    p.biases.push_back(Tensor::zeros({filters}, true));
  }
  return p;
}

void ConvParams::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const std::string w = std::to_string(windows[i]);
    out.emplace_back(prefix + ".w" + w, banks[i]);
    out.emplace_back(prefix + ".b" + w, biases[i]);
  }
}

DenseParams DenseParams::init(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  DenseParams p;
  p.W = init_weight(in_dim, out_dim, rng);
  p.b = Tensor::zeros({out_dim}, true);
  return p;
}

void DenseParams::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".W", W);
  out.emplace_back(prefix + ".b", b);
}

// ---- forward functions ----------------------------------------------------------

Tensor embedding_lookup(const emb::EmbeddingTable& table, const std::vector<int>& ids,
                        const Mask& mask) {
  if (ids.size() != mask.size())
    throw DimensionError("embedding_lookup: ids/mask length mismatch");
  return ad::gather_rows(table.rows, ids, mask);
}

Tensor gru_step(const Tensor& x, const Tensor& h_prev, const GruParams& p) {
  using namespace ad;
  Tensor z = ad::sigmoid(add(add(matmul(x, p.W_z), matmul(h_prev, p.U_z)), p.b_z));
  Tensor r = ad::sigmoid(add(add(matmul(x, p.W_r), matmul(h_prev, p.U_r)), p.b_r));
  Tensor cand =
      ad::tanh(add(add(matmul(x, p.W_h), matmul(mul(r, h_prev), p.U_h)), p.b_h));
  // (1-z).h_prev + z.cand
  return add(sub(h_prev, mul(z, h_prev)), mul(z, cand));
}

std::pair<Tensor, Tensor> lstm_step(const Tensor& x, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmParams& p) {
  using namespace ad;
  Tensor i = ad::sigmoid(add(add(matmul(x, p.W_i), matmul(h_prev, p.U_i)), p.b_i));
  Tensor f = ad::sigmoid(add(add(matmul(x, p.W_f), matmul(h_prev, p.U_f)), p.b_f));
  Tensor o = ad::sigmoid(add(add(matmul(x, p.W_o), matmul(h_prev, p.U_o)), p.b_o));
  Tensor g = ad::tanh(add(add(matmul(x, p.W_g), matmul(h_prev, p.U_g)), p.b_g));
  Tensor c = add(mul(f, c_prev), mul(i, g));
  Tensor h = mul(o, ad::tanh(c));
  return {h, c};
}

Tensor cell_step(const Tensor& x, Tensor& h_state, Tensor& c_state, const CellParams& p) {
  if (std::holds_alternative<GruParams>(p)) {
    h_state = gru_step(x, h_state, std::get<GruParams>(p));
  } else {
    auto [h, c] = lstm_step(x, h_state, c_state, std::get<LstmParams>(p));
    h_state = h;
    c_state = c;
  }
  return h_state;
}

Tensor birnn_forward(const Tensor& seq, const Mask& mask, const CellParams& fwd,
                     const CellParams* bwd) {
  if (seq.rank() != 2)
    throw DimensionError("birnn_forward: need [T,D] input, got " +
                         shape_str(seq.shape()));
  if (mask.size() != seq.dim(0))
    throw DimensionError("birnn_forward: mask length vs rows");
  if (!is_prefix_mask(mask))
    throw ContractError("birnn_forward: mask must be a contiguous prefix");
  const std::size_t live = mask_count(mask);
  if (live == 0) throw InvalidMaskError("birnn_forward: empty sequence");

  const std::size_t t_total = seq.dim(0);
  const std::size_t hidden = cell_hidden(fwd);

  std::vector<Tensor> h_fwd(live);
  {
    Tensor h = Tensor::zeros({hidden});
    Tensor c = Tensor::zeros({hidden});
    for (std::size_t t = 0; t < live; ++t)
      h_fwd[t] = cell_step(ad::row(seq, t), h, c, fwd);
  }

  std::vector<Tensor> rows;
  rows.reserve(t_total);
  if (bwd) {
    std::vector<Tensor> h_bwd(live);
    Tensor h = Tensor::zeros({hidden});
    Tensor c = Tensor::zeros({hidden});
    for (std::size_t t = live; t-- > 0;)
      h_bwd[t] = cell_step(ad::row(seq, t), h, c, *bwd);
    for (std::size_t t = 0; t < live; ++t)
      rows.push_back(ad::concat(h_fwd[t], h_bwd[t]));
    for (std::size_t t = live; t < t_total; ++t)
      rows.push_back(Tensor::zeros({2 * hidden}));
  } else {
    for (std::size_t t = 0; t < live; ++t) rows.push_back(h_fwd[t]);
    for (std::size_t t = live; t < t_total; ++t)
      rows.push_back(Tensor::zeros({hidden}));
  }
  return ad::stack_rows(rows);
}

Tensor rnn_forward(const Tensor& seq, const Mask& mask, const RnnLayer& layer) {
  return birnn_forward(seq, mask, layer.fwd, layer.bidirectional ? &layer.bwd : nullptr);
}

AttnPoolResult attention_pool(const Tensor& states, const Mask& mask,
                              const AttnPoolParams& p) {
  if (states.rank() != 2)
    throw DimensionError("attention_pool: need [T,H] states, got " +
                         shape_str(states.shape()));
  if (mask.size() != states.dim(0))
    throw DimensionError("attention_pool: mask length vs rows");
  if (mask_count(mask) == 0)
    throw InvalidMaskError("attention_pool: no live position");

  Tensor scores = ad::matmul(ad::tanh(ad::matmul(states, p.W)), p.v);  // [T]
  Tensor weights = ad::softmax_masked(scores, mask);
  Tensor context = ad::matmul(weights, states);  // [H]
  return {context, weights};
}

Tensor positional_encoding(std::size_t t_len, std::size_t d_model) {
  if (d_model % 2 != 0)
    throw ConfigError("positional encoding needs an even dim, got " +
                      std::to_string(d_model));
  std::vector<double> data(t_len * d_model);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          static_cast<double>(t) /
          std::pow(10000.0, (2.0 * static_cast<double>(i)) / static_cast<double>(d_model));
      data[t * d_model + 2 * i] = std::sin(angle);
      data[t * d_model + 2 * i + 1] = std::cos(angle);
    }
  return Tensor::from_data({t_len, d_model}, std::move(data), false);
}

Tensor mhsa_block(const Tensor& states, const Mask& mask, const MhsaParams& p,
                  MhsaDebug* debug) {
  if (states.rank() != 2)
    throw DimensionError("mhsa_block: need [T,D] states, got " +
                         shape_str(states.shape()));
  const std::size_t t_len = states.dim(0);
  const std::size_t d = states.dim(1);
  if (mask.size() != t_len) throw DimensionError("mhsa_block: mask length vs rows");
  if (mask_count(mask) == 0) throw InvalidMaskError("mhsa_block: no live position");
  if (d % p.heads != 0)
    throw DimensionError("mhsa_block: dim " + std::to_string(d) +
                         " not divisible by " + std::to_string(p.heads) + " heads");

  const std::size_t dh = d / p.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = ad::matmul(states, p.Wq);
  Tensor k = ad::matmul(states, p.Wk);
  Tensor v = ad::matmul(states, p.Wv);

  if (debug) {
    debug->t_len = t_len;
    debug->head_weights.clear();
  }

  Tensor heads_out;
  for (std::size_t h = 0; h < p.heads; ++h) {
    Tensor qh = ad::slice_last(q, h * dh, dh);
    Tensor kh = ad::slice_last(k, h * dh, dh);
    Tensor vh = ad::slice_last(v, h * dh, dh);
    Tensor scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt_dh);
    Tensor weights = ad::softmax_rows_masked(scores, mask);
    if (debug) debug->head_weights.push_back(weights.value());
    Tensor ctx = ad::matmul(weights, vh);  // [T, dh]
    heads_out = h == 0 ? ctx : ad::concat(heads_out, ctx);
  }

  Tensor attn = ad::matmul(heads_out, p.Wo);
  Tensor x1 = ad::layer_norm(ad::add(states, attn), p.ln1_gain, p.ln1_bias);
  Tensor ff = ad::matmul(ad::relu(ad::matmul(x1, p.Wff1)), p.Wff2);
  Tensor x2 = ad::layer_norm(ad::add(x1, ff), p.ln2_gain, p.ln2_bias);
  return ad::mask_rows(x2, mask);
}

namespace {

// unmasked prefix of seq, zero-extended up to `window` rows when shorter
Tensor conv_input(const Tensor& seq, std::size_t live, std::size_t window,
                  std::size_t* eff_len) {
  Tensor sub = ad::take_rows(seq, live);
  if (live < window) {
    sub = ad::pad_rows(sub, window);
    *eff_len = window;
  } else {
    *eff_len = live;
  }
  return sub;
}

}  // namespace

Tensor conv1d_maxpool(const Tensor& seq, const Mask& mask, const ConvParams& p) {
  if (seq.rank() != 2)
    throw DimensionError("conv1d_maxpool: need [T,D] input, got " +
                         shape_str(seq.shape()));
  if (!is_prefix_mask(mask))
    throw ContractError("conv1d_maxpool: mask must be a contiguous prefix");
  const std::size_t live = mask_count(mask);
  if (live == 0) throw InvalidMaskError("conv1d_maxpool: empty sequence");

  Tensor out;
  for (std::size_t i = 0; i < p.windows.size(); ++i) {
    const std::size_t w = p.windows[i];
    std::size_t eff = 0;
    Tensor sub = conv_input(seq, live, w, &eff);
    Tensor conv = ad::relu(ad::conv1d_valid(sub, p.banks[i], p.biases[i], w, eff));
    Tensor pooled = ad::max_rows(conv);  // [filters]
    out = i == 0 ? pooled : ad::concat(out, pooled);
  }
  return out;
}

Tensor conv1d_attnpool(const Tensor& seq, const Mask& mask, const ConvParams& p,
                       const std::vector<AttnPoolParams>& pool) {
  if (pool.size() != p.windows.size())
    throw DimensionError("conv1d_attnpool: one pooling head per window expected");
  if (!is_prefix_mask(mask))
    throw ContractError("conv1d_attnpool: mask must be a contiguous prefix");
  const std::size_t live = mask_count(mask);
  if (live == 0) throw InvalidMaskError("conv1d_attnpool: empty sequence");

  Tensor out;
  for (std::size_t i = 0; i < p.windows.size(); ++i) {
    const std::size_t w = p.windows[i];
    std::size_t eff = 0;
    Tensor sub = conv_input(seq, live, w, &eff);
    Tensor conv = ad::relu(ad::conv1d_valid(sub, p.banks[i], p.biases[i], w, eff));
    AttnPoolResult r = attention_pool(conv, full_mask(eff - w + 1), pool[i]);
    out = i == 0 ? r.context : ad::concat(out, r.context);
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> m(x.numel());
  for (auto& v : m) v = rng.uniform() < rate ? 0.0 : keep_scale;
  return ad::mul(x, Tensor::from_data(x.shape(), std::move(m), false));
}

Tensor dense(const Tensor& x, const DenseParams& p) {
  return ad::add(ad::matmul(x, p.W), p.b);
}

}  // namespace hedge::nn
