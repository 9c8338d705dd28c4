#include "hedge/model.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "hedge/binio.hpp"

namespace hedge::model {

using ad::Tensor;
using nlohmann::json;

const char* arch_name(Arch a) {
  switch (a) {
    case Arch::Cnn: return "cnn";
    case Arch::Rnn: return "rnn";
    case Arch::Transformer: return "transformer";
    case Arch::PosOnly: return "pos-only";
    case Arch::JointInput: return "joint-input";
    case Arch::JointLatent: return "joint-latent";
  }
  return "?";
}

Arch arch_from_name(const std::string& name) {
  for (Arch a : {Arch::Cnn, Arch::Rnn, Arch::Transformer, Arch::PosOnly,
                 Arch::JointInput, Arch::JointLatent})
    if (name == arch_name(a)) return a;
  throw ConfigError("unknown architecture: " + name);
}

namespace {

const char* cell_name(nn::Cell c) { return c == nn::Cell::Gru ? "gru" : "lstm"; }

nn::Cell cell_from_name(const std::string& s) {
  if (s == "gru") return nn::Cell::Gru;
  if (s == "lstm") return nn::Cell::Lstm;
  throw ConfigError("unknown cell: " + s);
}

}  // namespace

void ModelSpec::validate() const {
  if (hidden == 0) throw ConfigError("hidden must be positive");
  if (layers == 0) throw ConfigError("layers must be positive");
  if (pos_dim == 0) throw ConfigError("pos_dim must be positive");
  if (attn_dim == 0) throw ConfigError("attn_dim must be positive");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("dropout must be in [0,1), got " + std::to_string(dropout));
  if (arch == Arch::Transformer && heads == 0)
    throw ConfigError("transformer needs at least one head");
  if (arch == Arch::Cnn && conv_windows.empty())
    throw ConfigError("cnn needs at least one window size");
}

std::string ModelSpec::to_json() const {
  json j;
  j["preset"] = preset;
  j["arch"] = arch_name(arch);
  j["word_cell"] = cell_name(word_cell);
  j["pos_cell"] = cell_name(pos_cell);
  j["word_attention"] = word_attention;
  j["pos_attention"] = pos_attention;
  j["hidden"] = hidden;
  j["layers"] = layers;
  j["pos_dim"] = pos_dim;
  j["attn_dim"] = attn_dim;
  j["dropout"] = dropout;
  j["bidirectional"] = bidirectional;
  j["finetune_words"] = finetune_words;
  j["heads"] = heads;
  j["ff_mult"] = ff_mult;
  j["conv_windows"] = conv_windows;
  j["conv_filters"] = conv_filters;
  return j.dump();
}

ModelSpec ModelSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model spec: ") + e.what());
  }
  ModelSpec s;
  s.preset = j.value("preset", "");
  s.arch = arch_from_name(j.at("arch").get<std::string>());
  s.word_cell = cell_from_name(j.value("word_cell", "gru"));
  s.pos_cell = cell_from_name(j.value("pos_cell", "lstm"));
  s.word_attention = j.value("word_attention", false);
  s.pos_attention = j.value("pos_attention", false);
  s.hidden = j.value("hidden", std::size_t{64});
  s.layers = j.value("layers", std::size_t{2});
  s.pos_dim = j.value("pos_dim", std::size_t{8});
  s.attn_dim = j.value("attn_dim", std::size_t{64});
  s.dropout = j.value("dropout", 0.5);
  s.bidirectional = j.value("bidirectional", true);
  s.finetune_words = j.value("finetune_words", false);
  s.heads = j.value("heads", std::size_t{4});
  s.ff_mult = j.value("ff_mult", std::size_t{4});
  s.conv_windows = j.value("conv_windows", std::vector<std::size_t>{3, 4, 5});
  s.conv_filters = j.value("conv_filters", std::size_t{64});
  s.validate();
  return s;
}

// ---- presets -------------------------------------------------------------------

namespace {

struct PresetDef {
  const char* name;
  Arch arch;
  nn::Cell word_cell;
  nn::Cell pos_cell;
  bool word_att;
  bool pos_att;
};

constexpr PresetDef kPresets[] = {
    {"cnn", Arch::Cnn, nn::Cell::Gru, nn::Cell::Lstm, false, false},
    {"gru", Arch::Rnn, nn::Cell::Gru, nn::Cell::Lstm, false, false},
    {"lstm", Arch::Rnn, nn::Cell::Lstm, nn::Cell::Lstm, false, false},
    {"transformer", Arch::Transformer, nn::Cell::Gru, nn::Cell::Lstm, false, false},
    {"cnn-att", Arch::Cnn, nn::Cell::Gru, nn::Cell::Lstm, true, false},
    {"gru-att", Arch::Rnn, nn::Cell::Gru, nn::Cell::Lstm, true, false},
    {"lstm-att", Arch::Rnn, nn::Cell::Lstm, nn::Cell::Lstm, true, false},
    {"pos-gru", Arch::PosOnly, nn::Cell::Gru, nn::Cell::Gru, false, false},
    {"pos-lstm", Arch::PosOnly, nn::Cell::Gru, nn::Cell::Lstm, false, false},
    {"pos-gru-att", Arch::PosOnly, nn::Cell::Gru, nn::Cell::Gru, false, true},
    {"pos-lstm-att", Arch::PosOnly, nn::Cell::Gru, nn::Cell::Lstm, false, true},
    {"joint-input-gru", Arch::JointInput, nn::Cell::Gru, nn::Cell::Lstm, false, false},
    {"joint-input-lstm", Arch::JointInput, nn::Cell::Lstm, nn::Cell::Lstm, false, false},
    {"joint-input-gru-att", Arch::JointInput, nn::Cell::Gru, nn::Cell::Lstm, true, false},
    {"joint-input-lstm-att", Arch::JointInput, nn::Cell::Lstm, nn::Cell::Lstm, true,
     false},
    {"joint-latent-gru", Arch::JointLatent, nn::Cell::Gru, nn::Cell::Gru, true, true},
    {"joint-latent-lstm", Arch::JointLatent, nn::Cell::Lstm, nn::Cell::Lstm, true, true},
    {"joint-latent-gru-lstm-att", Arch::JointLatent, nn::Cell::Gru, nn::Cell::Lstm, true,
     true},
};

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : kPresets) names.emplace_back(p.name);
  return names;
}

ModelSpec preset(const std::string& name) {
  for (const auto& p : kPresets) {
    if (name == p.name) {
      ModelSpec s;
      s.preset = p.name;
      s.arch = p.arch;
      s.word_cell = p.word_cell;
      s.pos_cell = p.pos_cell;
      s.word_attention = p.word_att;
      s.pos_attention = p.pos_att;
      return s;
    }
  }
  std::string all;
  for (const auto& p : kPresets) {
    if (!all.empty()) all += ", ";
    all += p.name;
  }
  throw ConfigError("unknown preset \"" + name + "\"; valid presets: " + all);
}

// ---- build ---------------------------------------------------------------------

namespace {

std::size_t state_dim(const ModelSpec& s) {
  return s.hidden * (s.bidirectional ? 2 : 1);
}

Branch build_branch(const ModelSpec& spec, nn::Cell cell, bool attention,
                    std::size_t in_dim, Rng& rng) {
  Branch br;
  std::size_t d = in_dim;
  for (std::size_t l = 0; l < spec.layers; ++l) {
    br.rnn.push_back(nn::RnnLayer::init(cell, d, spec.hidden, spec.bidirectional, rng));
    d = state_dim(spec);
  }
  if (attention)
    br.attn = nn::AttnPoolParams::init(state_dim(spec), spec.attn_dim, rng);
  return br;
}

void collect_branch(const Branch& br, const std::string& prefix, nn::ParamList& out) {
  for (std::size_t l = 0; l < br.rnn.size(); ++l)
    br.rnn[l].collect(prefix + ".rnn" + std::to_string(l), out);
  if (br.attn) br.attn->collect(prefix + ".attn", out);
}

}  // namespace

Model build_model(const ModelSpec& spec, emb::EmbeddingTable words,
                  const std::vector<std::string>& tagset, std::uint64_t seed) {
  spec.validate();
  if (spec.uses_words() && words.size() == 0)
    throw ConfigError("preset " + spec.preset + " needs a word embedding table");
  if (spec.uses_pos() && tagset.empty())
    throw ConfigError("preset " + spec.preset + " needs a POS tagset");

  Model m;
  m.spec = spec;
  m.build_seed = seed;
  Rng rng(seed);

  if (spec.uses_pos()) {
    m.tags = emb::init_pos_table(tagset, spec.pos_dim, rng.next_u64());
    m.params.emplace_back("pos_table.rows", m.tags.rows);
  }
  if (spec.uses_words()) {
    m.words = std::move(words);
    if (spec.finetune_words) {
      m.words.trainable = true;
      m.words.rows.enable_grad();
      m.params.emplace_back("word_table.rows", m.words.rows);
    }
  }

  const std::size_t word_dim = spec.uses_words() ? m.words.dim : 0;
  std::size_t head_in = 0;

  switch (spec.arch) {
    case Arch::Rnn: {
      m.word_branch = build_branch(spec, spec.word_cell, spec.word_attention, word_dim, rng);
      collect_branch(m.word_branch, "word", m.params);
      head_in = state_dim(spec);
      break;
    }
    case Arch::Cnn: {
      m.conv = nn::ConvParams::init(word_dim, spec.conv_windows, spec.conv_filters, rng);
      m.conv->collect("conv", m.params);
      if (spec.word_attention) {
        for (std::size_t i = 0; i < spec.conv_windows.size(); ++i) {
          m.conv_attn.push_back(
              nn::AttnPoolParams::init(spec.conv_filters, spec.attn_dim, rng));
          m.conv_attn.back().collect(
              "conv.attn" + std::to_string(spec.conv_windows[i]), m.params);
        }
      }
      head_in = m.conv->out_dim();
      break;
    }
    case Arch::Transformer: {
      if (word_dim % 2 != 0)
        throw ConfigError("transformer needs an even embedding dim, got " +
                          std::to_string(word_dim));
      if (word_dim % spec.heads != 0)
        throw ConfigError("embedding dim " + std::to_string(word_dim) +
                          " not divisible by " + std::to_string(spec.heads) + " heads");
      for (std::size_t l = 0; l < spec.layers; ++l) {
        m.blocks.push_back(
            nn::MhsaParams::init(word_dim, spec.heads, spec.ff_mult * word_dim, rng));
        m.blocks.back().collect("block" + std::to_string(l), m.params);
      }
      head_in = word_dim;
      break;
    }
    case Arch::PosOnly: {
      m.pos_branch = build_branch(spec, spec.pos_cell, spec.pos_attention, spec.pos_dim, rng);
      collect_branch(m.pos_branch, "pos", m.params);
      head_in = state_dim(spec);
      break;
    }
    case Arch::JointInput: {
      m.word_branch = build_branch(spec, spec.word_cell, spec.word_attention,
                                   word_dim + spec.pos_dim, rng);
      collect_branch(m.word_branch, "word", m.params);
      head_in = state_dim(spec);
      break;
    }
    case Arch::JointLatent: {
      m.word_branch = build_branch(spec, spec.word_cell, spec.word_attention, word_dim, rng);
      m.pos_branch = build_branch(spec, spec.pos_cell, spec.pos_attention, spec.pos_dim, rng);
      collect_branch(m.word_branch, "word", m.params);
      collect_branch(m.pos_branch, "pos", m.params);
      head_in = 2 * state_dim(spec);
      break;
    }
  }

  m.head = nn::DenseParams::init(head_in, 1, rng);
  m.head.collect("head", m.params);

  m.vocab_hash = spec.uses_words() ? m.words.vocab_hash() : 0;
  m.tagset_hash = spec.uses_pos() ? m.tags.vocab_hash() : 0;
  return m;
}

std::size_t parameter_count(const Model& m) {
  std::size_t n = 0;
  for (const auto& [name, t] : m.params) n += t.numel();
  return n;
}

// ---- forward -------------------------------------------------------------------

ad::Tensor joint_input_combine(const ad::Tensor& word_emb, const ad::Tensor& pos_emb) {
  if (word_emb.rank() != 2 || pos_emb.rank() != 2 || word_emb.dim(0) != pos_emb.dim(0))
    throw DimensionError("joint_input_combine: row counts differ, " +
                         shape_str(word_emb.shape()) + " vs " +
                         shape_str(pos_emb.shape()));
  return ad::concat(word_emb, pos_emb);
}

ad::Tensor joint_latent_combine(const ad::Tensor& h_word, const ad::Tensor& h_pos) {
  if (!h_word.defined() || !h_pos.defined())
    throw ContractError("joint_latent_combine: missing branch vector");
  return ad::concat(h_word, h_pos);
}

namespace {

// last forward state next to last backward state of the top layer
Tensor final_states(const Tensor& states, std::size_t live, const ModelSpec& spec) {
  if (spec.bidirectional) {
    Tensor fwd_last = ad::slice_last(ad::row(states, live - 1), 0, spec.hidden);
    Tensor bwd_last = ad::slice_last(ad::row(states, 0), spec.hidden, spec.hidden);
    return ad::concat(fwd_last, bwd_last);
  }
  return ad::row(states, live - 1);
}

Tensor branch_vector(const Branch& br, const ModelSpec& spec, const Tensor& seq,
                     const Mask& live_mask, std::size_t live, bool training, Rng& rng) {
  Tensor s = seq;
  for (const auto& layer : br.rnn) {
    s = nn::rnn_forward(s, live_mask, layer);
    s = nn::dropout(s, spec.dropout, training, rng);
  }
  Tensor v = br.attn ? nn::attention_pool(s, live_mask, *br.attn).context
                     : final_states(s, live, spec);
  return nn::dropout(v, spec.dropout, training, rng);
}

}  // namespace

ad::Tensor forward_one(const Model& m, const corpus::Encoded& x, bool training,
                       Rng& rng) {
  const std::size_t live = x.length;
  if (live == 0) throw ContractError("forward: empty sentence");
  if (x.mask.size() < live || !is_prefix_mask(x.mask))
    throw DimensionError("forward: mask must be a prefix covering the sentence");

  // computation runs on the live prefix only, so pad length cannot leak in
  const Mask live_mask = full_mask(live);
  const std::vector<int> wids(x.word_ids.begin(), x.word_ids.begin() + live);
  const std::vector<int> pids(x.pos_ids.begin(), x.pos_ids.begin() + live);
  const ModelSpec& spec = m.spec;

  Tensor v;
  switch (spec.arch) {
    case Arch::Rnn: {
      Tensor e = nn::embedding_lookup(m.words, wids, live_mask);
      v = branch_vector(m.word_branch, spec, e, live_mask, live, training, rng);
      break;
    }
    case Arch::Cnn: {
      Tensor e = nn::embedding_lookup(m.words, wids, live_mask);
      Tensor pooled = m.conv_attn.empty()
                          ? nn::conv1d_maxpool(e, live_mask, *m.conv)
                          : nn::conv1d_attnpool(e, live_mask, *m.conv, m.conv_attn);
      v = nn::dropout(pooled, spec.dropout, training, rng);
      break;
    }
    case Arch::Transformer: {
      Tensor e = nn::embedding_lookup(m.words, wids, live_mask);
      Tensor s = ad::add(e, nn::positional_encoding(live, m.words.dim));
      for (const auto& block : m.blocks) {
        s = nn::mhsa_block(s, live_mask, block);
        s = nn::dropout(s, spec.dropout, training, rng);
      }
      // mean pool over live rows
      Tensor uniform =
          Tensor::full({live}, 1.0 / static_cast<double>(live), false);
      v = nn::dropout(ad::matmul(uniform, s), spec.dropout, training, rng);
      break;
    }
    case Arch::PosOnly: {
      Tensor p = nn::embedding_lookup(m.tags, pids, live_mask);
      v = branch_vector(m.pos_branch, spec, p, live_mask, live, training, rng);
      break;
    }
    case Arch::JointInput: {
      Tensor e = nn::embedding_lookup(m.words, wids, live_mask);
      Tensor p = nn::embedding_lookup(m.tags, pids, live_mask);
      Tensor joined = joint_input_combine(e, p);
      v = branch_vector(m.word_branch, spec, joined, live_mask, live, training, rng);
      break;
    }
    case Arch::JointLatent: {
      Tensor e = nn::embedding_lookup(m.words, wids, live_mask);
      Tensor p = nn::embedding_lookup(m.tags, pids, live_mask);
      Tensor vw = branch_vector(m.word_branch, spec, e, live_mask, live, training, rng);
      Tensor vp = branch_vector(m.pos_branch, spec, p, live_mask, live, training, rng);
      v = joint_latent_combine(vw, vp);
      break;
    }
  }
  return ad::sigmoid(nn::dense(v, m.head));  // [1]
}

std::vector<double> forward(const Model& m, const std::vector<corpus::Encoded>& batch) {
  ad::Tape::NoGrad ng;
  Rng rng(0);  // inference takes no draws
  std::vector<double> probs;
  probs.reserve(batch.size());
  for (const auto& x : batch) probs.push_back(forward_one(m, x, false, rng).item());
  return probs;
}

std::vector<int> predict(const Model& m, const std::vector<corpus::Encoded>& batch,
                         double threshold) {
  std::vector<double> probs = forward(m, batch);
  std::vector<int> labels(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    labels[i] = probs[i] >= threshold ? 1 : 0;
  return labels;
}

corpus::Encoded encode_sentence(const Model& m, const corpus::Sentence& s,
                                std::size_t max_len) {
  static const corpus::TokenIndex kEmpty;
  corpus::Encoded e;
  if (s.tokens.empty()) {
    e.word_ids.assign(max_len, 0);
    e.pos_ids.assign(max_len, 0);
    e.mask.assign(max_len, 0);
  } else {
    e = corpus::truncate_pad(s.tokens, s.pos,
                             m.spec.uses_words() ? m.words.token_index : kEmpty,
                             m.spec.uses_pos() ? m.tags.token_index : kEmpty, max_len);
  }
  e.uncertain = s.uncertain;
  return e;
}

std::vector<corpus::Encoded> encode_sentences(const Model& m,
                                              const std::vector<corpus::Sentence>& xs) {
  std::vector<corpus::Encoded> out;
  out.reserve(xs.size());
  for (const auto& s : xs) out.push_back(encode_sentence(m, s));
  return out;
}

std::vector<int> predict_sentences(const Model& m,
                                   const std::vector<corpus::Sentence>& xs,
                                   double threshold, std::vector<double>* probs_out) {
  ad::Tape::NoGrad ng;
  Rng rng(0);
  std::vector<int> labels;
  labels.reserve(xs.size());
  if (probs_out) probs_out->clear();
  for (const auto& s : xs) {
    corpus::Encoded e = encode_sentence(m, s);
    double p = 0.0;  // sentences emptied by cleaning default to certain
    if (e.length > 0) p = forward_one(m, e, false, rng).item();
    if (probs_out) probs_out->push_back(p);
    labels.push_back(p >= threshold ? 1 : 0);
  }
  return labels;
}

// ---- checkpoints ------------------------------------------------------------------

namespace {

constexpr char kCkptMagic[] = "HDGCKPT1";
constexpr std::uint64_t kCkptVersion = 1;

void write_table(std::ostream& os, const emb::EmbeddingTable& t) {
  binio::write_u64(os, t.dim);
  binio::write_u64(os, t.tokens.size());
  binio::write_u64(os, t.trainable ? 1 : 0);
  for (const auto& tok : t.tokens) binio::write_str(os, tok);
  if (t.size() > 0) binio::write_f64(os, t.rows.value());
}

emb::EmbeddingTable read_table(std::istream& is) {
  emb::EmbeddingTable t;
  t.dim = binio::read_u64(is);
  const std::uint64_t v = binio::read_u64(is);
  t.trainable = binio::read_u64(is) != 0;
  for (std::uint64_t i = 0; i < v; ++i) t.tokens.push_back(binio::read_str(is));
  if (v > 0)
    t.rows = ad::Tensor::from_data({v, t.dim}, binio::read_f64(is, v * t.dim),
                                   t.trainable);
  for (std::size_t i = 0; i < t.tokens.size(); ++i)
    t.token_index[t.tokens[i]] = static_cast<int>(i);
  return t;
}

bool is_table_param(const std::string& name) {
  return name == "pos_table.rows" || name == "word_table.rows";
}

}  // namespace

void save_checkpoint(const Model& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint: " + path);
  os.write(kCkptMagic, 8);
  binio::write_u64(os, kCkptVersion);
  binio::write_str(os, m.spec.to_json());
  binio::write_u64(os, m.build_seed);
  binio::write_u64(os, m.vocab_hash);
  binio::write_u64(os, m.tagset_hash);
  binio::write_u64(os, m.spec.uses_words() ? 1 : 0);
  if (m.spec.uses_words()) write_table(os, m.words);
  binio::write_u64(os, m.spec.uses_pos() ? 1 : 0);
  if (m.spec.uses_pos()) write_table(os, m.tags);

  std::uint64_t n = 0;
  for (const auto& [name, t] : m.params)
    if (!is_table_param(name)) ++n;
  binio::write_u64(os, n);
  for (const auto& [name, t] : m.params) {
    if (is_table_param(name)) continue;  // already inside its table
    binio::write_str(os, name);
    binio::write_u64(os, t.rank());
    for (std::size_t i = 0; i < t.rank(); ++i) binio::write_u64(os, t.dim(i));
    binio::write_f64(os, t.value());
  }
  if (!os) throw IoError("short write: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint: " + path);
  char magic[8] = {};
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != kCkptMagic)
    throw ParseError("not a checkpoint file: " + path);
  const std::uint64_t version = binio::read_u64(is);
  if (version != kCkptVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));

  const ModelSpec spec = ModelSpec::from_json(binio::read_str(is));
  const std::uint64_t build_seed = binio::read_u64(is);
  const std::uint64_t vocab_hash = binio::read_u64(is);
  const std::uint64_t tagset_hash = binio::read_u64(is);

  emb::EmbeddingTable words, tags;
  if (binio::read_u64(is)) words = read_table(is);
  if (binio::read_u64(is)) tags = read_table(is);

  if (spec.uses_words() && words.vocab_hash() != vocab_hash)
    throw ParseError(path + ": stored vocab hash does not match its token list");
  if (spec.uses_pos() && tags.vocab_hash() != tagset_hash)
    throw ParseError(path + ": stored tagset hash does not match its tag list");

  std::vector<std::string> tagset(tags.tokens.begin() + (tags.size() ? 2 : 0),
                                  tags.tokens.end());
  Model m = build_model(spec, std::move(words), tagset, build_seed);
  if (spec.uses_pos()) m.tags.rows.value() = tags.rows.value();

  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : m.params) by_name.emplace(name, t);

  const std::uint64_t n = binio::read_u64(is);
  std::set<std::string> seen;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::string name = binio::read_str(is);
    const std::uint64_t rank = binio::read_u64(is);
    std::size_t numel = 1;
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) {
      d = binio::read_u64(is);
      numel *= d;
    }
    std::vector<double> data = binio::read_f64(is, numel);
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw ParseError(path + ": checkpoint parameter " + name +
                       " does not exist in the rebuilt model");
    if (it->second.shape() != shape)
      throw ParseError(path + ": parameter " + name + " has shape " +
                       shape_str(shape) + ", expected " +
                       shape_str(it->second.shape()));
    it->second.value() = std::move(data);
    seen.insert(name);
  }
  for (const auto& [name, t] : m.params)
    if (!is_table_param(name) && !seen.count(name))
      throw ParseError(path + ": checkpoint is missing parameter " + name);
  return m;
}

}  // namespace hedge::model
