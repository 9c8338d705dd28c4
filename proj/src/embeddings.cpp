#include "hedge/embeddings.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "hedge/binio.hpp"
#include "hedge/rng.hpp"

namespace hedge::emb {

namespace {

constexpr char kCacheMagic[] = "HDGEMB1";

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

}  // namespace

void EmbeddingTable::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write embedding cache: " + path);
  os.write(kCacheMagic, sizeof kCacheMagic);
  binio::write_u64(os, dim);
  binio::write_u64(os, tokens.size());
  binio::write_u64(os, trainable ? 1 : 0);
  for (const auto& t : tokens) binio::write_str(os, t);
  binio::write_f64(os, rows.value());
  if (!os) throw IoError("short write: " + path);
}

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read embedding cache: " + path);
  char magic[sizeof kCacheMagic] = {};
  is.read(magic, sizeof magic);
  if (!is || std::string(magic, sizeof magic) != std::string(kCacheMagic, sizeof kCacheMagic))
    throw ParseError("not an embedding cache: " + path);
  EmbeddingTable t;
  t.dim = binio::read_u64(is);
  const std::uint64_t v = binio::read_u64(is);
  t.trainable = binio::read_u64(is) != 0;
  t.tokens.reserve(v);
  for (std::uint64_t i = 0; i < v; ++i) t.tokens.push_back(binio::read_str(is));
  t.rows = ad::Tensor::from_data({v, t.dim}, binio::read_f64(is, v * t.dim),
                                 t.trainable);
  for (std::size_t i = 0; i < t.tokens.size(); ++i)
    t.token_index[t.tokens[i]] = static_cast<int>(i);
  return t;
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& token_lists) {
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& toks : token_lists)
    for (const auto& t : toks) ++freq[t];

  std::vector<std::pair<std::string, std::size_t>> by_freq(freq.begin(), freq.end());
  std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  v.id_to_token = {EmbeddingTable::kPadToken, EmbeddingTable::kUnkToken};
  for (auto& [tok, _] : by_freq) v.id_to_token.push_back(tok);
  for (std::size_t i = 0; i < v.id_to_token.size(); ++i)
    v.token_to_id[v.id_to_token[i]] = static_cast<int>(i);
  return v;
}

EmbeddingTable load_vectors(const std::string& path,
                            const std::set<std::string>& corpus_vocab,
                            LoadReport* report, bool zero_unk) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read vector file: " + path);

  LoadReport rep;
  rep.vocab_size = corpus_vocab.size();

  // collected in a sorted map so the resulting table does not depend on the
  // order of lines in the file
  std::map<std::string, std::vector<double>> kept;
  std::size_t dim = 0;

  std::string line;
  std::size_t line_no = 0;
  bool first_data_line = true;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> fields;
    std::string f;
    while (ls >> f) fields.push_back(std::move(f));
    if (fields.empty()) continue;

    if (first_data_line && fields.size() == 2) {
      // optional "count dim" header
      double a, b;
      if (parse_double(fields[0], a) && parse_double(fields[1], b)) {
        first_data_line = false;
        continue;
      }
    }
    first_data_line = false;
    ++rep.file_rows;

    if (fields.size() < 2) {
      ++rep.malformed;
      continue;
    }
    const std::string& token = fields[0];
    std::vector<double> vec(fields.size() - 1);
    bool ok = true;
    for (std::size_t i = 1; i < fields.size(); ++i)
      if (!parse_double(fields[i], vec[i - 1])) {
        ok = false;
        break;
      }
    if (!ok) {
      ++rep.malformed;
      continue;
    }
    if (dim == 0) dim = vec.size();
    if (vec.size() != dim) {
      if (vec.size() > dim) {
        // token containing whitespace; drop the line
        ++rep.malformed;
        continue;
      }
      throw ParseError(path + ": inconsistent vector dimension at line " +
                       std::to_string(line_no) + " (" + std::to_string(vec.size()) +
                       " vs " + std::to_string(dim) + ")");
    }
    if (!corpus_vocab.count(token)) continue;
    if (!kept.count(token)) {
      kept.emplace(token, std::move(vec));
      ++rep.loaded;
    }
  }
  if (dim == 0)
    throw ParseError(path + ": no usable vector rows");

  rep.covered = kept.size();

  EmbeddingTable t;
  t.dim = dim;
  t.trainable = false;
  t.tokens = {EmbeddingTable::kPadToken, EmbeddingTable::kUnkToken};
  for (const auto& [tok, _] : kept) t.tokens.push_back(tok);

  std::vector<double> data(t.tokens.size() * dim, 0.0);
  std::vector<double> mean(dim, 0.0);
  std::size_t r = 2;
  for (const auto& [tok, vec] : kept) {
    std::copy(vec.begin(), vec.end(), data.begin() + r * dim);
    for (std::size_t j = 0; j < dim; ++j) mean[j] += vec[j];
    ++r;
  }
  if (!zero_unk && !kept.empty())
    for (std::size_t j = 0; j < dim; ++j)
      data[EmbeddingTable::kUnkId * dim + j] = mean[j] / static_cast<double>(kept.size());

  t.rows = ad::Tensor::from_data({t.tokens.size(), dim}, std::move(data), false);
  for (std::size_t i = 0; i < t.tokens.size(); ++i)
    t.token_index[t.tokens[i]] = static_cast<int>(i);
  if (report) *report = rep;
  return t;
}

EmbeddingTable init_pos_table(const std::vector<std::string>& tagset,
                              std::size_t dim, std::uint64_t seed) {
  if (tagset.empty()) throw ContractError("init_pos_table: empty tagset");
  std::vector<std::string> tags = tagset;
  std::sort(tags.begin(), tags.end());
  tags.erase(std::unique(tags.begin(), tags.end()), tags.end());

  EmbeddingTable t;
  t.dim = dim;
  t.trainable = true;
  t.tokens = {EmbeddingTable::kPadToken, EmbeddingTable::kUnkToken};
  t.tokens.insert(t.tokens.end(), tags.begin(), tags.end());

  Rng rng(seed);
  std::vector<double> data(t.tokens.size() * dim, 0.0);
  // PAD row stays zero; UNK and tag rows are drawn
  for (std::size_t r = 1; r < t.tokens.size(); ++r)
    for (std::size_t j = 0; j < dim; ++j) data[r * dim + j] = rng.uniform(-0.1, 0.1);

  t.rows = ad::Tensor::from_data({t.tokens.size(), dim}, std::move(data), true);
  for (std::size_t i = 0; i < t.tokens.size(); ++i)
    t.token_index[t.tokens[i]] = static_cast<int>(i);
  return t;
}

}  // namespace hedge::emb
