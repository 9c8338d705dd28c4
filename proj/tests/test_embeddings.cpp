#include <fstream>

#include <doctest.h>

#include "fixtures.hpp"
#include "hedge/embeddings.hpp"
#include "hedge/train.hpp"

using namespace hedge;

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  REQUIRE(os.good());
  os << text;
}

}  // namespace

TEST_CASE("load_vectors basic format") {
  const std::string path = "/tmp/hedge_vec_basic.txt";
  write_file(path, "a 1.0 0.0\nb 0.0 1.0\n");

  emb::LoadReport rep;
  emb::EmbeddingTable t = emb::load_vectors(path, {"a", "b"}, &rep);
  CHECK(t.dim == 2);
  CHECK(t.size() == 4);  // pad, unk, a, b
  CHECK(rep.loaded == 2);
  CHECK(rep.covered == 2);

  const int a = t.id_of("a");
  CHECK(t.rows.value()[a * 2] == 1.0);
  CHECK(t.rows.value()[a * 2 + 1] == 0.0);
  // PAD row all zero
  CHECK(t.rows.value()[0] == 0.0);
  CHECK(t.rows.value()[1] == 0.0);
  // UNK = mean of loaded vectors
  CHECK(t.rows.value()[emb::EmbeddingTable::kUnkId * 2] == doctest::Approx(0.5));
}

TEST_CASE("load_vectors maps out-of-vocabulary tokens to UNK") {
  const std::string path = "/tmp/hedge_vec_oov.txt";
  write_file(path, "a 1.0 0.0\nb 0.0 1.0\n");
  emb::EmbeddingTable t = emb::load_vectors(path, {"a", "zzz"});
  CHECK(t.id_of("zzz") == emb::EmbeddingTable::kUnkId);
  CHECK(t.id_of("a") >= 2);
  CHECK_FALSE(t.has("b"));  // restricted to the corpus vocab
}

TEST_CASE("load_vectors header detection and malformed lines") {
  const std::string with_header = "/tmp/hedge_vec_hdr.txt";
  write_file(with_header, "3 2\nx 1 2\ny 3 4\nz 5 6\n");
  emb::LoadReport rep;
  emb::EmbeddingTable t = emb::load_vectors(with_header, {"x", "y", "z"}, &rep);
  CHECK(t.dim == 2);
  CHECK(rep.loaded == 3);
  CHECK(rep.file_rows == 3);

  const std::string messy = "/tmp/hedge_vec_messy.txt";
  write_file(messy, "x 1 2\nBROKEN not numbers\ny 3 4\nmulti word token 1 2 3\n");
  emb::LoadReport rep2;
  emb::EmbeddingTable t2 = emb::load_vectors(messy, {"x", "y"}, &rep2);
  CHECK(rep2.loaded == 2);
  CHECK(rep2.malformed == 2);

  const std::string inconsistent = "/tmp/hedge_vec_dim.txt";
  write_file(inconsistent, "x 1 2 3\ny 1\n");
  CHECK_THROWS_WITH_AS(emb::load_vectors(inconsistent, {"x", "y"}),
                       doctest::Contains("line 2"), ParseError);

  CHECK_THROWS_AS(emb::load_vectors("/nonexistent/file.vec", {"a"}), IoError);
}

TEST_CASE("load_vectors is independent of file line order") {
  const std::string fwd = "/tmp/hedge_vec_fwd.txt";
  const std::string rev = "/tmp/hedge_vec_rev.txt";
  write_file(fwd, "a 1 2\nb 3 4\nc 5 6\n");
  write_file(rev, "c 5 6\nb 3 4\na 1 2\n");
  emb::EmbeddingTable ta = emb::load_vectors(fwd, {"a", "b", "c"});
  emb::EmbeddingTable tb = emb::load_vectors(rev, {"a", "b", "c"});
  CHECK(ta.tokens == tb.tokens);
  CHECK(ta.rows.value() == tb.rows.value());
  CHECK(ta.vocab_hash() == tb.vocab_hash());
}

TEST_CASE("build_vocab ordering") {
  auto v = emb::build_vocab({{"a", "b", "a"}});
  CHECK(v.token_to_id.at("a") == 2);
  CHECK(v.token_to_id.at("b") == 3);

  auto empty = emb::build_vocab({});
  CHECK(empty.size() == 2);  // pad + unk only

  auto v2 = emb::build_vocab({{"a", "b", "a"}});
  CHECK(v.id_to_token == v2.id_to_token);

  // lexicographic tie-break at equal frequency
  auto tie = emb::build_vocab({{"zz", "aa"}});
  CHECK(tie.token_to_id.at("aa") == 2);
  CHECK(tie.token_to_id.at("zz") == 3);
}

TEST_CASE("init_pos_table shape, determinism and PAD freeze") {
  std::vector<std::string> tags17;
  for (int i = 0; i < 17; ++i) tags17.push_back("T" + std::to_string(i));
  emb::EmbeddingTable t = emb::init_pos_table(tags17, 8, 5);
  CHECK(t.size() == 19);
  CHECK(t.dim == 8);
  CHECK(t.trainable);
  CHECK(t.rows.requires_grad());

  emb::EmbeddingTable t2 = emb::init_pos_table(tags17, 8, 5);
  CHECK(t.rows.value() == t2.rows.value());

  for (std::size_t j = 0; j < 8; ++j) CHECK(t.rows.value()[j] == 0.0);
  for (double v : t.rows.value()) {
    CHECK(v <= 0.1);
    CHECK(v >= -0.1);
  }

  CHECK_THROWS_AS(emb::init_pos_table({}, 8, 1), ContractError);
}

TEST_CASE("one SGD step moves tag rows but never PAD") {
  emb::EmbeddingTable t = emb::init_pos_table({"DET", "NOUN"}, 4, 9);
  const std::vector<double> before = t.rows.value();

  ad::Tensor out = ad::gather_rows(t.rows, {2, 3}, Mask{1, 1});
  ad::backward(ad::sum(out));
  ad::Tape::active().clear();

  nn::ParamList params{{"pos_table.rows", t.rows}};
  train::sgd_step(params, 0.1);

  const auto& after = t.rows.value();
  bool moved = false;
  for (std::size_t i = 2 * 4; i < after.size(); ++i) moved |= after[i] != before[i];
  CHECK(moved);
  for (std::size_t j = 0; j < 4; ++j) CHECK(after[j] == 0.0);  // PAD untouched
}

TEST_CASE("table cache round-trips bit-exactly") {
  const std::string vec = "/tmp/hedge_vec_cache.txt";
  write_file(vec, "a 0.123456789012345 -7e-3\nb 1e10 2.5\n");
  emb::EmbeddingTable t = emb::load_vectors(vec, {"a", "b"});

  const std::string cache = "/tmp/hedge_table.cache";
  t.save(cache);
  emb::EmbeddingTable back = emb::EmbeddingTable::load(cache);
  CHECK(back.dim == t.dim);
  CHECK(back.tokens == t.tokens);
  CHECK(back.rows.value() == t.rows.value());
  CHECK(back.trainable == t.trainable);
  CHECK(back.vocab_hash() == t.vocab_hash());
}
