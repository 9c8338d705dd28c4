#include <fstream>
#include <sstream>

#include <doctest.h>

#include "fixtures.hpp"
#include "hedge/corpus.hpp"

using namespace hedge;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const std::string kFixtures = HEDGE_FIXTURE_DIR;

}  // namespace

TEST_CASE("tokenize_clean examples") {
  CHECK(corpus::tokenize_clean("the <> facts") ==
        std::vector<std::string>{"the", "facts"});
  CHECK(corpus::tokenize_clean("Some believe this.") ==
        std::vector<std::string>{"some", "believe", "this", "."});
  CHECK_THROWS_AS(corpus::tokenize_clean("***"), ContractError);

  CHECK(corpus::tokenize_clean("a web-based co-author") ==
        std::vector<std::string>{"a", "web-based", "co-author"});
  CHECK(corpus::tokenize_clean("costs 3.5 million -- roughly") ==
        std::vector<std::string>{"costs", "3.5", "million", "roughly"});
  CHECK(corpus::tokenize_clean("don't stop") ==
        std::vector<std::string>{"don't", "stop"});

  corpus::TokenizerOptions cased;
  cased.lowercase = false;
  CHECK(corpus::tokenize_clean("Some Believe", cased) ==
        std::vector<std::string>{"Some", "Believe"});
}

TEST_CASE("xml parsing on the bundled fixture") {
  corpus::ParseResult r = corpus::parse_conll_xml(slurp(kFixtures + "/tiny_train.xml"));
  CHECK(r.sentences.size() == 20);

  std::size_t uncertain = 0;
  for (const auto& s : r.sentences) uncertain += s.uncertain;
  CHECK(uncertain == 7);

  // no cue children means certain with empty spans
  const corpus::Sentence& plain = r.sentences[1];
  CHECK(plain.id == "t2");
  CHECK_FALSE(plain.uncertain);
  CHECK(plain.cues.empty());

  // cue spans align to cleaned tokens
  const corpus::Sentence& first = r.sentences[0];
  CHECK(first.uncertain);
  REQUIRE(first.cues.size() == 1);
  CHECK(first.tokens[first.cues[0].first] == "believe");

  // multiword cue
  const corpus::Sentence& multi = r.sentences[5];
  REQUIRE(multi.cues.size() == 1);
  CHECK(multi.cues[0].second - multi.cues[0].first == 2);

  // entity decoding
  const corpus::Sentence& amp = r.sentences[8];
  bool has_amp = false;
  for (const auto& t : amp.tokens) has_amp |= t == "&";
  CHECK(has_amp);

  // the all-noise sentence is kept but empty
  CHECK(r.empty_after_cleaning == 1);
  CHECK(r.sentences[12].tokens.empty());

  // label rule: uncertain iff >= 1 cue
  for (const auto& s : r.sentences)
    CHECK(s.uncertain == !s.cues.empty());
}

TEST_CASE("xml errors carry byte offsets") {
  CHECK_THROWS_WITH_AS(corpus::parse_conll_xml("<Sentence id=\"x\">no close"),
                       doctest::Contains("byte"), ParseError);
  CHECK_THROWS_AS(corpus::parse_conll_xml("<Sentence>a<Sentence>b</Sentence>"),
                  ParseError);
  CHECK_THROWS_AS(corpus::parse_conll_xml("text <ccue>dangling</ccue>"), ParseError);
}

TEST_CASE("heuristic tagger rules") {
  CHECK(corpus::heuristic_pos_tag({"the"}) == std::vector<std::string>{"DET"});
  CHECK(corpus::heuristic_pos_tag({"quickly"}) == std::vector<std::string>{"ADV"});
  CHECK(corpus::heuristic_pos_tag({"flurble"}) == std::vector<std::string>{"NOUN"});
  CHECK(corpus::heuristic_pos_tag({"painted"}) == std::vector<std::string>{"VERB"});
  CHECK(corpus::heuristic_pos_tag({"might"}) == std::vector<std::string>{"AUX"});
  CHECK(corpus::heuristic_pos_tag({"1503"}) == std::vector<std::string>{"NUM"});
  CHECK(corpus::heuristic_pos_tag({"."}) == std::vector<std::string>{"PUNCT"});
  CHECK_THROWS_AS(corpus::heuristic_pos_tag({}), ContractError);
}

TEST_CASE("tagset stays within the coarse universal inventory") {
  corpus::ParseResult r = corpus::parse_conll_xml(slurp(kFixtures + "/tiny_train.xml"));
  corpus::attach_pos_heuristic(r.sentences);
  auto tags = corpus::collect_tagset(r.sentences);
  CHECK(tags.size() <= 20);
  for (const auto& s : r.sentences) CHECK(s.pos.size() == s.tokens.size());
}

TEST_CASE("sidecar attachment and misalignment") {
  std::vector<corpus::Sentence> xs(2);
  xs[0].id = "a";
  xs[0].tokens = {"some", "believe"};
  xs[1].id = "b";
  xs[1].tokens = {"yes"};

  corpus::attach_pos_sidecar(xs, "DET VERB\nNOUN\n");
  CHECK(xs[0].pos == std::vector<std::string>{"DET", "VERB"});
  CHECK(xs[1].pos == std::vector<std::string>{"NOUN"});

  CHECK_THROWS_WITH_AS(corpus::attach_pos_sidecar(xs, "DET VERB NOUN\nNOUN\n"),
                       doctest::Contains("sentence a"), ContractError);
  CHECK_THROWS_AS(corpus::attach_pos_sidecar(xs, "DET VERB\n"), ContractError);
}

TEST_CASE("split_train_dev sizes and determinism") {
  std::vector<corpus::Sentence> xs(200);
  for (int i = 0; i < 200; ++i) xs[i].id = "s" + std::to_string(i);

  auto [train_a, dev_a] = corpus::split_train_dev(xs, 0.1, 7);
  CHECK(train_a.size() == 180);
  CHECK(dev_a.size() == 20);

  auto [train_b, dev_b] = corpus::split_train_dev(xs, 0.1, 7);
  for (std::size_t i = 0; i < dev_a.size(); ++i) CHECK(dev_a[i].id == dev_b[i].id);

  auto [train_c, dev_c] = corpus::split_train_dev(xs, 0.1, 8);
  bool differs = false;
  for (std::size_t i = 0; i < dev_a.size() && !differs; ++i)
    differs = dev_a[i].id != dev_c[i].id;
  CHECK(differs);

  CHECK_THROWS_AS(corpus::split_train_dev(xs, 0.0, 1), ConfigError);
}

TEST_CASE("split carves 1111 out of 11110") {
  std::vector<corpus::Sentence> xs(11110);
  auto [train, dev] = corpus::split_train_dev(xs, 0.1, 1);
  CHECK(train.size() == 9999);
  CHECK(dev.size() == 1111);
}

TEST_CASE("truncate_pad") {
  corpus::TokenIndex words{{"a", 2}, {"b", 3}};
  corpus::TokenIndex tags{{"DET", 2}, {"NOUN", 3}};

  std::vector<std::string> long_tokens(80, "a");
  std::vector<std::string> long_tags(80, "DET");
  corpus::Encoded e = corpus::truncate_pad(long_tokens, long_tags, words, tags, 64);
  CHECK(e.length == 64);
  CHECK(mask_count(e.mask) == 64);

  std::vector<std::string> short_tokens(10, "b");
  std::vector<std::string> short_tags(10, "NOUN");
  corpus::Encoded e2 = corpus::truncate_pad(short_tokens, short_tags, words, tags, 64);
  CHECK(e2.length == 10);
  CHECK(mask_count(e2.mask) == 10);
  CHECK(is_prefix_mask(e2.mask));
  CHECK(e2.word_ids[9] == 3);
  CHECK(e2.word_ids[10] == 0);  // pad

  // unknown tokens map to UNK
  corpus::Encoded e3 = corpus::truncate_pad({"zzz"}, {"X"}, words, tags, 8);
  CHECK(e3.word_ids[0] == 1);
  CHECK(e3.pos_ids[0] == 1);
}

TEST_CASE("class distribution") {
  std::vector<corpus::Sentence> xs(2);
  xs[0].uncertain = false;
  xs[1].uncertain = true;
  CHECK(corpus::class_distribution(xs) == 0.5);

  xs[1].uncertain = false;
  CHECK(corpus::class_distribution(xs) == 1.0);

  CHECK_THROWS_AS(corpus::class_distribution({}), ContractError);
}

TEST_CASE("jsonl round trip preserves sentences") {
  corpus::ParseResult r = corpus::parse_conll_xml(slurp(kFixtures + "/tiny_train.xml"));
  corpus::attach_pos_heuristic(r.sentences);

  const std::string path = "/tmp/hedge_test_corpus.jsonl";
  corpus::write_jsonl(path, r.sentences);
  std::vector<corpus::Sentence> back = corpus::read_jsonl(path);
  REQUIRE(back.size() == r.sentences.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == r.sentences[i].id);
    CHECK(back[i].tokens == r.sentences[i].tokens);
    CHECK(back[i].pos == r.sentences[i].pos);
    CHECK(back[i].uncertain == r.sentences[i].uncertain);
    CHECK(back[i].cues == r.sentences[i].cues);
  }

  // idempotent: writing what was read yields the same bytes
  const std::string path2 = "/tmp/hedge_test_corpus2.jsonl";
  corpus::write_jsonl(path2, back);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("stats") {
  corpus::ParseResult r = corpus::parse_conll_xml(slurp(kFixtures + "/tiny_train.xml"));
  corpus::Stats st = corpus::compute_stats(r.sentences);
  CHECK(st.sentences == 20);
  CHECK(st.uncertain == 7);
  CHECK(st.certain == 13);
  CHECK(st.fraction_certain == doctest::Approx(0.65));
  CHECK(st.mean_tokens > 0.0);
}
