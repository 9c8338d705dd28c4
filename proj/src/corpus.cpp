#include "hedge/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "hedge/rng.hpp"

namespace hedge::corpus {

namespace {

bool is_word_byte(unsigned char c) {
  return std::isalnum(c) || c >= 0x80;  // non-ASCII bytes stay inside tokens
}

bool is_space_byte(unsigned char c) { return std::isspace(c); }

struct RawToken {
  std::string text;
  std::size_t begin = 0, end = 0;
};

// words (with internal hyphens/apostrophes, digit-internal periods) and
// single-character punctuation tokens, with source offsets
std::vector<RawToken> scan_tokens(const std::string& s) {
  std::vector<RawToken> out;
  const std::size_t n = s.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char c = s[i];
    if (is_space_byte(c)) {
      ++i;
      continue;
    }
    if (is_word_byte(c)) {
      std::size_t j = i + 1;
      while (j < n) {
        const unsigned char cj = s[j];
        if (is_word_byte(cj)) {
          ++j;
        } else if ((cj == '-' || cj == '\'') && j + 1 < n && is_word_byte(s[j + 1])) {
          j += 2;
        } else if (cj == '.' && j + 1 < n && std::isdigit((unsigned char)s[j - 1]) &&
                   std::isdigit((unsigned char)s[j + 1])) {
          j += 2;
        } else {
          break;
        }
      }
      out.push_back({s.substr(i, j - i), i, j});
      i = j;
    } else {
      out.push_back({s.substr(i, 1), i, i + 1});
      ++i;
    }
  }
  return out;
}

bool all_noise(const std::string& tok, const std::string& noise) {
  for (char c : tok)
    if (noise.find(c) == std::string::npos) return false;
  return !tok.empty();
}

void lowercase_ascii(std::string& s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

std::vector<RawToken> clean_tokens(const std::string& raw, const TokenizerOptions& opts) {
  std::vector<RawToken> toks = scan_tokens(raw);
  std::vector<RawToken> kept;
  kept.reserve(toks.size());
  for (auto& t : toks) {
    if (all_noise(t.text, opts.noise_chars)) continue;
    if (opts.lowercase) lowercase_ascii(t.text);
    kept.push_back(std::move(t));
  }
  return kept;
}

}  // namespace

std::vector<std::string> tokenize_clean(const std::string& raw,
                                        const TokenizerOptions& opts) {
  std::vector<RawToken> kept = clean_tokens(raw, opts);
  if (kept.empty())
    throw ContractError("tokenize_clean: nothing left of \"" + raw + "\"");
  std::vector<std::string> out;
  out.reserve(kept.size());
  for (auto& t : kept) out.push_back(std::move(t.text));
  return out;
}

// ---- XML ---------------------------------------------------------------------

namespace {

struct XmlCursor {
  const std::string& s;
  std::size_t i = 0;

  bool done() const { return i >= s.size(); }
  char peek(std::size_t k = 0) const { return i + k < s.size() ? s[i + k] : '\0'; }
  bool starts_with(const char* lit) const {
    return s.compare(i, std::char_traits<char>::length(lit), lit) == 0;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("xml: " + what + " at byte " + std::to_string(i));
  }
  void expect_advance(const std::string& until, const std::string& what) {
    const std::size_t p = s.find(until, i);
    if (p == std::string::npos) fail("unterminated " + what);
    i = p + until.size();
  }
};

void append_entity(XmlCursor& c, std::string& out) {
  // c.i points at '&'
  const std::size_t semi = c.s.find(';', c.i);
  if (semi == std::string::npos || semi - c.i > 12) {
    out += '&';  // tolerate bare ampersands
    ++c.i;
    return;
  }
  const std::string name = c.s.substr(c.i + 1, semi - c.i - 1);
  if (name == "amp") out += '&';
  else if (name == "lt") out += '<';
  else if (name == "gt") out += '>';
  else if (name == "quot") out += '"';
  else if (name == "apos") out += '\'';
  else if (!name.empty() && name[0] == '#') {
    long code = 0;
    try {
      code = (name.size() > 1 && (name[1] == 'x' || name[1] == 'X'))
                 ? std::stol(name.substr(2), nullptr, 16)
                 : std::stol(name.substr(1));
    } catch (...) {
      code = -1;
    }
    if (code > 0 && code < 128) out += static_cast<char>(code);
    else out += '?';  // non-ASCII references are rare web noise here
  } else {
    out += '&' + name + ';';
  }
  c.i = semi + 1;
}

struct TagInfo {
  std::string name;
  bool closing = false;
  bool self_closing = false;
  std::string id_attr;
};

TagInfo read_tag(XmlCursor& c) {
  // c.i points at '<'
  const std::size_t start = c.i;
  std::size_t end = c.s.find('>', c.i);
  if (end == std::string::npos) c.fail("unterminated tag");
  std::string body = c.s.substr(start + 1, end - start - 1);
  c.i = end + 1;

  TagInfo t;
  if (!body.empty() && body[0] == '/') {
    t.closing = true;
    body.erase(0, 1);
  }
  if (!body.empty() && body.back() == '/') {
    t.self_closing = true;
    body.pop_back();
  }
  std::size_t p = 0;
  while (p < body.size() && !std::isspace((unsigned char)body[p])) ++p;
  t.name = body.substr(0, p);

  // pull an id="..." attribute if present
  const std::size_t idp = body.find(" id=\"", p);
  if (idp != std::string::npos) {
    const std::size_t q = body.find('"', idp + 5);
    if (q != std::string::npos) t.id_attr = body.substr(idp + 5, q - idp - 5);
  }
  return t;
}

bool name_is(const std::string& name, const char* lit) {
  if (name.size() != std::char_traits<char>::length(lit)) return false;
  for (std::size_t i = 0; i < name.size(); ++i)
    if (std::tolower((unsigned char)name[i]) != std::tolower((unsigned char)lit[i]))
      return false;
  return true;
}

}  // namespace

ParseResult parse_conll_xml(const std::string& bytes, const TokenizerOptions& opts) {
  ParseResult result;
  XmlCursor c{bytes};

  bool in_sentence = false;
  std::string text;                       // decoded sentence text
  std::string sent_id;
  std::size_t sent_start_byte = 0;
  int cue_depth = 0;
  std::size_t cue_start = 0;
  std::vector<std::pair<std::size_t, std::size_t>> cue_chars;
  std::size_t auto_id = 0;

  auto finish_sentence = [&]() {
    ++auto_id;
    Sentence s;
    s.id = sent_id.empty() ? "s" + std::to_string(auto_id) : sent_id;
    s.uncertain = !cue_chars.empty();

    std::vector<RawToken> toks = clean_tokens(text, opts);
    for (auto& t : toks) s.tokens.push_back(t.text);
    if (s.tokens.empty()) {
      ++result.empty_after_cleaning;
      result.warnings.push_back("sentence " + s.id + " empty after cleaning");
    }
    for (auto [a, b] : cue_chars) {
      int first = -1, last = -1;
      for (std::size_t k = 0; k < toks.size(); ++k) {
        if (toks[k].end > a && toks[k].begin < b) {
          if (first < 0) first = static_cast<int>(k);
          last = static_cast<int>(k);
        }
      }
      if (first < 0) {
        ++result.dropped_cue_spans;
        result.warnings.push_back("sentence " + s.id +
                                  ": cue span vanished during cleaning, dropped");
      } else {
        s.cues.emplace_back(first, last + 1);
      }
    }
    result.sentences.push_back(std::move(s));
    text.clear();
    cue_chars.clear();
    sent_id.clear();
  };

  while (!c.done()) {
    if (c.peek() == '<') {
      if (c.starts_with("<?")) {
        c.expect_advance("?>", "declaration");
      } else if (c.starts_with("<!--")) {
        c.expect_advance("-->", "comment");
      } else if (c.starts_with("<![CDATA[")) {
        const std::size_t p = bytes.find("]]>", c.i);
        if (p == std::string::npos) c.fail("unterminated CDATA");
        if (in_sentence) text.append(bytes, c.i + 9, p - c.i - 9);
        c.i = p + 3;
      } else if (c.starts_with("<!")) {
        c.expect_advance(">", "doctype");
      } else {
        const std::size_t tag_byte = c.i;
        TagInfo tag = read_tag(c);
        if (name_is(tag.name, "sentence")) {
          if (tag.closing) {
            if (!in_sentence)
              throw ParseError("xml: stray sentence close at byte " +
                               std::to_string(tag_byte));
            if (cue_depth != 0)
              throw ParseError("xml: cue left open inside sentence ending at byte " +
                               std::to_string(tag_byte));
            in_sentence = false;
            finish_sentence();
          } else if (!tag.self_closing) {
            if (in_sentence)
              throw ParseError("xml: nested sentence at byte " +
                               std::to_string(tag_byte));
            in_sentence = true;
            sent_id = tag.id_attr;
            sent_start_byte = tag_byte;
            cue_depth = 0;
          }
        } else if (name_is(tag.name, "ccue")) {
          if (!in_sentence)
            throw ParseError("xml: cue outside sentence at byte " +
                             std::to_string(tag_byte));
          if (tag.closing) {
            if (cue_depth == 0)
              throw ParseError("xml: stray cue close at byte " +
                               std::to_string(tag_byte));
            --cue_depth;
            if (cue_depth == 0) cue_chars.emplace_back(cue_start, text.size());
          } else if (!tag.self_closing) {
            if (cue_depth == 0) cue_start = text.size();
            ++cue_depth;
          }
        }
        // any other element is structural and transparent for text
      }
    } else if (c.peek() == '&') {
      if (in_sentence) append_entity(c, text);
      else ++c.i;
    } else {
      if (in_sentence) text += c.peek();
      ++c.i;
    }
  }
  if (in_sentence)
    throw ParseError("xml: unterminated sentence opened at byte " +
                     std::to_string(sent_start_byte));
  return result;
}

// ---- POS ----------------------------------------------------------------------

namespace {

const std::unordered_map<std::string, const char*>& closed_class() {
  static const std::unordered_map<std::string, const char*> lex = {
      // determiners
      {"the", "DET"}, {"a", "DET"}, {"an", "DET"}, {"this", "DET"}, {"that", "DET"},
      {"these", "DET"}, {"those", "DET"}, {"each", "DET"}, {"every", "DET"},
      {"some", "DET"}, {"any", "DET"}, {"no", "DET"}, {"another", "DET"},
      {"either", "DET"}, {"neither", "DET"}, {"all", "DET"}, {"both", "DET"},
      {"such", "DET"},
      // pronouns
      {"i", "PRON"}, {"you", "PRON"}, {"he", "PRON"}, {"she", "PRON"}, {"it", "PRON"},
      {"we", "PRON"}, {"they", "PRON"}, {"me", "PRON"}, {"him", "PRON"},
      {"her", "PRON"}, {"us", "PRON"}, {"them", "PRON"}, {"my", "PRON"},
      {"your", "PRON"}, {"his", "PRON"}, {"its", "PRON"}, {"our", "PRON"},
      {"their", "PRON"}, {"who", "PRON"}, {"whom", "PRON"}, {"whose", "PRON"},
      {"which", "PRON"}, {"what", "PRON"}, {"itself", "PRON"}, {"himself", "PRON"},
      {"herself", "PRON"}, {"themselves", "PRON"}, {"something", "PRON"},
      {"anything", "PRON"}, {"nothing", "PRON"}, {"someone", "PRON"},
      {"anyone", "PRON"}, {"one", "PRON"},
      // adpositions
      {"of", "ADP"}, {"in", "ADP"}, {"to", "ADP"}, {"for", "ADP"}, {"with", "ADP"},
      {"on", "ADP"}, {"at", "ADP"}, {"by", "ADP"}, {"from", "ADP"}, {"about", "ADP"},
      {"as", "ADP"}, {"into", "ADP"}, {"like", "ADP"}, {"through", "ADP"},
      {"after", "ADP"}, {"over", "ADP"}, {"between", "ADP"}, {"out", "ADP"},
      {"against", "ADP"}, {"during", "ADP"}, {"without", "ADP"}, {"before", "ADP"},
      {"under", "ADP"}, {"around", "ADP"}, {"among", "ADP"}, {"within", "ADP"},
      {"upon", "ADP"}, {"toward", "ADP"}, {"towards", "ADP"}, {"since", "ADP"},
      // auxiliaries
      {"is", "AUX"}, {"are", "AUX"}, {"was", "AUX"}, {"were", "AUX"}, {"be", "AUX"},
      {"been", "AUX"}, {"being", "AUX"}, {"am", "AUX"}, {"do", "AUX"}, {"does", "AUX"},
      {"did", "AUX"}, {"have", "AUX"}, {"has", "AUX"}, {"had", "AUX"}, {"will", "AUX"},
      {"would", "AUX"}, {"can", "AUX"}, {"could", "AUX"}, {"shall", "AUX"},
      {"should", "AUX"}, {"may", "AUX"}, {"might", "AUX"}, {"must", "AUX"},
      // conjunctions
      {"and", "CCONJ"}, {"or", "CCONJ"}, {"but", "CCONJ"}, {"nor", "CCONJ"},
      {"yet", "CCONJ"}, {"so", "CCONJ"},
      {"if", "SCONJ"}, {"because", "SCONJ"}, {"while", "SCONJ"},
      {"although", "SCONJ"}, {"though", "SCONJ"}, {"unless", "SCONJ"},
      {"whereas", "SCONJ"}, {"whether", "SCONJ"}, {"when", "SCONJ"},
      // particles & frequent adverbs
      {"not", "PART"}, {"n't", "PART"},
      {"very", "ADV"}, {"too", "ADV"}, {"also", "ADV"}, {"often", "ADV"},
      {"never", "ADV"}, {"always", "ADV"}, {"now", "ADV"}, {"then", "ADV"},
      {"here", "ADV"}, {"there", "ADV"}, {"however", "ADV"}, {"more", "ADV"},
      {"most", "ADV"}, {"only", "ADV"}, {"just", "ADV"}, {"still", "ADV"},
      {"even", "ADV"}, {"well", "ADV"},
  };
  return lex;
}

const std::unordered_set<std::string>& number_words() {
  static const std::unordered_set<std::string> words = {
      "zero", "one",  "two",   "three", "four",    "five",    "six",
      "seven", "eight", "nine", "ten",  "hundred", "thousand", "million",
      "billion", "first", "second", "third"};
  return words;
}

const std::unordered_set<std::string>& common_verbs() {
  static const std::unordered_set<std::string> verbs = {
      "say",  "says", "said",  "think", "thinks", "believe", "believes", "know",
      "knows", "make", "makes", "made", "take",  "takes",   "go",       "goes",
      "went", "see",  "sees",  "saw",  "get",    "gets",    "got",      "use",
      "uses", "find", "finds", "found", "give",  "gives",   "gave",     "tell",
      "tells", "told", "become", "becomes", "became", "seem", "seems", "seemed",
      "appear", "appears", "suggest", "suggests", "claim", "claims", "consider",
      "considers", "include", "includes", "remain", "remains", "refer", "refers"};
  return verbs;
}

bool ends_with(const std::string& s, const char* suf) {
  const std::size_t n = std::char_traits<char>::length(suf);
  return s.size() >= n && s.compare(s.size() - n, n, suf) == 0;
}

std::string tag_one(const std::string& tok) {
  if (tok.empty()) return "X";
  bool all_punct = true, has_digit = false, all_numlike = true;
  for (unsigned char c : tok) {
    if (std::isalnum(c) || c >= 0x80) all_punct = false;
    if (std::isdigit(c)) has_digit = true;
    if (!std::isdigit(c) && c != '.' && c != ',' && c != '%' && c != '-' && c != ':')
      all_numlike = false;
  }
  if (all_punct) return "PUNCT";
  if (has_digit && all_numlike) return "NUM";
  if (number_words().count(tok)) return "NUM";

  auto it = closed_class().find(tok);
  if (it != closed_class().end()) return it->second;

  if (common_verbs().count(tok)) return "VERB";
  if (ends_with(tok, "ly") && tok.size() > 3) return "ADV";
  if ((ends_with(tok, "ed") || ends_with(tok, "ing")) && tok.size() > 4) return "VERB";
  if (tok.size() > 4 &&
      (ends_with(tok, "ous") || ends_with(tok, "ful") || ends_with(tok, "ive") ||
       ends_with(tok, "able") || ends_with(tok, "ible") || ends_with(tok, "ical") ||
       ends_with(tok, "less")))
    return "ADJ";
  return "NOUN";
}

}  // namespace

std::vector<std::string> heuristic_pos_tag(const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw ContractError("heuristic_pos_tag: empty token list");
  std::vector<std::string> tags;
  tags.reserve(tokens.size());
  for (const auto& t : tokens) tags.push_back(tag_one(t));
  return tags;
}

void attach_pos_sidecar(std::vector<Sentence>& sentences, const std::string& sidecar_text) {
  std::vector<std::vector<std::string>> lines;
  std::istringstream is(sidecar_text);
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<std::string> tags;
    std::string t;
    while (ls >> t) tags.push_back(std::move(t));
    lines.push_back(std::move(tags));
  }
  // ignore a trailing blank line
  if (!lines.empty() && lines.back().empty() &&
      lines.size() == sentences.size() + 1)
    lines.pop_back();
  if (lines.size() != sentences.size())
    throw ContractError("pos sidecar has " + std::to_string(lines.size()) +
                        " lines for " + std::to_string(sentences.size()) +
                        " sentences");
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (lines[i].size() != sentences[i].tokens.size())
      throw ContractError("pos sidecar misaligned at sentence " + sentences[i].id +
                          ": " + std::to_string(lines[i].size()) + " tags for " +
                          std::to_string(sentences[i].tokens.size()) + " tokens");
    sentences[i].pos = std::move(lines[i]);
  }
}

void attach_pos_heuristic(std::vector<Sentence>& sentences) {
  for (auto& s : sentences)
    s.pos = s.tokens.empty() ? std::vector<std::string>{} : heuristic_pos_tag(s.tokens);
}

std::vector<std::string> collect_tagset(const std::vector<Sentence>& sentences) {
  std::unordered_set<std::string> seen;
  for (const auto& s : sentences)
    for (const auto& t : s.pos) seen.insert(t);
  std::vector<std::string> tags(seen.begin(), seen.end());
  std::sort(tags.begin(), tags.end());
  return tags;
}

// ---- split / stats --------------------------------------------------------------

std::pair<std::vector<Sentence>, std::vector<Sentence>> split_train_dev(
    const std::vector<Sentence>& sentences, double ratio, std::uint64_t seed) {
  if (ratio <= 0.0 || ratio >= 1.0)
    throw ConfigError("split ratio must be in (0,1), got " + std::to_string(ratio));
  const std::size_t n = sentences.size();
  const std::size_t n_dev =
      static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);

  std::vector<bool> in_dev(n, false);
  for (std::size_t i = 0; i < n_dev; ++i) in_dev[idx[i]] = true;

  std::pair<std::vector<Sentence>, std::vector<Sentence>> out;
  for (std::size_t i = 0; i < n; ++i)
    (in_dev[i] ? out.second : out.first).push_back(sentences[i]);
  return out;
}

double class_distribution(const std::vector<Sentence>& sentences) {
  if (sentences.empty()) throw ContractError("class_distribution: empty corpus");
  std::size_t certain = 0;
  for (const auto& s : sentences) certain += !s.uncertain;
  return static_cast<double>(certain) / static_cast<double>(sentences.size());
}

Encoded truncate_pad(const std::vector<std::string>& tokens,
                     const std::vector<std::string>& pos,
                     const TokenIndex& word_index, const TokenIndex& pos_index,
                     std::size_t max_len) {
  if (tokens.empty()) throw ContractError("truncate_pad: empty token list");
  Encoded e;
  e.length = std::min(tokens.size(), max_len);
  e.word_ids.assign(max_len, 0);
  e.pos_ids.assign(max_len, 0);
  e.mask.assign(max_len, 0);
  auto lookup = [](const TokenIndex& ix, const std::string& t) {
    auto it = ix.find(t);
    return it == ix.end() ? 1 : it->second;  // UNK
  };
  for (std::size_t t = 0; t < e.length; ++t) {
    e.word_ids[t] = lookup(word_index, tokens[t]);
    e.pos_ids[t] = t < pos.size() ? lookup(pos_index, pos[t]) : 1;
    e.mask[t] = 1;
  }
  return e;
}

// ---- interchange -----------------------------------------------------------------

void write_jsonl(const std::string& path, const std::vector<Sentence>& sentences) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  for (const auto& s : sentences) {
    nlohmann::json j;
    j["id"] = s.id;
    j["tokens"] = s.tokens;
    j["pos"] = s.pos;
    j["label"] = s.uncertain ? "uncertain" : "certain";
    auto cues = nlohmann::json::array();
    for (auto [a, b] : s.cues) cues.push_back({a, b});
    j["cues"] = cues;
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("short write: " + path);
}

std::vector<Sentence> read_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  std::vector<Sentence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    Sentence s;
    s.id = j.value("id", "line" + std::to_string(line_no));
    s.tokens = j.at("tokens").get<std::vector<std::string>>();
    s.pos = j.value("pos", std::vector<std::string>{});
    s.uncertain = j.at("label").get<std::string>() == "uncertain";
    for (const auto& c : j.value("cues", nlohmann::json::array()))
      s.cues.emplace_back(c.at(0).get<int>(), c.at(1).get<int>());
    out.push_back(std::move(s));
  }
  return out;
}

Stats compute_stats(const std::vector<Sentence>& sentences) {
  Stats st;
  st.sentences = sentences.size();
  std::size_t total_tokens = 0;
  for (const auto& s : sentences) {
    if (s.uncertain) ++st.uncertain;
    else ++st.certain;
    total_tokens += s.tokens.size();
    st.max_tokens = std::max(st.max_tokens, s.tokens.size());
    if (s.tokens.size() > kMaxLen) ++st.over_max_len;
  }
  if (st.sentences) {
    st.fraction_certain = static_cast<double>(st.certain) / st.sentences;
    st.mean_tokens = static_cast<double>(total_tokens) / st.sentences;
  }
  return st;
}

}  // namespace hedge::corpus
