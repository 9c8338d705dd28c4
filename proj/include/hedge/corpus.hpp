#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hedge/common.hpp"

namespace hedge::corpus {

// Atomic corpus record. A sentence is uncertain iff the source carried at
// least one cue annotation; cue token spans are [start, end) intervals and
// may be empty when a cue could not be aligned after cleaning.
struct Sentence {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<std::string> pos;  // parallel to tokens once attached
  bool uncertain = false;
  std::vector<std::pair<int, int>> cues;
};

struct TokenizerOptions {
  bool lowercase = true;
  // characters considered web noise; tokens made solely of these are removed
  std::string noise_chars = "<>/-*=+|\\~^_`";
};

struct ParseResult {
  std::vector<Sentence> sentences;
  std::vector<std::string> warnings;
  std::size_t dropped_cue_spans = 0;
  std::size_t empty_after_cleaning = 0;  // sentences whose tokens all vanished
};

// Shared-task XML: <Sentence id=...>text with inline <ccue>...</ccue></Sentence>.
// Throws ParseError with a byte offset on malformed input. Sentences emptied
// by cleaning are kept with tokens=[] so callers can decide their fate.
ParseResult parse_conll_xml(const std::string& bytes, const TokenizerOptions& opts = {});

// Whitespace/punctuation tokenization, noise removal, optional lowercasing.
// Throws ContractError when nothing survives.
std::vector<std::string> tokenize_clean(const std::string& raw,
                                        const TokenizerOptions& opts = {});

// Rule-based universal-tagset fallback: closed-class lexicon, then suffix
// rules (-ly adverb, -ed/-ing verb), defaulting to NOUN. Approximate by design.
std::vector<std::string> heuristic_pos_tag(const std::vector<std::string>& tokens);

// Sidecar: one line per sentence, space-separated tags aligned to the cleaned
// tokens. Misalignment raises ContractError naming the sentence.
void attach_pos_sidecar(std::vector<Sentence>& sentences, const std::string& sidecar_text);

void attach_pos_heuristic(std::vector<Sentence>& sentences);

std::vector<std::string> collect_tagset(const std::vector<Sentence>& sentences);

// Seeded uniform shuffle, |dev| = round(ratio * N); both halves keep the
// original relative order.
std::pair<std::vector<Sentence>, std::vector<Sentence>> split_train_dev(
    const std::vector<Sentence>& sentences, double ratio, std::uint64_t seed);

// fraction of certain-labeled sentences
double class_distribution(const std::vector<Sentence>& sentences);

// ---- fixed-length encoding --------------------------------------------------

constexpr std::size_t kMaxLen = 64;

struct Encoded {
  std::vector<int> word_ids;  // length max_len, PAD-filled tail
  std::vector<int> pos_ids;
  Mask mask;                  // prefix of ones
  std::size_t length = 0;     // live positions (after truncation)
  bool uncertain = false;
};

using TokenIndex = std::unordered_map<std::string, int>;

// Sentences beyond max_len keep their first max_len tokens; unknown tokens map
// to UNK (id 1), PAD is id 0.
Encoded truncate_pad(const std::vector<std::string>& tokens,
                     const std::vector<std::string>& pos,
                     const TokenIndex& word_index, const TokenIndex& pos_index,
                     std::size_t max_len = kMaxLen);

// ---- interchange files --------------------------------------------------------

void write_jsonl(const std::string& path, const std::vector<Sentence>& sentences);
std::vector<Sentence> read_jsonl(const std::string& path);

struct Stats {
  std::size_t sentences = 0;
  std::size_t certain = 0;
  std::size_t uncertain = 0;
  double fraction_certain = 0.0;
  double mean_tokens = 0.0;
  std::size_t max_tokens = 0;
  std::size_t over_max_len = 0;  // would be truncated at kMaxLen
};

Stats compute_stats(const std::vector<Sentence>& sentences);

}  // namespace hedge::corpus
