#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "hedge/train.hpp"

namespace hedge::sweep {

// One manifest row: a preset trained once per (embedding file, seed).
struct RunSpec {
  std::string name;
  std::string preset;
  // column label -> vector file path; may be empty for pos-only presets
  std::vector<std::pair<std::string, std::string>> embeddings;
  std::map<std::string, std::string> config;  // key=value overrides
  std::vector<std::uint64_t> seeds{1};
};

struct Manifest {
  std::string corpus_dir;
  std::string out_dir;
  std::map<std::string, std::string> defaults;  // config applied to every run
  std::vector<RunSpec> runs;

  static Manifest parse_file(const std::string& path);
  static Manifest parse(const std::string& json_text);
};

struct CellResult {
  std::string run;
  std::string embedding;
  std::uint64_t seed = 0;
  double eval_f1 = 0.0;  // x100
  bool failed = false;
  std::string error;
};

struct RunRow {
  std::string run;
  // column label -> mean eval F1 over seeds (x100)
  std::vector<std::pair<std::string, double>> scores;
  double mean = 0.0;
  double stddev = 0.0;  // sample std across embedding columns
};

struct SweepReport {
  std::vector<CellResult> cells;
  std::vector<RunRow> rows;
  bool any_failed = false;

  std::string to_json() const;
  std::string to_table() const;  // human-readable
};

// aggregation used for the report rows, split out so it can be tested alone
RunRow aggregate_row(const std::string& run,
                     const std::vector<std::pair<std::string, double>>& scores);

// Runs every (run x embedding x seed) cell sequentially; a failing cell is
// recorded and the sweep continues.
SweepReport run_sweep(const Manifest& manifest, std::ostream& log);

}  // namespace hedge::sweep
