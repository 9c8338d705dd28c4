#pragma once

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "hedge/model.hpp"
#include "hedge/train.hpp"

// Command implementations behind the CLI; the binary only parses argv.
// Exit codes: 0 success, 1 check/run failure, 2 usage or input validation.

namespace hedge::cli {

constexpr int kOk = 0;
constexpr int kRunFailure = 1;
constexpr int kUsage = 2;

// ---- configuration plumbing ---------------------------------------------------

// flat key=value lines, '#' comments
std::map<std::string, std::string> parse_config_file(const std::string& path);
std::map<std::string, std::string> parse_kv_list(const std::vector<std::string>& kvs);

// applies one override; throws ConfigError on unknown keys or bad values
void apply_config_kv(const std::string& key, const std::string& value,
                     model::ModelSpec& spec, train::TrainConfig& cfg);
void apply_config_map(const std::map<std::string, std::string>& kv,
                      model::ModelSpec& spec, train::TrainConfig& cfg);

// ---- shared pipeline pieces ---------------------------------------------------

struct LoadedCorpus {
  std::vector<corpus::Sentence> train;
  std::vector<corpus::Sentence> dev;
  std::vector<corpus::Sentence> eval_set;  // may be empty if absent on disk
};

LoadedCorpus load_corpus_dir(const std::string& dir, bool need_eval);

struct RunOutcome {
  model::Model model;
  train::TrainResult result;
};

// vocab + embeddings + encode + build + train; embeddings_path may be empty
// for presets that take no words
RunOutcome run_training(model::ModelSpec spec, train::TrainConfig cfg,
                        const LoadedCorpus& data, const std::string& embeddings_path,
                        std::ostream& log);

metrics::MetricsReport evaluate_model(const model::Model& m,
                                      const std::vector<corpus::Sentence>& sentences);

// ---- commands -------------------------------------------------------------------

struct PrepareArgs {
  std::string train_xml;
  std::string eval_xml;
  std::string pos_sidecar_train;  // optional
  std::string pos_sidecar_eval;   // optional
  std::string out_dir;
  bool heuristic_pos = false;  // silences the no-sidecar warning
  bool lowercase = true;
  double dev_ratio = 0.1;
  std::uint64_t seed = 13;
  bool overwrite = false;
};
int cmd_prepare(const PrepareArgs& args, std::ostream& out, std::ostream& err);

struct TrainArgs {
  std::string corpus_dir;
  std::string preset;
  std::string embeddings;  // vector file; optional for pos-only presets
  std::string out_dir;
  std::string config_path;            // optional flat config file
  std::vector<std::string> overrides;  // key=value, highest precedence
  std::uint64_t seed = 1;
  bool overwrite = false;
};
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);

struct EvaluateArgs {
  std::string checkpoint;
  std::string corpus_file;  // jsonl; or corpus_dir + split
  std::string corpus_dir;
  std::string split = "eval";
  std::string out_path;     // optional metrics.json destination
  std::string embeddings;   // optional; must hash-match the checkpoint
};
int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err);

struct PredictArgs {
  std::string checkpoint;
  std::string input_path;  // empty = stdin
  std::string pos_sidecar;
  bool lowercase = true;
};
int cmd_predict(const PredictArgs& args, std::istream& in, std::ostream& out,
                std::ostream& err);

struct SweepArgs {
  std::string manifest_path;
};
int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err);

struct GradcheckArgs {
  std::uint64_t seed = 7;
  double eps = 1e-3;
  double threshold = 1e-4;
  bool inject_error = false;  // adds a deliberately broken layer fixture
};
int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err);

}  // namespace hedge::cli
