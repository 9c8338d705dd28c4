#include "hedge/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hedge/embeddings.hpp"
#include "hedge/sweep.hpp"

namespace hedge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read file: " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write file: " + path);
  os << text;
  if (!os) throw IoError("short write: " + path);
}

// out-dirs are append-only unless the caller asked to overwrite
void claim_out_dir(const std::string& dir, bool overwrite) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !overwrite)
    throw ConfigError("output directory " + dir +
                      " is not empty; pass --overwrite or pick a new one");
  fs::create_directories(dir);
}

int usage_error(std::ostream& err, const std::string& what) {
  err << "error: " << what << "\n";
  return kUsage;
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("not a boolean: " + v);
}

std::size_t parse_size(const std::string& v) {
  try {
    return std::stoull(v);
  } catch (...) {
    throw ConfigError("not an integer: " + v);
  }
}

double parse_real(const std::string& v) {
  try {
    return std::stod(v);
  } catch (...) {
    throw ConfigError("not a number: " + v);
  }
}

}  // namespace

// ---- configuration ---------------------------------------------------------------

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::map<std::string, std::string> kv;
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config file: " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": expected key=value");
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(path + ":" + std::to_string(line_no) +
                                      ": empty key");
    kv[key] = val;
  }
  return kv;
}

std::map<std::string, std::string> parse_kv_list(const std::vector<std::string>& kvs) {
  std::map<std::string, std::string> out;
  for (const auto& kv : kvs) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override must look like key=value, got \"" + kv + "\"");
    out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

void apply_config_kv(const std::string& key, const std::string& value,
                     model::ModelSpec& spec, train::TrainConfig& cfg) {
  // training
  if (key == "epochs") cfg.epochs = parse_size(value);
  else if (key == "lr") cfg.lr = parse_real(value);
  else if (key == "batch_size") cfg.batch_size = parse_size(value);
  else if (key == "eval_every") cfg.eval_every = parse_size(value);
  else if (key == "sample_count") cfg.sample_count = parse_size(value);
  else if (key == "sample_start") cfg.sample_start = parse_size(value);
  else if (key == "class_weighting") cfg.class_weighting = parse_bool(value);
  else if (key == "dynamic_class_weights") cfg.dynamic_class_weights = parse_bool(value);
  else if (key == "halve_lr_on_plateau") cfg.halve_lr_on_plateau = parse_bool(value);
  else if (key == "plateau_patience") cfg.plateau_patience = parse_size(value);
  else if (key == "early_stop_f1") cfg.early_stop_f1 = parse_real(value);
  else if (key == "seed") cfg.seed = parse_size(value);
  // model
  else if (key == "hidden") spec.hidden = parse_size(value);
  else if (key == "layers") spec.layers = parse_size(value);
  else if (key == "pos_dim") spec.pos_dim = parse_size(value);
  else if (key == "attn_dim") spec.attn_dim = parse_size(value);
  else if (key == "dropout") spec.dropout = parse_real(value);
  else if (key == "bidirectional") spec.bidirectional = parse_bool(value);
  else if (key == "finetune_words") spec.finetune_words = parse_bool(value);
  else if (key == "heads") spec.heads = parse_size(value);
  else if (key == "ff_mult") spec.ff_mult = parse_size(value);
  else if (key == "conv_filters") spec.conv_filters = parse_size(value);
  else throw ConfigError("unknown config key: " + key);
}

void apply_config_map(const std::map<std::string, std::string>& kv,
                      model::ModelSpec& spec, train::TrainConfig& cfg) {
  for (const auto& [k, v] : kv) apply_config_kv(k, v, spec, cfg);
}

// ---- shared pipeline ----------------------------------------------------------------

LoadedCorpus load_corpus_dir(const std::string& dir, bool need_eval) {
  LoadedCorpus data;
  data.train = corpus::read_jsonl(dir + "/train.jsonl");
  data.dev = corpus::read_jsonl(dir + "/dev.jsonl");
  const std::string eval_path = dir + "/eval.jsonl";
  if (fs::exists(eval_path)) data.eval_set = corpus::read_jsonl(eval_path);
  else if (need_eval) throw IoError("missing eval split: " + eval_path);
  return data;
}

RunOutcome run_training(model::ModelSpec spec, train::TrainConfig cfg,
                        const LoadedCorpus& data, const std::string& embeddings_path,
                        std::ostream& log) {
  spec.validate();
  cfg.validate();

  std::vector<std::string> tagset;
  if (spec.uses_pos()) {
    std::vector<corpus::Sentence> both = data.train;
    both.insert(both.end(), data.dev.begin(), data.dev.end());
    tagset = corpus::collect_tagset(both);
    if (tagset.empty())
      throw ConfigError("preset " + spec.preset +
                        " needs POS tags but the corpus has none attached");
  }

  emb::EmbeddingTable words;
  if (spec.uses_words()) {
    if (embeddings_path.empty())
      throw ConfigError("preset " + spec.preset + " needs --embeddings");
    std::set<std::string> vocab;
    for (const auto* split : {&data.train, &data.dev})
      for (const auto& s : *split)
        for (const auto& t : s.tokens) vocab.insert(t);
    emb::LoadReport rep;
    words = emb::load_vectors(embeddings_path, vocab, &rep);
    log << "embeddings: dim " << words.dim << ", " << rep.covered << "/"
        << rep.vocab_size << " vocab tokens covered ("
        << std::fixed << std::setprecision(1) << 100.0 * rep.coverage()
        << "%), " << rep.malformed << " malformed lines skipped\n";
  }

  RunOutcome outcome{model::build_model(spec, std::move(words), tagset, cfg.seed), {}};

  auto encode_split = [&](const std::vector<corpus::Sentence>& xs, const char* name) {
    std::vector<corpus::Encoded> enc;
    enc.reserve(xs.size());
    std::size_t skipped = 0;
    for (const auto& s : xs) {
      corpus::Encoded e = model::encode_sentence(outcome.model, s);
      if (e.length == 0) {
        ++skipped;
        continue;
      }
      enc.push_back(std::move(e));
    }
    if (skipped)
      log << "warning: skipped " << skipped << " empty sentences in " << name << "\n";
    return enc;
  };

  const std::vector<corpus::Encoded> enc_train = encode_split(data.train, "train");
  const std::vector<corpus::Encoded> enc_dev = encode_split(data.dev, "dev");

  outcome.result = train::train(outcome.model, enc_train, enc_dev, cfg);
  return outcome;
}

metrics::MetricsReport evaluate_model(const model::Model& m,
                                      const std::vector<corpus::Sentence>& sentences) {
  if (sentences.empty()) throw ContractError("evaluate: empty sentence list");
  std::vector<int> pred = model::predict_sentences(m, sentences);
  std::vector<int> gold;
  gold.reserve(sentences.size());
  for (const auto& s : sentences) gold.push_back(s.uncertain ? 1 : 0);
  return metrics::MetricsReport::compute(pred, gold);
}

// ---- prepare -----------------------------------------------------------------------

namespace {

json stats_json(const corpus::Stats& st) {
  json j;
  j["sentences"] = st.sentences;
  j["certain"] = st.certain;
  j["uncertain"] = st.uncertain;
  j["fraction_certain"] = st.fraction_certain;
  j["mean_tokens"] = st.mean_tokens;
  j["max_tokens"] = st.max_tokens;
  j["over_max_len"] = st.over_max_len;
  return j;
}

}  // namespace

int cmd_prepare(const PrepareArgs& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.train_xml.empty() || args.eval_xml.empty() || args.out_dir.empty())
      return usage_error(err, "prepare needs --train-xml, --eval-xml and --out");

    corpus::TokenizerOptions topts;
    topts.lowercase = args.lowercase;

    corpus::ParseResult train_parsed = corpus::parse_conll_xml(slurp(args.train_xml), topts);
    corpus::ParseResult eval_parsed = corpus::parse_conll_xml(slurp(args.eval_xml), topts);
    for (const auto& w : train_parsed.warnings) err << "warning: " << w << "\n";
    for (const auto& w : eval_parsed.warnings) err << "warning: " << w << "\n";

    std::string pos_source = "heuristic";
    if (!args.pos_sidecar_train.empty()) {
      corpus::attach_pos_sidecar(train_parsed.sentences, slurp(args.pos_sidecar_train));
      if (args.pos_sidecar_eval.empty())
        throw ConfigError("a train sidecar was given without --pos-sidecar-eval");
      corpus::attach_pos_sidecar(eval_parsed.sentences, slurp(args.pos_sidecar_eval));
      pos_source = "sidecar";
    } else {
      if (!args.heuristic_pos)
        err << "warning: no POS sidecar given; falling back to the bundled "
               "approximate rule tagger (silence with --heuristic-pos)\n";
      corpus::attach_pos_heuristic(train_parsed.sentences);
      corpus::attach_pos_heuristic(eval_parsed.sentences);
    }

    const corpus::Stats train_stats = corpus::compute_stats(train_parsed.sentences);
    const corpus::Stats eval_stats = corpus::compute_stats(eval_parsed.sentences);
    corpus::Stats all_stats;
    {
      std::vector<corpus::Sentence> combined = train_parsed.sentences;
      combined.insert(combined.end(), eval_parsed.sentences.begin(),
                      eval_parsed.sentences.end());
      all_stats = corpus::compute_stats(combined);
    }

    // empty sentences leave training entirely but stay in eval so its size
    // and scoring base never change
    std::vector<corpus::Sentence> train_full;
    std::size_t dropped = 0;
    for (auto& s : train_parsed.sentences) {
      if (s.tokens.empty()) {
        ++dropped;
        continue;
      }
      train_full.push_back(std::move(s));
    }
    if (dropped)
      err << "warning: dropped " << dropped
          << " sentences emptied by cleaning from the training split\n";
    if (eval_parsed.empty_after_cleaning)
      err << "warning: " << eval_parsed.empty_after_cleaning
          << " eval sentences are empty after cleaning; they stay in the eval "
             "set and will be predicted certain\n";

    auto [train_split, dev_split] =
        corpus::split_train_dev(train_full, args.dev_ratio, args.seed);

    claim_out_dir(args.out_dir, args.overwrite);
    corpus::write_jsonl(args.out_dir + "/train.jsonl", train_split);
    corpus::write_jsonl(args.out_dir + "/dev.jsonl", dev_split);
    corpus::write_jsonl(args.out_dir + "/eval.jsonl", eval_parsed.sentences);

    json j;
    j["train_file"] = stats_json(train_stats);
    j["eval_file"] = stats_json(eval_stats);
    j["combined"] = stats_json(all_stats);
    j["split"] = {{"train", train_split.size()},
                  {"dev", dev_split.size()},
                  {"ratio", args.dev_ratio},
                  {"seed", args.seed}};
    j["dropped_empty_train"] = dropped;
    j["kept_empty_eval"] = eval_parsed.empty_after_cleaning;
    j["dropped_cue_spans"] =
        train_parsed.dropped_cue_spans + eval_parsed.dropped_cue_spans;
    j["pos_source"] = pos_source;
    j["lowercase"] = args.lowercase;
    std::vector<corpus::Sentence> tag_source = train_split;
    tag_source.insert(tag_source.end(), dev_split.begin(), dev_split.end());
    j["tagset"] = corpus::collect_tagset(tag_source);
    spit(args.out_dir + "/stats.json", j.dump(2) + "\n");

    out << "train sentences: " << train_stats.sentences << "\n";
    out << "eval sentences:  " << eval_stats.sentences << "\n";
    out << "split: " << train_split.size() << " train / " << dev_split.size()
        << " dev (ratio " << args.dev_ratio << ", seed " << args.seed << ")\n";
    out << std::fixed << std::setprecision(4)
        << "fraction certain (combined): " << all_stats.fraction_certain << "\n";
    out << std::setprecision(2)
        << "mean train sentence length: " << train_stats.mean_tokens << "\n";
    return kOk;
  } catch (const std::exception& e) {
    err << "prepare: " << e.what() << "\n";
    return kUsage;
  }
}

// ---- train -------------------------------------------------------------------------

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  model::ModelSpec spec;
  train::TrainConfig cfg;
  try {
    if (args.corpus_dir.empty() || args.preset.empty() || args.out_dir.empty())
      return usage_error(err, "train needs --corpus, --preset and --out");
    spec = model::preset(args.preset);
    cfg.seed = args.seed;
    if (!args.config_path.empty())
      apply_config_map(parse_config_file(args.config_path), spec, cfg);
    apply_config_map(parse_kv_list(args.overrides), spec, cfg);
    spec.validate();
    cfg.validate();
    claim_out_dir(args.out_dir, args.overwrite);
  } catch (const std::exception& e) {
    err << "train: " << e.what() << "\n";
    return kUsage;
  }

  try {
    LoadedCorpus data = load_corpus_dir(args.corpus_dir, false);
    RunOutcome outcome = run_training(spec, cfg, data, args.embeddings, out);

    spit(args.out_dir + "/history.jsonl", outcome.result.history.to_jsonl());
    json echo;
    echo["preset"] = args.preset;
    echo["spec"] = json::parse(outcome.model.spec.to_json());
    echo["seed"] = cfg.seed;
    echo["epochs"] = cfg.epochs;
    echo["lr"] = cfg.lr;
    echo["batch_size"] = cfg.batch_size;
    echo["eval_every"] = cfg.eval_every;
    echo["class_weighting"] = cfg.class_weighting;
    echo["embeddings"] = args.embeddings;
    echo["corpus_dir"] = args.corpus_dir;
    spit(args.out_dir + "/run.json", echo.dump(2) + "\n");

    if (outcome.result.diverged) {
      err << "train: " << outcome.result.message << "\n";
      return kRunFailure;
    }
    model::save_checkpoint(outcome.model, args.out_dir + "/checkpoint.hdg");

    const auto& recs = outcome.result.history.records;
    out << std::fixed << std::setprecision(2);
    if (!recs.empty())
      out << "final dev F1 " << recs.back().dev_f1 << " at epoch "
          << recs.back().epoch << "\n";
    out << "best dev F1 " << outcome.result.best_dev_f1 << " at epoch "
        << outcome.result.best_epoch << " (checkpoint retained)\n";
    return kOk;
  } catch (const TrainingDiverged& e) {
    err << "train: " << e.what() << "\n";
    return kRunFailure;
  } catch (const std::exception& e) {
    err << "train: " << e.what() << "\n";
    return kUsage;
  }
}

// ---- evaluate ------------------------------------------------------------------------

int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.checkpoint.empty())
      return usage_error(err, "evaluate needs --checkpoint");
    std::string corpus_path = args.corpus_file;
    if (corpus_path.empty()) {
      if (args.corpus_dir.empty())
        return usage_error(err, "evaluate needs --corpus-file or --corpus");
      if (args.split != "train" && args.split != "dev" && args.split != "eval")
        return usage_error(err, "--split must be train, dev or eval");
      corpus_path = args.corpus_dir + "/" + args.split + ".jsonl";
    }

    model::Model m = model::load_checkpoint(args.checkpoint);

    if (!args.embeddings.empty()) {
      // guard against silent vocab drift between training and evaluation
      std::set<std::string> vocab(m.words.tokens.begin() + 2, m.words.tokens.end());
      emb::EmbeddingTable table = emb::load_vectors(args.embeddings, vocab);
      if (table.vocab_hash() != m.vocab_hash) {
        err << "evaluate: vocab hash mismatch: " << args.embeddings
            << " does not reproduce the checkpoint's vocabulary\n";
        return kUsage;
      }
    }

    const std::vector<corpus::Sentence> sentences = corpus::read_jsonl(corpus_path);
    const metrics::MetricsReport rep = evaluate_model(m, sentences);
    out << rep.to_json() << "\n";
    if (!args.out_path.empty()) spit(args.out_path, rep.to_json() + "\n");
    return kOk;
  } catch (const std::exception& e) {
    err << "evaluate: " << e.what() << "\n";
    return kUsage;
  }
}

// ---- predict --------------------------------------------------------------------------

int cmd_predict(const PredictArgs& args, std::istream& in, std::ostream& out,
                std::ostream& err) {
  try {
    if (args.checkpoint.empty()) return usage_error(err, "predict needs --checkpoint");
    model::Model m = model::load_checkpoint(args.checkpoint);

    std::istream* src = &in;
    std::ifstream file;
    if (!args.input_path.empty()) {
      file.open(args.input_path);
      if (!file) throw IoError("cannot read input: " + args.input_path);
      src = &file;
    }

    std::vector<std::string> lines;
    std::string line;
    while (std::getline(*src, line)) lines.push_back(line);

    std::vector<std::vector<std::string>> sidecar_tags;
    if (!args.pos_sidecar.empty()) {
      std::istringstream ss(slurp(args.pos_sidecar));
      std::string tl;
      while (std::getline(ss, tl)) {
        std::istringstream ls(tl);
        std::vector<std::string> tags;
        std::string t;
        while (ls >> t) tags.push_back(std::move(t));
        sidecar_tags.push_back(std::move(tags));
      }
      if (sidecar_tags.size() != lines.size())
        throw ContractError("pos sidecar has " + std::to_string(sidecar_tags.size()) +
                            " lines for " + std::to_string(lines.size()) + " inputs");
    }

    corpus::TokenizerOptions topts;
    topts.lowercase = args.lowercase;

    out << std::fixed << std::setprecision(6);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      corpus::Sentence s;
      s.id = "line" + std::to_string(i + 1);
      try {
        s.tokens = corpus::tokenize_clean(lines[i], topts);
      } catch (const ContractError&) {
        s.tokens.clear();  // empty line or all noise: defaults to certain
      }
      if (!s.tokens.empty()) {
        if (!sidecar_tags.empty()) {
          if (sidecar_tags[i].size() != s.tokens.size())
            throw ContractError("pos sidecar misaligned at line " +
                                std::to_string(i + 1));
          s.pos = sidecar_tags[i];
        } else {
          s.pos = corpus::heuristic_pos_tag(s.tokens);
        }
      }
      double p = 0.0;
      if (!s.tokens.empty()) {
        corpus::Encoded e = model::encode_sentence(m, s);
        ad::Tape::NoGrad ng;
        Rng rng(0);
        p = model::forward_one(m, e, false, rng).item();
      }
      out << p << '\t' << (p >= 0.5 ? "uncertain" : "certain") << '\t' << lines[i]
          << '\n';
    }
    return kOk;
  } catch (const std::exception& e) {
    err << "predict: " << e.what() << "\n";
    return kUsage;
  }
}

// ---- sweep -----------------------------------------------------------------------------

int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err) {
  sweep::Manifest manifest;
  try {
    if (args.manifest_path.empty()) return usage_error(err, "sweep needs a manifest");
    manifest = sweep::Manifest::parse_file(args.manifest_path);
    claim_out_dir(manifest.out_dir, true);
  } catch (const std::exception& e) {
    err << "sweep: " << e.what() << "\n";
    return kUsage;
  }

  try {
    sweep::SweepReport report = sweep::run_sweep(manifest, out);
    spit(manifest.out_dir + "/report.json", report.to_json() + "\n");
    out << report.to_table();
    if (report.any_failed) {
      err << "sweep: some cells failed; see report.json\n";
      return kRunFailure;
    }
    return kOk;
  } catch (const std::exception& e) {
    err << "sweep: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace hedge::cli
