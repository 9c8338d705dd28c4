#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "hedge/commands.hpp"

// Subcommands: prepare, train, evaluate, predict, sweep, gradcheck.
// Exit codes: 0 success, 1 check/run failure, 2 usage or validation error.

int main(int argc, char** argv) {
  using namespace hedge;

  CLI::App app{"hedge detection toolkit"};
  app.require_subcommand(1);

  const char* env_data = std::getenv("HEDGE_DATA_DIR");
  const std::string data_dir = env_data ? env_data : "";

  cli::PrepareArgs prep;
  bool no_lowercase = false;
  auto* prepare = app.add_subcommand("prepare", "parse and preprocess the corpus");
  prepare->add_option("--train-xml", prep.train_xml, "training corpus XML")->required();
  prepare->add_option("--eval-xml", prep.eval_xml, "evaluation corpus XML")->required();
  prepare->add_option("--pos-sidecar", prep.pos_sidecar_train,
                      "POS sidecar aligned to the training corpus");
  prepare->add_option("--pos-sidecar-eval", prep.pos_sidecar_eval,
                      "POS sidecar aligned to the evaluation corpus");
  prepare->add_option("--out", prep.out_dir, "output directory")->required();
  prepare->add_flag("--heuristic-pos", prep.heuristic_pos,
                    "use the built-in rule tagger without warning");
  prepare->add_flag("--no-lowercase", no_lowercase, "keep original casing");
  prepare->add_option("--dev-ratio", prep.dev_ratio, "development split fraction");
  prepare->add_option("--seed", prep.seed, "split shuffle seed");
  prepare->add_flag("--overwrite", prep.overwrite, "allow writing into a non-empty dir");

  cli::TrainArgs tr;
  auto* train = app.add_subcommand("train", "train one preset on a prepared corpus");
  train->add_option("--corpus", tr.corpus_dir, "prepared corpus directory")
      ->default_val(data_dir);
  train->add_option("--preset", tr.preset, "model preset name")->required();
  train->add_option("--embeddings", tr.embeddings, "word vector text file");
  train->add_option("--out", tr.out_dir, "run output directory")->required();
  train->add_option("--config", tr.config_path, "flat key=value config file");
  train->add_option("--set", tr.overrides, "config override key=value (repeatable)");
  train->add_option("--seed", tr.seed, "model init + training seed");
  train->add_flag("--overwrite", tr.overwrite, "allow writing into a non-empty dir");

  cli::EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a split");
  evaluate->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
  evaluate->add_option("--corpus", ev.corpus_dir, "prepared corpus directory")
      ->default_val(data_dir);
  evaluate->add_option("--corpus-file", ev.corpus_file, "explicit jsonl file");
  evaluate->add_option("--split", ev.split, "train|dev|eval (default eval)");
  evaluate->add_option("--out", ev.out_path, "write the metrics JSON here too");
  evaluate->add_option("--embeddings", ev.embeddings,
                       "verify this vector file hashes to the checkpoint vocab");

  cli::PredictArgs pr;
  bool pr_no_lowercase = false;
  auto* predict = app.add_subcommand("predict", "label raw text lines");
  predict->add_option("--checkpoint", pr.checkpoint, "checkpoint file")->required();
  predict->add_option("--input", pr.input_path, "text file, one sentence per line"
                                                " (default: stdin)");
  predict->add_option("--pos-sidecar", pr.pos_sidecar, "tags aligned to input lines");
  predict->add_flag("--no-lowercase", pr_no_lowercase, "keep original casing");

  cli::SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "run an experiment manifest");
  sweep->add_option("manifest", sw.manifest_path, "manifest JSON file")->required();

  cli::GradcheckArgs gc;
  auto* gradcheck =
      app.add_subcommand("gradcheck", "verify every layer against central differences");
  gradcheck->add_option("--seed", gc.seed, "instance seed");
  gradcheck->add_option("--eps", gc.eps, "finite-difference step");
  gradcheck->add_option("--threshold", gc.threshold, "max relative error allowed");
  gradcheck->add_flag("--inject-error", gc.inject_error,
                      "include a deliberately broken layer (must fail)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kUsage;
  }

  if (prepare->parsed()) {
    prep.lowercase = !no_lowercase;
    return cli::cmd_prepare(prep, std::cout, std::cerr);
  }
  if (train->parsed()) return cli::cmd_train(tr, std::cout, std::cerr);
  if (evaluate->parsed()) return cli::cmd_evaluate(ev, std::cout, std::cerr);
  if (predict->parsed()) {
    pr.lowercase = !pr_no_lowercase;
    return cli::cmd_predict(pr, std::cin, std::cout, std::cerr);
  }
  if (sweep->parsed()) return cli::cmd_sweep(sw, std::cout, std::cerr);
  if (gradcheck->parsed()) return cli::cmd_gradcheck(gc, std::cout, std::cerr);
  return cli::kUsage;
}
