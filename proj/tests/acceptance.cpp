// Acceptance suite: one pass/fail line per criterion.
//
// C1..C4, C8, C9 are self-contained. C5 needs the official corpus XML files
// (license-restricted, not bundled): set HEDGE_CONLL_TRAIN and
// HEDGE_CONLL_EVAL. C6 and C7 additionally train on that corpus for real;
// they run when the corpus (and, for C7, HEDGE_EMBEDDINGS pointing at a
// 300-d text-format vector file) is present AND HEDGE_ACCEPT_HEAVY=1, since
// they cost up to hours of CPU. Optional: HEDGE_POS_SIDECAR_TRAIN/EVAL for
// tags from a real tagger instead of the bundled heuristic one.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "fixtures.hpp"
#include "hedge/commands.hpp"
#include "hedge/sweep.hpp"
#include "oracles.hpp"

using namespace hedge;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = HEDGE_FIXTURE_DIR;
const std::string kWork = "/tmp/hedge_acceptance";

struct Outcome {
  enum Status { PASS, FAIL, SKIP } status = FAIL;
  std::string detail;
};

Outcome pass(std::string detail = "") { return {Outcome::PASS, std::move(detail)}; }
Outcome fail(std::string detail) { return {Outcome::FAIL, std::move(detail)}; }
Outcome skip(std::string detail) { return {Outcome::SKIP, std::move(detail)}; }

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? v : "";
}

double now_s() {
  using clock = std::chrono::steady_clock;
  static const auto t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

std::string fmt(double v, int prec = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

ad::Tensor rand_t(Rng& rng, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return ad::Tensor::from_data(std::move(shape), std::move(v));
}

// ---- C1: every layer's backward rule beats 1e-4 against central differences

Outcome c1_gradients() {
  const double t0 = now_s();
  std::ostringstream out, err;
  cli::GradcheckArgs args;
  const int rc = cli::cmd_gradcheck(args, out, err);
  const double dt = now_s() - t0;
  if (dt > 60.0) return fail("took " + fmt(dt) + "s (budget 60s)");
  if (rc != 0) return fail(err.str());
  return pass("25 layers, " + fmt(dt, 3) + "s");
}

// ---- C2: implementation matches independent scalar oracles within 1e-12

Outcome c2_oracles() {
  Rng rng(515);
  const double tol = 1e-12;

  for (int iter = 0; iter < 110; ++iter) {
    const std::size_t m = 1 + rng.below(8), k = 1 + rng.below(8), n = 1 + rng.below(8);
    ad::Tensor a = rand_t(rng, {m, k});
    ad::Tensor b = rand_t(rng, {k, n});
    const auto got = ad::matmul(a, b).value();
    const auto want = oracle::matmul(a.value(), b.value(), m, k, n);
    for (std::size_t i = 0; i < want.size(); ++i)
      if (std::abs(got[i] - want[i]) > tol) return fail("matmul diverged from oracle");
  }

  for (int iter = 0; iter < 110; ++iter) {
    const std::size_t d = 1 + rng.below(6), h = 1 + rng.below(6);
    Rng init = rng.fork(1000 + iter);
    nn::GruParams p = nn::GruParams::init(d, h, init);
    ad::Tensor x = rand_t(rng, {d});
    ad::Tensor hh = rand_t(rng, {h});
    const auto got = nn::gru_step(x, hh, p).value();
    const auto want = oracle::gru_step(x.value(), hh.value(), p, d, h);
    for (std::size_t i = 0; i < h; ++i)
      if (std::abs(got[i] - want[i]) > tol) return fail("gru_step diverged from oracle");
  }

  for (int iter = 0; iter < 110; ++iter) {
    const std::size_t d = 1 + rng.below(6), h = 1 + rng.below(6);
    Rng init = rng.fork(2000 + iter);
    nn::LstmParams p = nn::LstmParams::init(d, h, init);
    ad::Tensor x = rand_t(rng, {d});
    ad::Tensor hh = rand_t(rng, {h});
    ad::Tensor cc = rand_t(rng, {h});
    auto [hn, cn] = nn::lstm_step(x, hh, cc, p);
    const auto want = oracle::lstm_step(x.value(), hh.value(), cc.value(), p, d, h);
    for (std::size_t i = 0; i < h; ++i) {
      if (std::abs(hn.value()[i] - want.h[i]) > tol)
        return fail("lstm_step h diverged from oracle");
      if (std::abs(cn.value()[i] - want.c[i]) > tol)
        return fail("lstm_step c diverged from oracle");
    }
  }

  for (int iter = 0; iter < 110; ++iter) {
    const std::size_t t = 1 + rng.below(7), h = 1 + rng.below(6);
    Rng init = rng.fork(3000 + iter);
    nn::AttnPoolParams p = nn::AttnPoolParams::init(h, 1 + rng.below(5), init);
    ad::Tensor states = rand_t(rng, {t, h});
    Mask mask(t, 0);
    for (auto& b : mask) b = rng.uniform() < 0.7;
    if (mask_count(mask) == 0) mask[0] = 1;
    auto got = nn::attention_pool(states, mask, p);
    auto want = oracle::attention_pool(states.value(), mask, p, t, h);
    for (std::size_t i = 0; i < t; ++i)
      if (std::abs(got.weights.value()[i] - want.weights[i]) > tol)
        return fail("attention weights diverged from oracle");
    for (std::size_t i = 0; i < h; ++i)
      if (std::abs(got.context.value()[i] - want.context[i]) > tol)
        return fail("attention context diverged from oracle");
  }

  for (int iter = 0; iter < 110; ++iter) {
    const std::size_t d = 1 + rng.below(5);
    const std::size_t live = 1 + rng.below(8);
    Rng init = rng.fork(4000 + iter);
    nn::ConvParams p = nn::ConvParams::init(d, {2, 3}, 1 + rng.below(4), init);
    ad::Tensor seq = rand_t(rng, {live, d});
    const auto got = nn::conv1d_maxpool(seq, full_mask(live), p).value();
    const auto want = oracle::conv1d_maxpool(seq.value(), live, d, p);
    for (std::size_t i = 0; i < want.size(); ++i)
      if (std::abs(got[i] - want[i]) > tol) return fail("conv pooling diverged from oracle");
  }

  return pass("5 ops x 110 instances, tol 1e-12");
}

// ---- C3: inference probabilities survive pad-length changes and batch
//          regrouping bit-for-bit, for every preset

Outcome c3_invariance() {
  const auto corpus_xs = testfix::overfit_corpus();
  const auto vocab = testfix::vocab_of(corpus_xs);
  const auto tags = corpus::collect_tagset(corpus_xs);
  for (const auto& name : model::preset_names()) {
    model::Model m = model::build_model(model::preset(name),
                                        testfix::make_table(vocab, 16, 99), tags, 7);
    std::vector<corpus::Encoded> batch;
    for (int i = 0; i < 8; ++i)
      batch.push_back(model::encode_sentence(m, corpus_xs[i * 3]));
    const std::vector<double> grouped = model::forward(m, batch);
    for (int i = 0; i < 8; ++i) {
      const double solo = model::forward(m, {batch[i]})[0];
      if (solo != grouped[i]) return fail(name + ": batch regrouping drifted");
      corpus::Encoded wide = model::encode_sentence(m, corpus_xs[i * 3], 128);
      const double padded = model::forward(m, {wide})[0];
      if (padded != grouped[i]) return fail(name + ": pad length drifted");
    }
  }
  return pass("18 presets, drift 0");
}

// ---- C4: the published best architecture memorizes a 64-sentence fixture

Outcome c4_overfit() {
  const double t0 = now_s();
  const auto corpus_xs = testfix::overfit_corpus();
  model::Model m = model::build_model(
      model::preset("joint-latent-gru-lstm-att"),
      testfix::make_table(testfix::vocab_of(corpus_xs), 16, 5),
      corpus::collect_tagset(corpus_xs), 12);
  auto enc = model::encode_sentences(m, corpus_xs);

  train::TrainConfig cfg;
  cfg.epochs = 300;
  cfg.eval_every = 5;
  cfg.batch_size = 16;
  cfg.lr = 0.5;
  cfg.seed = 9;
  cfg.early_stop_f1 = 100.0;
  train::TrainResult r = train::train(m, enc, enc, cfg);
  const double dt = now_s() - t0;
  if (dt > 300.0) return fail("took " + fmt(dt) + "s (budget 300s)");
  if (r.best_dev_f1 < 100.0)
    return fail("train F1 peaked at " + fmt(r.best_dev_f1) + " within 300 epochs");
  return pass("train F1 100 at epoch " + std::to_string(r.best_epoch) + ", " +
              fmt(dt, 1) + "s");
}

// ---- C5: official corpus statistics

struct OfficialData {
  std::string train_xml, eval_xml, sidecar_train, sidecar_eval;
  bool present() const { return !train_xml.empty() && !eval_xml.empty(); }
};

OfficialData official() {
  return {env_or_empty("HEDGE_CONLL_TRAIN"), env_or_empty("HEDGE_CONLL_EVAL"),
          env_or_empty("HEDGE_POS_SIDECAR_TRAIN"), env_or_empty("HEDGE_POS_SIDECAR_EVAL")};
}

Outcome c5_corpus_stats(const OfficialData& data, const std::string& prep_dir) {
  if (!data.present())
    return skip("official corpus not present; set HEDGE_CONLL_TRAIN/HEDGE_CONLL_EVAL");

  cli::PrepareArgs args;
  args.train_xml = data.train_xml;
  args.eval_xml = data.eval_xml;
  args.pos_sidecar_train = data.sidecar_train;
  args.pos_sidecar_eval = data.sidecar_eval;
  args.heuristic_pos = true;
  args.out_dir = prep_dir;
  args.overwrite = true;
  args.seed = 13;
  std::ostringstream out, err;
  if (cli::cmd_prepare(args, out, err) != 0) return fail("prepare failed: " + err.str());

  std::ifstream sj(prep_dir + "/stats.json");
  nlohmann::json stats;
  sj >> stats;
  const std::size_t n_train = stats["train_file"]["sentences"];
  const std::size_t n_eval = stats["eval_file"]["sentences"];
  const std::size_t n_split_train = stats["split"]["train"];
  const std::size_t n_split_dev = stats["split"]["dev"];
  const double frac = stats["combined"]["fraction_certain"];

  if (n_train != 11110) return fail("train sentences: " + std::to_string(n_train));
  if (n_eval != 9634) return fail("eval sentences: " + std::to_string(n_eval));
  if (n_split_train != 9999 || n_split_dev != 1111)
    return fail("split: " + std::to_string(n_split_train) + "/" +
                std::to_string(n_split_dev));
  if (std::abs(frac - 0.7726) > 0.001)
    return fail("certain fraction " + fmt(frac, 4) + " not within 0.7726 +/- 0.001");
  return pass("11110/9634 sentences, split 9999/1111, certain " + fmt(frac * 100.0) + "%");
}

// ---- C6: POS-only signal on the real eval set

Outcome c6_pos_signal(const OfficialData& data, const std::string& prep_dir) {
  if (!data.present())
    return skip("official corpus not present; set HEDGE_CONLL_TRAIN/HEDGE_CONLL_EVAL");
  if (env_or_empty("HEDGE_ACCEPT_HEAVY") != "1")
    return skip("long training run; set HEDGE_ACCEPT_HEAVY=1 (budget <= 1h CPU)");

  const double t0 = now_s();
  cli::LoadedCorpus corp = cli::load_corpus_dir(prep_dir, true);
  model::ModelSpec spec = model::preset("pos-lstm-att");
  train::TrainConfig cfg;  // defaults
  cfg.seed = 1;
  std::ostringstream log;
  cli::RunOutcome run = cli::run_training(spec, cfg, corp, "", log);
  if (run.result.diverged) return fail(run.result.message);
  const double f1 = cli::evaluate_model(run.model, corp.eval_set).f1_x100();
  const double dt = now_s() - t0;
  if (f1 < 50.0) return fail("eval F1 " + fmt(f1) + " < 50.0");
  return pass("eval F1 " + fmt(f1) + " (reported 55.67), " + fmt(dt / 60.0, 1) + " min");
}

// ---- C7: headline joint model on the real eval set

Outcome c7_headline(const OfficialData& data, const std::string& prep_dir) {
  if (!data.present())
    return skip("official corpus not present; set HEDGE_CONLL_TRAIN/HEDGE_CONLL_EVAL");
  const std::string emb = env_or_empty("HEDGE_EMBEDDINGS");
  if (emb.empty())
    return skip("no 300-d vector file; set HEDGE_EMBEDDINGS (the public "
                "2M-vocabulary table)");
  if (env_or_empty("HEDGE_ACCEPT_HEAVY") != "1")
    return skip("long training run; set HEDGE_ACCEPT_HEAVY=1 (budget <= 4h CPU/seed)");

  cli::LoadedCorpus corp = cli::load_corpus_dir(prep_dir, true);
  double best = -1.0;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const double t0 = now_s();
    model::ModelSpec spec = model::preset("joint-latent-gru-lstm-att");
    train::TrainConfig cfg;
    cfg.seed = seed;
    std::ostringstream log;
    cli::RunOutcome run = cli::run_training(spec, cfg, corp, emb, log);
    if (run.result.diverged) return fail(run.result.message);
    const double f1 = cli::evaluate_model(run.model, corp.eval_set).f1_x100();
    std::cerr << "  [C7] seed " << seed << ": eval F1 " << fmt(f1) << " ("
              << fmt((now_s() - t0) / 60.0, 1) << " min)\n";
    best = std::max(best, f1);
    if (best >= 66.0) break;  // criterion is best-of-3
  }
  if (best < 66.0) return fail("best eval F1 " + fmt(best) + " < 66.0 over 3 seeds");
  return pass("best eval F1 " + fmt(best) + " (reported 69.74; the 70.24 "
              "custom-embedding run is excluded)");
}

// ---- C8: the sweep report reproduces the published aggregation arithmetic

Outcome c8_table_mechanics() {
  sweep::RunRow row = sweep::aggregate_row("joint-input-gru",
                                           {{"wiki", 68.25}, {"fasttext", 67.69}});
  if (std::abs(row.mean - 67.97) > 0.005)
    return fail("mean " + fmt(row.mean, 4) + " != 67.97");
  if (std::llround(row.stddev * 10.0) != 4)  // prints as 0.4
    return fail("std " + fmt(row.stddev, 4) + " does not round to 0.4");

  sweep::RunRow row2 =
      sweep::aggregate_row("gru", {{"a", 62.07}, {"b", 64.23}, {"c", 65.04}});
  if (std::abs(row2.mean - 63.78) > 0.005)
    return fail("mean " + fmt(row2.mean, 4) + " != 63.78");
  if (std::llround(row2.stddev * 100.0) != 154)
    return fail("std " + fmt(row2.stddev, 4) + " does not round to 1.54");
  return pass("{68.25, 67.69} -> 67.97 +/- 0.4");
}

// ---- C9: identical seed and config give bit-identical artifacts

Outcome c9_determinism() {
  // corpus preparation twice
  for (const char* tag : {"a", "b"}) {
    cli::PrepareArgs args;
    args.train_xml = kFixtures + "/tiny_train.xml";
    args.eval_xml = kFixtures + "/tiny_eval.xml";
    args.out_dir = kWork + "/prep_" + tag;
    args.heuristic_pos = true;
    args.seed = 13;
    args.overwrite = true;
    std::ostringstream out, err;
    if (cli::cmd_prepare(args, out, err) != 0) return fail("prepare: " + err.str());
  }
  auto file_bytes = [](const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), {});
  };
  for (const char* f : {"/train.jsonl", "/dev.jsonl", "/eval.jsonl", "/stats.json"})
    if (file_bytes(kWork + "/prep_a" + f) != file_bytes(kWork + "/prep_b" + f))
      return fail(std::string("prepare artifact differs: ") + f);

  // training twice on the prepared fixture corpus
  for (const char* tag : {"a", "b"}) {
    cli::TrainArgs args;
    args.corpus_dir = kWork + "/prep_a";
    args.preset = "pos-gru";
    args.out_dir = kWork + "/det_" + tag;
    args.seed = 5;
    args.overrides = {"epochs=6", "eval_every=2", "hidden=8", "batch_size=8"};
    args.overwrite = true;
    std::ostringstream out, err;
    if (cli::cmd_train(args, out, err) != 0) return fail("train: " + err.str());
  }
  if (file_bytes(kWork + "/det_a/checkpoint.hdg") !=
      file_bytes(kWork + "/det_b/checkpoint.hdg"))
    return fail("checkpoints differ");

  auto strip_wall = [&](const std::string& path) {
    train::TrainHistory h = train::TrainHistory::from_jsonl(file_bytes(path));
    for (auto& r : h.records) r.wall_s = 0.0;
    return h.to_jsonl();
  };
  if (strip_wall(kWork + "/det_a/history.jsonl") !=
      strip_wall(kWork + "/det_b/history.jsonl"))
    return fail("histories differ beyond wall time");
  return pass("prepare + train artifacts bit-identical");
}

}  // namespace

int main() {
  fs::remove_all(kWork);
  fs::create_directories(kWork);

  const OfficialData data = official();
  const std::string prep_dir = kWork + "/official";

  struct Row {
    const char* id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Row> rows = {
      {"C1", "gradient-correctness", c1_gradients},
      {"C2", "oracle-equivalence", c2_oracles},
      {"C3", "padding-batching-invariance", c3_invariance},
      {"C4", "overfit-sanity", c4_overfit},
      {"C5", "corpus-statistics", [&] { return c5_corpus_stats(data, prep_dir); }},
      {"C6", "pos-only-signal", [&] { return c6_pos_signal(data, prep_dir); }},
      {"C7", "headline-result", [&] { return c7_headline(data, prep_dir); }},
      {"C8", "table-mechanics", c8_table_mechanics},
      {"C9", "determinism", c9_determinism},
  };

  bool any_fail = false;
  for (const auto& row : rows) {
    Outcome o;
    try {
      o = row.run();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.status == Outcome::PASS ? "PASS"
                      : o.status == Outcome::SKIP ? "SKIP" : "FAIL";
    std::cout << row.id << ' ' << std::left << std::setw(30) << row.name << ' ' << tag;
    if (!o.detail.empty()) std::cout << "  (" << o.detail << ")";
    std::cout << std::endl;
    any_fail = any_fail || o.status == Outcome::FAIL;
  }
  return any_fail ? 1 : 0;
}
