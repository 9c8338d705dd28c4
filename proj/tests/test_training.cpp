#include <cmath>
#include <sstream>

#include <doctest.h>

#include "fixtures.hpp"
#include "hedge/train.hpp"

using namespace hedge;
using ad::Tensor;

namespace {

model::Model tiny_model(const std::string& preset_name, std::uint64_t seed) {
  auto xs = testfix::overfit_corpus();
  auto table = testfix::make_table(testfix::vocab_of(xs), 16, 77);
  return model::build_model(model::preset(preset_name), table,
                            corpus::collect_tagset(xs), seed);
}

std::vector<corpus::Encoded> encode_all(const model::Model& m) {
  return model::encode_sentences(m, testfix::overfit_corpus());
}

}  // namespace

TEST_CASE("class_weights formula") {
  auto [w0, w1] = train::class_weights(5000, 5000);
  CHECK(w0 == 1.0);
  CHECK(w1 == 1.0);

  auto [wc, wu] = train::class_weights(7726, 2274);
  CHECK(wc == doctest::Approx(0.6472).epsilon(1e-4));
  CHECK(wu == doctest::Approx(2.1988).epsilon(1e-4));

  // algebraic identity: w_c * N_c = N/2 for both classes
  CHECK(wc * 7726 == doctest::Approx(5000.0).epsilon(1e-12));
  CHECK(wu * 2274 == doctest::Approx(5000.0).epsilon(1e-12));

  CHECK_THROWS_AS(train::class_weights(0, 10), ConfigError);
}

TEST_CASE("weighted_bce examples") {
  CHECK(train::weighted_bce(0.5, 1, {1.0, 1.0}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(train::weighted_bce(0.5, 1, {1.0, 2.0}) ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  // clamping keeps extreme probabilities finite
  CHECK(std::isfinite(train::weighted_bce(0.0, 1, {1.0, 1.0})));
  CHECK(std::isfinite(train::weighted_bce(1.0, 0, {1.0, 1.0})));
}

TEST_CASE("bce gradient through the sigmoid equals w1*(p-1) for y=1") {
  const double w1 = 1.7;
  Tensor logit = Tensor::scalar(0.37, true);
  Tensor p = ad::sigmoid(logit);
  Tensor loss = ad::weighted_bce_mean(p, {1}, 1.0, w1);
  ad::backward(loss);
  const double analytic = logit.grad()[0];
  CHECK(analytic == doctest::Approx(w1 * (p.item() - 1.0)).epsilon(1e-12));
  ad::Tape::active().clear();

  // and matches central differences
  auto f = [w1](const Tensor& x) {
    return ad::weighted_bce_mean(ad::sigmoid(x), {1}, 1.0, w1);
  };
  CHECK(ad::grad_check(f, Tensor::scalar(0.37), 1e-3) < 1e-6);
}

TEST_CASE("unit class weights reduce to plain BCE") {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const double p = rng.uniform(0.05, 0.95);
    const int y = rng.uniform() < 0.5;
    const double plain = y ? -std::log(p) : -std::log(1.0 - p);
    CHECK(train::weighted_bce(p, y, {1.0, 1.0}) == doctest::Approx(plain).epsilon(1e-12));
  }
}

TEST_CASE("sgd_step examples") {
  Tensor p = Tensor::scalar(1.0, true);
  p.grad()[0] = 0.5;
  nn::ParamList params{{"p", p}};
  train::sgd_step(params, 0.1);
  CHECK(p.item() == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(p.grad()[0] == 0.0);  // grads zeroed afterwards

  train::sgd_step(params, 0.1);  // zero grad: no movement
  CHECK(p.item() == doctest::Approx(0.95).epsilon(1e-15));

  // one step on 1/2 p^2 from p=1 at lr 0.1 lands on 0.9
  Tensor q = Tensor::scalar(1.0, true);
  ad::backward(ad::scale(ad::mul(q, q), 0.5));
  ad::Tape::active().clear();
  nn::ParamList qp{{"q", q}};
  train::sgd_step(qp, 0.1);
  CHECK(q.item() == doctest::Approx(0.9).epsilon(1e-15));

  Tensor bad = Tensor::scalar(1.0, true);
  bad.grad()[0] = std::nan("");
  nn::ParamList bp{{"theta", bad}};
  CHECK_THROWS_WITH_AS(train::sgd_step(bp, 0.1), doctest::Contains("theta"),
                       TrainingDiverged);
}

TEST_CASE("zero epochs leave the model untouched") {
  model::Model m = tiny_model("gru", 11);
  const auto before = m.params[0].second.value();
  auto enc = encode_all(m);
  train::TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 1;
  train::TrainResult r = train::train(m, enc, enc, cfg);
  CHECK(m.params[0].second.value() == before);
  CHECK(r.history.records.empty());
}

TEST_CASE("training is deterministic under a fixed seed") {
  auto run = [] {
    model::Model m = tiny_model("joint-input-gru", 5);
    auto enc = encode_all(m);
    train::TrainConfig cfg;
    cfg.epochs = 6;
    cfg.eval_every = 2;
    cfg.batch_size = 16;
    cfg.seed = 123;
    train::TrainResult r = train::train(m, enc, enc, cfg);
    return std::make_pair(r.history.to_jsonl(), m.params[2].second.value());
  };
  auto [hist_a, params_a] = run();
  auto [hist_b, params_b] = run();

  // strip the wall-time measurement before comparing
  auto strip = [](std::string s) {
    std::string out;
    std::istringstream is(s);
    std::string line;
    while (std::getline(is, line)) {
      const auto pos = line.find("\"wall_s\"");
      REQUIRE(pos != std::string::npos);
      out += line.substr(0, pos) + "\n";
    }
    return out;
  };
  CHECK(strip(hist_a) == strip(hist_b));
  CHECK(params_a == params_b);
}

TEST_CASE("one batch of SGD decreases the loss on that batch") {
  model::Model m = tiny_model("gru", 17);
  auto enc = encode_all(m);
  std::vector<corpus::Encoded> batch(enc.begin(), enc.begin() + 8);

  auto batch_loss = [&] {
    ad::Tape::NoGrad ng;
    Rng rng(0);
    double acc = 0.0;
    for (const auto& e : batch) {
      const double p = model::forward_one(m, e, false, rng).item();
      acc += train::weighted_bce(p, e.uncertain ? 1 : 0, {1.0, 1.0});
    }
    return acc / static_cast<double>(batch.size());
  };

  const double before = batch_loss();
  Rng rng_drop(9);
  auto& tape = ad::Tape::active();
  for (const auto& e : batch) {
    tape.clear();
    // dropout off so the measured objective is the optimized one
    ad::Tensor p = model::forward_one(m, e, false, rng_drop);
    ad::Tensor loss =
        ad::weighted_bce_mean(p, {e.uncertain ? 1 : 0}, 1.0, 1.0);
    ad::backward(ad::scale(loss, 1.0 / static_cast<double>(batch.size())));
  }
  tape.clear();
  train::sgd_step(m.params, 1e-3);
  CHECK(batch_loss() < before);
}

TEST_CASE("best checkpoint is retained") {
  model::Model m = tiny_model("gru-att", 19);
  auto enc = encode_all(m);
  train::TrainConfig cfg;
  cfg.epochs = 10;
  cfg.eval_every = 2;
  cfg.batch_size = 16;
  cfg.lr = 0.3;
  cfg.seed = 7;
  train::TrainResult r = train::train(m, enc, enc, cfg);
  REQUIRE_FALSE(r.history.records.empty());
  double max_f1 = -1.0;
  for (const auto& rec : r.history.records) max_f1 = std::max(max_f1, rec.dev_f1);
  CHECK(r.best_dev_f1 == max_f1);
  CHECK(r.best_dev_f1 >= r.history.records.back().dev_f1);

  // the restored parameters reproduce the best recorded dev F1
  std::vector<int> pred = model::predict(m, enc);
  std::vector<int> gold;
  for (const auto& e : enc) gold.push_back(e.uncertain ? 1 : 0);
  auto rep = metrics::MetricsReport::compute(pred, gold);
  CHECK(rep.f1_x100() == doctest::Approx(r.best_dev_f1).epsilon(1e-9));
}

TEST_CASE("history serialization round-trips") {
  train::TrainHistory h;
  for (std::size_t i = 1; i <= 3; ++i) {
    train::CheckpointRecord rec;
    rec.epoch = i * 10;
    rec.train_loss = 1.0 / static_cast<double>(i);
    rec.dev_f1 = 50.0 + static_cast<double>(i);
    rec.dev_precision = 60.0;
    rec.dev_recall = 45.0;
    rec.lr = 0.1;
    rec.wall_s = 1.5 * static_cast<double>(i);
    h.records.push_back(rec);
  }
  train::TrainHistory back = train::TrainHistory::from_jsonl(h.to_jsonl());
  REQUIRE(back.records.size() == 3);
  CHECK(back.records[1].epoch == 20);
  CHECK(back.records[1].dev_f1 == 52.0);
  CHECK(back.records[2].train_loss == h.records[2].train_loss);
}

TEST_CASE("sample_mean_f1") {
  train::TrainHistory h;
  for (std::size_t e = 400; e <= 490; e += 10) {
    train::CheckpointRecord rec;
    rec.epoch = e;
    rec.dev_f1 = static_cast<double>(e);
    h.records.push_back(rec);
  }
  CHECK(train::sample_mean_f1(h, 400, 10, 10) == doctest::Approx(445.0));

  train::TrainHistory flat;
  for (std::size_t e = 10; e <= 500; e += 10) {
    train::CheckpointRecord rec;
    rec.epoch = e;
    rec.dev_f1 = 60.0;
    flat.records.push_back(rec);
  }
  CHECK(train::sample_mean_f1(flat, 400, 10, 10) == doctest::Approx(60.0));

  CHECK_THROWS_WITH_AS(train::sample_mean_f1(h, 400, 10, 11),
                       doctest::Contains("available"), ContractError);
}

TEST_CASE("a tiny run overfits its training fixture") {
  model::Model m = tiny_model("joint-input-gru", 23);
  auto enc = encode_all(m);
  train::TrainConfig cfg;
  cfg.epochs = 120;
  cfg.eval_every = 5;
  cfg.batch_size = 16;
  cfg.lr = 0.5;
  cfg.seed = 31;
  cfg.early_stop_f1 = 100.0;
  train::TrainResult r = train::train(m, enc, enc, cfg);
  CHECK(r.best_dev_f1 == doctest::Approx(100.0));
}
