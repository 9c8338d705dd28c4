#include "hedge/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "hedge/rng.hpp"

namespace hedge::train {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (lr <= 0.0) throw ConfigError("lr must be positive");
  if (eval_every == 0) throw ConfigError("eval_every must be at least 1");
  if (sample_start == 0) throw ConfigError("sample_start must be at least 1");
}

std::pair<double, double> class_weights(std::size_t n_certain, std::size_t n_uncertain) {
  if (n_certain == 0 || n_uncertain == 0)
    throw ConfigError("class_weights: both classes must be present (certain=" +
                      std::to_string(n_certain) + ", uncertain=" +
                      std::to_string(n_uncertain) + ")");
  const double total = static_cast<double>(n_certain + n_uncertain);
  return {total / (2.0 * static_cast<double>(n_certain)),
          total / (2.0 * static_cast<double>(n_uncertain))};
}

double weighted_bce(double p, int y, std::pair<double, double> w) {
  const double clamped = std::min(1.0 - 1e-7, std::max(1e-7, p));
  return y ? -w.second * std::log(clamped) : -w.first * std::log(1.0 - clamped);
}

void sgd_step(nn::ParamList& params, double lr) {
  for (auto& [name, t] : params) {
    auto& g = t.grad();
    for (double gv : g)
      if (std::isnan(gv))
        throw TrainingDiverged("NaN gradient in parameter " + name);
    auto& v = t.value();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    t.zero_grad();
  }
}

std::string TrainHistory::to_jsonl() const {
  std::ostringstream os;
  for (const auto& r : records) {
    json j;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["dev_precision"] = r.dev_precision;
    j["dev_recall"] = r.dev_recall;
    j["dev_f1"] = r.dev_f1;
    j["lr"] = r.lr;
    j["wall_s"] = r.wall_s;
    os << j.dump() << '\n';
  }
  return os.str();
}

TrainHistory TrainHistory::from_jsonl(const std::string& text) {
  TrainHistory h;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    CheckpointRecord r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.train_loss = j.at("train_loss").get<double>();
    r.dev_precision = j.at("dev_precision").get<double>();
    r.dev_recall = j.at("dev_recall").get<double>();
    r.dev_f1 = j.at("dev_f1").get<double>();
    r.lr = j.value("lr", 0.0);
    r.wall_s = j.value("wall_s", 0.0);
    h.records.push_back(r);
  }
  return h;
}

namespace {

struct ParamSnapshot {
  std::vector<std::vector<double>> values;

  static ParamSnapshot take(const nn::ParamList& params) {
    ParamSnapshot s;
    s.values.reserve(params.size());
    for (const auto& [name, t] : params) s.values.push_back(t.value());
    return s;
  }
  void restore(nn::ParamList& params) const {
    for (std::size_t i = 0; i < params.size(); ++i)
      params[i].second.value() = values[i];
  }
};

metrics::Prf eval_dev(const model::Model& m,
                      const std::vector<corpus::Encoded>& dev_set) {
  std::vector<int> pred = model::predict(m, dev_set);
  std::vector<int> gold;
  gold.reserve(dev_set.size());
  for (const auto& e : dev_set) gold.push_back(e.uncertain ? 1 : 0);
  metrics::Confusion c = metrics::confusion(pred, gold);
  return metrics::precision_recall_f1(c.tp, c.fp, c.fn);
}

}  // namespace

TrainResult train(model::Model& m, const std::vector<corpus::Encoded>& train_set,
                  const std::vector<corpus::Encoded>& dev_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty() || dev_set.empty())
    throw ContractError("train: empty train or dev set");

  std::size_t n_uncertain = 0;
  for (const auto& e : train_set) n_uncertain += e.uncertain ? 1 : 0;
  const std::size_t n_certain = train_set.size() - n_uncertain;

  std::pair<double, double> base_w{1.0, 1.0};
  if (cfg.class_weighting) base_w = class_weights(n_certain, n_uncertain);
  std::pair<double, double> w = base_w;

  Rng root(cfg.seed);
  Rng rng_shuffle = root.fork(1);
  Rng rng_dropout = root.fork(2);

  TrainResult result;
  ParamSnapshot best = ParamSnapshot::take(m.params);
  std::size_t plateau = 0;
  double lr = cfg.lr;

  // running per-class training error, for the dynamic weighting mode
  std::size_t seen[2] = {0, 0}, wrong[2] = {0, 0};

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto& tape = ad::Tape::active();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng_shuffle.shuffle(order);
    double loss_sum = 0.0;

    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t bend = std::min(order.size(), b + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(bend - b);
      for (std::size_t k = b; k < bend; ++k) {
        const corpus::Encoded& ex = train_set[order[k]];
        const int y = ex.uncertain ? 1 : 0;
        tape.clear();
        ad::Tensor p = model::forward_one(m, ex, true, rng_dropout);
        ad::Tensor loss =
            ad::weighted_bce_mean(p, std::vector<int>{y}, w.first, w.second);
        const double loss_v = loss.item();
        if (std::isnan(loss_v)) {
          result.diverged = true;
          result.message = "loss went NaN at epoch " + std::to_string(epoch);
          tape.clear();
          best.restore(m.params);
          return result;
        }
        loss_sum += loss_v;
        const int hard_pred = p.item() >= 0.5 ? 1 : 0;
        seen[y] += 1;
        wrong[y] += hard_pred != y;
        ad::backward(ad::scale(loss, inv_batch));
      }
      tape.clear();
      try {
        sgd_step(m.params, lr);
      } catch (const TrainingDiverged& e) {
        result.diverged = true;
        result.message = e.what();
        best.restore(m.params);
        return result;
      }
    }

    if (epoch % cfg.eval_every == 0) {
      const metrics::Prf prf = eval_dev(m, dev_set);
      CheckpointRecord rec;
      rec.epoch = epoch;
      rec.train_loss = loss_sum / static_cast<double>(train_set.size());
      rec.dev_precision = prf.precision * 100.0;
      rec.dev_recall = prf.recall * 100.0;
      rec.dev_f1 = prf.f1 * 100.0;
      rec.lr = lr;
      rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                       .count();
      result.history.records.push_back(rec);

      if (rec.dev_f1 > result.best_dev_f1) {
        result.best_dev_f1 = rec.dev_f1;
        result.best_epoch = epoch;
        best = ParamSnapshot::take(m.params);
        plateau = 0;
      } else {
        ++plateau;
        if (cfg.halve_lr_on_plateau && plateau >= cfg.plateau_patience) {
          lr *= 0.5;
          plateau = 0;
        }
      }

      if (cfg.dynamic_class_weights) {
        const double e0 = seen[0] ? static_cast<double>(wrong[0]) / seen[0] : 0.0;
        const double e1 = seen[1] ? static_cast<double>(wrong[1]) / seen[1] : 0.0;
        const double mean_err = 0.5 * (e0 + e1) + 0.05;
        w = {base_w.first * (e0 + 0.05) / mean_err,
             base_w.second * (e1 + 0.05) / mean_err};
        seen[0] = seen[1] = wrong[0] = wrong[1] = 0;
      }

      if (cfg.early_stop_f1 >= 0.0 && rec.dev_f1 >= cfg.early_stop_f1) break;
    }
  }

  best.restore(m.params);
  return result;
}

double sample_mean_f1(const TrainHistory& history, std::size_t start,
                      std::size_t every, std::size_t n) {
  if (n == 0 || every == 0) throw ContractError("sample_mean_f1: n and every must be positive");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t epoch = start + i * every;
    const auto it = std::find_if(history.records.begin(), history.records.end(),
                                 [epoch](const CheckpointRecord& r) {
                                   return r.epoch == epoch;
                                 });
    if (it == history.records.end()) {
      std::string avail;
      for (const auto& r : history.records) {
        if (!avail.empty()) avail += ",";
        avail += std::to_string(r.epoch);
      }
      throw ContractError("sample_mean_f1: no checkpoint at epoch " +
                          std::to_string(epoch) + "; available: [" + avail + "]");
    }
    acc += it->dev_f1;
  }
  return acc / static_cast<double>(n);
}

}  // namespace hedge::train
