#include "hedge/metrics.hpp"

#include <cmath>

#include <json.hpp>

namespace hedge::metrics {

Confusion confusion(const std::vector<int>& pred, const std::vector<int>& gold) {
  if (pred.size() != gold.size())
    throw ContractError("confusion: " + std::to_string(pred.size()) +
                        " predictions for " + std::to_string(gold.size()) + " labels");
  if (pred.empty()) throw ContractError("confusion: empty input");
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gold[i]) pred[i] ? ++c.tp : ++c.fn;
    else pred[i] ? ++c.fp : ++c.tn;
  }
  return c;
}

Prf precision_recall_f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  Prf r;
  if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (r.precision + r.recall > 0.0)
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

MetricsReport MetricsReport::compute(const std::vector<int>& pred,
                                     const std::vector<int>& gold) {
  MetricsReport rep;
  rep.counts = confusion(pred, gold);
  rep.scores = precision_recall_f1(rep.counts.tp, rep.counts.fp, rep.counts.fn);
  return rep;
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["tp"] = counts.tp;
  j["fp"] = counts.fp;
  j["fn"] = counts.fn;
  j["tn"] = counts.tn;
  j["precision"] = scores.precision;
  j["recall"] = scores.recall;
  j["f1"] = scores.f1;
  j["f1_x100"] = f1_x100();
  return j.dump();
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) throw ContractError("mean_std: empty list");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

}  // namespace hedge::metrics
