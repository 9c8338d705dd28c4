#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "hedge/common.hpp"

namespace hedge::metrics {

// uncertain (label 1) is the positive class
struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

Confusion confusion(const std::vector<int>& pred, const std::vector<int>& gold);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// zero-denominator convention: a ratio with an empty denominator is 0
Prf precision_recall_f1(std::size_t tp, std::size_t fp, std::size_t fn);

struct MetricsReport {
  Confusion counts;
  Prf scores;

  static MetricsReport compute(const std::vector<int>& pred,
                               const std::vector<int>& gold);
  double f1_x100() const { return scores.f1 * 100.0; }
  std::string to_json() const;
};

// mean and sample standard deviation (n-1 denominator; 0 when n < 2)
std::pair<double, double> mean_std(const std::vector<double>& values);

}  // namespace hedge::metrics
