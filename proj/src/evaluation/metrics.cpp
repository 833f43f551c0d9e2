#include "gmint/evaluation/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>

#include "gmint/common/errors.h"

namespace gmint::eval {

namespace {

struct Group {
  double score;
  std::uint64_t positives;
  std::uint64_t negatives;
};

// Distinct scores in descending order with their class counts.
std::vector<Group> grouped(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw DataError(std::to_string(scores.size()) + " scores but " + std::to_string(labels.size()) + " labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw NumericError("score " + std::to_string(i) + " is NaN");
    if (labels[i] != 0 && labels[i] != 1) throw DataError("labels must be 0 or 1");
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<Group> groups;
  std::uint64_t pos = 0, neg = 0;
  for (auto i : order) {
    if (groups.empty() || groups.back().score != scores[i]) groups.push_back({scores[i], 0, 0});
    if (labels[i] == 1) {
      ++groups.back().positives;
      ++pos;
    } else {
      ++groups.back().negatives;
      ++neg;
    }
  }
  if (pos == 0 || neg == 0) throw DataError("AUC needs both member and non-member labels");
  return groups;
}

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  auto groups = grouped(scores, labels);
  // twice the Mann-Whitney U, kept in integers
  std::uint64_t twice_u = 0, pos_above = 0, pos = 0, neg = 0;
  for (const auto& g : groups) {
    twice_u += g.negatives * (2 * pos_above + g.positives);
    pos_above += g.positives;
    pos += g.positives;
    neg += g.negatives;
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  auto groups = grouped(scores, labels);
  std::uint64_t pos = 0, neg = 0;
  for (const auto& g : groups) {
    pos += g.positives;
    neg += g.negatives;
  }
  RocCurve c;
  c.fpr.push_back(0.0);
  c.tpr.push_back(0.0);
  c.thresholds.push_back(std::numeric_limits<double>::infinity());
  std::uint64_t tp = 0, fp = 0;
  for (const auto& g : groups) {
    tp += g.positives;
    fp += g.negatives;
    c.fpr.push_back(static_cast<double>(fp) / static_cast<double>(neg));
    c.tpr.push_back(static_cast<double>(tp) / static_cast<double>(pos));
    c.thresholds.push_back(g.score);
  }
  return c;
}

double trapezoid_area(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    area += (curve.fpr[i] - curve.fpr[i - 1]) * (curve.tpr[i] + curve.tpr[i - 1]) / 2.0;
  return area;
}

}  // namespace gmint::eval
