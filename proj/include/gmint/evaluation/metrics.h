#pragma once

#include <vector>

namespace gmint::eval {

// Points run from (0,0) at threshold +inf through one point per distinct
// score, highest first, ending at (1,1).
struct RocCurve {
  std::vector<double> fpr;
  std::vector<double> tpr;
  std::vector<double> thresholds;

  std::size_t size() const { return fpr.size(); }
};

// Area under the ROC; a tied member/non-member pair counts one half.
// labels are 1 for members, 0 otherwise. Throws DataError when a class is
// missing or the lengths differ.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

double trapezoid_area(const RocCurve& curve);

}  // namespace gmint::eval
