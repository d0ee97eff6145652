#pragma once

#include <vector>

#include "nodetab/num/matrix.hpp"

namespace nodetab::eval {

using num::Matrix;

// F1 of the positive class, which is category index 1.
double f1_binary(const std::vector<int>& truth, const std::vector<int>& pred);

// Unweighted mean of the per-class F1 over all n_classes classes; a class
// absent from both truth and predictions contributes 0.
double macro_f1(const std::vector<int>& truth, const std::vector<int>& pred, int n_classes);

// 1 - SS_res/SS_tot.  An exact fit gives 1 even when the target is constant;
// a constant target with residual error gives 0.
double r2_score(const std::vector<double>& truth, const std::vector<double>& pred);

// Mean silhouette s(i) = (b-a)/max(a,b) under Euclidean distance; points in
// singleton clusters score 0.  Needs at least two non-empty clusters.
double silhouette(const Matrix& X, const std::vector<int>& labels);

}  // namespace nodetab::eval
