#pragma once

#include <vector>

#include "nodetab/num/matrix.hpp"
#include "nodetab/num/rng.hpp"
#include "nodetab/prep/table.hpp"

namespace nodetab::eval {

using num::Matrix;

// Numeric feature matrix for the learners and the clustering protocol:
// every column is standardized to the fitted mean/scale, discrete columns
// after one-hot expansion.  label_col = -1 keeps every column.
class FeatureMap {
 public:
  static FeatureMap fit(const prep::Table& t, int label_col);
  Matrix transform(const prep::Table& t) const;
  int width() const { return width_; }

 private:
  struct Col {
    int column;
    prep::ColumnKind kind;
    int offset;
    int width;  // 1 for continuous, |categories| for discrete
  };
  std::vector<Col> cols_;
  std::vector<double> mean_, scale_;
  int width_ = 0;
};

// Binary CART grown by exhaustive threshold scan, Gini impurity for
// classification (n_classes >= 2) and variance reduction for regression
// (n_classes == 0).  Predictions are class indices or leaf means.
class Cart {
 public:
  static Cart fit(const Matrix& X, const std::vector<double>& y, int n_classes, int max_depth);
  std::vector<double> predict(const Matrix& X) const;

 private:
  struct Node {
    int feat = -1;  // -1 = leaf
    double thr = 0.0;
    int left = -1, right = -1;
    double out = 0.0;
  };
  int grow(const Matrix& X, const std::vector<double>& y, std::vector<int>& rows, int depth);
  std::vector<Node> nodes_;
  int n_classes_ = 0;
  int max_depth_ = 8;
};

// Softmax regression trained by full-batch gradient descent from zero
// weights; returns (d+1) x C with the bias in the last row.
Matrix logistic_fit(const Matrix& X, const std::vector<double>& y, int n_classes, int iters = 500,
                    double lr = 0.5);
std::vector<double> logistic_predict(const Matrix& X, const Matrix& W);

// Ridge least squares via the normal equations; returns d+1 weights with
// the intercept last.
std::vector<double> linear_fit(const Matrix& X, const std::vector<double>& y);
std::vector<double> linear_predict(const Matrix& X, const std::vector<double>& w);

struct MlpConfig {
  int hidden = 64;
  int epochs = 200;
  double lr = 1e-2;
};

// One-hidden-layer relu network trained with Adam on the full batch,
// then evaluated on Xtest.  Classification returns class indices.
std::vector<double> mlp_classify(const Matrix& X, const std::vector<double>& y, int n_classes,
                                 const Matrix& Xtest, num::RngStream& rng, MlpConfig mc = {});
std::vector<double> mlp_regress(const Matrix& X, const std::vector<double>& y, const Matrix& Xtest,
                                num::RngStream& rng, MlpConfig mc = {});

// Lloyd iterations from k-means++ seeds; empty clusters reseed to the row
// farthest from its centroid.
struct KMeans {
  Matrix centroids;
  static KMeans fit(const Matrix& X, int k, num::RngStream& rng, int iters = 100);
  std::vector<int> assign(const Matrix& X) const;
};

}  // namespace nodetab::eval
