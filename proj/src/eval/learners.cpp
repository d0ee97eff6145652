#include "nodetab/eval/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nodetab/num/error.hpp"
#include "nodetab/num/graph.hpp"
#include "nodetab/num/params.hpp"

namespace nodetab::eval {

// ---------------------------------------------------------------- features

FeatureMap FeatureMap::fit(const prep::Table& t, int label_col) {
  t.schema.validate();
  if (t.rows() < 1) fail(errc::schema, "feature map: empty table");
  FeatureMap fm;
  for (int c = 0; c < int(t.schema.columns.size()); ++c) {
    if (c == label_col) continue;
    const auto& col = t.schema.columns[c];
    int w = col.kind == prep::ColumnKind::continuous ? 1 : int(col.categories.size());
    fm.cols_.push_back({c, col.kind, fm.width_, w});
    fm.width_ += w;
  }
  if (fm.width_ == 0) fail(errc::schema, "feature map: no feature columns");

  Matrix raw(t.rows(), fm.width_);
  double* p = raw.mut_data();
  for (int i = 0; i < t.rows(); ++i)
    for (const auto& col : fm.cols_) {
      double v = t.values(i, col.column);
      if (col.kind == prep::ColumnKind::continuous)
        p[size_t(i) * fm.width_ + col.offset] = v;
      else
        p[size_t(i) * fm.width_ + col.offset + int(v)] = 1.0;
    }
  fm.mean_.assign(fm.width_, 0.0);
  fm.scale_.assign(fm.width_, 1.0);
  for (int j = 0; j < fm.width_; ++j) {
    double m = 0.0, s2 = 0.0;
    for (int i = 0; i < t.rows(); ++i) m += raw(i, j);
    m /= t.rows();
    for (int i = 0; i < t.rows(); ++i) s2 += (raw(i, j) - m) * (raw(i, j) - m);
    double sd = std::sqrt(s2 / t.rows());
    fm.mean_[j] = m;
    fm.scale_[j] = sd > 1e-9 ? sd : 1.0;
  }
  return fm;
}

Matrix FeatureMap::transform(const prep::Table& t) const {
  Matrix out(t.rows(), width_);
  double* p = out.mut_data();
  for (int i = 0; i < t.rows(); ++i)
    for (const auto& col : cols_) {
      double v = t.values(i, col.column);
      if (col.kind == prep::ColumnKind::continuous) {
        p[size_t(i) * width_ + col.offset] = v;
      } else {
        int cat = int(v);
        if (cat < 0 || cat >= col.width) fail(errc::schema, "feature map: category out of range");
        p[size_t(i) * width_ + col.offset + cat] = 1.0;
      }
    }
  for (int i = 0; i < t.rows(); ++i)
    for (int j = 0; j < width_; ++j)
      p[size_t(i) * width_ + j] = (p[size_t(i) * width_ + j] - mean_[j]) / scale_[j];
  return out;
}

// ---------------------------------------------------------------- cart

namespace {

double leaf_value(const std::vector<double>& y, const std::vector<int>& rows, int n_classes) {
  if (n_classes == 0) {
    double m = 0.0;
    for (int r : rows) m += y[r];
    return m / double(rows.size());
  }
  std::vector<long> count(n_classes, 0);
  for (int r : rows) ++count[int(y[r])];
  int best = 0;
  for (int c = 1; c < n_classes; ++c)
    if (count[c] > count[best]) best = c;
  return double(best);
}

bool all_equal(const std::vector<double>& y, const std::vector<int>& rows) {
  for (int r : rows)
    if (y[r] != y[rows[0]]) return false;
  return true;
}

}  // namespace

int Cart::grow(const Matrix& X, const std::vector<double>& y, std::vector<int>& rows, int depth) {
  Node node;
  node.out = leaf_value(y, rows, n_classes_);
  int id = int(nodes_.size());
  nodes_.push_back(node);
  if (depth >= max_depth_ || rows.size() < 2 || all_equal(y, rows)) return id;

  long n = long(rows.size());
  double best_cost = 0.0;
  int best_feat = -1;
  double best_thr = 0.0;
  std::vector<std::pair<double, int>> order(rows.size());
  std::vector<long> left_count, right_count;
  for (int f = 0; f < X.cols(); ++f) {
    for (size_t i = 0; i < rows.size(); ++i) order[i] = {X(rows[i], f), rows[i]};
    std::sort(order.begin(), order.end());
    if (n_classes_ > 0) {
      left_count.assign(n_classes_, 0);
      right_count.assign(n_classes_, 0);
      for (auto& [v, r] : order) ++right_count[int(y[r])];
      long nl = 0;
      for (size_t i = 0; i + 1 < order.size(); ++i) {
        int cls = int(y[order[i].second]);
        ++left_count[cls];
        --right_count[cls];
        ++nl;
        if (order[i].first == order[i + 1].first) continue;
        double gl = 1.0, gr = 1.0;
        for (int c = 0; c < n_classes_; ++c) {
          gl -= double(left_count[c]) * left_count[c] / (double(nl) * nl);
          gr -= double(right_count[c]) * right_count[c] / (double(n - nl) * (n - nl));
        }
        double cost = nl * gl + (n - nl) * gr;
        if (best_feat < 0 || cost < best_cost) {
          best_cost = cost;
          best_feat = f;
          best_thr = (order[i].first + order[i + 1].first) / 2;
        }
      }
    } else {
      double sum_l = 0.0, sq_l = 0.0, sum_r = 0.0, sq_r = 0.0;
      for (auto& [v, r] : order) {
        sum_r += y[r];
        sq_r += y[r] * y[r];
      }
      long nl = 0;
      for (size_t i = 0; i + 1 < order.size(); ++i) {
        double yi = y[order[i].second];
        sum_l += yi;
        sq_l += yi * yi;
        sum_r -= yi;
        sq_r -= yi * yi;
        ++nl;
        if (order[i].first == order[i + 1].first) continue;
        double cost = (sq_l - sum_l * sum_l / nl) + (sq_r - sum_r * sum_r / (n - nl));
        if (best_feat < 0 || cost < best_cost) {
          best_cost = cost;
          best_feat = f;
          best_thr = (order[i].first + order[i + 1].first) / 2;
        }
      }
    }
  }
  if (best_feat < 0) return id;  // every feature constant

  std::vector<int> left, right;
  for (int r : rows)
    (X(r, best_feat) <= best_thr ? left : right).push_back(r);
  nodes_[id].feat = best_feat;
  nodes_[id].thr = best_thr;
  int l = grow(X, y, left, depth + 1);
  int r = grow(X, y, right, depth + 1);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

Cart Cart::fit(const Matrix& X, const std::vector<double>& y, int n_classes, int max_depth) {
  if (X.rows() < 1 || size_t(X.rows()) != y.size()) fail(errc::schema, "cart: bad training set");
  Cart t;
  t.n_classes_ = n_classes;
  t.max_depth_ = max_depth;
  std::vector<int> rows(X.rows());
  std::iota(rows.begin(), rows.end(), 0);
  t.grow(X, y, rows, 0);
  return t;
}

std::vector<double> Cart::predict(const Matrix& X) const {
  std::vector<double> out(X.rows());
  for (int i = 0; i < X.rows(); ++i) {
    int at = 0;
    while (nodes_[at].feat >= 0)
      at = X(i, nodes_[at].feat) <= nodes_[at].thr ? nodes_[at].left : nodes_[at].right;
    out[i] = nodes_[at].out;
  }
  return out;
}

// ---------------------------------------------------------------- logistic

namespace {

void softmax_row(double* p, int c) {
  double mx = p[0];
  for (int j = 1; j < c; ++j) mx = std::max(mx, p[j]);
  double sum = 0.0;
  for (int j = 0; j < c; ++j) sum += (p[j] = std::exp(p[j] - mx));
  for (int j = 0; j < c; ++j) p[j] /= sum;
}

}  // namespace

Matrix logistic_fit(const Matrix& X, const std::vector<double>& y, int n_classes, int iters,
                    double lr) {
  int n = X.rows(), d = X.cols();
  if (n < 1 || size_t(n) != y.size()) fail(errc::schema, "logistic: bad training set");
  Matrix W(d + 1, n_classes);
  std::vector<double> probs(size_t(n) * n_classes);
  for (int it = 0; it < iters; ++it) {
    for (int i = 0; i < n; ++i) {
      double* p = probs.data() + size_t(i) * n_classes;
      for (int c = 0; c < n_classes; ++c) {
        double a = W(d, c);
        for (int j = 0; j < d; ++j) a += X(i, j) * W(j, c);
        p[c] = a;
      }
      softmax_row(p, n_classes);
      p[int(y[i])] -= 1.0;
    }
    double* w = W.mut_data();
    for (int i = 0; i < n; ++i) {
      const double* p = probs.data() + size_t(i) * n_classes;
      for (int c = 0; c < n_classes; ++c) {
        double g = lr * p[c] / n;
        for (int j = 0; j < d; ++j) w[size_t(j) * n_classes + c] -= g * X(i, j);
        w[size_t(d) * n_classes + c] -= g;
      }
    }
  }
  return W;
}

std::vector<double> logistic_predict(const Matrix& X, const Matrix& W) {
  int d = X.cols(), c = W.cols();
  if (W.rows() != d + 1) fail(errc::schema, "logistic: weight shape mismatch");
  std::vector<double> out(X.rows());
  for (int i = 0; i < X.rows(); ++i) {
    int best = 0;
    double bv = 0.0;
    for (int k = 0; k < c; ++k) {
      double a = W(d, k);
      for (int j = 0; j < d; ++j) a += X(i, j) * W(j, k);
      if (k == 0 || a > bv) {
        bv = a;
        best = k;
      }
    }
    out[i] = double(best);
  }
  return out;
}

// ---------------------------------------------------------------- linear

namespace {

// Solves the SPD system in place by Cholesky.
std::vector<double> spd_solve(std::vector<double> A, std::vector<double> b, int d) {
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = A[size_t(i) * d + j];
      for (int k = 0; k < j; ++k) s -= A[size_t(i) * d + k] * A[size_t(j) * d + k];
      if (i == j) {
        if (s <= 0.0) fail(errc::numeric, "linear fit: normal equations not positive definite");
        A[size_t(i) * d + i] = std::sqrt(s);
      } else {
        A[size_t(i) * d + j] = s / A[size_t(j) * d + j];
      }
    }
  }
  for (int i = 0; i < d; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= A[size_t(i) * d + k] * b[k];
    b[i] = s / A[size_t(i) * d + i];
  }
  for (int i = d - 1; i >= 0; --i) {
    double s = b[i];
    for (int k = i + 1; k < d; ++k) s -= A[size_t(k) * d + i] * b[k];
    b[i] = s / A[size_t(i) * d + i];
  }
  return b;
}

}  // namespace

std::vector<double> linear_fit(const Matrix& X, const std::vector<double>& y) {
  int n = X.rows(), d = X.cols() + 1;
  if (n < 1 || size_t(n) != y.size()) fail(errc::schema, "linear: bad training set");
  std::vector<double> A(size_t(d) * d, 0.0), b(d, 0.0);
  auto cell = [&](int i, int j) { return j < d - 1 ? X(i, j) : 1.0; };
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < d; ++r) {
      b[r] += cell(i, r) * y[i];
      for (int c = 0; c <= r; ++c) A[size_t(r) * d + c] += cell(i, r) * cell(i, c);
    }
  for (int r = 0; r < d; ++r)
    for (int c = r + 1; c < d; ++c) A[size_t(r) * d + c] = A[size_t(c) * d + r];
  double tr = 0.0;
  for (int r = 0; r < d; ++r) tr += A[size_t(r) * d + r];
  double ridge = 1e-8 * std::max(1.0, tr / d);
  for (int r = 0; r < d; ++r) A[size_t(r) * d + r] += ridge;
  return spd_solve(std::move(A), std::move(b), d);
}

std::vector<double> linear_predict(const Matrix& X, const std::vector<double>& w) {
  if (int(w.size()) != X.cols() + 1) fail(errc::schema, "linear: weight size mismatch");
  std::vector<double> out(X.rows());
  for (int i = 0; i < X.rows(); ++i) {
    double a = w.back();
    for (int j = 0; j < X.cols(); ++j) a += X(i, j) * w[j];
    out[i] = a;
  }
  return out;
}

// ---------------------------------------------------------------- mlp

namespace {

using num::Graph;
using num::NodeId;

Matrix uniform_init(num::RngStream& rng, int r, int c) {
  Matrix m(r, c);
  double a = 1.0 / std::sqrt(double(r));
  double* p = m.mut_data();
  for (size_t i = 0; i < m.size(); ++i) p[i] = (2.0 * rng.uniform() - 1.0) * a;
  return m;
}

std::vector<double> mlp_run(const Matrix& X, const std::vector<double>& y, int n_classes,
                            const Matrix& Xtest, num::RngStream& rng, MlpConfig mc) {
  int n = X.rows(), d = X.cols();
  if (n < 1 || size_t(n) != y.size()) fail(errc::schema, "mlp: bad training set");
  int out_w = n_classes > 0 ? n_classes : 1;
  num::ParamStore ps;
  int w1 = ps.add("w1", uniform_init(rng, d, mc.hidden));
  int b1 = ps.add("b1", Matrix(1, mc.hidden));
  int w2 = ps.add("w2", uniform_init(rng, mc.hidden, out_w));
  int b2 = ps.add("b2", Matrix(1, out_w));

  Matrix target(n, out_w);
  double* tp = target.mut_data();
  for (int i = 0; i < n; ++i) {
    if (n_classes > 0)
      tp[size_t(i) * out_w + int(y[i])] = 1.0;
    else
      tp[i] = y[i];
  }

  num::Adam adam(num::AdamConfig{0.9, 0.999, 1e-8});
  for (int epoch = 0; epoch < mc.epochs; ++epoch) {
    Graph g;
    std::vector<NodeId> leaves;
    for (int i = 0; i < 4; ++i) leaves.push_back(g.leaf(ps.at(i).value));
    NodeId h = g.relu(g.affine(g.cnst(X), leaves[0], leaves[1]));
    NodeId o = g.affine(h, leaves[2], leaves[3]);
    NodeId loss;
    if (n_classes > 0) {
      NodeId logp = g.log_(g.scale_add(g.softmax_rows(o), 1.0, 1e-12));
      loss = g.scale_add(g.mean_all(g.row_sum(g.mul(g.cnst(target), logp))), -1.0, 0.0);
    } else {
      NodeId diff = g.sub(o, g.cnst(target));
      loss = g.mean_all(g.mul(diff, diff));
    }
    auto grads = g.backward(loss, leaves);
    for (int i = 0; i < 4; ++i)
      if (grads[i] >= 0) ps.accumulate_grad(i, g.val(grads[i]));
    adam.step(ps, mc.lr);
    ps.zero_grads();
  }

  Graph g;
  NodeId h = g.relu(g.affine(g.cnst(Xtest), g.cnst(ps.at(w1).value), g.cnst(ps.at(b1).value)));
  NodeId o = g.affine(h, g.cnst(ps.at(w2).value), g.cnst(ps.at(b2).value));
  const Matrix& v = g.val(o);
  std::vector<double> pred(Xtest.rows());
  for (int i = 0; i < Xtest.rows(); ++i) {
    if (n_classes > 0) {
      int best = 0;
      for (int c = 1; c < out_w; ++c)
        if (v(i, c) > v(i, best)) best = c;
      pred[i] = double(best);
    } else {
      pred[i] = v(i, 0);
    }
  }
  return pred;
}

}  // namespace

std::vector<double> mlp_classify(const Matrix& X, const std::vector<double>& y, int n_classes,
                                 const Matrix& Xtest, num::RngStream& rng, MlpConfig mc) {
  if (n_classes < 2) fail(errc::config, "mlp_classify: need at least two classes");
  return mlp_run(X, y, n_classes, Xtest, rng, mc);
}

std::vector<double> mlp_regress(const Matrix& X, const std::vector<double>& y, const Matrix& Xtest,
                                num::RngStream& rng, MlpConfig mc) {
  return mlp_run(X, y, 0, Xtest, rng, mc);
}

// ---------------------------------------------------------------- k-means

namespace {

double dist2_to(const Matrix& X, int row, const Matrix& C, int k) {
  double acc = 0.0;
  for (int j = 0; j < X.cols(); ++j) {
    double d = X(row, j) - C(k, j);
    acc += d * d;
  }
  return acc;
}

}  // namespace

KMeans KMeans::fit(const Matrix& X, int k, num::RngStream& rng, int iters) {
  int n = X.rows(), d = X.cols();
  if (k < 1) fail(errc::config, "kmeans: k must be positive");
  if (k > n) fail(errc::config, "kmeans: more clusters than rows");
  KMeans km;
  km.centroids = Matrix(k, d);
  double* c = km.centroids.mut_data();

  std::vector<double> dist2(n, 0.0);
  int first = int(rng.uniform_below(uint64_t(n)));
  std::copy(X.data() + size_t(first) * d, X.data() + size_t(first + 1) * d, c);
  for (int i = 0; i < n; ++i) dist2[i] = dist2_to(X, i, km.centroids, 0);
  for (int made = 1; made < k; ++made) {
    double total = std::accumulate(dist2.begin(), dist2.end(), 0.0);
    int pick = total > 0.0 ? rng.categorical(dist2.data(), n) : int(rng.uniform_below(uint64_t(n)));
    std::copy(X.data() + size_t(pick) * d, X.data() + size_t(pick + 1) * d, c + size_t(made) * d);
    for (int i = 0; i < n; ++i) dist2[i] = std::min(dist2[i], dist2_to(X, i, km.centroids, made));
  }

  std::vector<int> labels(n, -1);
  for (int it = 0; it < iters; ++it) {
    bool moved = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bv = dist2_to(X, i, km.centroids, 0);
      for (int j = 1; j < k; ++j) {
        double v = dist2_to(X, i, km.centroids, j);
        if (v < bv) {
          bv = v;
          best = j;
        }
      }
      if (labels[i] != best) {
        labels[i] = best;
        moved = true;
      }
    }
    if (!moved) break;
    std::vector<long> count(k, 0);
    Matrix next(k, d);
    double* np = next.mut_data();
    for (int i = 0; i < n; ++i) {
      ++count[labels[i]];
      for (int j = 0; j < d; ++j) np[size_t(labels[i]) * d + j] += X(i, j);
    }
    for (int j = 0; j < k; ++j) {
      if (count[j] > 0) {
        for (int q = 0; q < d; ++q) np[size_t(j) * d + q] /= double(count[j]);
      } else {
        int far = 0;
        double fv = -1.0;
        for (int i = 0; i < n; ++i) {
          double v = dist2_to(X, i, km.centroids, labels[i]);
          if (v > fv) {
            fv = v;
            far = i;
          }
        }
        for (int q = 0; q < d; ++q) np[size_t(j) * d + q] = X(far, q);
      }
    }
    km.centroids = next;
  }
  return km;
}

std::vector<int> KMeans::assign(const Matrix& X) const {
  int k = centroids.rows();
  std::vector<int> out(X.rows());
  for (int i = 0; i < X.rows(); ++i) {
    int best = 0;
    double bv = dist2_to(X, i, centroids, 0);
    for (int j = 1; j < k; ++j) {
      double v = dist2_to(X, i, centroids, j);
      if (v < bv) {
        bv = v;
        best = j;
      }
    }
    out[i] = best;
  }
  return out;
}

}  // namespace nodetab::eval
