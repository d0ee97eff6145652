#include "nodetab/eval/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "nodetab/num/error.hpp"

namespace nodetab::eval {

namespace {

double f1_of_class(const std::vector<int>& truth, const std::vector<int>& pred, int cls) {
  long tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    bool t = truth[i] == cls, p = pred[i] == cls;
    tp += t && p;
    fp += !t && p;
    fn += t && !p;
  }
  if (tp == 0) return 0.0;
  double prec = double(tp) / (tp + fp);
  double rec = double(tp) / (tp + fn);
  return 2.0 * prec * rec / (prec + rec);
}

}  // namespace

double f1_binary(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.size() != pred.size() || truth.empty())
    fail(errc::schema, "f1: label vectors must match and be non-empty");
  return f1_of_class(truth, pred, 1);
}

double macro_f1(const std::vector<int>& truth, const std::vector<int>& pred, int n_classes) {
  if (truth.size() != pred.size() || truth.empty())
    fail(errc::schema, "macro_f1: label vectors must match and be non-empty");
  if (n_classes < 2) fail(errc::config, "macro_f1: need at least two classes");
  double acc = 0.0;
  for (int c = 0; c < n_classes; ++c) acc += f1_of_class(truth, pred, c);
  return acc / n_classes;
}

double r2_score(const std::vector<double>& truth, const std::vector<double>& pred) {
  if (truth.size() != pred.size() || truth.empty())
    fail(errc::schema, "r2: value vectors must match and be non-empty");
  double mean = 0.0;
  for (double v : truth) mean += v;
  mean /= double(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_res == 0.0) return 1.0;
  if (ss_tot == 0.0) return 0.0;
  return 1.0 - ss_res / ss_tot;
}

double silhouette(const Matrix& X, const std::vector<int>& labels) {
  int n = X.rows();
  if (int(labels.size()) != n || n < 2) fail(errc::schema, "silhouette: bad label vector");
  int k = 0;
  for (int l : labels) {
    if (l < 0) fail(errc::schema, "silhouette: negative label");
    k = std::max(k, l + 1);
  }
  std::vector<long> count(k, 0);
  for (int l : labels) ++count[l];
  int live = 0;
  for (long c : count) live += c > 0;
  if (live < 2) fail(errc::config, "silhouette: need at least two non-empty clusters");

  const double* p = X.data();
  int d = X.cols();
  double acc = 0.0;
  std::vector<double> sum(k);
  for (int i = 0; i < n; ++i) {
    std::fill(sum.begin(), sum.end(), 0.0);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double dist2 = 0.0;
      for (int c = 0; c < d; ++c) {
        double diff = p[size_t(i) * d + c] - p[size_t(j) * d + c];
        dist2 += diff * diff;
      }
      sum[labels[j]] += std::sqrt(dist2);
    }
    int li = labels[i];
    if (count[li] == 1) continue;  // singleton scores 0
    double a = sum[li] / double(count[li] - 1);
    double b = 0.0;
    bool first = true;
    for (int c = 0; c < k; ++c) {
      if (c == li || count[c] == 0) continue;
      double m = sum[c] / double(count[c]);
      if (first || m < b) b = m;
      first = false;
    }
    double den = std::max(a, b);
    acc += den > 0.0 ? (b - a) / den : 0.0;
  }
  return acc / n;
}

}  // namespace nodetab::eval
