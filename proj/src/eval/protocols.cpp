#include "nodetab/eval/protocols.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "nodetab/eval/learners.hpp"
#include "nodetab/eval/metrics.hpp"
#include "nodetab/num/error.hpp"

namespace nodetab::eval {

namespace {

void require_same_schema(const prep::TableSchema& a, const prep::TableSchema& b,
                         const char* what) {
  bool ok = a.columns.size() == b.columns.size();
  for (size_t i = 0; ok && i < a.columns.size(); ++i)
    ok = a.columns[i].name == b.columns[i].name && a.columns[i].kind == b.columns[i].kind &&
         a.columns[i].categories == b.columns[i].categories;
  if (!ok) fail(errc::schema, std::string("eval: schema mismatch between ") + what);
}

std::vector<double> label_column(const prep::Table& t, int col) {
  std::vector<double> y(t.rows());
  for (int i = 0; i < t.rows(); ++i) y[i] = t.values(i, col);
  return y;
}

std::vector<int> as_ints(const std::vector<double>& v) {
  std::vector<int> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = int(v[i]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------- likelihood

LikelihoodFitness likelihood_fitness(const sim::GmmOracle& S, const prep::Table& F,
                                     const prep::Table& T_test, num::RngStream& rng) {
  LikelihoodFitness lf;
  lf.pr_f_s = sim::gmm_loglik(S, F);
  sim::GmmOracle refit = sim::gmm_fit(S, F, rng);
  lf.pr_test_sprime = sim::gmm_loglik(refit, T_test);
  return lf;
}

LikelihoodFitness likelihood_fitness(const sim::BnOracle& S, const prep::Table& F,
                                     const prep::Table& T_test) {
  LikelihoodFitness lf;
  lf.pr_f_s = sim::bn_loglik(S, F);
  sim::BnOracle refit = sim::bn_fit(S, F);
  lf.pr_test_sprime = sim::bn_loglik(refit, T_test);
  return lf;
}

// ---------------------------------------------------------------- ml efficacy

MlEfficacy ml_efficacy(const prep::Table& F, const prep::Table& T_test, int label_col,
                       uint64_t seed) {
  require_same_schema(F.schema, T_test.schema, "synthetic and test tables");
  if (label_col < 0 || label_col >= int(F.schema.columns.size()))
    fail(errc::config, "eval: label column out of range");
  if (F.rows() < 1 || T_test.rows() < 1) fail(errc::schema, "eval: empty table");

  const auto& label = F.schema.columns[label_col];
  MlEfficacy out;
  bool classify = label.kind == prep::ColumnKind::discrete;
  int n_classes = classify ? int(label.categories.size()) : 0;
  if (classify && n_classes < 2) fail(errc::schema, "eval: label column needs two categories");
  out.task = !classify ? "regression" : n_classes == 2 ? "binary" : "multiclass";
  out.metric = !classify ? "r2" : n_classes == 2 ? "f1" : "macro_f1";

  std::vector<double> yf = label_column(F, label_col);
  std::vector<double> yt = label_column(T_test, label_col);
  bool one_class = classify && std::set<double>(yf.begin(), yf.end()).size() < 2;

  FeatureMap fm = FeatureMap::fit(F, label_col);
  Matrix Xf = fm.transform(F);
  Matrix Xt = fm.transform(T_test);
  num::RngStream rng(seed, num::stream::eval);

  auto score_of = [&](const std::vector<double>& pred) {
    if (!classify) return r2_score(yt, pred);
    if (n_classes == 2) return f1_binary(as_ints(yt), as_ints(pred));
    return macro_f1(as_ints(yt), as_ints(pred), n_classes);
  };
  auto push = [&](const char* name, std::vector<double> (*run)(const Matrix&,
                                                               const std::vector<double>&, int,
                                                               const Matrix&, num::RngStream&)) {
    LearnerScore ls;
    ls.learner = name;
    if (one_class)
      ls.na = true;
    else
      ls.score = score_of(run(Xf, yf, n_classes, Xt, rng));
    out.scores.push_back(ls);
  };

  push("cart", [](const Matrix& X, const std::vector<double>& y, int c, const Matrix& Xq,
                  num::RngStream&) { return Cart::fit(X, y, c, 8).predict(Xq); });
  push("mlp", [](const Matrix& X, const std::vector<double>& y, int c, const Matrix& Xq,
                 num::RngStream& r) {
    return c > 0 ? mlp_classify(X, y, c, Xq, r) : mlp_regress(X, y, Xq, r);
  });
  if (classify)
    push("logistic", [](const Matrix& X, const std::vector<double>& y, int c, const Matrix& Xq,
                        num::RngStream&) { return logistic_predict(Xq, logistic_fit(X, y, c)); });
  else
    push("linear", [](const Matrix& X, const std::vector<double>& y, int, const Matrix& Xq,
                      num::RngStream&) { return linear_predict(Xq, linear_fit(X, y)); });

  out.na = one_class;
  bool first = true;
  for (const auto& ls : out.scores)
    if (!ls.na && (first || ls.score > out.best)) {
      out.best = ls.score;
      first = false;
    }
  return out;
}

// ---------------------------------------------------------------- clustering

ClusteringScore clustering_score(const prep::Table& F, const prep::Table& T_train,
                                 const prep::Table& T_test, int n_classes, uint64_t seed) {
  require_same_schema(F.schema, T_train.schema, "synthetic and train tables");
  require_same_schema(F.schema, T_test.schema, "synthetic and test tables");
  if (n_classes < 1) fail(errc::config, "eval: class count must be positive");
  if (F.rows() < 2 || T_train.rows() < 1 || T_test.rows() < 1)
    fail(errc::schema, "eval: table too small to cluster");

  FeatureMap fm = FeatureMap::fit(F, -1);
  Matrix Xf = fm.transform(F);
  Matrix Xtrain = fm.transform(T_train);
  Matrix Xtest = fm.transform(T_test);

  std::vector<int> ks;
  for (int mult = 1; mult <= 3; ++mult) {
    int k = n_classes * mult;
    if (k >= 2 && k <= F.rows() && std::find(ks.begin(), ks.end(), k) == ks.end())
      ks.push_back(k);
  }
  if (ks.empty()) fail(errc::config, "eval: no usable cluster count");

  auto live_clusters = [](const std::vector<int>& labels) {
    return int(std::set<int>(labels.begin(), labels.end()).size());
  };

  num::RngStream rng(seed, num::stream::eval);
  ClusteringScore out;
  KMeans best_km;
  double best_sil = 0.0;
  bool found = false;
  for (int k : ks) {
    KMeans km = KMeans::fit(Xf, k, rng);
    std::vector<int> labels = km.assign(Xf);
    if (live_clusters(labels) < 2) continue;
    double sil = silhouette(Xf, labels);
    if (!found || sil > best_sil) {
      best_sil = sil;
      best_km = km;
      out.chosen_k = k;
      found = true;
    }
  }
  if (!found) {
    out.chosen_k = ks.front();
    out.degenerate = true;
    return out;
  }

  out.sil_f = best_sil;
  auto score_real = [&](const Matrix& X) {
    std::vector<int> labels = best_km.assign(X);
    if (live_clusters(labels) < 2) {
      out.degenerate = true;
      return 0.0;
    }
    return silhouette(X, labels);
  };
  out.sil_train = score_real(Xtrain);
  out.sil_test = score_real(Xtest);
  return out;
}

// ---------------------------------------------------------------- report

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["rows"] = {{"synthetic", rows_f}, {"train", rows_train}, {"test", rows_test}};
  if (has_likelihood)
    j["likelihood_fitness"] = {{"pr_f_s", likelihood.pr_f_s},
                               {"pr_test_sprime", likelihood.pr_test_sprime}};
  if (has_ml) {
    nlohmann::ordered_json m;
    m["task"] = ml.task;
    m["metric"] = ml.metric;
    m["na"] = ml.na;
    m["scores"] = nlohmann::ordered_json::array();
    for (const auto& ls : ml.scores) {
      nlohmann::ordered_json s;
      s["learner"] = ls.learner;
      if (ls.na)
        s["na"] = true;
      else
        s["score"] = ls.score;
      m["scores"].push_back(s);
    }
    if (!ml.na) m["best"] = ml.best;
    j["ml_efficacy"] = m;
  }
  if (has_clustering) {
    j["clustering"] = {{"chosen_k", clustering.chosen_k},
                       {"degenerate", clustering.degenerate},
                       {"silhouette",
                        {{"synthetic", clustering.sil_f},
                         {"train", clustering.sil_train},
                         {"test", clustering.sil_test}}}};
  }
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- plot data

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace

std::string interp_triples(const prep::Table& path) {
  path.schema.validate();
  std::string out;
  int n = path.rows();
  for (int i = 0; i < n; ++i) {
    double e = n > 1 ? double(i) / (n - 1) : 0.0;
    for (int c = 0; c < int(path.schema.columns.size()); ++c) {
      const auto& col = path.schema.columns[c];
      out += col.name;
      out += ',';
      out += fmt_double(e);
      out += ',';
      if (col.kind == prep::ColumnKind::continuous) {
        out += fmt_double(path.values(i, c));
      } else {
        int cat = int(path.values(i, c));
        if (cat < 0 || cat >= int(col.categories.size()))
          fail(errc::schema, "interpolation table: category out of range");
        out += col.categories[cat];
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace nodetab::eval
