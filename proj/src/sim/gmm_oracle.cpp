#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "nodetab/num/error.hpp"
#include "nodetab/sim/oracle.hpp"

namespace nodetab::sim {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kSigmaFloor = 1e-4;

double log_comp_density(const GmmOracle& o, int c, const double* x) {
  const int d = o.dim();
  double q = 0;
  for (int j = 0; j < d; ++j) {
    double z = x[j] - o.means(c, j);
    q += z * z;
  }
  double s = o.sigma[c];
  return -0.5 * d * kLog2Pi - d * std::log(s) - 0.5 * q / (s * s);
}

double log_density(const GmmOracle& o, const double* x) {
  double mx = -1e300;
  std::vector<double> lp(o.components());
  for (int c = 0; c < o.components(); ++c) {
    lp[c] = std::log(o.w[c]) + log_comp_density(o, c, x);
    mx = std::max(mx, lp[c]);
  }
  double z = 0;
  for (double v : lp) z += std::exp(v - mx);
  return mx + std::log(z);
}

// Continuous column indices of a table, checked against the oracle dim.
std::vector<int> continuous_columns(const GmmOracle& o, const prep::Table& t) {
  std::vector<int> idx;
  for (size_t j = 0; j < t.schema.columns.size(); ++j)
    if (t.schema.columns[j].kind == prep::ColumnKind::continuous)
      idx.push_back(static_cast<int>(j));
  if (static_cast<int>(idx.size()) != o.dim())
    fail(errc::schema, "table continuous columns do not match oracle dimensionality");
  return idx;
}

}  // namespace

void GmmOracle::validate() const {
  if (components() < 1 || dim() < 1) fail(errc::schema, "empty mixture oracle");
  if (static_cast<int>(w.size()) != components() ||
      static_cast<int>(sigma.size()) != components())
    fail(errc::schema, "mixture oracle field sizes disagree");
  double s = 0;
  for (int c = 0; c < components(); ++c) {
    if (!(sigma[c] > 0)) fail(errc::schema, "mixture oracle sigma must be positive");
    s += w[c];
  }
  if (std::fabs(s - 1.0) > 1e-9) fail(errc::schema, "mixture oracle weights must sum to 1");
}

prep::TableSchema GmmOracle::schema(bool with_label) const {
  prep::TableSchema s;
  if (dim() == 2) {
    s.columns.push_back({"x", prep::ColumnKind::continuous, {}});
    s.columns.push_back({"y", prep::ColumnKind::continuous, {}});
  } else {
    for (int j = 0; j < dim(); ++j)
      s.columns.push_back({"x" + std::to_string(j), prep::ColumnKind::continuous, {}});
  }
  if (with_label) {
    std::vector<std::string> cats;
    for (int c = 0; c < components(); ++c) cats.push_back("m" + std::to_string(c));
    s.columns.push_back({"label", prep::ColumnKind::discrete, std::move(cats)});
  }
  return s;
}

GmmOracle make_grid_oracle(int n, double spacing, double sigma) {
  if (n < 1 || !(sigma > 0)) fail(errc::config, "grid oracle needs n >= 1 and sigma > 0");
  GmmOracle o;
  o.means = num::Matrix(n * n, 2);
  double off = (n - 1) / 2.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      o.means.at(i * n + j, 0) = (i - off) * spacing;
      o.means.at(i * n + j, 1) = (j - off) * spacing;
    }
  o.w.assign(n * n, 1.0 / (n * n));
  o.sigma.assign(n * n, sigma);
  return o;
}

GmmOracle make_ring_oracle(int k, double radius, double sigma) {
  if (k < 1 || !(sigma > 0)) fail(errc::config, "ring oracle needs k >= 1 and sigma > 0");
  GmmOracle o;
  o.means = num::Matrix(k, 2);
  for (int c = 0; c < k; ++c) {
    double a = 2.0 * M_PI * c / k;
    o.means.at(c, 0) = radius * std::cos(a);
    o.means.at(c, 1) = radius * std::sin(a);
  }
  o.w.assign(k, 1.0 / k);
  o.sigma.assign(k, sigma);
  return o;
}

prep::Table gmm_sample(const GmmOracle& o, int n, num::RngStream& rng, bool with_label) {
  o.validate();
  if (n < 1) fail(errc::config, "sample count must be positive");
  prep::Table t;
  t.schema = o.schema(with_label);
  const int d = o.dim();
  t.values = num::Matrix(n, d + (with_label ? 1 : 0));
  for (int i = 0; i < n; ++i) {
    int c = rng.categorical(o.w.data(), o.components());
    for (int j = 0; j < d; ++j)
      t.values.at(i, j) = o.means(c, j) + o.sigma[c] * rng.normal();
    if (with_label) t.values.at(i, d) = static_cast<double>(c);
  }
  return t;
}

double gmm_loglik(const GmmOracle& o, const prep::Table& t) {
  o.validate();
  if (t.rows() == 0) fail(errc::config, "cannot score an empty table");
  std::vector<int> idx = continuous_columns(o, t);
  const int d = o.dim();
  std::vector<double> x(d);
  double total = 0;
  for (int i = 0; i < t.rows(); ++i) {
    for (int j = 0; j < d; ++j) x[j] = t.values(i, idx[j]);
    total += log_density(o, x.data());
  }
  return total / t.rows();
}

GmmOracle gmm_fit(const GmmOracle& tmpl, const prep::Table& t, num::RngStream& rng) {
  tmpl.validate();
  if (t.rows() == 0) fail(errc::config, "cannot fit an oracle to an empty table");
  std::vector<int> idx = continuous_columns(tmpl, t);
  const int n = t.rows(), d = tmpl.dim(), k = tmpl.components();
  num::Matrix pts(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) pts.at(i, j) = t.values(i, idx[j]);

  auto dist2 = [&](int i, const double* c) {
    double q = 0;
    for (int j = 0; j < d; ++j) {
      double z = pts(i, j) - c[j];
      q += z * z;
    }
    return q;
  };

  // k-means++ seeding.
  num::Matrix centers(k, d);
  {
    int first = static_cast<int>(rng.uniform_below(n));
    for (int j = 0; j < d; ++j) centers.at(0, j) = pts(first, j);
    std::vector<double> d2(n);
    for (int i = 0; i < n; ++i) d2[i] = dist2(i, &centers.data()[0]);
    for (int c = 1; c < k; ++c) {
      double s = std::accumulate(d2.begin(), d2.end(), 0.0);
      int pick = s > 0 ? rng.categorical(d2.data(), n) : static_cast<int>(rng.uniform_below(n));
      for (int j = 0; j < d; ++j) centers.at(c, j) = pts(pick, j);
      for (int i = 0; i < n; ++i)
        d2[i] = std::min(d2[i], dist2(i, &centers.data()[static_cast<size_t>(c) * d]));
    }
  }

  // A few Lloyd rounds to stabilize the seeding.
  std::vector<int> assign(n);
  for (int round = 0; round < 10; ++round) {
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = dist2(i, &centers.data()[0]);
      for (int c = 1; c < k; ++c) {
        double q = dist2(i, &centers.data()[static_cast<size_t>(c) * d]);
        if (q < bd) {
          bd = q;
          best = c;
        }
      }
      assign[i] = best;
    }
    num::Matrix sums(k, d);
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (int j = 0; j < d; ++j) sums.at(assign[i], j) += pts(i, j);
    }
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0)
        for (int j = 0; j < d; ++j) centers.at(c, j) = sums(c, j) / counts[c];
  }

  GmmOracle f;
  f.means = centers;
  f.w.assign(k, 1.0 / k);
  f.sigma.assign(k, 1.0);
  {
    // Initial spreads from the Lloyd assignment.
    std::vector<double> q(k, 0.0);
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      q[assign[i]] += dist2(i, &f.means.data()[static_cast<size_t>(assign[i]) * d]);
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      f.w[c] = std::max(counts[c], 1) / static_cast<double>(n);
      f.sigma[c] = std::sqrt(std::max(q[c] / (d * std::max(counts[c], 1)),
                                      kSigmaFloor * kSigmaFloor));
    }
    double s = std::accumulate(f.w.begin(), f.w.end(), 0.0);
    for (double& v : f.w) v /= s;
  }

  std::vector<double> lp(k), Nk(k);
  num::Matrix Sk(k, d);
  std::vector<double> Qk(k);
  double prev_ll = 0;
  bool have_prev = false;
  for (int iter = 0; iter < 100; ++iter) {
    std::fill(Nk.begin(), Nk.end(), 0.0);
    std::fill(Qk.begin(), Qk.end(), 0.0);
    Sk = num::Matrix(k, d);
    double ll = 0;
    for (int i = 0; i < n; ++i) {
      double mx = -1e300;
      for (int c = 0; c < k; ++c) {
        lp[c] = std::log(f.w[c]) + log_comp_density(f, c, &pts.data()[static_cast<size_t>(i) * d]);
        mx = std::max(mx, lp[c]);
      }
      double z = 0;
      for (int c = 0; c < k; ++c) z += std::exp(lp[c] - mx);
      double lse = mx + std::log(z);
      ll += lse;
      double x2 = 0;
      for (int j = 0; j < d; ++j) x2 += pts(i, j) * pts(i, j);
      for (int c = 0; c < k; ++c) {
        double r = std::exp(lp[c] - lse);
        Nk[c] += r;
        for (int j = 0; j < d; ++j) Sk.at(c, j) += r * pts(i, j);
        Qk[c] += r * x2;
      }
    }
    for (int c = 0; c < k; ++c) {
      if (Nk[c] > 1e-10) {
        double m2 = 0;
        for (int j = 0; j < d; ++j) {
          f.means.at(c, j) = Sk(c, j) / Nk[c];
          m2 += f.means(c, j) * f.means(c, j);
        }
        double var = (Qk[c] - Nk[c] * m2) / (d * Nk[c]);
        f.sigma[c] = std::sqrt(std::max(var, kSigmaFloor * kSigmaFloor));
        f.w[c] = Nk[c] / n;
      } else {
        f.w[c] = 1e-12;
      }
    }
    double s = std::accumulate(f.w.begin(), f.w.end(), 0.0);
    for (double& v : f.w) v /= s;
    if (have_prev && std::fabs(ll - prev_ll) <= 1e-6 * (std::fabs(prev_ll) + 1e-12)) break;
    prev_ll = ll;
    have_prev = true;
  }
  return f;
}

std::string gmm_to_json(const GmmOracle& o) {
  o.validate();
  nlohmann::json means = nlohmann::json::array();
  for (int c = 0; c < o.components(); ++c) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < o.dim(); ++j) row.push_back(o.means(c, j));
    means.push_back(row);
  }
  nlohmann::json j{{"type", "gmm"}, {"means", means}, {"w", o.w}, {"sigma", o.sigma}};
  return j.dump(2) + "\n";
}

GmmOracle gmm_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(errc::config, "gmm spec: invalid JSON");
  GmmOracle o;
  try {
    auto means = j.at("means").get<std::vector<std::vector<double>>>();
    if (means.empty() || means[0].empty()) fail(errc::config, "gmm spec: empty means");
    o.means = num::Matrix(int(means.size()), int(means[0].size()));
    for (size_t c = 0; c < means.size(); ++c) {
      if (means[c].size() != means[0].size()) fail(errc::config, "gmm spec: ragged means");
      for (size_t k = 0; k < means[c].size(); ++k) o.means.at(int(c), int(k)) = means[c][k];
    }
    o.w = j.at("w").get<std::vector<double>>();
    o.sigma = j.at("sigma").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(errc::config, std::string("gmm spec: ") + e.what());
  }
  o.validate();
  return o;
}

}  // namespace nodetab::sim
