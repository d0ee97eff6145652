#include "nodetab/prep/transform.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "nodetab/num/error.hpp"

namespace nodetab::prep {
namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;

double log_normal_pdf(double x, double mu, double sigma) {
  double z = (x - mu) / sigma;
  return -kHalfLog2Pi - std::log(sigma) - 0.5 * z * z;
}

void sort_by_mean(ColumnMixture& m) {
  std::vector<int> order(m.w.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return m.mu[a] < m.mu[b]; });
  ColumnMixture out;
  for (int i : order) {
    out.w.push_back(m.w[i]);
    out.mu.push_back(m.mu[i]);
    out.sigma.push_back(m.sigma[i]);
  }
  m = std::move(out);
}

void check_mixture(const ColumnMixture& m) {
  if (m.w.empty()) fail(errc::schema, "mixture with no components");
  double s = 0;
  for (size_t i = 0; i < m.w.size(); ++i) {
    if (!(m.sigma[i] > 0)) fail(errc::schema, "mixture sigma must be positive");
    s += m.w[i];
  }
  if (std::fabs(s - 1.0) > 1e-9) fail(errc::schema, "mixture weights must sum to 1");
}

}  // namespace

struct EmFit {
  std::vector<double> w, mu, sigma;
  double loglik = 0;
};

// Plain EM at a fixed component count, k-means++ seeded.
EmFit em_fixed_k(const std::vector<double>& x, const std::vector<double>& uniq, int k,
                 num::RngStream& rng) {
  const int n = static_cast<int>(x.size());
  std::vector<double> mu(k), d2(n);
  mu[0] = x[rng.uniform_below(n)];
  for (int i = 0; i < n; ++i) d2[i] = (x[i] - mu[0]) * (x[i] - mu[0]);
  for (int j = 1; j < k; ++j) {
    double s = std::accumulate(d2.begin(), d2.end(), 0.0);
    mu[j] = s > 0 ? x[rng.categorical(d2.data(), n)] : uniq[j % uniq.size()];
    for (int i = 0; i < n; ++i) d2[i] = std::min(d2[i], (x[i] - mu[j]) * (x[i] - mu[j]));
  }

  double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  std::vector<double> sigma(k, std::sqrt(std::max(var, kSigmaFloor * kSigmaFloor)));
  std::vector<double> logw(k, -std::log(static_cast<double>(k)));
  std::vector<double> Nk(k), Sk(k), Qk(k), logp(k);
  double ll = 0, prev_ll = 0;
  bool have_prev = false;
  for (int iter = 0; iter < 100; ++iter) {
    std::fill(Nk.begin(), Nk.end(), 0.0);
    std::fill(Sk.begin(), Sk.end(), 0.0);
    std::fill(Qk.begin(), Qk.end(), 0.0);
    ll = 0;
    for (int i = 0; i < n; ++i) {
      double mx = -1e300;
      for (int c = 0; c < k; ++c) {
        logp[c] = logw[c] + log_normal_pdf(x[i], mu[c], sigma[c]);
        mx = std::max(mx, logp[c]);
      }
      double z = 0;
      for (int c = 0; c < k; ++c) z += std::exp(logp[c] - mx);
      double lse = mx + std::log(z);
      ll += lse;
      for (int c = 0; c < k; ++c) {
        double r = std::exp(logp[c] - lse);
        Nk[c] += r;
        Sk[c] += r * x[i];
        Qk[c] += r * x[i] * x[i];
      }
    }
    for (int c = 0; c < k; ++c) {
      if (Nk[c] > 1e-10) {
        mu[c] = Sk[c] / Nk[c];
        double v = Qk[c] / Nk[c] - mu[c] * mu[c];
        sigma[c] = std::sqrt(std::max(v, kSigmaFloor * kSigmaFloor));
        logw[c] = std::log(Nk[c] / n);
      } else {
        logw[c] = -745.0;  // effectively dead, exp underflows to 0
      }
    }
    if (have_prev && std::fabs(ll - prev_ll) <= 1e-6 * (std::fabs(prev_ll) + 1e-12)) break;
    prev_ll = ll;
    have_prev = true;
  }
  EmFit f;
  f.mu = mu;
  f.sigma = sigma;
  f.w.resize(k);
  for (int c = 0; c < k; ++c) f.w[c] = std::exp(logw[c]);
  f.loglik = ll;
  return f;
}

ColumnMixture fit_mixture_1d(const std::vector<double>& x, int max_modes, num::RngStream& rng) {
  const int n = static_cast<int>(x.size());
  if (n == 0) fail(errc::config, "cannot fit a mixture to an empty column");
  if (max_modes < 1) fail(errc::config, "max_modes must be at least 1");
  for (double v : x)
    if (!std::isfinite(v)) fail(errc::numeric, "non-finite value in continuous column");

  std::vector<double> uniq(x);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() < 2) {
    ColumnMixture m;
    m.w = {1.0};
    m.mu = {uniq[0]};
    m.sigma = {kSigmaFloor};
    return m;
  }

  // EM splits overlapping mass evenly no matter how long it runs, so the
  // component count itself is chosen by BIC; the weight prune then drops
  // whatever the winning fit left unused.
  const int kmax = std::min<size_t>(max_modes, uniq.size());
  EmFit best;
  double best_bic = 1e300;
  int worse_streak = 0;
  for (int k = 1; k <= kmax; ++k) {
    EmFit f = em_fixed_k(x, uniq, k, rng);
    double bic = -2.0 * f.loglik + (3.0 * k - 1.0) * std::log(static_cast<double>(n));
    if (bic < best_bic) {
      best_bic = bic;
      best = std::move(f);
      worse_streak = 0;
    } else if (++worse_streak >= 2) {
      break;
    }
  }

  ColumnMixture m;
  for (size_t c = 0; c < best.w.size(); ++c) {
    if (best.w[c] >= kWeightPrune) {
      m.w.push_back(best.w[c]);
      m.mu.push_back(best.mu[c]);
      m.sigma.push_back(std::max(best.sigma[c], kSigmaFloor));
    }
  }
  if (m.w.empty()) {
    size_t top = std::max_element(best.w.begin(), best.w.end()) - best.w.begin();
    m.w = {1.0};
    m.mu = {best.mu[top]};
    m.sigma = {std::max(best.sigma[top], kSigmaFloor)};
  }
  double s = std::accumulate(m.w.begin(), m.w.end(), 0.0);
  for (double& v : m.w) v /= s;
  sort_by_mean(m);
  return m;
}

void posterior(const ColumnMixture& m, double c, double* out) {
  const int k = m.modes();
  double mx = -1e300;
  for (int i = 0; i < k; ++i) {
    out[i] = std::log(m.w[i]) + log_normal_pdf(c, m.mu[i], m.sigma[i]);
    mx = std::max(mx, out[i]);
  }
  double z = 0;
  for (int i = 0; i < k; ++i) {
    out[i] = std::exp(out[i] - mx);
    z += out[i];
  }
  for (int i = 0; i < k; ++i) out[i] /= z;
}

Transformer::Transformer(TableSchema schema, std::vector<ColumnMixture> mixtures)
    : schema_(std::move(schema)), mix_(std::move(mixtures)) {
  schema_.validate();
  if (static_cast<int>(mix_.size()) != schema_.n_continuous())
    fail(errc::schema, "mixture count does not match continuous column count");
  for (const auto& m : mix_) check_mixture(m);
  build_spans();
}

void Transformer::build_spans() {
  spans_.clear();
  width_ = 0;
  int ci = 0;
  for (size_t j = 0; j < schema_.columns.size(); ++j) {
    const ColumnSpec& col = schema_.columns[j];
    Span s;
    s.column = static_cast<int>(j);
    s.kind = col.kind;
    s.offset = width_;
    s.width = col.kind == ColumnKind::continuous ? 1 + mix_[ci++].modes()
                                                 : static_cast<int>(col.categories.size());
    width_ += s.width;
    spans_.push_back(s);
  }
}

Transformer Transformer::fit(const Table& t, int max_modes, num::RngStream& rng) {
  t.schema.validate();
  if (t.rows() == 0) fail(errc::config, "cannot fit a transformer to an empty table");
  if (t.values.cols() != static_cast<int>(t.schema.columns.size()))
    fail(errc::schema, "table width does not match its schema");
  std::vector<ColumnMixture> mix;
  std::vector<double> col(t.rows());
  for (size_t j = 0; j < t.schema.columns.size(); ++j) {
    if (t.schema.columns[j].kind != ColumnKind::continuous) continue;
    for (int i = 0; i < t.rows(); ++i) col[i] = t.values(i, static_cast<int>(j));
    mix.push_back(fit_mixture_1d(col, max_modes, rng));
  }
  return Transformer(t.schema, std::move(mix));
}

void Transformer::encode_row(const double* row, num::RngStream& rng, double* out,
                             long* clips) const {
  std::vector<double> resp;
  int ci = 0;
  for (const Span& s : spans_) {
    const double v = row[s.column];
    double* o = out + s.offset;
    if (s.kind == ColumnKind::continuous) {
      const ColumnMixture& m = mix_[ci++];
      if (!std::isfinite(v))
        fail(errc::numeric, "non-finite value in column " + schema_.columns[s.column].name);
      resp.resize(m.modes());
      posterior(m, v, resp.data());
      int k = rng.categorical(resp.data(), m.modes());
      double a = (v - m.mu[k]) / (4.0 * m.sigma[k]);
      if (a < -1.0 || a > 1.0) {
        if (clips) ++*clips;
        a = std::clamp(a, -1.0, 1.0);
      }
      o[0] = a;
      std::fill(o + 1, o + s.width, 0.0);
      o[1 + k] = 1.0;
    } else {
      int idx = static_cast<int>(std::llround(v));
      if (idx < 0 || idx >= s.width || v != static_cast<double>(idx))
        fail(errc::schema, "unknown category in column " + schema_.columns[s.column].name);
      std::fill(o, o + s.width, 0.0);
      o[idx] = 1.0;
    }
  }
}

num::Matrix Transformer::encode(const Table& t, num::RngStream& rng, long* clips) const {
  if (t.values.cols() != static_cast<int>(schema_.columns.size()))
    fail(errc::schema, "table width does not match the fitted schema");
  num::Matrix out(t.rows(), width_);
  for (int i = 0; i < t.rows(); ++i)
    encode_row(&t.values.data()[static_cast<size_t>(i) * t.values.cols()], rng,
               out.mut_data() + static_cast<size_t>(i) * width_, clips);
  return out;
}

void Transformer::decode_row(const double* enc, double* row) const {
  int ci = 0;
  for (const Span& s : spans_) {
    const double* e = enc + s.offset;
    if (s.kind == ColumnKind::continuous) {
      const ColumnMixture& m = mix_[ci++];
      int k = 0;
      for (int i = 1; i < m.modes(); ++i)
        if (e[1 + i] > e[1 + k]) k = i;
      row[s.column] = e[0] * 4.0 * m.sigma[k] + m.mu[k];
    } else {
      int k = 0;
      for (int i = 1; i < s.width; ++i)
        if (e[i] > e[k]) k = i;
      row[s.column] = static_cast<double>(k);
    }
  }
}

Table Transformer::decode(const num::Matrix& enc) const {
  if (enc.cols() != width_) fail(errc::schema, "encoded width does not match the fitted layout");
  Table t;
  t.schema = schema_;
  t.values = num::Matrix(enc.rows(), static_cast<int>(schema_.columns.size()));
  for (int i = 0; i < enc.rows(); ++i)
    decode_row(enc.data() + static_cast<size_t>(i) * width_,
               t.values.mut_data() + static_cast<size_t>(i) * t.values.cols());
  return t;
}

std::string Transformer::to_json() const {
  nlohmann::json j;
  j["schema"] = nlohmann::json::parse(schema_.to_json());
  nlohmann::json mixes = nlohmann::json::array();
  for (const auto& m : mix_)
    mixes.push_back({{"w", m.w}, {"mu", m.mu}, {"sigma", m.sigma}});
  j["mixtures"] = mixes;
  return j.dump();
}

Transformer Transformer::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.contains("schema") || !j.contains("mixtures"))
    fail(errc::schema, "transformer blob is missing schema or mixtures");
  TableSchema schema = TableSchema::from_json(j["schema"].dump());
  std::vector<ColumnMixture> mix;
  for (const auto& jm : j["mixtures"]) {
    ColumnMixture m;
    m.w = jm.at("w").get<std::vector<double>>();
    m.mu = jm.at("mu").get<std::vector<double>>();
    m.sigma = jm.at("sigma").get<std::vector<double>>();
    if (m.mu.size() != m.w.size() || m.sigma.size() != m.w.size())
      fail(errc::schema, "mixture arrays have mismatched lengths");
    mix.push_back(std::move(m));
  }
  return Transformer(std::move(schema), std::move(mix));
}

}  // namespace nodetab::prep
