#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "nodetab/sim/oracle.hpp"
#include "oracles.hpp"

using namespace nodetab;
using namespace nodetab::sim;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

BnOracle coin_chain() {
  // A -> B with every probability one half.
  BnOracle bn;
  BnNode a;
  a.name = "A";
  a.arity = 2;
  a.categories = {"s0", "s1"};
  a.cpt = num::Matrix::full(1, 2, 0.5);
  BnNode b = a;
  b.name = "B";
  b.parents = {0};
  b.cpt = num::Matrix::full(2, 2, 0.5);
  bn.nodes = {a, b};
  return bn;
}

}  // namespace

TEST_CASE("degenerate grid is a single gaussian at the origin") {
  GmmOracle o = make_grid_oracle(1, 2.0, 0.05);
  REQUIRE(o.components() == 1);
  CHECK(o.means(0, 0) == 0.0);
  CHECK(o.means(0, 1) == 0.0);
  CHECK(o.w[0] == 1.0);
}

TEST_CASE("four-component ring sits on the axes") {
  GmmOracle o = make_ring_oracle(4, 1.0, 0.05);
  REQUIRE(o.components() == 4);
  CHECK(std::fabs(o.means(0, 0) - 1.0) < 1e-12);
  CHECK(std::fabs(o.means(0, 1)) < 1e-12);
  CHECK(std::fabs(o.means(1, 0)) < 1e-12);
  CHECK(std::fabs(o.means(1, 1) - 1.0) < 1e-12);
  CHECK(std::fabs(o.means(2, 0) + 1.0) < 1e-12);
  CHECK(std::fabs(o.means(3, 1) + 1.0) < 1e-12);
}

TEST_CASE("grid structure and weights") {
  GmmOracle o = make_grid_oracle(5, 2.0, 0.05);
  REQUIRE(o.components() == 25);
  for (double v : o.w) CHECK(v == doctest::Approx(1.0 / 25).epsilon(1e-12));
  double lo = 1e300, hi = -1e300;
  for (int c = 0; c < 25; ++c) {
    lo = std::min(lo, o.means(c, 0));
    hi = std::max(hi, o.means(c, 0));
  }
  CHECK(lo == -4.0);
  CHECK(hi == 4.0);
}

TEST_CASE("component frequencies match the weights") {
  GmmOracle o = make_ring_oracle(8, 1.0, 0.05);
  num::RngStream rng(21, num::stream::sim);
  const int n = 100000;
  prep::Table t = gmm_sample(o, n, rng);
  std::vector<int> hits(8, 0);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double bd = 1e300;
    for (int c = 0; c < 8; ++c) {
      double dx = t.values(i, 0) - o.means(c, 0), dy = t.values(i, 1) - o.means(c, 1);
      if (dx * dx + dy * dy < bd) {
        bd = dx * dx + dy * dy;
        best = c;
      }
    }
    ++hits[best];
  }
  for (int c = 0; c < 8; ++c)
    CHECK(std::fabs(hits[c] / static_cast<double>(n) - 0.125) < 0.02);
}

TEST_CASE("label column carries the sampled component") {
  GmmOracle o = make_ring_oracle(2, 1.0, 0.05);
  num::RngStream rng(22, num::stream::sim);
  prep::Table t = gmm_sample(o, 5000, rng, true);
  REQUIRE(t.schema.columns.size() == 3);
  CHECK(t.schema.columns[2].name == "label");
  CHECK(t.schema.columns[2].categories.size() == 2);
  for (int i = 0; i < t.rows(); ++i) {
    int lbl = static_cast<int>(t.values(i, 2));
    CHECK(std::fabs(t.values(i, 0) - o.means(lbl, 0)) < 0.5);
    CHECK(std::fabs(t.values(i, 1) - o.means(lbl, 1)) < 0.5);
  }
  CHECK(gmm_loglik(o, t) == gmm_loglik(o, t));  // label column ignored, finite
}

TEST_CASE("standard normal log-density at the origin") {
  GmmOracle o;
  o.means = num::Matrix(1, 2);
  o.w = {1.0};
  o.sigma = {1.0};
  prep::Table t;
  t.schema = o.schema();
  t.values = num::Matrix(1, 2);
  CHECK(std::fabs(gmm_loglik(o, t) - (-1.837877)) < 1e-6);
}

TEST_CASE("sampled log-likelihood matches quadrature") {
  GmmOracle o = make_grid_oracle(5, 2.0, 0.05);
  double want = oracle::gmm_expected_loglik_2d(o.means, o.w, o.sigma, 0.05 / 6);
  num::RngStream rng(23, num::stream::sim);
  prep::Table t = gmm_sample(o, 100000, rng);
  CHECK(std::fabs(gmm_loglik(o, t) - want) < 0.02);
}

TEST_CASE("log-likelihood concentrates across seeds") {
  GmmOracle o = make_ring_oracle(8, 1.0, 0.05);
  double want = oracle::gmm_expected_loglik_2d(o.means, o.w, o.sigma, 0.05 / 6);
  double lo = 1e300, hi = -1e300;
  for (uint64_t seed : {31u, 32u, 33u}) {
    num::RngStream rng(seed, num::stream::sim);
    double ll = gmm_loglik(o, gmm_sample(o, 100000, rng));
    lo = std::min(lo, ll);
    hi = std::max(hi, ll);
    CHECK(std::fabs(ll - want) < 0.02);
  }
  CHECK(hi - lo < 0.02);
}

TEST_CASE("refit recovers the generating mixture") {
  GmmOracle o = make_grid_oracle(5, 2.0, 0.05);
  num::RngStream rng(24, num::stream::sim);
  prep::Table t = gmm_sample(o, 20000, rng);
  num::RngStream fit_rng(24, num::stream::fit);
  GmmOracle f = gmm_fit(o, t, fit_rng);
  REQUIRE(f.components() == 25);
  for (int c = 0; c < 25; ++c) {
    double best = 1e300;
    for (int q = 0; q < 25; ++q) {
      double dx = f.means(q, 0) - o.means(c, 0), dy = f.means(q, 1) - o.means(c, 1);
      best = std::min(best, std::sqrt(dx * dx + dy * dy));
    }
    CHECK(best < 0.05);
  }
}

TEST_CASE("refit on genuine samples scores close to the truth") {
  GmmOracle o = make_ring_oracle(8, 1.0, 0.05);
  num::RngStream rng(25, num::stream::sim);
  prep::Table train = gmm_sample(o, 100000, rng);
  prep::Table test = gmm_sample(o, 100000, rng);
  num::RngStream fit_rng(25, num::stream::fit);
  GmmOracle f = gmm_fit(o, train, fit_rng);
  double truth = gmm_loglik(o, test);
  double refit = gmm_loglik(f, test);
  CHECK(refit <= truth + 0.05);
  CHECK(refit >= truth - 0.05);
}

TEST_CASE("single binary node sampling") {
  BnOracle bn;
  BnNode a;
  a.name = "A";
  a.arity = 2;
  a.categories = {"s0", "s1"};
  a.cpt = num::Matrix::full(1, 2, 0.5);
  bn.nodes = {a};
  num::RngStream rng(26, num::stream::sim);
  prep::Table t = bn_sample(bn, 100000, rng);
  double mean = 0;
  for (int i = 0; i < t.rows(); ++i) mean += t.values(i, 0);
  mean /= t.rows();
  CHECK(std::fabs(mean - 0.5) < 0.01);
}

TEST_CASE("uniform chain joint log-probability") {
  BnOracle bn = coin_chain();
  prep::Table t;
  t.schema = bn.schema();
  t.values = num::Matrix(4, 2);
  t.values.at(1, 1) = 1.0;
  t.values.at(2, 0) = 1.0;
  t.values.at(3, 0) = 1.0;
  t.values.at(3, 1) = 1.0;
  CHECK(std::fabs(bn_loglik(bn, t) - (-1.386294)) < 1e-6);
}

TEST_CASE("deterministic rows always fire") {
  BnOracle bn = bn_from_json(read_file(std::string(DATA_DIR) + "/asia_example.json"));
  num::RngStream rng(27, num::stream::sim);
  prep::Table t = bn_sample(bn, 20000, rng);
  int tb = -1, lung = -1, either = -1;
  for (size_t v = 0; v < bn.nodes.size(); ++v) {
    if (bn.nodes[v].name == "tb") tb = static_cast<int>(v);
    if (bn.nodes[v].name == "lung") lung = static_cast<int>(v);
    if (bn.nodes[v].name == "either") either = static_cast<int>(v);
  }
  REQUIRE(tb >= 0);
  REQUIRE(lung >= 0);
  REQUIRE(either >= 0);
  for (int i = 0; i < t.rows(); ++i) {
    bool any = t.values(i, tb) == 1.0 || t.values(i, lung) == 1.0;
    CHECK(t.values(i, either) == (any ? 1.0 : 0.0));
  }
}

TEST_CASE("network refit recovers the tables") {
  BnOracle bn = bn_from_json(read_file(std::string(DATA_DIR) + "/asia_example.json"));
  num::RngStream rng(28, num::stream::sim);
  prep::Table t = bn_sample(bn, 100000, rng);
  BnOracle f = bn_fit(bn, t);
  CHECK(f.smoothed);
  for (size_t v = 0; v < bn.nodes.size(); ++v)
    for (int r = 0; r < bn.nodes[v].cpt.rows(); ++r)
      for (int c = 0; c < bn.nodes[v].cpt.cols(); ++c)
        CHECK(std::fabs(f.nodes[v].cpt(r, c) - bn.nodes[v].cpt(r, c)) < 0.01);
}

TEST_CASE("refitting a single repeated row stays strictly inside (0,1)") {
  BnOracle bn = coin_chain();
  prep::Table t;
  t.schema = bn.schema();
  t.values = num::Matrix(50, 2);  // every row (s0, s0)
  BnOracle f = bn_fit(bn, t);
  for (const BnNode& node : f.nodes)
    for (int r = 0; r < node.cpt.rows(); ++r)
      for (int c = 0; c < node.arity; ++c) {
        CHECK(node.cpt(r, c) > 0.0);
        CHECK(node.cpt(r, c) < 1.0);
      }
}

TEST_CASE("impossible states flag minus infinity until smoothed") {
  BnOracle bn = bn_from_json(read_file(std::string(DATA_DIR) + "/asia_example.json"));
  num::RngStream rng(29, num::stream::sim);
  prep::Table t = bn_sample(bn, 1000, rng);
  int tb = -1, either = -1;
  for (size_t v = 0; v < bn.nodes.size(); ++v) {
    if (bn.nodes[v].name == "tb") tb = static_cast<int>(v);
    if (bn.nodes[v].name == "either") either = static_cast<int>(v);
  }
  t.values.at(0, tb) = 1.0;
  t.values.at(0, either) = 0.0;  // contradicts the deterministic OR
  int zeros = 0;
  double ll = bn_loglik(bn, t, &zeros);
  CHECK(std::isinf(ll));
  CHECK(zeros == 1);

  prep::Table clean = bn_sample(bn, 20000, rng);
  BnOracle f = bn_fit(bn, clean);
  zeros = -1;
  double sll = bn_loglik(f, t, &zeros);
  CHECK(std::isfinite(sll));
  CHECK(zeros == 0);
}

TEST_CASE("network json round-trip and validation") {
  BnOracle bn = bn_from_json(read_file(std::string(DATA_DIR) + "/asia_example.json"));
  BnOracle back = bn_from_json(bn_to_json(bn));
  REQUIRE(back.nodes.size() == bn.nodes.size());
  for (size_t v = 0; v < bn.nodes.size(); ++v) {
    CHECK(back.nodes[v].name == bn.nodes[v].name);
    CHECK(back.nodes[v].parents == bn.nodes[v].parents);
    for (int r = 0; r < bn.nodes[v].cpt.rows(); ++r)
      for (int c = 0; c < bn.nodes[v].cpt.cols(); ++c)
        CHECK(back.nodes[v].cpt(r, c) == bn.nodes[v].cpt(r, c));
  }

  CHECK_THROWS_AS(bn_from_json("not json"), error);
  CHECK_THROWS_AS(
      bn_from_json(R"({"nodes":[{"name":"A","arity":2,"parents":["A"],"cpt":[[0.5,0.5],[0.5,0.5]]}]})"),
      error);
  CHECK_THROWS_AS(
      bn_from_json(R"({"nodes":[{"name":"A","arity":2,"parents":[],"cpt":[[0.6,0.6]]}]})"),
      error);
}
