#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "nodetab/num/graph.hpp"
#include "oracles.hpp"

using namespace nodetab::num;

namespace {

using Builder = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;

// Max relative error between tape gradients and central differences over
// every entry of every input.
double fd_vs_tape(const std::vector<Matrix>& inputs, const Builder& build, double eps = 1e-5) {
  Graph g;
  std::vector<NodeId> leaves;
  for (const auto& m : inputs) leaves.push_back(g.leaf(m.clone()));
  NodeId loss = build(g, leaves);
  REQUIRE(g.val(loss).rows() == 1);
  REQUIRE(g.val(loss).cols() == 1);
  auto gs = g.backward(loss, leaves);

  auto value_at = [&](const std::vector<Matrix>& xs) {
    Graph h;
    std::vector<NodeId> ls;
    for (const auto& m : xs) ls.push_back(h.leaf(m.clone()));
    return h.val(build(h, ls))(0, 0);
  };

  double worst = 0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    Matrix tg = gs[i] >= 0 ? g.val(gs[i]) : Matrix(inputs[i].rows(), inputs[i].cols());
    for (int r = 0; r < inputs[i].rows(); ++r)
      for (int c = 0; c < inputs[i].cols(); ++c) {
        std::vector<Matrix> xs;
        for (const auto& m : inputs) xs.push_back(m.clone());
        double keep = xs[i](r, c);
        xs[i].at(r, c) = keep + eps;
        double hi = value_at(xs);
        xs[i].at(r, c) = keep - eps;
        double lo = value_at(xs);
        double fd = (hi - lo) / (2 * eps);
        worst = std::max(worst, std::fabs(tg(r, c) - fd) / std::max(std::fabs(fd), 1e-6));
      }
  }
  return worst;
}

Matrix randm(uint64_t seed, int r, int c) {
  RngStream rng(seed, 99);
  return rng.normal_matrix(r, c);
}

}  // namespace

TEST_CASE("matmul gradients for every transpose combination") {
  for (int ta = 0; ta < 2; ++ta)
    for (int tb = 0; tb < 2; ++tb) {
      Matrix A = randm(1 + ta, ta ? 4 : 3, ta ? 3 : 4);
      Matrix B = randm(3 + tb, tb ? 5 : 4, tb ? 4 : 5);
      Matrix W = randm(7, 3, 5);
      auto build = [=](Graph& g, const std::vector<NodeId>& in) {
        return g.sum_all(g.mul(g.matmul(in[0], in[1], ta, tb), g.cnst(W)));
      };
      CHECK(fd_vs_tape({A, B}, build) < 1e-6);
    }
}

TEST_CASE("affine gradients") {
  Matrix X = randm(11, 4, 3), W = randm(12, 3, 5), b = randm(13, 1, 5), P = randm(14, 4, 5);
  auto build = [=](Graph& g, const std::vector<NodeId>& in) {
    return g.sum_all(g.mul(g.affine(in[0], in[1], in[2]), g.cnst(P)));
  };
  CHECK(fd_vs_tape({X, W, b}, build) < 1e-6);
}

TEST_CASE("activation chain gradients") {
  Matrix X = randm(21, 3, 4), W = randm(22, 4, 4), P = randm(23, 3, 4);
  auto build = [=](Graph& g, const std::vector<NodeId>& in) {
    NodeId h = g.leaky(g.matmul(in[0], in[1]), 0.2);
    h = g.tanh_(h);
    h = g.relu(g.add(h, in[0]));
    return g.sum_all(g.mul(h, g.cnst(P)));
  };
  CHECK(fd_vs_tape({X, W}, build) < 1e-5);
}

TEST_CASE("scalar and elementwise op gradients") {
  Matrix X = randm(31, 3, 3), S = Matrix::full(1, 1, 0.7), P = randm(32, 3, 3);
  auto build = [=](Graph& g, const std::vector<NodeId>& in) {
    NodeId e = g.exp_(g.scale_add(in[0], 0.3, 0.1));
    NodeId r = g.recip(g.scale_add(e, 1.0, 1.5));
    NodeId q = g.sqrt_(g.scale_add(r, 2.0, 0.5));
    NodeId l = g.log_(g.scale_add(q, 1.0, 1.0));
    NodeId sp = g.softplus(g.sub(l, in[0]));
    return g.sum_all(g.mul(g.mul_scalar(sp, in[1]), g.cnst(P)));
  };
  CHECK(fd_vs_tape({X, S}, build) < 1e-5);
}

TEST_CASE("softmax log-prob gradients") {
  Matrix X = randm(41, 5, 4), P = randm(42, 5, 4);
  auto build = [=](Graph& g, const std::vector<NodeId>& in) {
    return g.sum_all(g.mul(g.log_(g.softmax_rows(in[0])), g.cnst(P)));
  };
  CHECK(fd_vs_tape({X}, build) < 1e-5);
}

TEST_CASE("structural op gradients") {
  Matrix A = randm(51, 4, 3), B = randm(52, 4, 2), V = randm(53, 1, 5), C = randm(54, 4, 1);
  Matrix P = randm(55, 4, 5);
  auto build = [=](Graph& g, const std::vector<NodeId>& in) {
    NodeId cat = g.concat_cols(in[0], in[1]);
    NodeId x = g.mul_rowvec(g.add_rowvec(cat, in[2]), in[2]);
    x = g.add_colvec(g.mul_colvec(x, in[3]), in[3]);
    NodeId s = g.slice_cols(x, 1, 4);
    NodeId p = g.pad_cols(s, 2, 5);
    NodeId t = g.add(g.tile_rows(g.col_sum(p), 4), g.tile_cols(g.row_sum(x), 5));
    return g.sum_all(g.mul(t, g.cnst(P)));
  };
  CHECK(fd_vs_tape({A, B, V, C}, build) < 1e-5);
}

TEST_CASE("batchnorm train-mode gradients") {
  Matrix X = randm(61, 6, 3), Ga = randm(62, 1, 3), Be = randm(63, 1, 3), P = randm(64, 6, 3);
  auto build = [=](Graph& g, const std::vector<NodeId>& in) {
    Matrix rm(1, 3), rv = Matrix::full(1, 3, 1.0);
    NodeId y = g.batchnorm(in[0], in[1], in[2], rm, rv, true, false);
    return g.sum_all(g.mul(y, g.cnst(P)));
  };
  CHECK(fd_vs_tape({X, Ga, Be}, build) < 1e-4);
}

TEST_CASE("batchnorm eval-mode gradients") {
  Matrix X = randm(71, 6, 3), Ga = randm(72, 1, 3), Be = randm(73, 1, 3), P = randm(74, 6, 3);
  Matrix rm = randm(75, 1, 3);
  Matrix rv(1, 3);
  for (int j = 0; j < 3; ++j) rv.at(0, j) = 0.5 + 0.3 * j;
  auto build = [=](Graph& g, const std::vector<NodeId>& in) {
    Matrix m = rm.clone(), v = rv.clone();
    NodeId y = g.batchnorm(in[0], in[1], in[2], m, v, false, false);
    return g.sum_all(g.mul(y, g.cnst(P)));
  };
  CHECK(fd_vs_tape({X, Ga, Be}, build) < 1e-5);
}

TEST_CASE("batchnorm updates running stats with momentum") {
  Matrix X(4, 1);
  X.at(0, 0) = 1.0;
  X.at(1, 0) = 2.0;
  X.at(2, 0) = 3.0;
  X.at(3, 0) = 6.0;
  // batch mean 3, biased var 3.5, unbiased var 14/3
  Matrix rm = Matrix::full(1, 1, 10.0), rv = Matrix::full(1, 1, 2.0);
  Graph g;
  NodeId x = g.leaf(X);
  g.batchnorm(x, g.cnst(Matrix::full(1, 1, 1.0)), g.cnst(Matrix(1, 1)), rm, rv, true, true, 0.9);
  CHECK(rm(0, 0) == doctest::Approx(0.9 * 10.0 + 0.1 * 3.0).epsilon(1e-12));
  CHECK(rv(0, 0) == doctest::Approx(0.9 * 2.0 + 0.1 * 14.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("l2 row normalization gradients") {
  Matrix X = randm(81, 3, 4);
  Matrix P = randm(82, 3, 4);
  auto build = [=](Graph& g, const std::vector<NodeId>& in) {
    return g.sum_all(g.mul(g.l2_normalize_rows(in[0]), g.cnst(P)));
  };
  CHECK(fd_vs_tape({X}, build) < 1e-5);
}

TEST_CASE("l2 row normalization passes zero rows through") {
  Matrix X = randm(81, 3, 4);
  for (int c = 0; c < 4; ++c) X.at(1, c) = 0.0;
  Graph g;
  NodeId x = g.leaf(X.clone());
  NodeId y = g.l2_normalize_rows(x);
  CHECK(g.zero_norm_rows == 1);
  for (int c = 0; c < 4; ++c) CHECK(g.val(y)(1, c) == 0.0);
  double n = 0;
  for (int c = 0; c < 4; ++c) n += g.val(y)(0, c) * g.val(y)(0, c);
  CHECK(std::fabs(n - 1.0) < 1e-12);
}

TEST_CASE("dropout gradients with a replayed mask") {
  Matrix X = randm(91, 5, 4), P = randm(92, 5, 4);
  auto build = [=](Graph& g, const std::vector<NodeId>& in) {
    RngStream rng(7, 1);
    NodeId y = g.dropout(in[0], 0.5, rng, true);
    return g.sum_all(g.mul(y, g.cnst(P)));
  };
  CHECK(fd_vs_tape({X}, build) < 1e-6);
}

TEST_CASE("dropout in eval mode is identity") {
  Matrix X = randm(93, 3, 3);
  Graph g;
  RngStream rng(1, 1);
  NodeId x = g.leaf(X);
  CHECK(g.dropout(x, 0.5, rng, false) == x);
}

TEST_CASE("gumbel softmax soft-path gradients and hard straight-through") {
  Matrix L = randm(94, 4, 3), P = randm(95, 4, 3);
  auto soft_build = [=](Graph& g, const std::vector<NodeId>& in) {
    RngStream rng(11, 2);
    auto gs = g.gumbel_softmax(in[0], 0.2, rng);
    return g.sum_all(g.mul(gs.soft, g.cnst(P)));
  };
  CHECK(fd_vs_tape({L}, soft_build) < 1e-4);

  Graph g;
  RngStream r1(11, 2), r2(11, 2);
  NodeId l1 = g.leaf(L.clone());
  auto gs = g.gumbel_softmax(l1, 0.2, r1);
  for (int i = 0; i < 4; ++i) {
    double s = 0;
    int ones = 0;
    for (int j = 0; j < 3; ++j) {
      s += g.val(gs.hard)(i, j);
      ones += g.val(gs.hard)(i, j) == 1.0;
    }
    CHECK(s == 1.0);
    CHECK(ones == 1);
  }
  auto gh = g.backward(g.sum_all(g.mul(gs.hard, g.cnst(P))), {l1});
  Graph g2;
  NodeId l2 = g2.leaf(L.clone());
  auto gs2 = g2.gumbel_softmax(l2, 0.2, r2);
  auto gsoft = g2.backward(g2.sum_all(g2.mul(gs2.soft, g2.cnst(P))), {l2});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(g.val(gh[0])(i, j) == doctest::Approx(g2.val(gsoft[0])(i, j)).epsilon(1e-12));
}

TEST_CASE("backward returns -1 for unreachable targets") {
  Graph g;
  NodeId a = g.leaf(randm(96, 2, 2));
  NodeId b = g.leaf(randm(97, 2, 2));
  NodeId loss = g.sum_all(g.mul(a, a));
  auto gs = g.backward(loss, {a, b});
  CHECK(gs[0] >= 0);
  CHECK(gs[1] == -1);
}

TEST_CASE("second-order gradients through an emitted gradient norm") {
  // Penalty p = mean((||dD/dx||_2 - 1)^2) for a small leaky-relu critic;
  // d p / d theta from a second backward pass must match central
  // differences of p computed by the first-order pipeline.
  Matrix X = randm(101, 3, 4);
  Matrix W1 = randm(102, 4, 5), b1 = randm(103, 1, 5);
  Matrix W2 = randm(104, 5, 1), b2 = randm(105, 1, 1);

  auto penalty_nodes = [](Graph& g, NodeId x, NodeId w1, NodeId bb1, NodeId w2, NodeId bb2) {
    NodeId h = g.leaky(g.affine(x, w1, bb1), 0.2);
    NodeId d = g.affine(h, w2, bb2);
    auto gx = g.backward(d, {x}, nullptr);
    REQUIRE(gx[0] >= 0);
    NodeId norm = g.sqrt_(g.row_sum(g.mul(gx[0], gx[0])));
    NodeId dev = g.scale_add(norm, 1.0, -1.0);
    return g.mean_all(g.mul(dev, dev));
  };

  Graph g;
  NodeId x = g.cnst(X.clone());
  NodeId w1 = g.leaf(W1.clone()), bb1 = g.leaf(b1.clone());
  NodeId w2 = g.leaf(W2.clone()), bb2 = g.leaf(b2.clone());
  NodeId p = penalty_nodes(g, x, w1, bb1, w2, bb2);
  auto gs = g.backward(p, {w1, bb1, w2, bb2});

  std::vector<Matrix> params = {W1, b1, W2, b2};
  auto value_at = [&](const std::vector<Matrix>& th) {
    Graph h;
    NodeId hx = h.cnst(X.clone());
    NodeId hw1 = h.leaf(th[0].clone()), hb1 = h.leaf(th[1].clone());
    NodeId hw2 = h.leaf(th[2].clone()), hb2 = h.leaf(th[3].clone());
    return h.val(penalty_nodes(h, hx, hw1, hb1, hw2, hb2))(0, 0);
  };
  double worst = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    Matrix tg = gs[i] >= 0 ? g.val(gs[i]) : Matrix(params[i].rows(), params[i].cols());
    for (int r = 0; r < params[i].rows(); ++r)
      for (int c = 0; c < params[i].cols(); ++c) {
        std::vector<Matrix> th;
        for (const auto& m : params) th.push_back(m.clone());
        double keep = th[i](r, c);
        double eps = 1e-5;
        th[i].at(r, c) = keep + eps;
        double hi = value_at(th);
        th[i].at(r, c) = keep - eps;
        double lo = value_at(th);
        double fd = (hi - lo) / (2 * eps);
        worst = std::max(worst, std::fabs(tg(r, c) - fd) / std::max(std::fabs(fd), 1e-6));
      }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("shape mismatches raise structured errors") {
  Graph g;
  NodeId a = g.leaf(Matrix(2, 3));
  NodeId b = g.leaf(Matrix(2, 2));
  CHECK_THROWS_AS(g.add(a, b), nodetab::error);
  CHECK_THROWS_AS(g.matmul(a, a), nodetab::error);
  CHECK_THROWS_AS(g.slice_cols(a, 2, 2), nodetab::error);
}
