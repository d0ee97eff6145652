#pragma once

// Small vector fields used by the solver and gradient tests.

#include <vector>

#include "nodetab/num/rng.hpp"
#include "nodetab/ode/odeint.hpp"

namespace testfields {

using nodetab::num::Graph;
using nodetab::num::Matrix;
using nodetab::num::NodeId;
using nodetab::num::RngStream;

// h' = h A^T (rows are states), A optionally a trainable parameter.
struct LinearOde : nodetab::ode::OdeFunc {
  Matrix A;
  bool as_param = false;
  std::vector<NodeId> leaves;

  LinearOde(Matrix a, bool param = false) : A(std::move(a)), as_param(param) {}
  int dim() const override { return A.rows(); }
  void bind(Graph& g) override {
    leaves.clear();
    if (as_param) leaves.push_back(g.leaf(A));
  }
  const std::vector<NodeId>& param_leaves() const override { return leaves; }
  NodeId build(Graph& g, NodeId h, NodeId) override {
    return g.matmul(h, as_param ? leaves[0] : g.cnst(A), false, true);
  }
};

// h' = c (constant drift).
struct ConstOde : nodetab::ode::OdeFunc {
  Matrix c;
  std::vector<NodeId> leaves;
  explicit ConstOde(Matrix v) : c(std::move(v)) {}
  int dim() const override { return c.cols(); }
  void bind(Graph&) override { leaves.clear(); }
  const std::vector<NodeId>& param_leaves() const override { return leaves; }
  NodeId build(Graph& g, NodeId h, NodeId) override {
    return g.add_rowvec(g.scale_add(h, 0.0, 0.0), g.cnst(c));
  }
};

// Scalar h' = theta h.
struct ScalarExpOde : nodetab::ode::OdeFunc {
  double theta;
  std::vector<NodeId> leaves;
  explicit ScalarExpOde(double th) : theta(th) {}
  int dim() const override { return 1; }
  void bind(Graph& g) override {
    leaves.clear();
    leaves.push_back(g.leaf(Matrix::full(1, 1, theta)));
  }
  const std::vector<NodeId>& param_leaves() const override { return leaves; }
  NodeId build(Graph& g, NodeId h, NodeId) override { return g.mul_scalar(h, leaves[0]); }
};

// f(h, t) = tanh(h W1^T + t u + b) W2^T, a smooth non-autonomous field.
struct MlpOde : nodetab::ode::OdeFunc {
  Matrix W1, W2, u, b;
  int d;
  std::vector<NodeId> leaves;

  MlpOde(uint64_t seed, int dim, int hidden = 8) : d(dim) {
    RngStream rng(seed, 1);
    W1 = rng.normal_matrix(hidden, dim);
    W2 = rng.normal_matrix(dim, hidden);
    u = rng.normal_matrix(1, hidden);
    b = rng.normal_matrix(1, hidden);
    auto scale = [](Matrix& m, double s) {
      double* p = m.mut_data();
      for (size_t i = 0; i < m.size(); ++i) p[i] *= s;
    };
    scale(W1, 0.6);
    scale(W2, 0.6);
  }
  int dim() const override { return d; }
  void bind(Graph& g) override {
    leaves = {g.leaf(W1), g.leaf(W2), g.leaf(u), g.leaf(b)};
  }
  const std::vector<NodeId>& param_leaves() const override { return leaves; }
  NodeId build(Graph& g, NodeId h, NodeId t) override {
    NodeId pre = g.matmul(h, leaves[0], false, true);
    pre = g.add_rowvec(pre, g.mul_scalar(leaves[2], t));
    pre = g.add_rowvec(pre, leaves[3]);
    return g.matmul(g.tanh_(pre), leaves[1], false, true);
  }
};

}  // namespace testfields
