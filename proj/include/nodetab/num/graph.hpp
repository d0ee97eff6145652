#pragma once

#include <cstdint>
#include <vector>

#include "nodetab/num/matrix.hpp"
#include "nodetab/num/rng.hpp"

namespace nodetab::num {

using NodeId = int32_t;

enum class Op : uint8_t {
  leaf,
  cnst,
  matmul,
  affine,
  add,
  sub,
  mul,
  scale_add,
  mul_scalar,
  relu,
  leaky,
  tanh_,
  exp_,
  log_,
  sqrt_,
  recip,
  softplus,
  softmax_rows,
  add_rowvec,
  mul_rowvec,
  add_colvec,
  mul_colvec,
  col_sum,
  row_sum,
  sum_all,
  tile_rows,
  tile_cols,
  concat_cols,
  slice_cols,
  pad_cols,
  dropout,
  straight_through,
  batchnorm,
};

struct Node {
  Op op;
  NodeId a = -1, b = -1, c = -1;
  Matrix value;
  double alpha = 0.0, beta = 0.0;
  int lo = 0, hi = 0;
  Matrix saved;   // op-dependent cache (masks, normalized input)
  Matrix saved2;  // batchnorm inverse std
  Matrix* run_mean = nullptr;
  Matrix* run_var = nullptr;
  bool train = false;
};

// Eagerly evaluated tape.  backward() appends gradient nodes to the same
// tape, so gradients can be differentiated again by a second backward call.
class Graph {
public:
  NodeId leaf(Matrix v);
  NodeId cnst(Matrix v);
  NodeId scalar(double v);

  NodeId matmul(NodeId a, NodeId b, bool ta = false, bool tb = false);
  NodeId affine(NodeId x, NodeId w, NodeId bias);  // x*w + bias row vector
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId neg(NodeId a);
  NodeId scale_add(NodeId a, double alpha, double beta);
  NodeId mul_scalar(NodeId a, NodeId s);
  NodeId relu(NodeId a);
  NodeId leaky(NodeId a, double slope = 0.2);
  NodeId tanh_(NodeId a);
  NodeId exp_(NodeId a);
  NodeId log_(NodeId a);
  NodeId sqrt_(NodeId a);
  NodeId recip(NodeId a);
  NodeId softplus(NodeId a);
  NodeId softmax_rows(NodeId a);
  NodeId add_rowvec(NodeId a, NodeId v);
  NodeId mul_rowvec(NodeId a, NodeId v);
  NodeId add_colvec(NodeId a, NodeId v);
  NodeId mul_colvec(NodeId a, NodeId v);
  NodeId col_sum(NodeId a);
  NodeId col_mean(NodeId a);
  NodeId row_sum(NodeId a);
  NodeId sum_all(NodeId a);
  NodeId mean_all(NodeId a);
  NodeId tile_rows(NodeId a, int rows);
  NodeId tile_cols(NodeId a, int cols);
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  NodeId slice_cols(NodeId a, int lo, int hi);
  NodeId pad_cols(NodeId a, int lo, int total);
  NodeId dropout(NodeId a, double p, RngStream& rng, bool train);
  NodeId straight_through(NodeId soft);
  NodeId batchnorm(NodeId x, NodeId gamma, NodeId beta, Matrix& run_mean, Matrix& run_var, bool train,
                   bool update_running, double momentum = 0.9, double eps = 1e-5);

  // Row-wise x / ||x||, with zero rows passed through unchanged (counted in
  // zero_norm_rows).
  NodeId l2_normalize_rows(NodeId x);

  struct Gumbel {
    NodeId soft;
    NodeId hard;  // straight-through one-hot
  };
  Gumbel gumbel_softmax(NodeId logits, double tau, RngStream& rng);

  const Matrix& val(NodeId id) const { return nodes_[id].value; }
  const Node& node(NodeId id) const { return nodes_[id]; }
  size_t size() const { return nodes_.size(); }

  // Gradients of a scalar loss with respect to targets, as node ids aligned
  // with targets (-1 when the loss does not depend on a target).  seed
  // overrides the default all-ones seed and must match the loss shape.
  std::vector<NodeId> backward(NodeId loss, const std::vector<NodeId>& targets,
                               const Matrix* seed = nullptr);

  int zero_norm_rows = 0;

private:
  NodeId push(Node n);
  void check_shape(bool ok, const char* what) const;
  void emit(NodeId id, NodeId g, const std::vector<char>& useful, std::vector<NodeId>& grads);
  void accumulate(std::vector<NodeId>& grads, NodeId target, NodeId partial);

  std::vector<Node> nodes_;
};

}  // namespace nodetab::num
