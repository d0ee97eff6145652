#include "nodetab/num/graph.hpp"

#include <cmath>

#include "nodetab/num/kernels.hpp"

namespace nodetab::num {

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return NodeId(nodes_.size() - 1);
}

void Graph::check_shape(bool ok, const char* what) const {
  if (!ok) fail(errc::numeric, std::string("shape mismatch in ") + what);
}

NodeId Graph::leaf(Matrix v) {
  Node n;
  n.op = Op::leaf;
  n.value = std::move(v);
  return push(std::move(n));
}

NodeId Graph::cnst(Matrix v) {
  Node n;
  n.op = Op::cnst;
  n.value = std::move(v);
  return push(std::move(n));
}

NodeId Graph::scalar(double v) { return cnst(Matrix::full(1, 1, v)); }

NodeId Graph::matmul(NodeId a, NodeId b, bool ta, bool tb) {
  const Matrix& A = nodes_[a].value;
  const Matrix& B = nodes_[b].value;
  int m = ta ? A.cols() : A.rows();
  int k = ta ? A.rows() : A.cols();
  int kb = tb ? B.cols() : B.rows();
  int nn = tb ? B.rows() : B.cols();
  check_shape(k == kb, "matmul");
  Node n;
  n.op = Op::matmul;
  n.a = a;
  n.b = b;
  n.lo = ta;
  n.hi = tb;
  n.value = Matrix(m, nn);
  kern::gemm(ta, tb, m, nn, k, A.data(), A.cols(), B.data(), B.cols(), n.value.mut_data(), nn, false);
  return push(std::move(n));
}

NodeId Graph::affine(NodeId x, NodeId w, NodeId bias) {
  const Matrix& X = nodes_[x].value;
  const Matrix& W = nodes_[w].value;
  const Matrix& B = nodes_[bias].value;
  check_shape(X.cols() == W.rows() && B.rows() == 1 && B.cols() == W.cols(), "affine");
  Node n;
  n.op = Op::affine;
  n.a = x;
  n.b = w;
  n.c = bias;
  n.value = Matrix(X.rows(), W.cols());
  kern::gemm(false, false, X.rows(), W.cols(), X.cols(), X.data(), X.cols(), W.data(), W.cols(),
             n.value.mut_data(), W.cols(), false);
  kern::add_rowvec(n.value.data(), B.data(), n.value.mut_data(), n.value.rows(), n.value.cols());
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Matrix& A = nodes_[a].value;
  const Matrix& B = nodes_[b].value;
  check_shape(A.same_shape(B), "add");
  Node n;
  n.op = Op::add;
  n.a = a;
  n.b = b;
  n.value = Matrix(A.rows(), A.cols());
  kern::add(A.data(), B.data(), n.value.mut_data(), A.size());
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const Matrix& A = nodes_[a].value;
  const Matrix& B = nodes_[b].value;
  check_shape(A.same_shape(B), "sub");
  Node n;
  n.op = Op::sub;
  n.a = a;
  n.b = b;
  n.value = Matrix(A.rows(), A.cols());
  kern::sub(A.data(), B.data(), n.value.mut_data(), A.size());
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Matrix& A = nodes_[a].value;
  const Matrix& B = nodes_[b].value;
  check_shape(A.same_shape(B), "mul");
  Node n;
  n.op = Op::mul;
  n.a = a;
  n.b = b;
  n.value = Matrix(A.rows(), A.cols());
  kern::mul(A.data(), B.data(), n.value.mut_data(), A.size());
  return push(std::move(n));
}

NodeId Graph::neg(NodeId a) { return scale_add(a, -1.0, 0.0); }

NodeId Graph::scale_add(NodeId a, double alpha, double beta) {
  const Matrix& A = nodes_[a].value;
  Node n;
  n.op = Op::scale_add;
  n.a = a;
  n.alpha = alpha;
  n.beta = beta;
  n.value = Matrix(A.rows(), A.cols());
  kern::scale_add(A.data(), alpha, beta, n.value.mut_data(), A.size());
  return push(std::move(n));
}

NodeId Graph::mul_scalar(NodeId a, NodeId s) {
  const Matrix& A = nodes_[a].value;
  const Matrix& S = nodes_[s].value;
  check_shape(S.rows() == 1 && S.cols() == 1, "mul_scalar");
  Node n;
  n.op = Op::mul_scalar;
  n.a = a;
  n.b = s;
  n.value = Matrix(A.rows(), A.cols());
  kern::scale_add(A.data(), S(0, 0), 0.0, n.value.mut_data(), A.size());
  return push(std::move(n));
}

namespace {
Matrix step_mask(const Matrix& x, double neg_value) {
  Matrix m(x.rows(), x.cols());
  const double* p = x.data();
  double* q = m.mut_data();
  for (size_t i = 0; i < x.size(); ++i) q[i] = p[i] > 0.0 ? 1.0 : neg_value;
  return m;
}
}  // namespace

NodeId Graph::relu(NodeId a) {
  const Matrix& A = nodes_[a].value;
  Node n;
  n.op = Op::relu;
  n.a = a;
  n.value = Matrix(A.rows(), A.cols());
  kern::relu(A.data(), n.value.mut_data(), A.size());
  n.saved = step_mask(A, 0.0);
  return push(std::move(n));
}

NodeId Graph::leaky(NodeId a, double slope) {
  const Matrix& A = nodes_[a].value;
  Node n;
  n.op = Op::leaky;
  n.a = a;
  n.alpha = slope;
  n.value = Matrix(A.rows(), A.cols());
  kern::leaky(A.data(), slope, n.value.mut_data(), A.size());
  n.saved = step_mask(A, slope);
  return push(std::move(n));
}

NodeId Graph::tanh_(NodeId a) {
  const Matrix& A = nodes_[a].value;
  Node n;
  n.op = Op::tanh_;
  n.a = a;
  n.value = Matrix(A.rows(), A.cols());
  kern::tanh_(A.data(), n.value.mut_data(), A.size());
  return push(std::move(n));
}

NodeId Graph::exp_(NodeId a) {
  const Matrix& A = nodes_[a].value;
  Node n;
  n.op = Op::exp_;
  n.a = a;
  n.value = Matrix(A.rows(), A.cols());
  kern::exp_(A.data(), n.value.mut_data(), A.size());
  return push(std::move(n));
}

NodeId Graph::log_(NodeId a) {
  const Matrix& A = nodes_[a].value;
  Node n;
  n.op = Op::log_;
  n.a = a;
  n.value = Matrix(A.rows(), A.cols());
  kern::log_(A.data(), n.value.mut_data(), A.size());
  return push(std::move(n));
}

NodeId Graph::sqrt_(NodeId a) {
  const Matrix& A = nodes_[a].value;
  Node n;
  n.op = Op::sqrt_;
  n.a = a;
  n.value = Matrix(A.rows(), A.cols());
  kern::sqrt_(A.data(), n.value.mut_data(), A.size());
  return push(std::move(n));
}

NodeId Graph::recip(NodeId a) {
  const Matrix& A = nodes_[a].value;
  Node n;
  n.op = Op::recip;
  n.a = a;
  n.value = Matrix(A.rows(), A.cols());
  kern::recip(A.data(), n.value.mut_data(), A.size());
  return push(std::move(n));
}

NodeId Graph::softplus(NodeId a) {
  const Matrix& A = nodes_[a].value;
  Node n;
  n.op = Op::softplus;
  n.a = a;
  n.value = Matrix(A.rows(), A.cols());
  const double* p = A.data();
  double* q = n.value.mut_data();
  for (size_t i = 0; i < A.size(); ++i)
    q[i] = (p[i] > 0.0 ? p[i] : 0.0) + std::log1p(std::exp(-std::fabs(p[i])));
  return push(std::move(n));
}

NodeId Graph::softmax_rows(NodeId a) {
  const Matrix& A = nodes_[a].value;
  Node n;
  n.op = Op::softmax_rows;
  n.a = a;
  n.value = Matrix(A.rows(), A.cols());
  kern::softmax_rows(A.data(), n.value.mut_data(), A.rows(), A.cols());
  return push(std::move(n));
}

NodeId Graph::add_rowvec(NodeId a, NodeId v) {
  const Matrix& A = nodes_[a].value;
  const Matrix& V = nodes_[v].value;
  check_shape(V.rows() == 1 && V.cols() == A.cols(), "add_rowvec");
  Node n;
  n.op = Op::add_rowvec;
  n.a = a;
  n.b = v;
  n.value = Matrix(A.rows(), A.cols());
  kern::add_rowvec(A.data(), V.data(), n.value.mut_data(), A.rows(), A.cols());
  return push(std::move(n));
}

NodeId Graph::mul_rowvec(NodeId a, NodeId v) {
  const Matrix& A = nodes_[a].value;
  const Matrix& V = nodes_[v].value;
  check_shape(V.rows() == 1 && V.cols() == A.cols(), "mul_rowvec");
  Node n;
  n.op = Op::mul_rowvec;
  n.a = a;
  n.b = v;
  n.value = Matrix(A.rows(), A.cols());
  kern::mul_rowvec(A.data(), V.data(), n.value.mut_data(), A.rows(), A.cols());
  return push(std::move(n));
}

NodeId Graph::add_colvec(NodeId a, NodeId v) {
  const Matrix& A = nodes_[a].value;
  const Matrix& V = nodes_[v].value;
  check_shape(V.cols() == 1 && V.rows() == A.rows(), "add_colvec");
  Node n;
  n.op = Op::add_colvec;
  n.a = a;
  n.b = v;
  n.value = Matrix(A.rows(), A.cols());
  kern::add_colvec(A.data(), V.data(), n.value.mut_data(), A.rows(), A.cols());
  return push(std::move(n));
}

NodeId Graph::mul_colvec(NodeId a, NodeId v) {
  const Matrix& A = nodes_[a].value;
  const Matrix& V = nodes_[v].value;
  check_shape(V.cols() == 1 && V.rows() == A.rows(), "mul_colvec");
  Node n;
  n.op = Op::mul_colvec;
  n.a = a;
  n.b = v;
  n.value = Matrix(A.rows(), A.cols());
  kern::mul_colvec(A.data(), V.data(), n.value.mut_data(), A.rows(), A.cols());
  return push(std::move(n));
}

NodeId Graph::col_sum(NodeId a) {
  const Matrix& A = nodes_[a].value;
  Node n;
  n.op = Op::col_sum;
  n.a = a;
  n.value = Matrix(1, A.cols());
  kern::col_sum(A.data(), n.value.mut_data(), A.rows(), A.cols());
  return push(std::move(n));
}

NodeId Graph::col_mean(NodeId a) {
  return scale_add(col_sum(a), 1.0 / nodes_[a].value.rows(), 0.0);
}

NodeId Graph::row_sum(NodeId a) {
  const Matrix& A = nodes_[a].value;
  Node n;
  n.op = Op::row_sum;
  n.a = a;
  n.value = Matrix(A.rows(), 1);
  kern::row_sum(A.data(), n.value.mut_data(), A.rows(), A.cols());
  return push(std::move(n));
}

NodeId Graph::sum_all(NodeId a) {
  const Matrix& A = nodes_[a].value;
  Node n;
  n.op = Op::sum_all;
  n.a = a;
  n.value = Matrix::full(1, 1, kern::sum_all(A.data(), A.size()));
  return push(std::move(n));
}

NodeId Graph::mean_all(NodeId a) {
  const Matrix& A = nodes_[a].value;
  return scale_add(sum_all(a), 1.0 / double(A.size()), 0.0);
}

NodeId Graph::tile_rows(NodeId a, int rows) {
  const Matrix& A = nodes_[a].value;
  check_shape(A.rows() == 1, "tile_rows");
  Node n;
  n.op = Op::tile_rows;
  n.a = a;
  n.value = Matrix(rows, A.cols());
  double* q = n.value.mut_data();
  for (int i = 0; i < rows; ++i)
    std::copy(A.data(), A.data() + A.cols(), q + size_t(i) * A.cols());
  return push(std::move(n));
}

NodeId Graph::tile_cols(NodeId a, int cols) {
  const Matrix& A = nodes_[a].value;
  check_shape(A.cols() == 1, "tile_cols");
  Node n;
  n.op = Op::tile_cols;
  n.a = a;
  n.value = Matrix(A.rows(), cols);
  double* q = n.value.mut_data();
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < cols; ++j) q[size_t(i) * cols + j] = A.data()[i];
  return push(std::move(n));
}

NodeId Graph::concat_cols(NodeId a, NodeId b) {
  const Matrix& A = nodes_[a].value;
  const Matrix& B = nodes_[b].value;
  check_shape(A.rows() == B.rows(), "concat_cols");
  Node n;
  n.op = Op::concat_cols;
  n.a = a;
  n.b = b;
  n.value = Matrix(A.rows(), A.cols() + B.cols());
  double* q = n.value.mut_data();
  for (int i = 0; i < A.rows(); ++i) {
    std::copy(A.data() + size_t(i) * A.cols(), A.data() + size_t(i + 1) * A.cols(),
              q + size_t(i) * n.value.cols());
    std::copy(B.data() + size_t(i) * B.cols(), B.data() + size_t(i + 1) * B.cols(),
              q + size_t(i) * n.value.cols() + A.cols());
  }
  return push(std::move(n));
}

NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
  check_shape(!parts.empty(), "concat_cols");
  NodeId acc = parts[0];
  for (size_t i = 1; i < parts.size(); ++i) acc = concat_cols(acc, parts[i]);
  return acc;
}

NodeId Graph::slice_cols(NodeId a, int lo, int hi) {
  const Matrix& A = nodes_[a].value;
  check_shape(0 <= lo && lo < hi && hi <= A.cols(), "slice_cols");
  Node n;
  n.op = Op::slice_cols;
  n.a = a;
  n.lo = lo;
  n.hi = hi;
  n.value = Matrix(A.rows(), hi - lo);
  double* q = n.value.mut_data();
  for (int i = 0; i < A.rows(); ++i)
    std::copy(A.data() + size_t(i) * A.cols() + lo, A.data() + size_t(i) * A.cols() + hi,
              q + size_t(i) * (hi - lo));
  return push(std::move(n));
}

NodeId Graph::pad_cols(NodeId a, int lo, int total) {
  const Matrix& A = nodes_[a].value;
  check_shape(lo >= 0 && lo + A.cols() <= total, "pad_cols");
  Node n;
  n.op = Op::pad_cols;
  n.a = a;
  n.lo = lo;
  n.hi = total;
  n.value = Matrix(A.rows(), total);
  double* q = n.value.mut_data();
  for (int i = 0; i < A.rows(); ++i)
    std::copy(A.data() + size_t(i) * A.cols(), A.data() + size_t(i + 1) * A.cols(),
              q + size_t(i) * total + lo);
  return push(std::move(n));
}

NodeId Graph::dropout(NodeId a, double p, RngStream& rng, bool train) {
  if (!train || p <= 0.0) return a;
  const Matrix& A = nodes_[a].value;
  Node n;
  n.op = Op::dropout;
  n.a = a;
  n.alpha = p;
  Matrix mask(A.rows(), A.cols());
  double* mp = mask.mut_data();
  double keep = 1.0 - p;
  for (size_t i = 0; i < mask.size(); ++i) mp[i] = rng.uniform() < p ? 0.0 : 1.0 / keep;
  n.value = Matrix(A.rows(), A.cols());
  kern::mul(A.data(), mask.data(), n.value.mut_data(), A.size());
  n.saved = std::move(mask);
  return push(std::move(n));
}

NodeId Graph::straight_through(NodeId soft) {
  const Matrix& A = nodes_[soft].value;
  Node n;
  n.op = Op::straight_through;
  n.a = soft;
  n.value = Matrix(A.rows(), A.cols());
  kern::onehot_argmax_rows(A.data(), n.value.mut_data(), A.rows(), A.cols());
  return push(std::move(n));
}

NodeId Graph::batchnorm(NodeId x, NodeId gamma, NodeId beta, Matrix& run_mean, Matrix& run_var,
                        bool train, bool update_running, double momentum, double eps) {
  const Matrix& X = nodes_[x].value;
  int r = X.rows(), c = X.cols();
  check_shape(nodes_[gamma].value.cols() == c && nodes_[beta].value.cols() == c &&
                  run_mean.cols() == c && run_var.cols() == c,
              "batchnorm");
  Node n;
  n.op = Op::batchnorm;
  n.a = x;
  n.b = gamma;
  n.c = beta;
  n.train = train;
  n.run_mean = &run_mean;
  n.run_var = &run_var;
  Matrix mean(1, c), var(1, c), invstd(1, c);
  if (train) {
    kern::col_sum(X.data(), mean.mut_data(), r, c);
    kern::scale_add(mean.data(), 1.0 / r, 0.0, mean.mut_data(), c);
    double* vp = var.mut_data();
    for (int j = 0; j < c; ++j) vp[j] = 0.0;
    for (int i = 0; i < r; ++i) {
      const double* xi = X.data() + size_t(i) * c;
      for (int j = 0; j < c; ++j) {
        double d = xi[j] - mean(0, j);
        vp[j] += d * d;
      }
    }
    for (int j = 0; j < c; ++j) vp[j] /= r;
    if (update_running) {
      double unbias = r > 1 ? double(r) / (r - 1) : 1.0;
      double* rm = run_mean.mut_data();
      double* rv = run_var.mut_data();
      for (int j = 0; j < c; ++j) {
        rm[j] = momentum * rm[j] + (1.0 - momentum) * mean(0, j);
        rv[j] = momentum * rv[j] + (1.0 - momentum) * var(0, j) * unbias;
      }
    }
  } else {
    mean = run_mean.clone();
    var = run_var.clone();
  }
  double* ip = invstd.mut_data();
  for (int j = 0; j < c; ++j) ip[j] = 1.0 / std::sqrt(var(0, j) + eps);
  Matrix xhat(r, c);
  double* xh = xhat.mut_data();
  for (int i = 0; i < r; ++i) {
    const double* xi = X.data() + size_t(i) * c;
    for (int j = 0; j < c; ++j) xh[size_t(i) * c + j] = (xi[j] - mean(0, j)) * invstd.data()[j];
  }
  n.value = Matrix(r, c);
  kern::mul_rowvec(xhat.data(), nodes_[gamma].value.data(), n.value.mut_data(), r, c);
  kern::add_rowvec(n.value.data(), nodes_[beta].value.data(), n.value.mut_data(), r, c);
  n.saved = std::move(xhat);
  n.saved2 = std::move(invstd);
  return push(std::move(n));
}

NodeId Graph::l2_normalize_rows(NodeId x) {
  NodeId n2 = row_sum(mul(x, x));
  const Matrix& N2 = nodes_[n2].value;
  Matrix zmask(N2.rows(), 1);
  int zero_rows = 0;
  {
    double* zp = zmask.mut_data();
    for (int i = 0; i < N2.rows(); ++i) {
      zp[i] = N2(i, 0) == 0.0 ? 1.0 : 0.0;
      zero_rows += N2(i, 0) == 0.0;
    }
  }
  zero_norm_rows += zero_rows;
  NodeId n2s = zero_rows ? add(n2, cnst(std::move(zmask))) : n2;
  return mul_colvec(x, recip(sqrt_(n2s)));
}

Graph::Gumbel Graph::gumbel_softmax(NodeId logits, double tau, RngStream& rng) {
  const Matrix& L = nodes_[logits].value;
  Matrix noise(L.rows(), L.cols());
  double* np = noise.mut_data();
  for (size_t i = 0; i < noise.size(); ++i) np[i] = rng.gumbel();
  NodeId soft = softmax_rows(scale_add(add(logits, cnst(std::move(noise))), 1.0 / tau, 0.0));
  return {soft, straight_through(soft)};
}

void Graph::accumulate(std::vector<NodeId>& grads, NodeId target, NodeId partial) {
  grads[target] = grads[target] < 0 ? partial : add(grads[target], partial);
}

void Graph::emit(NodeId id, NodeId g, const std::vector<char>& useful, std::vector<NodeId>& grads) {
  // nodes_ may reallocate while emitting, so copy what we need first.
  const Node& n0 = nodes_[id];
  Op op = n0.op;
  NodeId a = n0.a, b = n0.b, c = n0.c;
  double alpha = n0.alpha;
  int lo = n0.lo, hi = n0.hi;
  bool train = n0.train;
  Matrix value = n0.value;
  Matrix saved = n0.saved;
  Matrix saved2 = n0.saved2;
  Matrix gamma_val = b >= 0 && op == Op::batchnorm ? nodes_[b].value : Matrix();
  bool ua = a >= 0 && useful[a];
  bool ub = b >= 0 && useful[b];
  bool uc = c >= 0 && useful[c];

  switch (op) {
    case Op::leaf:
    case Op::cnst:
      break;
    case Op::matmul: {
      bool ta = lo, tb = hi;
      if (ua) accumulate(grads, a, ta ? matmul(b, g, tb, true) : matmul(g, b, false, !tb));
      if (ub) accumulate(grads, b, tb ? matmul(g, a, true, ta) : matmul(a, g, !ta, false));
      break;
    }
    case Op::affine: {
      if (ua) accumulate(grads, a, matmul(g, b, false, true));
      if (ub) accumulate(grads, b, matmul(a, g, true, false));
      if (uc) accumulate(grads, c, col_sum(g));
      break;
    }
    case Op::add: {
      if (ua) accumulate(grads, a, g);
      if (ub) accumulate(grads, b, g);
      break;
    }
    case Op::sub: {
      if (ua) accumulate(grads, a, g);
      if (ub) accumulate(grads, b, neg(g));
      break;
    }
    case Op::mul: {
      if (ua) accumulate(grads, a, mul(g, b));
      if (ub) accumulate(grads, b, mul(g, a));
      break;
    }
    case Op::scale_add: {
      if (ua) accumulate(grads, a, scale_add(g, alpha, 0.0));
      break;
    }
    case Op::mul_scalar: {
      if (ua) accumulate(grads, a, mul_scalar(g, b));
      if (ub) accumulate(grads, b, sum_all(mul(g, a)));
      break;
    }
    case Op::relu:
    case Op::leaky: {
      if (ua) accumulate(grads, a, mul(g, cnst(saved)));
      break;
    }
    case Op::tanh_: {
      if (ua) {
        NodeId y = cnst(value);
        accumulate(grads, a, mul(g, scale_add(mul(y, y), -1.0, 1.0)));
      }
      break;
    }
    case Op::exp_: {
      if (ua) accumulate(grads, a, mul(g, cnst(value)));
      break;
    }
    case Op::log_: {
      if (ua) accumulate(grads, a, mul(g, recip(a)));
      break;
    }
    case Op::sqrt_: {
      if (ua) accumulate(grads, a, mul(g, scale_add(recip(cnst(value)), 0.5, 0.0)));
      break;
    }
    case Op::recip: {
      if (ua) {
        NodeId y = cnst(value);
        accumulate(grads, a, neg(mul(g, mul(y, y))));
      }
      break;
    }
    case Op::softplus: {
      if (ua) {
        NodeId sig = recip(scale_add(exp_(neg(a)), 1.0, 1.0));
        accumulate(grads, a, mul(g, sig));
      }
      break;
    }
    case Op::softmax_rows: {
      if (ua) {
        NodeId y = cnst(value);
        NodeId inner = row_sum(mul(g, y));
        accumulate(grads, a, mul(y, sub(g, tile_cols(inner, value.cols()))));
      }
      break;
    }
    case Op::add_rowvec: {
      if (ua) accumulate(grads, a, g);
      if (ub) accumulate(grads, b, col_sum(g));
      break;
    }
    case Op::mul_rowvec: {
      if (ua) accumulate(grads, a, mul_rowvec(g, b));
      if (ub) accumulate(grads, b, col_sum(mul(g, a)));
      break;
    }
    case Op::add_colvec: {
      if (ua) accumulate(grads, a, g);
      if (ub) accumulate(grads, b, row_sum(g));
      break;
    }
    case Op::mul_colvec: {
      if (ua) accumulate(grads, a, mul_colvec(g, b));
      if (ub) accumulate(grads, b, row_sum(mul(g, a)));
      break;
    }
    case Op::col_sum: {
      if (ua) accumulate(grads, a, tile_rows(g, nodes_[a].value.rows()));
      break;
    }
    case Op::row_sum: {
      if (ua) accumulate(grads, a, tile_cols(g, nodes_[a].value.cols()));
      break;
    }
    case Op::sum_all: {
      if (ua) {
        const Matrix& A = nodes_[a].value;
        accumulate(grads, a, tile_rows(tile_cols(g, A.cols()), A.rows()));
      }
      break;
    }
    case Op::tile_rows: {
      if (ua) accumulate(grads, a, col_sum(g));
      break;
    }
    case Op::tile_cols: {
      if (ua) accumulate(grads, a, row_sum(g));
      break;
    }
    case Op::concat_cols: {
      int ca = nodes_[a].value.cols();
      int cb = nodes_[b].value.cols();
      if (ua) accumulate(grads, a, slice_cols(g, 0, ca));
      if (ub) accumulate(grads, b, slice_cols(g, ca, ca + cb));
      break;
    }
    case Op::slice_cols: {
      if (ua) accumulate(grads, a, pad_cols(g, lo, nodes_[a].value.cols()));
      break;
    }
    case Op::pad_cols: {
      if (ua) {
        int w = nodes_[a].value.cols();
        accumulate(grads, a, slice_cols(g, lo, lo + w));
      }
      break;
    }
    case Op::dropout: {
      if (ua) accumulate(grads, a, mul(g, cnst(saved)));
      break;
    }
    case Op::straight_through: {
      if (ua) accumulate(grads, a, g);
      break;
    }
    case Op::batchnorm: {
      if (ua) {
        if (train) {
          NodeId xh = cnst(saved);
          Matrix gi(1, saved2.cols());
          kern::mul(gamma_val.data(), saved2.data(), gi.mut_data(), gi.size());
          NodeId t1 = sub(g, tile_rows(col_mean(g), value.rows()));
          NodeId t2 = mul(xh, tile_rows(col_mean(mul(g, xh)), value.rows()));
          accumulate(grads, a, mul_rowvec(sub(t1, t2), cnst(std::move(gi))));
        } else {
          accumulate(grads, a, mul_rowvec(g, mul(b, cnst(saved2))));
        }
      }
      if (ub) accumulate(grads, b, col_sum(mul(g, cnst(saved))));
      if (uc) accumulate(grads, c, col_sum(g));
      break;
    }
  }
}

std::vector<NodeId> Graph::backward(NodeId loss, const std::vector<NodeId>& targets,
                                    const Matrix* seed) {
  size_t n0 = nodes_.size();
  if (loss < 0 || size_t(loss) >= n0) fail(errc::numeric, "backward: bad loss node");
  std::vector<char> useful(n0, 0);
  for (NodeId t : targets)
    if (t >= 0 && size_t(t) < n0) useful[t] = 1;
  for (size_t i = 0; i < n0; ++i) {
    const Node& n = nodes_[i];
    if ((n.a >= 0 && useful[n.a]) || (n.b >= 0 && useful[n.b]) || (n.c >= 0 && useful[n.c]))
      useful[i] = 1;
  }
  std::vector<NodeId> grads(n0, -1);
  std::vector<NodeId> out(targets.size(), -1);
  if (!useful[loss]) return out;
  const Matrix& lv = nodes_[loss].value;
  Matrix s = seed ? *seed : Matrix::full(lv.rows(), lv.cols(), 1.0);
  if (!s.same_shape(lv)) fail(errc::numeric, "backward: seed shape mismatch");
  grads[loss] = cnst(std::move(s));
  for (NodeId i = loss; i >= 0; --i) {
    if (grads[i] < 0 || !useful[i]) continue;
    emit(i, grads[i], useful, grads);
  }
  for (size_t k = 0; k < targets.size(); ++k) {
    NodeId t = targets[k];
    if (t >= 0 && size_t(t) < n0) out[k] = grads[t];
  }
  return out;
}

}  // namespace nodetab::num
