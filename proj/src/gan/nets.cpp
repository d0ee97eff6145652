#include "nodetab/gan/nets.hpp"

#include <cmath>

#include "nodetab/num/error.hpp"

namespace nodetab::gan {

std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::fixed: return "fixed";
    case Ablation::only_g: return "only_g";
    case Ablation::only_d: return "only_d";
  }
  return "full";
}

Ablation ablation_from(const std::string& name) {
  if (name == "full") return Ablation::full;
  if (name == "fixed") return Ablation::fixed;
  if (name == "only_g") return Ablation::only_g;
  if (name == "only_d") return Ablation::only_d;
  fail(errc::config, "unknown ablation " + name);
}

void TrainConfig::validate() const {
  if (!(lr_g > 0) || !(lr_d > 0) || !(lr_t > 0)) fail(errc::config, "learning rates must be positive");
  if (gp_lambda < 0) fail(errc::config, "gp_lambda must be non-negative");
  if (batch < 1) fail(errc::config, "batch must be positive");
  if (m < 1) fail(errc::config, "m must be at least 1");
  if (max_epoch < 0) fail(errc::config, "max_epoch must be non-negative");
  if (!(decay > 0) || decay > 1) fail(errc::config, "decay must be in (0, 1]");
  if (decay_every < 1) fail(errc::config, "decay_every must be positive");
  if (z_dim < 1) fail(errc::config, "z_dim must be positive");
  if (max_modes < 1) fail(errc::config, "max_modes must be positive");
  if (!(tau > 0)) fail(errc::config, "tau must be positive");
  if (dropout < 0 || dropout >= 1) fail(errc::config, "dropout must be in [0, 1)");
  if (rk4_steps_per_unit < 1) fail(errc::config, "rk4_steps_per_unit must be positive");
  if (t_batch < 1) fail(errc::config, "t_batch must be positive");
  if (gp_batch < 0) fail(errc::config, "gp_batch must be non-negative");
}

// ---------------------------------------------------------------- TimePoints

static double softplus_inv(double y) { return std::log(std::expm1(y)); }
static double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }
static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

TimePoints TimePoints::make(int m, Ablation abl, bool learn_tm) {
  TimePoints tp;
  tp.abl = abl;
  tp.m = m;
  tp.learn_tm = learn_tm;
  if (abl == Ablation::full || abl == Ablation::only_d)
    tp.u.assign(m, softplus_inv(1.0 / m));
  return tp;
}

std::vector<double> TimePoints::t() const {
  std::vector<double> out;
  if (abl == Ablation::only_g) return out;
  if (abl == Ablation::fixed) {
    for (int i = 1; i <= m; ++i) out.push_back(double(i) / m);
    return out;
  }
  double s = 0.0;
  for (double ui : u) out.push_back(s += softplus(ui));
  if (!learn_tm) {
    for (double& ti : out) ti /= s;
    out.back() = 1.0;
  }
  return out;
}

bool TimePoints::learnable() const {
  if (abl != Ablation::full && abl != Ablation::only_d) return false;
  return learn_tm ? m >= 1 : m >= 2;
}

void TimePoints::sgd_step(const std::vector<double>& dLdt, double lr) {
  if (!learnable()) return;
  if (int(dLdt.size()) != m) fail(errc::config, "sgd_step: gradient size mismatch");
  std::vector<double> delta(m), s(m);
  double acc = 0.0;
  for (int j = 0; j < m; ++j) {
    delta[j] = softplus(u[j]);
    s[j] = acc += delta[j];
  }
  double S = s[m - 1];
  std::vector<double> du(m, 0.0);
  for (int j = 0; j < m; ++j) {
    double sg = sigmoid(u[j]);
    for (int i = 0; i < m; ++i) {
      double dti_duj = learn_tm ? (j <= i ? sg : 0.0)
                                : sg * ((j <= i ? 1.0 : 0.0) - s[i] / S) / S;
      du[j] += dLdt[i] * dti_duj;
    }
  }
  for (int j = 0; j < m; ++j) u[j] -= lr * du[j];
}

// ---------------------------------------------------------------- init

static Matrix linear_init(num::RngStream& rng, int in, int out) {
  Matrix w(in, out);
  double a = 1.0 / std::sqrt(double(in));
  double* p = w.mut_data();
  for (size_t i = 0; i < w.size(); ++i) p[i] = (2.0 * rng.uniform() - 1.0) * a;
  return w;
}

static void add_linear(num::ParamStore& s, num::RngStream& rng, const std::string& name, int in,
                       int out, int* w_idx, int* b_idx) {
  int w = s.add(name + ".w", linear_init(rng, in, out));
  int b = s.add(name + ".b", linear_init(rng, 1, out));
  if (w_idx) *w_idx = w;
  if (b_idx) *b_idx = b;
}

static int add_bn(num::ParamStore& s, const std::string& name, int width) {
  int first = s.add(name + ".gamma", Matrix::full(1, width, 1.0));
  s.add(name + ".beta", Matrix(1, width));
  s.add(name + ".mean", Matrix(1, width), false);
  s.add(name + ".var", Matrix::full(1, width, 1.0), false);
  return first;
}

// ---------------------------------------------------------------- fields

void GenField::bind(Graph& g) {
  leaves_.clear();
  for (int i : idx_) leaves_.push_back(g.leaf(store_->at(i).value));
}

NodeId GenField::build(Graph& g, NodeId h, NodeId t) {
  int n = g.val(h).rows();
  NodeId x = g.concat_cols(g.l2_normalize_rows(h), g.tile_rows(t, n));
  for (int l = 0; l < 8; ++l)
    x = g.leaky(g.affine(x, leaves_[2 * l], leaves_[2 * l + 1]), slope_);
  return x;
}

void DiscField::bind(Graph& g) {
  leaves_.clear();
  for (int pos : {0, 1, 4, 5, 6, 7, 10, 11, 12, 13})
    leaves_.push_back(g.leaf(store_->at(idx_[pos]).value));
}

NodeId DiscField::build(Graph& g, NodeId h, NodeId t) {
  int n = g.val(h).rows();
  auto bn = [&](NodeId x, int leaf, int quad) {
    return g.batchnorm(x, leaves_[leaf], leaves_[leaf + 1], store_->at(idx_[quad + 2]).value,
                       store_->at(idx_[quad + 3]).value, bn_batch_, bn_update_);
  };
  NodeId x = g.relu(bn(h, 0, 0));
  x = g.concat_cols(x, g.tile_rows(t, n));
  x = g.relu(bn(g.affine(x, leaves_[2], leaves_[3]), 4, 6));
  x = g.relu(bn(g.affine(x, leaves_[6], leaves_[7]), 8, 12));
  return x;
}

// ---------------------------------------------------------------- Generator

Generator::Generator(const prep::Transformer& tr, const TrainConfig& cfg, num::RngStream& init) {
  lay_ = CondLayout::from(tr.schema());
  z_dim_ = cfg.z_dim;
  p_dim_ = z_dim_ + lay_.width;
  out_width_ = tr.width();
  tau_ = cfg.tau;
  slope_ = cfg.leaky_slope;
  abl_ = cfg.ablation;
  unroll_ = cfg.rk4_steps_per_unit;

  for (int l = 6; l <= 13; ++l) {
    int w, b;
    add_linear(params_, init, "g.fc" + std::to_string(l), l == 6 ? p_dim_ + 1 : p_dim_, p_dim_, &w,
               &b);
    field_idx_.push_back(w);
    field_idx_.push_back(b);
  }
  add_linear(params_, init, "fc1", p_dim_, 256, &fc1_w_, &fc1_b_);
  bn1_ = add_bn(params_, "bn1", 256);
  add_linear(params_, init, "fc2", p_dim_ + 256, 256, &fc2_w_, &fc2_b_);
  bn2_ = add_bn(params_, "bn2", 256);

  int h1w = p_dim_ + 512;
  for (const auto& span : tr.spans()) {
    Head h;
    h.column = span.column;
    h.kind = span.kind;
    const std::string& cname = tr.schema().columns[span.column].name;
    if (span.kind == prep::ColumnKind::continuous) {
      h.width = span.width - 1;
      add_linear(params_, init, "head." + cname + ".alpha", h1w, 1, &h.alpha_w, &h.alpha_b);
      add_linear(params_, init, "head." + cname + ".beta", h1w, h.width, &h.w_idx, &h.b_idx);
    } else {
      h.width = span.width;
      add_linear(params_, init, "head." + cname + ".cat", h1w, h.width, &h.w_idx, &h.b_idx);
    }
    heads_.push_back(h);
  }
}

GenField Generator::field() { return GenField(&params_, field_idx_, p_dim_, slope_); }

NodeId Generator::pnode(Graph& g, int idx, bool as_leaves, std::vector<NodeId>& ids) {
  if (ids.empty()) ids.assign(params_.size(), -1);
  if (ids[idx] < 0)
    ids[idx] = as_leaves ? g.leaf(params_.at(idx).value) : g.cnst(params_.at(idx).value);
  return ids[idx];
}

Generator::Forward Generator::heads_from(Graph& g, NodeId zp, bool train, bool update_bn,
                                         bool as_leaves, std::vector<NodeId>& ids,
                                         num::RngStream& gum) {
  Forward fwd;
  fwd.zprime = zp;
  NodeId a1 = g.affine(zp, pnode(g, fc1_w_, as_leaves, ids), pnode(g, fc1_b_, as_leaves, ids));
  a1 = g.batchnorm(a1, pnode(g, bn1_, as_leaves, ids), pnode(g, bn1_ + 1, as_leaves, ids),
                   params_.at(bn1_ + 2).value, params_.at(bn1_ + 3).value, train, update_bn);
  NodeId h0 = g.concat_cols(zp, g.relu(a1));
  NodeId a2 = g.affine(h0, pnode(g, fc2_w_, as_leaves, ids), pnode(g, fc2_b_, as_leaves, ids));
  a2 = g.batchnorm(a2, pnode(g, bn2_, as_leaves, ids), pnode(g, bn2_ + 1, as_leaves, ids),
                   params_.at(bn2_ + 2).value, params_.at(bn2_ + 3).value, train, update_bn);
  NodeId h1 = g.concat_cols(h0, g.relu(a2));

  std::vector<NodeId> parts, dsoft;
  bool shared = shared_noise_;
  for (const auto& h : heads_) {
    NodeId logits = g.affine(h1, pnode(g, h.w_idx, as_leaves, ids), pnode(g, h.b_idx, as_leaves, ids));
    Graph::Gumbel gb;
    if (shared) {
      Matrix noise(1, h.width);
      double* p = noise.mut_data();
      for (int i = 0; i < h.width; ++i) p[i] = gum.gumbel();
      NodeId pre = g.scale_add(g.add_rowvec(logits, g.cnst(std::move(noise))), 1.0 / tau_, 0.0);
      gb.soft = g.softmax_rows(pre);
      gb.hard = g.straight_through(gb.soft);
    } else {
      gb = g.gumbel_softmax(logits, tau_, gum);
    }
    if (h.kind == prep::ColumnKind::continuous) {
      NodeId alpha = g.tanh_(
          g.affine(h1, pnode(g, h.alpha_w, as_leaves, ids), pnode(g, h.alpha_b, as_leaves, ids)));
      parts.push_back(alpha);
      parts.push_back(gb.hard);
    } else {
      parts.push_back(gb.hard);
      dsoft.push_back(gb.soft);
    }
  }
  fwd.out = g.concat_cols(parts);
  if (!dsoft.empty()) fwd.dsoft = dsoft.size() == 1 ? dsoft[0] : g.concat_cols(dsoft);
  fwd.params = ids;
  return fwd;
}

Generator::Forward Generator::build(Graph& g, const Matrix& z, const CondBatch& cond, bool train,
                                    bool update_bn, bool as_leaves, num::RngStream& gum) {
  if (z.cols() != z_dim_) fail(errc::schema, "generator: z width mismatch");
  if (lay_.width > 0 && (cond.c.rows() != z.rows() || cond.c.cols() != lay_.width))
    fail(errc::schema, "generator: condition batch mismatch");
  std::vector<NodeId> ids;
  NodeId p0 = lay_.width > 0 ? g.concat_cols(g.cnst(z), g.cnst(cond.c)) : g.cnst(z);
  NodeId zp = p0;
  if (abl_ != Ablation::only_d) {
    GenField f = field();
    std::vector<NodeId> fleaves;
    for (int i : field_idx_) fleaves.push_back(pnode(g, i, as_leaves, ids));
    f.bind_to(std::move(fleaves));
    zp = ode::rk4_graph(g, f, p0, g.scalar(0.0), g.scalar(1.0), unroll_);
  }
  shared_noise_ = false;
  return heads_from(g, zp, train, update_bn, as_leaves, ids, gum);
}

static Matrix hstack(const Matrix& a, const Matrix& b) {
  if (b.empty()) return a;
  Matrix out(a.rows(), a.cols() + b.cols());
  double* p = out.mut_data();
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) p[size_t(i) * out.cols() + j] = a(i, j);
    for (int j = 0; j < b.cols(); ++j) p[size_t(i) * out.cols() + a.cols() + j] = b(i, j);
  }
  return out;
}

Matrix Generator::zprime(const Matrix& z, const CondBatch& cond, const ode::SolverConfig& scfg) {
  if (z.cols() != z_dim_) fail(errc::schema, "generator: z width mismatch");
  Matrix p0 = lay_.width > 0 ? hstack(z, cond.c) : z;
  if (abl_ == Ablation::only_d) return p0;
  GenField f = field();
  return ode::solve(f, p0, 0.0, 1.0, scfg);
}

Matrix Generator::sample_encoded(const Matrix& z, const CondBatch& cond,
                                 const ode::SolverConfig& scfg, num::RngStream& gum) {
  Matrix zp = zprime(z, cond, scfg);
  Graph g;
  std::vector<NodeId> ids;
  shared_noise_ = false;
  Forward fwd = heads_from(g, g.cnst(zp), false, false, false, ids, gum);
  return g.val(fwd.out);
}

Matrix Generator::sample_encoded_shared_noise(const Matrix& z, const CondBatch& cond,
                                              const ode::SolverConfig& scfg,
                                              num::RngStream& gum) {
  Matrix zp = zprime(z, cond, scfg);
  Graph g;
  std::vector<NodeId> ids;
  shared_noise_ = true;
  Forward fwd = heads_from(g, g.cnst(zp), false, false, false, ids, gum);
  shared_noise_ = false;
  return g.val(fwd.out);
}

// ------------------------------------------------------------ Discriminator

Discriminator::Discriminator(int x_width, const TrainConfig& cfg, num::RngStream& init) {
  x_width_ = x_width;
  m_ = cfg.m;
  slope_ = cfg.leaky_slope;
  abl_ = cfg.ablation;
  unroll_ = cfg.rk4_steps_per_unit;
  hx_width_ = abl_ == Ablation::only_g ? 256 : 256 * (m_ + 1);

  add_linear(params_, init, "fc1", x_width_, 256, &fc1_w_, &fc1_b_);
  add_linear(params_, init, "fc2", 256, 256, &fc2_w_, &fc2_b_);
  field_idx_.clear();
  auto push_quad = [&](const std::string& name) {
    int first = add_bn(params_, name, 256);
    for (int k = 0; k < 4; ++k) field_idx_.push_back(first + k);
  };
  push_quad("f.bn0");
  {
    int w, b;
    add_linear(params_, init, "f.fc6", 257, 256, &w, &b);
    field_idx_.push_back(w);
    field_idx_.push_back(b);
  }
  push_quad("f.bn1");
  {
    int w, b;
    add_linear(params_, init, "f.fc7", 256, 256, &w, &b);
    field_idx_.push_back(w);
    field_idx_.push_back(b);
  }
  push_quad("f.bn2");
  add_linear(params_, init, "fc3", hx_width_, 2 * hx_width_, &fc3_w_, &fc3_b_);
  add_linear(params_, init, "fc4", 2 * hx_width_, hx_width_, &fc4_w_, &fc4_b_);
  add_linear(params_, init, "fc5", hx_width_, 1, &fc5_w_, &fc5_b_);
}

DiscField Discriminator::field(bool bn_batch) {
  return DiscField(&params_, field_idx_, bn_batch);
}

NodeId Discriminator::pnode(Graph& g, int idx, bool as_leaves, std::vector<NodeId>& ids) {
  if (ids.empty()) ids.assign(params_.size(), -1);
  if (ids[idx] < 0)
    ids[idx] = as_leaves ? g.leaf(params_.at(idx).value) : g.cnst(params_.at(idx).value);
  return ids[idx];
}

NodeId Discriminator::head(Graph& g, NodeId hx, bool as_leaves, std::vector<NodeId>* ids) {
  std::vector<NodeId> local;
  std::vector<NodeId>& m = ids ? *ids : local;
  if (g.val(hx).cols() != hx_width_) fail(errc::schema, "discriminator head: width mismatch");
  NodeId x = g.leaky(g.affine(hx, pnode(g, fc3_w_, as_leaves, m), pnode(g, fc3_b_, as_leaves, m)),
                     slope_);
  x = g.leaky(g.affine(x, pnode(g, fc4_w_, as_leaves, m), pnode(g, fc4_b_, as_leaves, m)), slope_);
  return g.affine(x, pnode(g, fc5_w_, as_leaves, m), pnode(g, fc5_b_, as_leaves, m));
}

Discriminator::Forward Discriminator::build(Graph& g, NodeId x, const std::vector<double>& t,
                                            const Pass& pass) {
  if (g.val(x).cols() != x_width_) fail(errc::schema, "discriminator: input width mismatch");
  if (pass.dropout > 0 && !pass.drop_rng)
    fail(errc::config, "discriminator: dropout needs an rng");
  std::vector<NodeId> ids;
  NodeId a = g.leaky(g.affine(x, pnode(g, fc1_w_, pass.as_leaves, ids),
                              pnode(g, fc1_b_, pass.as_leaves, ids)),
                     slope_);
  if (pass.dropout > 0) a = g.dropout(a, pass.dropout, *pass.drop_rng, true);
  NodeId h0 = g.leaky(g.affine(a, pnode(g, fc2_w_, pass.as_leaves, ids),
                               pnode(g, fc2_b_, pass.as_leaves, ids)),
                      slope_);
  if (pass.dropout > 0) h0 = g.dropout(h0, pass.dropout, *pass.drop_rng, true);

  Forward fwd;
  fwd.h0 = h0;
  NodeId hx = h0;
  if (abl_ != Ablation::only_g) {
    if (int(t.size()) != m_) fail(errc::config, "discriminator: need m time points");
    double prev_t = 0.0;
    for (double ti : t)
      if (!(ti > prev_t)) fail(errc::config, "discriminator: time points must increase from 0");
      else prev_t = ti;
    DiscField f(&params_, field_idx_, pass.bn_batch, pass.bn_update);
    std::vector<NodeId> fl;
    for (int pos : {0, 1, 4, 5, 6, 7, 10, 11, 12, 13})
      fl.push_back(pnode(g, field_idx_[pos], pass.as_leaves, ids));
    f.bind_to(std::move(fl));
    std::vector<NodeId> cat = {h0};
    NodeId prev = h0;
    prev_t = 0.0;
    for (double ti : t) {
      int steps = std::max(1, int(std::lround((ti - prev_t) * unroll_)));
      prev = ode::rk4_graph(g, f, prev, g.scalar(prev_t), g.scalar(ti), steps);
      fwd.checkpoints.push_back(prev);
      cat.push_back(prev);
      prev_t = ti;
    }
    hx = g.concat_cols(cat);
  }
  fwd.scores = head(g, hx, pass.as_leaves, &ids);
  fwd.params = ids;
  return fwd;
}

Matrix Discriminator::trunk_values(const Matrix& x) {
  Graph g;
  std::vector<NodeId> ids;
  NodeId a = g.leaky(g.affine(g.cnst(x), pnode(g, fc1_w_, false, ids), pnode(g, fc1_b_, false, ids)),
                     slope_);
  NodeId h0 = g.leaky(g.affine(a, pnode(g, fc2_w_, false, ids), pnode(g, fc2_b_, false, ids)),
                      slope_);
  return g.val(h0);
}

// ---------------------------------------------------------------- losses

NodeId matching_loss(Graph& g, NodeId dsoft, const Matrix& cond_c) {
  if (g.val(dsoft).cols() != cond_c.cols() || g.val(dsoft).rows() != cond_c.rows())
    fail(errc::schema, "matching_loss: shape mismatch");
  NodeId logd = g.log_(g.scale_add(dsoft, 1.0, 1e-12));
  NodeId per_row = g.row_sum(g.mul(g.cnst(cond_c), logd));
  return g.scale_add(g.mean_all(per_row), -1.0, 0.0);
}

NodeId gradient_penalty(Graph& g, NodeId x, NodeId scores) {
  auto grads = g.backward(g.sum_all(scores), {x});
  NodeId gx = grads[0] >= 0 ? grads[0]
                            : g.cnst(Matrix(g.val(x).rows(), g.val(x).cols()));
  NodeId n2 = g.row_sum(g.mul(gx, gx));
  NodeId nrm = g.sqrt_(g.scale_add(n2, 1.0, 1e-24));
  NodeId diff = g.scale_add(nrm, 1.0, -1.0);
  return g.mean_all(g.mul(diff, diff));
}

}  // namespace nodetab::gan
