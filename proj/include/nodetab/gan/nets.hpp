#pragma once

#include <string>
#include <vector>

#include "nodetab/gan/cond.hpp"
#include "nodetab/num/graph.hpp"
#include "nodetab/num/params.hpp"
#include "nodetab/ode/odeint.hpp"
#include "nodetab/prep/transform.hpp"

namespace nodetab::gan {

using num::Graph;
using num::Matrix;
using num::NodeId;

enum class Ablation { full, fixed, only_g, only_d };

std::string ablation_name(Ablation a);
Ablation ablation_from(const std::string& name);

struct TrainConfig {
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double lr_t = 2e-4;
  double gp_lambda = 10.0;
  int batch = 500;
  int m = 3;
  int max_epoch = 300;
  double decay = 0.97;   // rate multiplier
  int decay_every = 2;   // epochs between decays
  int z_dim = 128;
  int max_modes = 10;
  double tau = 0.2;
  double leaky_slope = 0.2;
  double dropout = 0.5;
  bool learn_tm = false;
  Ablation ablation = Ablation::full;
  uint64_t seed = 1;
  int rk4_steps_per_unit = 2;  // training-time unroll density
  int t_batch = 128;           // rows used by the time-point update
  int gp_batch = 0;            // rows used by the gradient penalty; 0 = full batch
  ode::SolverConfig solver;    // sampling-time integration

  void validate() const;
};

// Learnable integration times t_1 < ... < t_m of the discriminator, held as
// unconstrained u with t = cumsum(softplus(u)), normalized so t_m = 1 unless
// learn_tm is set.  The fixed ablation freezes t_i = i/m; only_g has no
// times at all.
struct TimePoints {
  Ablation abl = Ablation::full;
  int m = 1;
  bool learn_tm = false;
  std::vector<double> u;

  static TimePoints make(int m, Ablation abl, bool learn_tm);
  std::vector<double> t() const;
  bool learnable() const;
  // u -= lr * (dt/du)^T dLdt, with dLdt aligned to t().
  void sgd_step(const std::vector<double>& dLdt, double lr);
};

// The generator's vector field: the state is l2-normalized, the time is
// appended, then eight affine+leaky layers map back to the state width.
class GenField : public ode::OdeFunc {
 public:
  GenField(num::ParamStore* store, const std::vector<int>& tensors, int pdim, double slope)
      : store_(store), idx_(tensors), pdim_(pdim), slope_(slope) {}
  int dim() const override { return pdim_; }
  void bind(Graph& g) override;
  void bind_to(std::vector<NodeId> ids) { leaves_ = std::move(ids); }
  const std::vector<NodeId>& param_leaves() const override { return leaves_; }
  NodeId build(Graph& g, NodeId h, NodeId t) override;

 private:
  num::ParamStore* store_;
  std::vector<int> idx_;  // w6,b6 .. w13,b13
  int pdim_;
  double slope_;
  std::vector<NodeId> leaves_;
};

// The discriminator's vector field: batchnorm/relu on the state, time
// appended, then two affine layers each followed by batchnorm/relu.
class DiscField : public ode::OdeFunc {
 public:
  DiscField(num::ParamStore* store, const std::vector<int>& tensors, bool bn_batch,
            bool bn_update = false)
      : store_(store), idx_(tensors), bn_batch_(bn_batch), bn_update_(bn_update) {}
  int dim() const override { return 256; }
  void bind(Graph& g) override;
  void bind_to(std::vector<NodeId> ids) { leaves_ = std::move(ids); }
  const std::vector<NodeId>& param_leaves() const override { return leaves_; }
  NodeId build(Graph& g, NodeId h, NodeId t) override;

 private:
  num::ParamStore* store_;
  // bn0.gamma, bn0.beta, bn0.mean, bn0.var, fc6.w, fc6.b, bn1.*, fc7.w,
  // fc7.b, bn2.*  (16 entries; running stats are used by pointer, the
  // gamma/beta and weight entries become graph nodes)
  std::vector<int> idx_;
  bool bn_batch_;
  bool bn_update_;
  std::vector<NodeId> leaves_;
};

class Generator {
 public:
  Generator() = default;
  Generator(const prep::Transformer& tr, const TrainConfig& cfg, num::RngStream& init);

  struct Forward {
    NodeId out = -1;     // assembled encoded rows, hard one-hots
    NodeId dsoft = -1;   // soft discrete heads, condition layout order
    NodeId zprime = -1;
    std::vector<NodeId> params;  // node per tensor index, -1 where absent
  };
  // One tape forward.  train selects batch statistics in the batchnorm
  // layers; as_leaves makes the parameters differentiable.
  Forward build(Graph& g, const Matrix& z, const CondBatch& cond, bool train, bool update_bn,
                bool as_leaves, num::RngStream& gumbel_rng);
  // Sampling path: adaptive integration for z', running batchnorm
  // statistics, fresh gumbel draws per row.
  Matrix sample_encoded(const Matrix& z, const CondBatch& cond, const ode::SolverConfig& scfg,
                        num::RngStream& gumbel_rng);
  // z' alone through the adaptive solver (identity under only_d).
  Matrix zprime(const Matrix& z, const CondBatch& cond, const ode::SolverConfig& scfg);

  GenField field();
  num::ParamStore& params() { return params_; }
  const num::ParamStore& params() const { return params_; }
  int z_dim() const { return z_dim_; }
  int p_dim() const { return p_dim_; }
  int out_width() const { return out_width_; }
  const CondLayout& cond_layout() const { return lay_; }

  // Head logits for one interpolation batch where every row shares the same
  // gumbel draw (one row of noise tiled down the batch).
  Matrix sample_encoded_shared_noise(const Matrix& z, const CondBatch& cond,
                                     const ode::SolverConfig& scfg, num::RngStream& gumbel_rng);

 private:
  struct Head {
    int column;  // schema index
    prep::ColumnKind kind;
    int width;       // modes for continuous, categories for discrete
    int w_idx, b_idx;
    int alpha_w = -1, alpha_b = -1;  // continuous only
  };

  NodeId pnode(Graph& g, int idx, bool as_leaves, std::vector<NodeId>& ids);
  Forward heads_from(Graph& g, NodeId zp, bool train, bool update_bn, bool as_leaves,
                     std::vector<NodeId>& ids, num::RngStream& gum);

  num::ParamStore params_;
  CondLayout lay_;
  std::vector<Head> heads_;
  std::vector<int> field_idx_;
  int z_dim_ = 0, p_dim_ = 0, out_width_ = 0;
  int fc1_w_ = -1, fc1_b_ = -1, fc2_w_ = -1, fc2_b_ = -1;
  int bn1_ = -1, bn2_ = -1;  // first of gamma,beta,mean,var
  double tau_ = 0.2, slope_ = 0.2;
  Ablation abl_ = Ablation::full;
  int unroll_ = 2;
  bool shared_noise_ = false;
};

class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(int x_width, const TrainConfig& cfg, num::RngStream& init);

  struct Pass {
    bool as_leaves = true;
    bool bn_batch = true;
    bool bn_update = false;
    double dropout = 0.0;
    num::RngStream* drop_rng = nullptr;
  };
  struct Forward {
    NodeId scores = -1;
    NodeId h0 = -1;
    std::vector<NodeId> checkpoints;  // h(t_1)..h(t_m); empty under only_g
    std::vector<NodeId> params;
  };
  Forward build(Graph& g, NodeId x, const std::vector<double>& t, const Pass& pass);
  // Classification head alone over a pre-assembled trajectory concat.
  NodeId head(Graph& g, NodeId hx, bool as_leaves, std::vector<NodeId>* ids = nullptr);
  // Input trunk without dropout, value only.
  Matrix trunk_values(const Matrix& x);

  DiscField field(bool bn_batch);
  num::ParamStore& params() { return params_; }
  const num::ParamStore& params() const { return params_; }
  int x_width() const { return x_width_; }
  int hx_width() const { return hx_width_; }

 private:
  NodeId pnode(Graph& g, int idx, bool as_leaves, std::vector<NodeId>& ids);

  num::ParamStore params_;
  std::vector<int> field_idx_;
  int x_width_ = 0, hx_width_ = 0, m_ = 1;
  int fc1_w_ = -1, fc1_b_ = -1, fc2_w_ = -1, fc2_b_ = -1;
  int fc3_w_ = -1, fc3_b_ = -1, fc4_w_ = -1, fc4_b_ = -1, fc5_w_ = -1, fc5_b_ = -1;
  double slope_ = 0.2;
  Ablation abl_ = Ablation::full;
  int unroll_ = 2;
};

// -mean over rows of sum(c * log(dsoft)): the cross entropy between the
// one-hot condition rows and the matching soft head outputs.
NodeId matching_loss(Graph& g, NodeId dsoft, const Matrix& cond_c);

// mean((||d sum(scores)/d x||_2 - 1)^2) over rows, built on the same tape so
// it can be differentiated again.  x must be a leaf the scores depend on.
NodeId gradient_penalty(Graph& g, NodeId x, NodeId scores);

}  // namespace nodetab::gan
