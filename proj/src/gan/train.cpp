#include "nodetab/gan/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nodetab/num/error.hpp"

namespace nodetab::gan {

namespace {

Matrix gather_rows(const Matrix& src, const std::vector<int>& order, int lo, int hi) {
  Matrix out(hi - lo, src.cols());
  double* p = out.mut_data();
  const double* q = src.data();
  for (int r = lo; r < hi; ++r)
    std::copy(q + size_t(order[r]) * src.cols(), q + size_t(order[r] + 1) * src.cols(),
              p + size_t(r - lo) * src.cols());
  return out;
}

Matrix first_rows(const Matrix& src, int k) {
  Matrix out(k, src.cols());
  std::copy(src.data(), src.data() + size_t(k) * src.cols(), out.mut_data());
  return out;
}

// Backward from loss into every trainable tensor that appears in param_nodes,
// accumulating into the store.
void apply_backward(Graph& g, NodeId loss, const std::vector<NodeId>& param_nodes,
                    num::ParamStore& store) {
  std::vector<NodeId> targets;
  std::vector<int> which;
  for (int i = 0; i < store.size(); ++i) {
    if (i >= int(param_nodes.size()) || param_nodes[i] < 0 || !store.at(i).trainable) continue;
    targets.push_back(param_nodes[i]);
    which.push_back(i);
  }
  auto grads = g.backward(loss, targets);
  for (size_t k = 0; k < targets.size(); ++k)
    if (grads[k] >= 0) store.accumulate_grad(which[k], g.val(grads[k]));
}

Matrix mix_rows(const Matrix& real, const Matrix& fake, int n, num::RngStream& rng) {
  Matrix out(n, real.cols());
  double* p = out.mut_data();
  const double* a = real.data();
  const double* b = fake.data();
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    for (int j = 0; j < real.cols(); ++j) {
      size_t at = size_t(i) * real.cols() + j;
      p[at] = u * b[at] + (1.0 - u) * a[at];
    }
  }
  return out;
}

double scalar(const Graph& g, NodeId id) { return g.val(id)(0, 0); }

bool off_rails(double v) { return !std::isfinite(v) || std::fabs(v) > 1e6; }

}  // namespace

Synthesizer train(const prep::Table& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.rows() < 1) fail(errc::schema, "train: empty table");

  num::RngStream rng_fit(cfg.seed, num::stream::fit);
  num::RngStream rng_enc(cfg.seed, num::stream::encode);
  num::RngStream rng_init(cfg.seed, num::stream::init);
  num::RngStream rng_shuffle(cfg.seed, num::stream::shuffle);
  num::RngStream rng_z(cfg.seed, num::stream::z);
  num::RngStream rng_cond(cfg.seed, num::stream::cond);
  num::RngStream rng_gum(cfg.seed, num::stream::gumbel);
  num::RngStream rng_drop(cfg.seed, num::stream::dropout);
  num::RngStream rng_mix(cfg.seed, num::stream::mix);

  Synthesizer s;
  s.transformer = prep::Transformer::fit(data, cfg.max_modes, rng_fit);
  s.cfg = cfg;
  s.gen = Generator(s.transformer, cfg, rng_init);
  s.disc = Discriminator(s.transformer.width(), cfg, rng_init);
  s.times = TimePoints::make(cfg.m, cfg.ablation, cfg.learn_tm);

  Matrix enc = s.transformer.encode(data, rng_enc);
  const CondLayout& lay = s.gen.cond_layout();
  int n = enc.rows();
  int bs = std::min(cfg.batch, n);
  int nb = std::max(1, n / bs);

  num::Adam adam_g, adam_d;
  double lr_g = cfg.lr_g, lr_d = cfg.lr_d, lr_t = cfg.lr_t;
  ode::SolverConfig cfg_t;
  cfg_t.method = "rk4";
  cfg_t.rk4_steps_per_unit = std::max(2, cfg.rk4_steps_per_unit);
  std::vector<double> tvals = s.times.t();

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.max_epoch; ++epoch) {
    rng_shuffle.shuffle(order);
    double loss_d = 0, loss_g = 0, loss_m = 0, pen = 0;
    for (int b = 0; b < nb; ++b) {
      Matrix real = gather_rows(enc, order, b * bs, (b + 1) * bs);

      // discriminator step
      Matrix fake;
      {
        Graph g;
        Matrix z(bs, cfg.z_dim);
        rng_z.fill_normal(z);
        CondBatch cb = cond_batch(lay, bs, rng_cond);
        auto fwd = s.gen.build(g, z, cb, true, false, false, rng_gum);
        fake = g.val(fwd.out);
      }
      double mean_real, mean_fake;
      {
        Graph g;
        auto fwd = s.disc.build(g, g.cnst(real), tvals,
                                {true, true, true, cfg.dropout, &rng_drop});
        NodeId loss = g.scale_add(g.mean_all(fwd.scores), -1.0, 0.0);
        mean_real = -scalar(g, loss);
        apply_backward(g, loss, fwd.params, s.disc.params());
      }
      {
        Graph g;
        auto fwd = s.disc.build(g, g.cnst(fake), tvals,
                                {true, true, false, cfg.dropout, &rng_drop});
        NodeId loss = g.mean_all(fwd.scores);
        mean_fake = scalar(g, loss);
        apply_backward(g, loss, fwd.params, s.disc.params());
      }
      {
        int gn = cfg.gp_batch > 0 ? std::min(cfg.gp_batch, bs) : bs;
        Matrix xbar = mix_rows(real, fake, gn, rng_mix);
        Graph g;
        NodeId xb = g.leaf(xbar);
        auto fwd = s.disc.build(g, xb, tvals, {true, false, false, 0.0, nullptr});
        NodeId pen_node = gradient_penalty(g, xb, fwd.scores);
        pen = scalar(g, pen_node);
        apply_backward(g, g.scale_add(pen_node, cfg.gp_lambda, 0.0), fwd.params, s.disc.params());
      }
      adam_d.step(s.disc.params(), lr_d);
      s.disc.params().zero_grads();
      loss_d = mean_fake - mean_real + cfg.gp_lambda * pen;

      // generator step
      Matrix fake2;
      {
        Graph g;
        Matrix z(bs, cfg.z_dim);
        rng_z.fill_normal(z);
        CondBatch cb = cond_batch(lay, bs, rng_cond);
        auto gf = s.gen.build(g, z, cb, true, true, true, rng_gum);
        auto df = s.disc.build(g, gf.out, tvals, {false, true, false, cfg.dropout, &rng_drop});
        NodeId lg = g.scale_add(g.mean_all(df.scores), -1.0, 0.0);
        loss_g = scalar(g, lg);
        NodeId total = lg;
        loss_m = 0.0;
        if (lay.width > 0) {
          NodeId ml = matching_loss(g, gf.dsoft, cb.c);
          loss_m = scalar(g, ml);
          total = g.add(lg, ml);
        }
        apply_backward(g, total, gf.params, s.gen.params());
        adam_g.step(s.gen.params(), lr_g);
        s.gen.params().zero_grads();
        fake2 = g.val(gf.out);
      }

      // time-point step
      if (s.times.learnable()) {
        int tb = std::min(cfg.t_batch, bs);
        std::vector<double> dt(size_t(cfg.m), 0.0);
        std::vector<double> chk = {0.0};
        chk.insert(chk.end(), tvals.begin(), tvals.end());
        for (int side = 0; side < 2; ++side) {
          Matrix x = first_rows(side == 0 ? real : fake2, tb);
          double sign = side == 0 ? -1.0 : 1.0;
          Matrix h0 = s.disc.trunk_values(x);
          DiscField f = s.disc.field(true);
          auto traj = ode::solve_checkpoints(f, h0, chk, cfg_t);
          Graph g;
          std::vector<NodeId> cps;
          for (const Matrix& st : traj.states) cps.push_back(g.leaf(st));
          NodeId sc = s.disc.head(g, g.concat_cols(cps), false);
          NodeId loss = g.scale_add(g.mean_all(sc), sign, 0.0);
          auto grads = g.backward(loss, cps);
          std::vector<Matrix> dldh;
          for (size_t k = 0; k < cps.size(); ++k)
            dldh.push_back(grads[k] >= 0 ? g.val(grads[k]) : Matrix(h0.rows(), h0.cols()));
          auto tg = ode::time_grads(f, traj, dldh, cfg_t);
          for (int i = 0; i < cfg.m; ++i) dt[i] += tg[i];
        }
        s.times.sgd_step(dt, lr_t);
        tvals = s.times.t();
      }

      if (off_rails(loss_d) || off_rails(loss_g) || off_rails(loss_m)) {
        s.diverged = true;
        s.log.push_back({epoch, loss_d, loss_g, loss_m, pen, tvals});
        return s;
      }
    }
    s.log.push_back({epoch, loss_d, loss_g, loss_m, pen, tvals});
    if ((epoch + 1) % cfg.decay_every == 0) {
      lr_g *= cfg.decay;
      lr_d *= cfg.decay;
      lr_t *= cfg.decay;
    }
  }
  return s;
}

prep::Table generate(Synthesizer& s, long n, uint64_t seed, const CondSample* fixed) {
  if (n < 0) fail(errc::config, "generate: negative row count");
  num::RngStream rng_z(seed, num::stream::z);
  num::RngStream rng_cond(seed, num::stream::cond);
  num::RngStream rng_gum(seed, num::stream::gumbel);
  const CondLayout& lay = s.gen.cond_layout();
  const int block = 500;
  Matrix enc(int(n), s.transformer.width());
  double* out = enc.mut_data();
  for (long at = 0; at < n; at += block) {
    int rows = int(std::min<long>(block, n - at));
    Matrix z(rows, s.gen.z_dim());
    rng_z.fill_normal(z);
    CondBatch cb = fixed ? fixed_cond_batch(lay, rows, *fixed) : cond_batch(lay, rows, rng_cond);
    Matrix e = s.gen.sample_encoded(z, cb, s.cfg.solver, rng_gum);
    std::copy(e.data(), e.data() + e.size(), out + size_t(at) * enc.cols());
  }
  return s.transformer.decode(enc);
}

prep::Table interpolate(Synthesizer& s, const std::vector<double>& z1,
                        const std::vector<double>& z2, CondSample c, int steps, uint64_t seed) {
  if (steps < 1) fail(errc::config, "interpolate: steps must be positive");
  int zd = s.gen.z_dim();
  if (int(z1.size()) != zd || int(z2.size()) != zd)
    fail(errc::schema, "interpolate: z width mismatch");
  int rows = steps + 1;
  Matrix z(rows, zd);
  double* p = z.mut_data();
  for (int k = 0; k < rows; ++k) {
    double e = double(k) / steps;
    for (int j = 0; j < zd; ++j) p[size_t(k) * zd + j] = e * z1[j] + (1.0 - e) * z2[j];
  }
  const CondLayout& lay = s.gen.cond_layout();
  CondBatch cb = fixed_cond_batch(lay, rows, c);
  num::RngStream rng_gum(seed, num::stream::gumbel);
  Matrix e = s.gen.sample_encoded_shared_noise(z, cb, s.cfg.solver, rng_gum);
  return s.transformer.decode(e);
}

LossReport eval_losses(Discriminator& disc, const std::vector<double>& t, const Matrix& real,
                       const Matrix& fake, const Matrix& dsoft, const Matrix& cond_c,
                       double gp_lambda, num::RngStream& mix_rng) {
  if (!real.same_shape(fake)) fail(errc::schema, "eval_losses: batch shape mismatch");
  LossReport r;
  Discriminator::Pass pass{false, false, false, 0.0, nullptr};
  double mean_real, mean_fake;
  {
    Graph g;
    auto fwd = disc.build(g, g.cnst(real), t, pass);
    mean_real = scalar(g, g.mean_all(fwd.scores));
  }
  {
    Graph g;
    auto fwd = disc.build(g, g.cnst(fake), t, pass);
    mean_fake = scalar(g, g.mean_all(fwd.scores));
  }
  {
    Matrix xbar = mix_rows(real, fake, real.rows(), mix_rng);
    Graph g;
    NodeId xb = g.leaf(xbar);
    auto fwd = disc.build(g, xb, t, pass);
    r.gp = scalar(g, gradient_penalty(g, xb, fwd.scores));
  }
  r.loss_d = mean_fake - mean_real + gp_lambda * r.gp;
  r.loss_g = -mean_fake;
  if (!cond_c.empty()) {
    Graph g;
    r.loss_match = scalar(g, matching_loss(g, g.cnst(dsoft), cond_c));
  }
  return r;
}

}  // namespace nodetab::gan
