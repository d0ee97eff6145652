#include "nodetab/ode/odeint.hpp"

#include <algorithm>
#include <cmath>

#include "nodetab/num/error.hpp"
#include "nodetab/num/kernels.hpp"

namespace nodetab::ode {

using nodetab::errc;
using nodetab::fail;
using num::kern::axpy;

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9;
constexpr double A21 = 1.0 / 5;
constexpr double A31 = 3.0 / 40, A32 = 9.0 / 40;
constexpr double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
constexpr double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561,
                 A54 = -212.0 / 729;
constexpr double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176,
                 A65 = -5103.0 / 18656;
constexpr double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784,
                 B6 = 11.0 / 84;
constexpr double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200,
                 E6 = 22.0 / 525, E7 = -1.0 / 40;

double norm_part(const Matrix& y0, const Matrix& y1, const Matrix& err, double atol, double rtol,
                 size_t& count) {
  const double* a = y0.data();
  const double* b = y1.data();
  const double* e = err.data();
  double s = 0.0;
  for (size_t i = 0; i < y0.size(); ++i) {
    double scale = atol + rtol * std::max(std::fabs(a[i]), std::fabs(b[i]));
    double r = e[i] / scale;
    s += r * r;
  }
  count += y0.size();
  return s;
}

struct MatState {
  Matrix m;
  MatState clone() const { return {m.clone()}; }
  void axpy_(double alpha, const MatState& o) { axpy(alpha, o.m.data(), m.mut_data(), m.size()); }
  double err_norm(const MatState& ynew, const MatState& err, double atol, double rtol) const {
    size_t n = 0;
    double s = norm_part(m, ynew.m, err.m, atol, rtol, n);
    return std::sqrt(s / double(n));
  }
};

struct AugState {
  Matrix h, a;
  std::vector<Matrix> th;
  double q = 0.0;
  bool with_q = false;

  AugState clone() const {
    AugState s{h.clone(), a.clone(), {}, q, with_q};
    s.th.reserve(th.size());
    for (const auto& t : th) s.th.push_back(t.clone());
    return s;
  }
  void axpy_(double alpha, const AugState& o) {
    axpy(alpha, o.h.data(), h.mut_data(), h.size());
    axpy(alpha, o.a.data(), a.mut_data(), a.size());
    for (size_t i = 0; i < th.size(); ++i) axpy(alpha, o.th[i].data(), th[i].mut_data(), th[i].size());
    q += alpha * o.q;
  }
  double err_norm(const AugState& ynew, const AugState& err, double atol, double rtol) const {
    size_t n = 0;
    double s = norm_part(h, ynew.h, err.h, atol, rtol, n);
    s += norm_part(a, ynew.a, err.a, atol, rtol, n);
    for (size_t i = 0; i < th.size(); ++i) s += norm_part(th[i], ynew.th[i], err.th[i], atol, rtol, n);
    if (with_q) {
      double scale = atol + rtol * std::max(std::fabs(q), std::fabs(ynew.q));
      double r = err.q / scale;
      s += r * r;
      n += 1;
    }
    return std::sqrt(s / double(n));
  }
};

template <class S, class F>
void rk4_fixed_run(S& y, double s0, double s1, int steps, F&& field) {
  double h = (s1 - s0) / steps;
  for (int i = 0; i < steps; ++i) {
    double s = s0 + i * h;
    S k1 = field(s, y);
    S y2 = y.clone();
    y2.axpy_(h / 2, k1);
    S k2 = field(s + h / 2, y2);
    S y3 = y.clone();
    y3.axpy_(h / 2, k2);
    S k3 = field(s + h / 2, y3);
    S y4 = y.clone();
    y4.axpy_(h, k3);
    S k4 = field(s + h, y4);
    y.axpy_(h / 6, k1);
    y.axpy_(h / 3, k2);
    y.axpy_(h / 3, k3);
    y.axpy_(h / 6, k4);
  }
}

template <class S, class F>
void dopri5_run(S& y, double s0, double s1, const SolverConfig& cfg, F&& field, int* steps_taken) {
  double interval = s1 - s0;
  double s = s0;
  double h = interval * 0.1;
  S k1 = field(s, y);
  int total = 0, accepted = 0;
  while (s < s1 - 1e-14 * interval) {
    h = std::min(h, s1 - s);
    if (++total > cfg.max_steps)
      fail(errc::numeric, "ode solver exceeded max_steps at t=" + std::to_string(s));
    S y2 = y.clone();
    y2.axpy_(h * A21, k1);
    S k2 = field(s + C2 * h, y2);
    S y3 = y.clone();
    y3.axpy_(h * A31, k1);
    y3.axpy_(h * A32, k2);
    S k3 = field(s + C3 * h, y3);
    S y4 = y.clone();
    y4.axpy_(h * A41, k1);
    y4.axpy_(h * A42, k2);
    y4.axpy_(h * A43, k3);
    S k4 = field(s + C4 * h, y4);
    S y5 = y.clone();
    y5.axpy_(h * A51, k1);
    y5.axpy_(h * A52, k2);
    y5.axpy_(h * A53, k3);
    y5.axpy_(h * A54, k4);
    S k5 = field(s + C5 * h, y5);
    S y6 = y.clone();
    y6.axpy_(h * A61, k1);
    y6.axpy_(h * A62, k2);
    y6.axpy_(h * A63, k3);
    y6.axpy_(h * A64, k4);
    y6.axpy_(h * A65, k5);
    S k6 = field(s + h, y6);
    S ynew = y.clone();
    ynew.axpy_(h * B1, k1);
    ynew.axpy_(h * B3, k3);
    ynew.axpy_(h * B4, k4);
    ynew.axpy_(h * B5, k5);
    ynew.axpy_(h * B6, k6);
    S k7 = field(s + h, ynew);
    S err = k1.clone();
    err.axpy_(-1.0, k1);  // zero of the right shape
    err.axpy_(h * E1, k1);
    err.axpy_(h * E3, k3);
    err.axpy_(h * E4, k4);
    err.axpy_(h * E5, k5);
    err.axpy_(h * E6, k6);
    err.axpy_(h * E7, k7);
    double e = y.err_norm(ynew, err, cfg.atol, cfg.rtol);
    if (e <= 1.0) {
      s += h;
      y = std::move(ynew);
      k1 = std::move(k7);
      ++accepted;
    }
    double factor = std::clamp(0.9 * std::pow(e, -0.2), 0.2, 5.0);
    h *= factor;
    if (h < 1e-14 * std::max(1.0, std::fabs(interval)))
      fail(errc::numeric, "ode solver step underflow at t=" + std::to_string(s));
  }
  if (steps_taken) *steps_taken = accepted;
}

template <class S, class F>
void integrate(S& y, double s0, double s1, const SolverConfig& cfg, F&& field, int* steps_taken) {
  if (cfg.method == "rk4") {
    int steps = std::max(1, int(std::lround((s1 - s0) * cfg.rk4_steps_per_unit)));
    rk4_fixed_run(y, s0, s1, steps, field);
    if (steps_taken) *steps_taken = steps;
  } else if (cfg.method == "dopri5") {
    dopri5_run(y, s0, s1, cfg, field, steps_taken);
  } else {
    fail(errc::config, "unknown solver method " + cfg.method);
  }
}

struct FieldVjp {
  Matrix f;
  Matrix vjp_h;
  double vjp_t = 0.0;
  std::vector<Matrix> vjp_theta;
};

FieldVjp field_vjp(OdeFunc& f, const Matrix& h, double t, const Matrix& a, bool want_theta,
                   bool want_t) {
  Graph g;
  f.bind(g);
  NodeId hleaf = g.leaf(h);
  NodeId tleaf = g.leaf(Matrix::full(1, 1, t));
  NodeId out = f.build(g, hleaf, tleaf);
  std::vector<NodeId> targets = {hleaf, tleaf};
  const auto& pl = f.param_leaves();
  if (want_theta) targets.insert(targets.end(), pl.begin(), pl.end());
  auto grads = g.backward(out, targets, &a);
  FieldVjp r;
  r.f = g.val(out);
  r.vjp_h = grads[0] >= 0 ? g.val(grads[0]) : Matrix(h.rows(), h.cols());
  if (want_t && grads[1] >= 0) r.vjp_t = g.val(grads[1])(0, 0);
  if (want_theta) {
    r.vjp_theta.reserve(pl.size());
    for (size_t i = 0; i < pl.size(); ++i)
      r.vjp_theta.push_back(grads[2 + i] >= 0 ? g.val(grads[2 + i])
                                              : Matrix(g.val(pl[i]).rows(), g.val(pl[i]).cols()));
  }
  return r;
}

double dot(const Matrix& a, const Matrix& b) {
  const double* p = a.data();
  const double* q = b.data();
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += p[i] * q[i];
  return s;
}

}  // namespace

Matrix OdeFunc::eval(const Matrix& h, double t) {
  Graph g;
  bind(g);
  NodeId out = build(g, g.cnst(h), g.scalar(t));
  return g.val(out);
}

Matrix solve(OdeFunc& f, const Matrix& h0, double t0, double t1, const SolverConfig& cfg,
             int* steps_taken) {
  if (t0 == t1) fail(errc::config, "solve: empty interval");
  MatState y{h0.clone()};
  if (t1 > t0) {
    auto field = [&](double s, const MatState& st) { return MatState{f.eval(st.m, s)}; };
    integrate(y, t0, t1, cfg, field, steps_taken);
  } else {
    // Run the reversed system forward in s = t0 - t.
    auto field = [&](double s, const MatState& st) {
      Matrix v = f.eval(st.m, t0 - s);
      Matrix nv(v.rows(), v.cols());
      num::kern::scale_add(v.data(), -1.0, 0.0, nv.mut_data(), v.size());
      return MatState{std::move(nv)};
    };
    integrate(y, 0.0, t0 - t1, cfg, field, steps_taken);
  }
  return y.m;
}

Trajectory solve_checkpoints(OdeFunc& f, const Matrix& h0, const std::vector<double>& times,
                             const SolverConfig& cfg) {
  if (times.size() < 2) fail(errc::config, "solve_checkpoints: need at least two times");
  for (size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) fail(errc::config, "solve_checkpoints: times must increase");
  Trajectory traj;
  traj.times = times;
  traj.states.push_back(h0.clone());
  Matrix h = h0.clone();
  for (size_t i = 1; i < times.size(); ++i) {
    h = solve(f, h, times[i - 1], times[i], cfg);
    traj.states.push_back(h.clone());
  }
  return traj;
}

NodeId rk4_graph(Graph& g, OdeFunc& f, NodeId h0, NodeId t0, NodeId t1, int steps) {
  if (steps < 1) fail(errc::config, "rk4_graph: steps must be positive");
  NodeId dt = g.scale_add(g.sub(t1, t0), 1.0 / steps, 0.0);
  NodeId half = g.scale_add(dt, 0.5, 0.0);
  NodeId sixth = g.scale_add(dt, 1.0 / 6.0, 0.0);
  NodeId h = h0;
  for (int k = 0; k < steps; ++k) {
    NodeId tk = k == 0 ? t0 : g.add(t0, g.scale_add(dt, double(k), 0.0));
    NodeId th = g.add(tk, half);
    NodeId tn = g.add(tk, dt);
    NodeId k1 = f.build(g, h, tk);
    NodeId k2 = f.build(g, g.add(h, g.mul_scalar(k1, half)), th);
    NodeId k3 = f.build(g, g.add(h, g.mul_scalar(k2, half)), th);
    NodeId k4 = f.build(g, g.add(h, g.mul_scalar(k3, dt)), tn);
    NodeId sum = g.add(g.add(k1, k4), g.scale_add(g.add(k2, k3), 2.0, 0.0));
    h = g.add(h, g.mul_scalar(sum, sixth));
  }
  return h;
}

AdjointResult adjoint_grads(OdeFunc& f, const Matrix& h1, double t0, double t1, const Matrix& dLdh1,
                            const SolverConfig& cfg) {
  if (!(t1 > t0)) fail(errc::config, "adjoint_grads: need t1 > t0");
  std::vector<Matrix> shapes;
  {
    Graph g;
    f.bind(g);
    for (NodeId p : f.param_leaves()) shapes.emplace_back(g.val(p).rows(), g.val(p).cols());
  }
  AugState y{h1.clone(), dLdh1.clone(), std::move(shapes), 0.0, false};
  auto field = [&](double s, const AugState& st) {
    FieldVjp ev = field_vjp(f, st.h, t1 - s, st.a, true, false);
    AugState d{Matrix(st.h.rows(), st.h.cols()), ev.vjp_h, std::move(ev.vjp_theta), 0.0, false};
    num::kern::scale_add(ev.f.data(), -1.0, 0.0, d.h.mut_data(), d.h.size());
    return d;
  };
  integrate(y, 0.0, t1 - t0, cfg, field, nullptr);
  return {std::move(y.a), std::move(y.th), std::move(y.h)};
}

std::vector<double> time_grads(OdeFunc& f, const Trajectory& traj, const std::vector<Matrix>& dLdh,
                               const SolverConfig& cfg, double* max_invariant_drift) {
  size_t m = traj.times.size() - 1;
  if (dLdh.size() != traj.times.size())
    fail(errc::config, "time_grads: dLdh must align with trajectory times");
  std::vector<double> grads(m, 0.0);
  Matrix fm = f.eval(traj.states[m], traj.times[m]);
  grads[m - 1] = dot(dLdh[m], fm);
  Matrix a = dLdh[m].clone();
  double q = grads[m - 1];
  double drift = 0.0;
  Matrix h = traj.states[m].clone();
  for (size_t i = m; i >= 1; --i) {
    double thi = traj.times[i], tlo = traj.times[i - 1];
    AugState y{std::move(h), std::move(a), {}, q, true};
    auto field = [&](double s, const AugState& st) {
      FieldVjp ev = field_vjp(f, st.h, thi - s, st.a, false, true);
      AugState d{Matrix(st.h.rows(), st.h.cols()), ev.vjp_h, {}, -ev.vjp_t, true};
      num::kern::scale_add(ev.f.data(), -1.0, 0.0, d.h.mut_data(), d.h.size());
      return d;
    };
    integrate(y, 0.0, thi - tlo, cfg, field, nullptr);
    Matrix flo = f.eval(traj.states[i - 1], tlo);
    drift = std::max(drift, std::fabs(y.q - dot(y.a, f.eval(y.h, tlo))));
    a = std::move(y.a);
    if (i - 1 >= 1) {
      grads[i - 2] = dot(dLdh[i - 1], flo);
      num::kern::add(a.data(), dLdh[i - 1].data(), a.mut_data(), a.size());
    }
    h = traj.states[i - 1].clone();
    q = dot(a, flo);
  }
  if (max_invariant_drift) *max_invariant_drift = drift;
  return grads;
}

}  // namespace nodetab::ode
