#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "nodetab/ode/odeint.hpp"
#include "ode_funcs.hpp"
#include "oracles.hpp"

using namespace nodetab;
using namespace nodetab::ode;
using namespace testfields;

namespace {

SolverConfig tight() {
  SolverConfig cfg;
  cfg.rtol = 1e-5;
  cfg.atol = 1e-7;
  return cfg;
}

double max_abs_diff(const num::Matrix& a, const num::Matrix& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("exponential growth reaches e") {
  LinearOde f(num::Matrix::full(1, 1, 1.0));
  SolverConfig cfg = tight();
  cfg.rtol = 1e-7;
  cfg.atol = 1e-9;
  num::Matrix h1 = solve(f, num::Matrix::full(1, 1, 1.0), 0.0, 1.0, cfg);
  CHECK(std::fabs(h1(0, 0) - std::exp(1.0)) < 1e-6);
}

TEST_CASE("solver error shrinks as tolerances tighten") {
  // Loose tolerances can share a clamp-limited step sequence, so the claim is
  // monotone non-increase plus a big overall drop, not per-decade halving.
  LinearOde f(num::Matrix::full(1, 1, 1.0));
  std::vector<double> errs;
  std::vector<int> steps;
  for (double rtol : {1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9}) {
    SolverConfig cfg;
    cfg.rtol = rtol;
    cfg.atol = rtol * 1e-2;
    int n = 0;
    num::Matrix h1 = solve(f, num::Matrix::full(1, 1, 1.0), 0.0, 1.0, cfg, &n);
    errs.push_back(std::fabs(h1(0, 0) - std::exp(1.0)));
    steps.push_back(n);
  }
  for (size_t i = 1; i < errs.size(); ++i) CHECK(errs[i] <= errs[i - 1] * 1.05 + 1e-16);
  CHECK(errs.back() <= errs.front() / 100.0);
  CHECK(steps.back() > steps.front());
}

TEST_CASE("constant drift trajectory") {
  ConstOde f(num::Matrix::full(1, 1, 1.0));
  Trajectory traj = solve_checkpoints(f, num::Matrix(1, 1), {0.0, 0.5, 1.0}, tight());
  CHECK(traj.states[0](0, 0) == doctest::Approx(0.0));
  CHECK(traj.states[1](0, 0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(traj.states[2](0, 0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("single checkpoint equals solve") {
  MlpOde f(17, 3);
  num::RngStream rng(5, 7);
  num::Matrix h0 = rng.normal_matrix(2, 3);
  Trajectory traj = solve_checkpoints(f, h0, {0.0, 1.0}, tight());
  num::Matrix direct = solve(f, h0, 0.0, 1.0, tight());
  CHECK(max_abs_diff(traj.states[1], direct) < 1e-9);
}

TEST_CASE("checkpointed integration matches the matrix exponential") {
  num::RngStream rng(23, 1);
  num::Matrix A = rng.normal_matrix(8, 8);
  {
    double* p = A.mut_data();
    for (size_t i = 0; i < A.size(); ++i) p[i] *= 0.4;
  }
  LinearOde f(A);
  num::Matrix h0 = rng.normal_matrix(3, 8);
  Trajectory traj = solve_checkpoints(f, h0, {0.0, 0.3, 0.7, 1.0}, tight());
  num::Matrix want = oracle::matrix_exp_apply(A, h0);
  CHECK(max_abs_diff(traj.states.back(), want) < 1e-5);
  num::Matrix single = solve(f, h0, 0.0, 1.0, tight());
  CHECK(max_abs_diff(single, want) < 1e-5);
}

TEST_CASE("non-monotone checkpoint times are rejected") {
  ConstOde f(num::Matrix::full(1, 1, 1.0));
  CHECK_THROWS_AS(solve_checkpoints(f, num::Matrix(1, 1), {0.0, 0.5, 0.5}, tight()), error);
  CHECK_THROWS_AS(solve_checkpoints(f, num::Matrix(1, 1), {0.0}, tight()), error);
}

TEST_CASE("adjoint with no parameters returns no parameter grads") {
  LinearOde f(num::Matrix::full(1, 1, 0.5), false);
  AdjointResult r = adjoint_grads(f, num::Matrix::full(1, 1, 2.0), 0.0, 1.0,
                                  num::Matrix::full(1, 1, 1.0), tight());
  CHECK(r.dparams.empty());
}

TEST_CASE("adjoint matches the closed form for h' = theta h") {
  // L = h(1) = h0 exp(theta): dL/dtheta = h0 exp(theta), dL/dh0 = exp(theta).
  double theta = 0.7, h0 = 1.3;
  ScalarExpOde f(theta);
  num::Matrix h1 = solve(f, num::Matrix::full(1, 1, h0), 0.0, 1.0, tight());
  AdjointResult r = adjoint_grads(f, h1, 0.0, 1.0, num::Matrix::full(1, 1, 1.0), tight());
  CHECK(oracle::rel_err(r.dparams[0](0, 0), h0 * std::exp(theta)) < 1e-4);
  CHECK(oracle::rel_err(r.dh0(0, 0), std::exp(theta)) < 1e-4);
  CHECK(std::fabs(r.recovered_h0(0, 0) - h0) < 1e-4);
}

TEST_CASE("adjoint dh0 equals the transposed matrix exponential action") {
  num::RngStream rng(31, 2);
  num::Matrix A = rng.normal_matrix(5, 5);
  {
    double* p = A.mut_data();
    for (size_t i = 0; i < A.size(); ++i) p[i] *= 0.5;
  }
  LinearOde f(A);
  num::Matrix h0 = rng.normal_matrix(1, 5);
  num::Matrix h1 = solve(f, h0, 0.0, 1.0, tight());
  num::Matrix w = rng.normal_matrix(1, 5);
  AdjointResult r = adjoint_grads(f, h1, 0.0, 1.0, w, tight());
  // dL/dh0 = w exp(A^T)^T = w exp(A) in the row convention.
  num::Matrix E = oracle::matrix_exp(A);
  num::Matrix want(1, 5);
  for (int j = 0; j < 5; ++j) {
    double s = 0;
    for (int i = 0; i < 5; ++i) s += w(0, i) * E(i, j);
    want.at(0, j) = s;
  }
  CHECK(max_abs_diff(r.dh0, want) < 1e-4);
}

TEST_CASE("adjoint agrees with backprop through the rk4 graph") {
  MlpOde f(41, 4);
  num::RngStream rng(42, 3);
  num::Matrix h0 = rng.normal_matrix(3, 4);
  num::Matrix w = rng.normal_matrix(3, 4);

  num::Graph g;
  f.bind(g);
  NodeId h0n = g.leaf(h0);
  NodeId h1n = rk4_graph(g, f, h0n, g.scalar(0.0), g.scalar(1.0), 64);
  NodeId loss = g.sum_all(g.mul(h1n, g.cnst(w)));
  std::vector<NodeId> targets = {h0n};
  for (NodeId p : f.param_leaves()) targets.push_back(p);
  auto grads = g.backward(loss, targets);

  SolverConfig cfg = tight();
  cfg.rtol = 1e-8;
  cfg.atol = 1e-10;
  AdjointResult r = adjoint_grads(f, g.val(h1n), 0.0, 1.0, w, cfg);
  double scale = 0;
  for (size_t i = 0; i < r.dh0.size(); ++i) scale = std::max(scale, std::fabs(r.dh0.data()[i]));
  CHECK(max_abs_diff(g.val(grads[0]), r.dh0) < 1e-3 * scale);
  for (size_t k = 0; k < r.dparams.size(); ++k) {
    double ps = 1e-6;
    for (size_t i = 0; i < r.dparams[k].size(); ++i)
      ps = std::max(ps, std::fabs(r.dparams[k].data()[i]));
    CHECK(max_abs_diff(g.val(grads[1 + k]), r.dparams[k]) < 1e-3 * ps);
  }
}

TEST_CASE("rk4 graph value matches the adaptive solver") {
  MlpOde f(43, 3);
  num::RngStream rng(44, 4);
  num::Matrix h0 = rng.normal_matrix(2, 3);
  num::Graph g;
  f.bind(g);
  NodeId h1n = rk4_graph(g, f, g.leaf(h0), g.scalar(0.0), g.scalar(1.0), 50);
  num::Matrix want = solve(f, h0, 0.0, 1.0, tight());
  CHECK(max_abs_diff(g.val(h1n), want) < 1e-5);
}

TEST_CASE("time gradient of a constant field is the drift itself") {
  num::Matrix c(1, 2);
  c.at(0, 0) = 2.0;
  c.at(0, 1) = -1.0;
  ConstOde f(c.clone());
  num::Matrix h0(1, 2);
  Trajectory traj = solve_checkpoints(f, h0, {0.0, 1.0}, tight());
  // L = sum(h(t_1)) so dL/dt_1 = sum(c).
  std::vector<num::Matrix> dLdh = {num::Matrix(1, 2), num::Matrix::full(1, 2, 1.0)};
  auto grads = time_grads(f, traj, dLdh, tight());
  CHECK(grads.size() == 1);
  CHECK(grads[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("autonomous fields keep the time-gradient invariant flat") {
  num::RngStream rng(51, 5);
  num::Matrix A = rng.normal_matrix(3, 3);
  {
    double* p = A.mut_data();
    for (size_t i = 0; i < A.size(); ++i) p[i] *= 0.4;
  }
  LinearOde f(A);
  num::Matrix h0 = rng.normal_matrix(1, 3);
  Trajectory traj = solve_checkpoints(f, h0, {0.0, 0.4, 1.0}, tight());
  std::vector<num::Matrix> dLdh = {num::Matrix(1, 3), rng.normal_matrix(1, 3),
                                   rng.normal_matrix(1, 3)};
  double drift = 0;
  auto grads = time_grads(f, traj, dLdh, tight(), &drift);
  CHECK(grads.size() == 2);
  CHECK(drift < 1e-5);
}

TEST_CASE("time gradients match finite differences of the total loss") {
  MlpOde f(61, 3);
  num::RngStream rng(62, 6);
  num::Matrix h0 = rng.normal_matrix(2, 3);
  std::vector<num::Matrix> w = {num::Matrix(2, 3), rng.normal_matrix(2, 3),
                                rng.normal_matrix(2, 3)};
  SolverConfig cfg = tight();
  cfg.rtol = 1e-9;
  cfg.atol = 1e-11;

  auto total_loss = [&](double t1, double t2) {
    Trajectory traj = solve_checkpoints(f, h0, {0.0, t1, t2}, cfg);
    double s = 0;
    for (int k = 1; k <= 2; ++k)
      for (size_t i = 0; i < w[k].size(); ++i) s += w[k].data()[i] * traj.states[k].data()[i];
    return s;
  };

  Trajectory traj = solve_checkpoints(f, h0, {0.0, 0.35, 1.0}, cfg);
  auto grads = time_grads(f, traj, w, cfg);

  double eps = 1e-4;
  double fd1 = (total_loss(0.35 + eps, 1.0) - total_loss(0.35 - eps, 1.0)) / (2 * eps);
  double fd2 = (total_loss(0.35, 1.0 + eps) - total_loss(0.35, 1.0 - eps)) / (2 * eps);
  CHECK(oracle::rel_err(grads[0], fd1, 1e-4) < 1e-3);
  CHECK(oracle::rel_err(grads[1], fd2, 1e-4) < 1e-3);
}

TEST_CASE("forward then backward integration recovers the start") {
  MlpOde f(71, 4);
  num::RngStream rng(72, 7);
  SolverConfig cfg = tight();
  num::Matrix h0 = rng.normal_matrix(5, 4);
  num::Matrix h1 = solve(f, h0, 0.0, 1.0, cfg);
  num::Matrix back = solve(f, h1, 1.0, 0.0, cfg);
  CHECK(max_abs_diff(back, h0) < 10 * cfg.rtol);
}

TEST_CASE("monotone scalar flows preserve ordering") {
  MlpOde f(81, 1);
  SolverConfig cfg = tight();
  std::vector<double> starts = {-2.0, -1.0, -0.3, 0.2, 0.9, 2.1};
  std::vector<double> ends;
  for (double s : starts) ends.push_back(solve(f, num::Matrix::full(1, 1, s), 0.0, 1.0, cfg)(0, 0));
  for (size_t i = 1; i < ends.size(); ++i) CHECK(ends[i] > ends[i - 1]);
}

TEST_CASE("distinct inputs never collapse") {
  MlpOde f(91, 3);
  num::RngStream rng(92, 8);
  SolverConfig cfg = tight();
  num::Matrix h0 = rng.normal_matrix(20, 3);
  num::Matrix h1 = solve(f, h0, 0.0, 1.0, cfg);
  for (int i = 0; i < 20; ++i)
    for (int j = i + 1; j < 20; ++j) {
      double d0 = 0, d1 = 0;
      for (int c = 0; c < 3; ++c) {
        d0 += (h0(i, c) - h0(j, c)) * (h0(i, c) - h0(j, c));
        d1 += (h1(i, c) - h1(j, c)) * (h1(i, c) - h1(j, c));
      }
      if (std::sqrt(d0) >= 0.05) CHECK(std::sqrt(d1) > 100 * cfg.rtol);
    }
}

TEST_CASE("perturbation growth stays within a stable Lipschitz constant") {
  MlpOde f(95, 3);
  SolverConfig cfg = tight();
  num::RngStream rng(96, 9);
  num::Matrix h0 = rng.normal_matrix(1, 3);
  num::Matrix dir = rng.normal_matrix(1, 3);
  double dn = 0;
  for (int c = 0; c < 3; ++c) dn += dir(0, c) * dir(0, c);
  dn = std::sqrt(dn);
  num::Matrix base = solve(f, h0, 0.0, 1.0, cfg);
  std::vector<double> ks;
  for (double mag : {1e-1, 1e-2, 1e-3, 1e-4}) {
    num::Matrix hp = h0.clone();
    for (int c = 0; c < 3; ++c) hp.at(0, c) += mag * dir(0, c) / dn;
    num::Matrix out = solve(f, hp, 0.0, 1.0, cfg);
    double d = 0;
    for (int c = 0; c < 3; ++c) d += (out(0, c) - base(0, c)) * (out(0, c) - base(0, c));
    ks.push_back(std::sqrt(d) / mag);
  }
  double kmin = ks[0], kmax = ks[0];
  for (double k : ks) {
    kmin = std::min(kmin, k);
    kmax = std::max(kmax, k);
  }
  CHECK(kmax <= 2.0 * kmin);
}

TEST_CASE("max step budget raises a structured error") {
  LinearOde f(num::Matrix::full(1, 1, 40.0));
  SolverConfig cfg;
  cfg.rtol = 1e-12;
  cfg.atol = 1e-14;
  cfg.max_steps = 3;
  CHECK_THROWS_AS(solve(f, num::Matrix::full(1, 1, 1.0), 0.0, 1.0, cfg), error);
}
