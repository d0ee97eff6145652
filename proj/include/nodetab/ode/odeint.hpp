#pragma once

#include <string>
#include <vector>

#include "nodetab/num/graph.hpp"
#include "nodetab/num/matrix.hpp"

namespace nodetab::ode {

using num::Graph;
using num::Matrix;
using num::NodeId;

struct SolverConfig {
  std::string method = "dopri5";  // "dopri5" | "rk4"
  double rtol = 1e-3;
  double atol = 1e-4;
  int max_steps = 1000;
  int rk4_steps_per_unit = 10;
};

// A vector field over batched states (rows are independent samples).  bind()
// creates this graph's parameter leaves; build() may then be called any
// number of times against the same graph.
class OdeFunc {
public:
  virtual ~OdeFunc() = default;
  virtual int dim() const = 0;
  virtual void bind(Graph& g) = 0;
  virtual const std::vector<NodeId>& param_leaves() const = 0;
  virtual NodeId build(Graph& g, NodeId h, NodeId t) = 0;

  // Value-only evaluation through a scratch graph.
  Matrix eval(const Matrix& h, double t);
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Matrix> states;
};

// Integrates h' = f(h, t) from t0 to t1.  t1 < t0 runs the reversed system
// with a negated field.
Matrix solve(OdeFunc& f, const Matrix& h0, double t0, double t1, const SolverConfig& cfg,
             int* steps_taken = nullptr);

// States at every requested time; times strictly increasing, h0 given at
// times.front().
Trajectory solve_checkpoints(OdeFunc& f, const Matrix& h0, const std::vector<double>& times,
                             const SolverConfig& cfg);

// Differentiable fixed-step rk4 unroll; t0/t1 are scalar nodes.
NodeId rk4_graph(Graph& g, OdeFunc& f, NodeId h0, NodeId t0, NodeId t1, int steps);

struct AdjointResult {
  Matrix dh0;
  std::vector<Matrix> dparams;  // aligned with param_leaves()
  Matrix recovered_h0;
};

// Continuous adjoint for L = L(h(t1)): one reverse sweep of the augmented
// system, O(1) memory in the step count.
AdjointResult adjoint_grads(OdeFunc& f, const Matrix& h1, double t0, double t1, const Matrix& dLdh1,
                            const SolverConfig& cfg);

// Gradients of a loss L(h(t_1), .., h(t_m)) with respect to the checkpoint
// times, by a reverse sweep that carries only one adjoint state.  dLdh is
// aligned with traj.times (entry 0 unused); returns [dL/dt_1 .. dL/dt_m].
std::vector<double> time_grads(OdeFunc& f, const Trajectory& traj, const std::vector<Matrix>& dLdh,
                               const SolverConfig& cfg, double* max_invariant_drift = nullptr);

}  // namespace nodetab::ode
