#pragma once

#include <string>
#include <vector>

#include "nodetab/num/matrix.hpp"
#include "nodetab/num/rng.hpp"
#include "nodetab/prep/table.hpp"

namespace nodetab::sim {

// Isotropic Gaussian mixture over R^d with per-component spread.
struct GmmOracle {
  num::Matrix means;  // components x dim
  std::vector<double> w;
  std::vector<double> sigma;

  int components() const { return means.rows(); }
  int dim() const { return means.cols(); }
  // Continuous columns x,y (or x0..) plus, when asked, a component label.
  prep::TableSchema schema(bool with_label = false) const;
  void validate() const;
};

GmmOracle make_grid_oracle(int n, double spacing, double sigma);
GmmOracle make_ring_oracle(int k, double radius, double sigma);

std::string gmm_to_json(const GmmOracle& o);
GmmOracle gmm_from_json(const std::string& text);

prep::Table gmm_sample(const GmmOracle& o, int n, num::RngStream& rng, bool with_label = false);
// Mean log-density in nats/row over the table's continuous columns (which
// must number exactly o.dim(); discrete columns are ignored).
double gmm_loglik(const GmmOracle& o, const prep::Table& t);
// Refit with the template's component count: k-means++ seeding, a few Lloyd
// rounds, then EM with per-component isotropic spread.
GmmOracle gmm_fit(const GmmOracle& tmpl, const prep::Table& t, num::RngStream& rng);

// Discrete Bayesian network.  A node's CPT has one row per joint parent
// state (first listed parent most significant) and one column per category.
struct BnNode {
  std::string name;
  int arity = 2;
  std::vector<std::string> categories;  // size arity
  std::vector<int> parents;             // node indices
  num::Matrix cpt;
};

struct BnOracle {
  std::vector<BnNode> nodes;
  bool smoothed = false;

  std::vector<int> topo_order() const;  // throws on cycles
  prep::TableSchema schema() const;
  void validate() const;
};

BnOracle bn_from_json(const std::string& text);
std::string bn_to_json(const BnOracle& bn);

prep::Table bn_sample(const BnOracle& bn, int n, num::RngStream& rng);
// Mean joint log-probability in nats/row.  A row hitting a zero-probability
// CPT entry makes the result -inf; zero_rows counts such rows.
double bn_loglik(const BnOracle& bn, const prep::Table& t, int* zero_rows = nullptr);
// Refit CPTs by maximum likelihood with add-one smoothing; structure kept.
BnOracle bn_fit(const BnOracle& tmpl, const prep::Table& t);

}  // namespace nodetab::sim
