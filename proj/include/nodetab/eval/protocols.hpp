#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nodetab/num/rng.hpp"
#include "nodetab/prep/table.hpp"
#include "nodetab/sim/oracle.hpp"

namespace nodetab::eval {

// Likelihood fitness: how well the oracle explains the synthetic rows, and
// how well an oracle refit from those rows explains held-out real ones.
// Both in mean nats/row.
struct LikelihoodFitness {
  double pr_f_s = 0.0;         // Pr(F | S)
  double pr_test_sprime = 0.0; // Pr(T_test | S')
};

LikelihoodFitness likelihood_fitness(const sim::GmmOracle& S, const prep::Table& F,
                                     const prep::Table& T_test, num::RngStream& rng);
LikelihoodFitness likelihood_fitness(const sim::BnOracle& S, const prep::Table& F,
                                     const prep::Table& T_test);

struct LearnerScore {
  std::string learner;
  double score = 0.0;
  bool na = false;
};

struct MlEfficacy {
  std::string task;    // "binary" | "multiclass" | "regression"
  std::string metric;  // "f1" | "macro_f1" | "r2"
  std::vector<LearnerScore> scores;
  double best = 0.0;
  bool na = false;  // every learner N/A (the training table has one class)
};

// Learners trained on F, scored on T_test.  The task follows the label
// column kind: discrete with two categories is binary F1 (positive class =
// category 1), more is macro-F1, continuous is R^2.
MlEfficacy ml_efficacy(const prep::Table& F, const prep::Table& T_test, int label_col,
                       uint64_t seed);

struct ClusteringScore {
  int chosen_k = 0;
  double sil_f = 0.0;
  double sil_train = 0.0;
  double sil_test = 0.0;
  bool degenerate = false;  // clustering collapsed to fewer than two groups
};

// K-means++ on F for K in {c, 2c, 3c}, keeping the K with the best
// silhouette on F; real tables are scored under an assignment to the found
// centroids.
ClusteringScore clustering_score(const prep::Table& F, const prep::Table& T_train,
                                 const prep::Table& T_test, int n_classes, uint64_t seed);

struct EvalReport {
  uint64_t seed = 0;
  std::string config_hash;
  long rows_f = 0, rows_train = 0, rows_test = 0;
  bool has_likelihood = false;
  LikelihoodFitness likelihood;
  bool has_ml = false;
  MlEfficacy ml;
  bool has_clustering = false;
  ClusteringScore clustering;

  std::string to_json() const;
};

// Plot data for an interpolation path: one "column,e,value" line per cell,
// e running 0..1 down the rows.
std::string interp_triples(const prep::Table& path);

}  // namespace nodetab::eval
