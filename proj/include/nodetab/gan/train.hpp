#pragma once

#include <string>
#include <vector>

#include "nodetab/gan/nets.hpp"
#include "nodetab/prep/table.hpp"
#include "nodetab/prep/transform.hpp"

namespace nodetab::gan {

struct TrainLogEntry {
  int epoch = 0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double loss_match = 0.0;
  double gp = 0.0;  // unscaled penalty term
  std::vector<double> t;
};

// A trained model: everything needed to sample rows.
struct Synthesizer {
  prep::Transformer transformer;
  TrainConfig cfg;
  Generator gen;
  Discriminator disc;
  TimePoints times;
  std::vector<TrainLogEntry> log;
  bool diverged = false;
};

// Adversarial training: per mini-batch one discriminator step, one generator
// step (adversarial plus matching loss), then a gradient step on the
// integration time points.  Rates decay by cfg.decay every cfg.decay_every
// epochs.  Stops early when a loss leaves (-1e6, 1e6), leaving the partial
// log in place.
Synthesizer train(const prep::Table& data, const TrainConfig& cfg);

// n rows from the trained model.  A fixed condition applies to every row;
// otherwise conditions are drawn per row.
prep::Table generate(Synthesizer& s, long n, uint64_t seed, const CondSample* fixed = nullptr);

// Rows decoded from e*z1 + (1-e)*z2 for e in {0, 1/steps, .., 1} under one
// condition; every row shares the same gumbel draws so only z varies.
prep::Table interpolate(Synthesizer& s, const std::vector<double>& z1,
                        const std::vector<double>& z2, CondSample c, int steps, uint64_t seed);

// Deterministic loss evaluation on given batches (no dropout, running
// batchnorm statistics).  dsoft are the soft discrete head outputs aligned
// with cond_c; pass empty matrices when the schema has no discrete columns.
struct LossReport {
  double loss_d = 0.0;
  double loss_g = 0.0;
  double loss_match = 0.0;
  double gp = 0.0;
};
LossReport eval_losses(Discriminator& disc, const std::vector<double>& t, const Matrix& real,
                       const Matrix& fake, const Matrix& dsoft, const Matrix& cond_c,
                       double gp_lambda, num::RngStream& mix_rng);

// Complete round-trippable JSON form of a TrainConfig; the parser fills
// missing keys from defaults so hand-written configs can stay short.
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

// meta is an opaque caller string stored in the header (run provenance);
// checkpoint_meta reads it back without reconstructing the model.
void save_checkpoint(const Synthesizer& s, const std::string& path, const std::string& meta = "");
Synthesizer load_checkpoint(const std::string& path);
std::string checkpoint_meta(const std::string& path);

}  // namespace nodetab::gan
