#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "nodetab/eval/protocols.hpp"
#include "nodetab/gan/train.hpp"
#include "nodetab/io/csv.hpp"
#include "nodetab/io/runconfig.hpp"
#include "nodetab/num/error.hpp"
#include "nodetab/sim/oracle.hpp"

namespace {

using namespace nodetab;

int log_level() {
  const char* v = std::getenv("NODETAB_LOG");
  return v ? std::atoi(v) : 0;
}

void note(int level, const std::string& msg) {
  if (log_level() >= level) std::cerr << msg << "\n";
}

const char* errc_name(errc c) {
  switch (c) {
    case errc::config: return "config";
    case errc::io: return "io";
    case errc::schema: return "schema";
    case errc::numeric: return "numeric";
  }
  return "error";
}

// "path.csv" -> "path", anything else unchanged.
std::string csv_stem(const std::string& path) {
  if (path.size() > 4 && path.compare(path.size() - 4, 4, ".csv") == 0)
    return path.substr(0, path.size() - 4);
  return path;
}

std::string sibling_if_exists(const std::string& stem, const std::string& suffix) {
  std::string p = stem + suffix;
  return std::filesystem::exists(p) ? p : std::string();
}

prep::Table read_table(const std::string& path, const std::string& schema_path) {
  if (schema_path.empty()) return io::read_csv(path);
  return io::read_csv(path, prep::TableSchema::from_json(io::read_text_file(schema_path)));
}

// ------------------------------------------------------------------ train

struct TrainOpts {
  std::string config, out, ablation;
  uint64_t seed = 0;
  bool seed_set = false;
};

void run_train(const TrainOpts& o) {
  io::RunConfig rc = io::RunConfig::from_json(io::read_text_file(o.config));
  if (o.seed_set) rc.seed = o.seed;
  if (!o.ablation.empty()) rc.train.ablation = gan::ablation_from(o.ablation);
  rc.train.seed = rc.seed;
  if (rc.train_csv.empty()) fail(errc::config, "train: config sets no train_csv");
  std::string out = o.out.empty() ? rc.out_dir + "/model.ntbk" : o.out;
  std::string hash = rc.hash();

  prep::Table data = read_table(rc.train_csv, rc.schema_json);
  note(1, "train: " + std::to_string(data.rows()) + " rows, " +
              std::to_string(rc.train.max_epoch) + " epochs, seed " + std::to_string(rc.seed));
  gan::Synthesizer s = gan::train(data, rc.train);

  nlohmann::ordered_json meta{{"config_hash", hash}, {"seed", rc.seed}};
  gan::save_checkpoint(s, out, meta.dump());

  nlohmann::ordered_json log;
  log["config_hash"] = hash;
  log["seed"] = rc.seed;
  log["diverged"] = s.diverged;
  log["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : s.log) {
    log["entries"].push_back({{"epoch", e.epoch},
                              {"loss_d", e.loss_d},
                              {"loss_g", e.loss_g},
                              {"loss_match", e.loss_match},
                              {"gp", e.gp},
                              {"t", e.t}});
    note(2, "epoch " + std::to_string(e.epoch) + " loss_d=" + std::to_string(e.loss_d) +
                " loss_g=" + std::to_string(e.loss_g));
  }
  io::write_text_file(out + ".log", log.dump(2) + "\n");
  note(1, "wrote " + out + " and " + out + ".log");
  if (s.diverged) note(1, "train: stopped early, losses diverged");
}

// --------------------------------------------------------------- generate

struct GenerateOpts {
  std::string model, out;
  long rows = 0;
  uint64_t seed = 0;
  bool seed_set = false;
};

io::CsvMeta model_meta(const std::string& model_path, const gan::Synthesizer& s, uint64_t seed) {
  io::CsvMeta meta;
  meta.seed = seed;
  meta.present = true;
  std::string stored = gan::checkpoint_meta(model_path);
  if (!stored.empty()) {
    auto j = nlohmann::json::parse(stored, nullptr, false);
    if (!j.is_discarded()) meta.config_hash = j.value("config_hash", std::string());
  }
  if (meta.config_hash.empty())
    meta.config_hash = io::hex64(io::fnv1a64(gan::train_config_to_json(s.cfg)));
  return meta;
}

void run_generate(const GenerateOpts& o) {
  gan::Synthesizer s = gan::load_checkpoint(o.model);
  uint64_t seed = o.seed_set ? o.seed : s.cfg.seed;
  prep::Table t = gan::generate(s, o.rows, seed);
  io::CsvMeta meta = model_meta(o.model, s, seed);
  io::write_csv(o.out, t, &meta);
  note(1, "wrote " + std::to_string(t.rows()) + " rows to " + o.out);
}

// -------------------------------------------------------------- simulate

struct SimulateOpts {
  std::string oracle, out;
  long rows = 0, test_rows = -1;
  uint64_t seed = 1;
  int components = 0;
  double sigma = 0.05, radius = 1.0, spacing = 2.0;
  bool with_label = false;
};

void run_simulate(const SimulateOpts& o) {
  long test_rows = o.test_rows < 0 ? o.rows : o.test_rows;
  std::string stem = csv_stem(o.out);
  std::string train_path = stem + ".csv";

  nlohmann::ordered_json cfg{{"cmd", "simulate"}, {"oracle", o.oracle},      {"rows", o.rows},
                             {"test_rows", test_rows}, {"seed", o.seed},     {"components", o.components},
                             {"sigma", o.sigma},   {"radius", o.radius},     {"spacing", o.spacing},
                             {"with_label", o.with_label}};
  io::CsvMeta meta{io::hex64(io::fnv1a64(cfg.dump())), o.seed, true};

  num::RngStream rng(o.seed, num::stream::sim);
  prep::Table train_t, test_t;
  std::string spec;
  if (o.oracle.rfind("bn:", 0) == 0) {
    if (o.with_label) fail(errc::config, "simulate: --with-label applies to gmm oracles");
    sim::BnOracle bn = sim::bn_from_json(io::read_text_file(o.oracle.substr(3)));
    train_t = sim::bn_sample(bn, int(o.rows), rng);
    test_t = sim::bn_sample(bn, int(test_rows), rng);
    spec = sim::bn_to_json(bn);
  } else if (o.oracle == "grid" || o.oracle == "ring") {
    sim::GmmOracle g = o.oracle == "grid"
                           ? sim::make_grid_oracle(o.components > 0 ? o.components : 5, o.spacing,
                                                   o.sigma)
                           : sim::make_ring_oracle(o.components > 0 ? o.components : 8, o.radius,
                                                   o.sigma);
    train_t = sim::gmm_sample(g, int(o.rows), rng, o.with_label);
    test_t = sim::gmm_sample(g, int(test_rows), rng, o.with_label);
    spec = sim::gmm_to_json(g);
  } else {
    fail(errc::config, "simulate: unknown oracle '" + o.oracle + "' (grid, ring, or bn:<path>)");
  }

  io::write_csv(train_path, train_t, &meta);
  io::write_csv(stem + "_test.csv", test_t, &meta);
  io::write_text_file(stem + "_oracle.json", spec);
  io::write_text_file(stem + "_schema.json", train_t.schema.to_json());
  note(1, "wrote " + train_path + ", " + stem + "_test.csv, " + stem + "_oracle.json, " + stem +
              "_schema.json");
}

// ------------------------------------------------------------------ eval

struct EvalOpts {
  std::string synth, config, real, test, oracle, schema, label, out;
  int classes = 0;
  uint64_t seed = 11;
};

void run_eval(const EvalOpts& o) {
  EvalOpts e = o;
  if (!e.config.empty()) {
    io::RunConfig rc = io::RunConfig::from_json(io::read_text_file(e.config));
    if (e.real.empty()) e.real = rc.train_csv;
    if (e.test.empty()) e.test = rc.test_csv;
    if (e.oracle.empty()) e.oracle = rc.oracle_json;
    if (e.schema.empty()) e.schema = rc.schema_json;
  }
  if (e.real.empty()) fail(errc::config, "eval: no real table (--real or a config with train_csv)");
  std::string stem = csv_stem(e.real);
  if (e.test.empty()) e.test = sibling_if_exists(stem, "_test.csv");
  if (e.oracle.empty()) e.oracle = sibling_if_exists(stem, "_oracle.json");
  if (e.schema.empty()) e.schema = sibling_if_exists(stem, "_schema.json");

  bool want_ml = !e.label.empty();
  bool want_clusters = e.classes > 0;
  bool want_likelihood = !e.oracle.empty();
  if (!want_ml && !want_clusters && !want_likelihood)
    fail(errc::config, "eval: nothing to evaluate (need an oracle, --label, or --classes)");
  if (e.test.empty())
    fail(errc::config, "eval: no held-out table (--test or a <real>_test.csv sibling)");

  prep::Table real = read_table(e.real, e.schema);
  prep::Table synth = io::read_csv(e.synth, real.schema);
  prep::Table test = io::read_csv(e.test, real.schema);

  eval::EvalReport rep;
  rep.seed = e.seed;
  nlohmann::ordered_json cfg{{"cmd", "eval"},     {"synth", e.synth},   {"real", e.real},
                             {"test", e.test},    {"oracle", e.oracle}, {"schema", e.schema},
                             {"label", e.label},  {"classes", e.classes}, {"seed", e.seed}};
  rep.config_hash = io::hex64(io::fnv1a64(cfg.dump()));
  rep.rows_f = synth.rows();
  rep.rows_train = real.rows();
  rep.rows_test = test.rows();

  if (want_likelihood) {
    std::string text = io::read_text_file(e.oracle);
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail(errc::config, "eval: oracle spec is not JSON");
    if (j.contains("nodes")) {
      sim::BnOracle bn = sim::bn_from_json(text);
      rep.likelihood = eval::likelihood_fitness(bn, synth, test);
    } else {
      sim::GmmOracle g = sim::gmm_from_json(text);
      num::RngStream rng(e.seed, num::stream::fit);
      rep.likelihood = eval::likelihood_fitness(g, synth, test, rng);
    }
    rep.has_likelihood = true;
  }
  if (want_ml) {
    int col = real.schema.find(e.label);
    if (col < 0) fail(errc::config, "eval: no column named '" + e.label + "'");
    rep.ml = eval::ml_efficacy(synth, test, col, e.seed);
    rep.has_ml = true;
  }
  if (want_clusters) {
    rep.clustering = eval::clustering_score(synth, real, test, e.classes, e.seed);
    rep.has_clustering = true;
  }

  std::string text = rep.to_json();
  if (e.out.empty()) {
    std::cout << text;
  } else {
    io::write_text_file(e.out, text);
    note(1, "wrote " + e.out);
  }
}

// ----------------------------------------------------------- interpolate

struct InterpolateOpts {
  std::string model, out, triples;
  int rows = 9;
  uint64_t seed = 0;
  bool seed_set = false;
};

void run_interpolate(const InterpolateOpts& o) {
  if (o.rows < 2) fail(errc::config, "interpolate: need at least two rows");
  gan::Synthesizer s = gan::load_checkpoint(o.model);
  uint64_t seed = o.seed_set ? o.seed : s.cfg.seed;
  num::RngStream rng(seed, num::stream::z);
  std::vector<double> z1(s.gen.z_dim()), z2(s.gen.z_dim());
  for (double& v : z1) v = rng.normal();
  for (double& v : z2) v = rng.normal();
  gan::CondSample c;
  if (s.gen.cond_layout().blocks() > 0) c = {0, 0};
  prep::Table path = gan::interpolate(s, z1, z2, c, o.rows - 1, seed);
  io::CsvMeta meta = model_meta(o.model, s, seed);
  io::write_csv(o.out, path, &meta);
  if (!o.triples.empty()) io::write_text_file(o.triples, eval::interp_triples(path));
  note(1, "wrote " + o.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tabular data synthesizer with ODE-based adversarial networks"};
  app.require_subcommand(1);

  TrainOpts tr;
  auto* ct = app.add_subcommand("train", "train a model from a run config");
  ct->add_option("--config", tr.config, "run config JSON")->required();
  ct->add_option("--out", tr.out, "checkpoint path (default <out_dir>/model.ntbk)");
  ct->add_option("--seed", tr.seed, "override the config seed")->each([&](const std::string&) {
    tr.seed_set = true;
  });
  ct->add_option("--ablation", tr.ablation, "full, fixed, only_g, or only_d")
      ->check(CLI::IsMember({"full", "fixed", "only_g", "only_d"}));
  ct->callback([&] { run_train(tr); });

  GenerateOpts ge;
  auto* cg = app.add_subcommand("generate", "sample rows from a trained model");
  cg->add_option("--model", ge.model, "checkpoint path")->required();
  cg->add_option("--rows", ge.rows, "row count")->required()->check(CLI::NonNegativeNumber);
  cg->add_option("--out", ge.out, "output CSV")->required();
  cg->add_option("--seed", ge.seed, "sampling seed (default: training seed)")
      ->each([&](const std::string&) { ge.seed_set = true; });
  cg->callback([&] { run_generate(ge); });

  SimulateOpts si;
  auto* cs = app.add_subcommand("simulate", "sample train/test tables from an oracle");
  cs->add_option("--oracle", si.oracle, "grid, ring, or bn:<spec.json>")->required();
  cs->add_option("--rows", si.rows, "train rows")->required()->check(CLI::PositiveNumber);
  cs->add_option("--test-rows", si.test_rows, "test rows (default: same as --rows)");
  cs->add_option("--out", si.out, "train CSV path; test/oracle/schema go beside it")->required();
  cs->add_option("--seed", si.seed, "sampling seed");
  cs->add_option("--components", si.components, "mixture components (ring) or grid side");
  cs->add_option("--sigma", si.sigma, "component spread");
  cs->add_option("--radius", si.radius, "ring radius");
  cs->add_option("--spacing", si.spacing, "grid spacing");
  cs->add_flag("--with-label", si.with_label, "add the component label column");
  cs->callback([&] { run_simulate(si); });

  EvalOpts ev;
  auto* ce = app.add_subcommand("eval", "score a synthetic table against real data");
  ce->add_option("--synth", ev.synth, "synthetic CSV")->required();
  ce->add_option("--config", ev.config, "run config supplying default paths");
  ce->add_option("--real", ev.real, "real training CSV");
  ce->add_option("--test", ev.test, "held-out CSV (default <real>_test.csv)");
  ce->add_option("--oracle", ev.oracle, "oracle spec JSON (default <real>_oracle.json)");
  ce->add_option("--schema", ev.schema, "schema JSON (default <real>_schema.json)");
  ce->add_option("--label", ev.label, "label column for ML efficacy");
  ce->add_option("--classes", ev.classes, "class count for clustering");
  ce->add_option("--seed", ev.seed, "evaluation seed");
  ce->add_option("--out", ev.out, "report path (default stdout)");
  ce->callback([&] { run_eval(ev); });

  InterpolateOpts in;
  auto* ci = app.add_subcommand("interpolate", "decode a path between two noise vectors");
  ci->add_option("--model", in.model, "checkpoint path")->required();
  ci->add_option("--out", in.out, "output CSV")->required();
  ci->add_option("--rows", in.rows, "rows along the path (default 9)");
  ci->add_option("--seed", in.seed, "noise seed (default: training seed)")
      ->each([&](const std::string&) { in.seed_set = true; });
  ci->add_option("--triples", in.triples, "also write column,e,value plot data here");
  ci->callback([&] { run_interpolate(in); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: [config] " << e.what() << "\n";
    return 2;
  } catch (const nodetab::error& e) {
    std::cerr << "error: [" << errc_name(e.code()) << "] " << e.what() << "\n";
    return int(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: [internal] " << e.what() << "\n";
    return 1;
  }
  return 0;
}
