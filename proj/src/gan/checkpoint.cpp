#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "nodetab/gan/train.hpp"
#include "nodetab/num/error.hpp"

namespace nodetab::gan {

namespace {

constexpr char kMagic[4] = {'N', 'T', 'B', 'K'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.write(b, 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.write(b, 8);
}

uint32_t get_u32(std::istream& in) {
  char b[4];
  in.read(b, 4);
  uint32_t v;
  std::memcpy(&v, b, 4);
  return v;
}

uint64_t get_u64(std::istream& in) {
  char b[8];
  in.read(b, 8);
  uint64_t v;
  std::memcpy(&v, b, 8);
  return v;
}

nlohmann::json config_json(const TrainConfig& c) {
  return {{"lr_g", c.lr_g},
          {"lr_d", c.lr_d},
          {"lr_t", c.lr_t},
          {"gp_lambda", c.gp_lambda},
          {"batch", c.batch},
          {"m", c.m},
          {"max_epoch", c.max_epoch},
          {"decay", c.decay},
          {"decay_every", c.decay_every},
          {"z_dim", c.z_dim},
          {"max_modes", c.max_modes},
          {"tau", c.tau},
          {"leaky_slope", c.leaky_slope},
          {"dropout", c.dropout},
          {"learn_tm", c.learn_tm},
          {"ablation", ablation_name(c.ablation)},
          {"seed", c.seed},
          {"rk4_steps_per_unit", c.rk4_steps_per_unit},
          {"t_batch", c.t_batch},
          {"gp_batch", c.gp_batch},
          {"solver",
           {{"method", c.solver.method},
            {"rtol", c.solver.rtol},
            {"atol", c.solver.atol},
            {"max_steps", c.solver.max_steps},
            {"rk4_steps_per_unit", c.solver.rk4_steps_per_unit}}}};
}

// Missing keys keep their defaults so hand-written configs can stay short;
// checkpoints always carry the complete set.
TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr_g = j.value("lr_g", c.lr_g);
  c.lr_d = j.value("lr_d", c.lr_d);
  c.lr_t = j.value("lr_t", c.lr_t);
  c.gp_lambda = j.value("gp_lambda", c.gp_lambda);
  c.batch = j.value("batch", c.batch);
  c.m = j.value("m", c.m);
  c.max_epoch = j.value("max_epoch", c.max_epoch);
  c.decay = j.value("decay", c.decay);
  c.decay_every = j.value("decay_every", c.decay_every);
  c.z_dim = j.value("z_dim", c.z_dim);
  c.max_modes = j.value("max_modes", c.max_modes);
  c.tau = j.value("tau", c.tau);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.dropout = j.value("dropout", c.dropout);
  c.learn_tm = j.value("learn_tm", c.learn_tm);
  c.ablation = ablation_from(j.value("ablation", std::string("full")));
  c.seed = j.value("seed", c.seed);
  c.rk4_steps_per_unit = j.value("rk4_steps_per_unit", c.rk4_steps_per_unit);
  c.t_batch = j.value("t_batch", c.t_batch);
  c.gp_batch = j.value("gp_batch", c.gp_batch);
  if (j.contains("solver")) {
    const auto& sj = j.at("solver");
    c.solver.method = sj.value("method", c.solver.method);
    c.solver.rtol = sj.value("rtol", c.solver.rtol);
    c.solver.atol = sj.value("atol", c.solver.atol);
    c.solver.max_steps = sj.value("max_steps", c.solver.max_steps);
    c.solver.rk4_steps_per_unit = sj.value("rk4_steps_per_unit", c.solver.rk4_steps_per_unit);
  }
  return c;
}

nlohmann::json manifest(const num::ParamStore& store) {
  auto arr = nlohmann::json::array();
  for (const auto& t : store.tensors())
    arr.push_back({{"name", t.name},
                   {"rows", t.value.rows()},
                   {"cols", t.value.cols()},
                   {"trainable", t.trainable}});
  return arr;
}

void check_manifest(const nlohmann::json& arr, const num::ParamStore& store, const char* which) {
  if (int(arr.size()) != store.size())
    fail(errc::io, std::string("checkpoint: ") + which + " tensor count mismatch");
  for (int i = 0; i < store.size(); ++i) {
    const auto& t = store.at(i);
    const auto& e = arr[i];
    if (e.at("name").get<std::string>() != t.name ||
        e.at("rows").get<int>() != t.value.rows() || e.at("cols").get<int>() != t.value.cols() ||
        e.at("trainable").get<bool>() != t.trainable)
      fail(errc::io, std::string("checkpoint: ") + which + " manifest entry " + std::to_string(i) +
                         " does not match this build (" + t.name + ")");
  }
}

void write_store(std::ostream& out, const num::ParamStore& store) {
  for (const auto& t : store.tensors())
    out.write(reinterpret_cast<const char*>(t.value.data()),
              std::streamsize(sizeof(double) * t.value.size()));
}

void read_store(std::istream& in, num::ParamStore& store) {
  for (auto& t : store.tensors())
    in.read(reinterpret_cast<char*>(t.value.mut_data()),
            std::streamsize(sizeof(double) * t.value.size()));
}

}  // namespace

std::string train_config_to_json(const TrainConfig& c) { return config_json(c).dump(2) + "\n"; }

TrainConfig train_config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(errc::config, "train config: invalid JSON");
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    fail(errc::config, std::string("train config: ") + e.what());
  }
}

void save_checkpoint(const Synthesizer& s, const std::string& path, const std::string& meta) {
  nlohmann::json j;
  j["format"] = kVersion;
  j["config"] = config_json(s.cfg);
  j["transformer"] = nlohmann::json::parse(s.transformer.to_json());
  j["times"] = {{"u", s.times.u}, {"m", s.times.m}, {"learn_tm", s.times.learn_tm}};
  j["gen"] = manifest(s.gen.params());
  j["disc"] = manifest(s.disc.params());
  if (!meta.empty()) j["meta"] = meta;
  std::string head = j.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io, "cannot open checkpoint for writing: " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, head.size());
  out.write(head.data(), std::streamsize(head.size()));
  write_store(out, s.gen.params());
  write_store(out, s.disc.params());
  if (!out) fail(errc::io, "checkpoint write failed: " + path);
}

Synthesizer load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io, "cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    fail(errc::io, "not a checkpoint file: " + path);
  uint32_t version = get_u32(in);
  if (version != kVersion)
    fail(errc::io, "unsupported checkpoint version " + std::to_string(version));
  uint64_t len = get_u64(in);
  std::string head(len, '\0');
  in.read(head.data(), std::streamsize(len));
  if (!in) fail(errc::io, "truncated checkpoint header: " + path);

  Synthesizer s;
  try {
    nlohmann::json j = nlohmann::json::parse(head);
    s.cfg = config_from_json(j.at("config"));
    s.cfg.validate();
    s.transformer = prep::Transformer::from_json(j.at("transformer").dump());
    num::RngStream rng(s.cfg.seed, num::stream::init);
    s.gen = Generator(s.transformer, s.cfg, rng);
    s.disc = Discriminator(s.transformer.width(), s.cfg, rng);
    s.times = TimePoints::make(s.cfg.m, s.cfg.ablation, s.cfg.learn_tm);
    auto u = j.at("times").at("u").get<std::vector<double>>();
    if (u.size() != s.times.u.size() || j.at("times").at("m").get<int>() != s.times.m ||
        j.at("times").at("learn_tm").get<bool>() != s.times.learn_tm)
      fail(errc::io, "checkpoint: time-point block does not match config");
    s.times.u = std::move(u);
    check_manifest(j.at("gen"), s.gen.params(), "generator");
    check_manifest(j.at("disc"), s.disc.params(), "discriminator");
  } catch (const nlohmann::json::exception& e) {
    fail(errc::io, std::string("malformed checkpoint header: ") + e.what());
  }
  read_store(in, s.gen.params());
  read_store(in, s.disc.params());
  if (!in) fail(errc::io, "truncated checkpoint tensors: " + path);
  return s;
}

std::string checkpoint_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io, "cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    fail(errc::io, "not a checkpoint file: " + path);
  uint32_t version = get_u32(in);
  if (version != kVersion)
    fail(errc::io, "unsupported checkpoint version " + std::to_string(version));
  uint64_t len = get_u64(in);
  std::string head(len, '\0');
  in.read(head.data(), std::streamsize(len));
  if (!in) fail(errc::io, "truncated checkpoint header: " + path);
  nlohmann::json j = nlohmann::json::parse(head, nullptr, false);
  if (j.is_discarded()) fail(errc::io, "malformed checkpoint header: " + path);
  return j.value("meta", std::string());
}

}  // namespace nodetab::gan
