#include "nodetab/io/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nodetab/num/error.hpp"

namespace nodetab::io {

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io, "cannot open file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io, "cannot open file for writing: " + path);
  out.write(text.data(), std::streamsize(text.size()));
  if (!out) fail(errc::io, "write failed: " + path);
}

std::string RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["train_csv"] = train_csv;
  j["test_csv"] = test_csv;
  j["schema"] = schema_json;
  j["oracle"] = oracle_json;
  j["out_dir"] = out_dir;
  j["seed"] = seed;
  gan::TrainConfig tc = train;
  tc.seed = seed;
  j["train"] = nlohmann::json::parse(gan::train_config_to_json(tc));
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(errc::config, "run config: invalid JSON");
  RunConfig rc;
  try {
    rc.train_csv = j.value("train_csv", rc.train_csv);
    rc.test_csv = j.value("test_csv", rc.test_csv);
    rc.schema_json = j.value("schema", rc.schema_json);
    rc.oracle_json = j.value("oracle", rc.oracle_json);
    rc.out_dir = j.value("out_dir", rc.out_dir);
    rc.train = gan::train_config_from_json(
        j.value("train", nlohmann::json::object()).dump());
    rc.seed = j.contains("seed") ? j.at("seed").get<uint64_t>() : rc.train.seed;
  } catch (const nlohmann::json::exception& e) {
    fail(errc::config, std::string("run config: ") + e.what());
  }
  rc.train.seed = rc.seed;
  return rc;
}

}  // namespace nodetab::io
