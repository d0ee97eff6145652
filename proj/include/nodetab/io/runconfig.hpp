#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "nodetab/gan/train.hpp"

namespace nodetab::io {

uint64_t fnv1a64(std::string_view s);
std::string hex64(uint64_t v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// One reproducible run: where the data lives, how to train, where artifacts
// go.  The hash of the canonical JSON form is stamped into every artifact
// the run produces.
struct RunConfig {
  std::string train_csv;
  std::string test_csv;
  std::string schema_json;
  std::string oracle_json;
  std::string out_dir = ".";
  uint64_t seed = 1;
  gan::TrainConfig train;

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  std::string hash() const { return hex64(fnv1a64(to_json())); }
};

}  // namespace nodetab::io
