#pragma once

#include <stdexcept>
#include <string>

namespace nodetab {

enum class errc {
  config = 2,
  io = 3,
  schema = 4,
  numeric = 5,
};

class error : public std::runtime_error {
public:
  error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const { return code_; }

private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

}  // namespace nodetab
