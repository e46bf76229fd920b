#pragma once

#include <stdexcept>

namespace stgkit {

// Error categories with stable CLI exit codes: schema 2, id mismatch 3,
// service 4, parse 5. Everything else surfaces as std::invalid_argument or
// std::runtime_error and maps to exit 1.

struct schema_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct id_mismatch_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct service_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace stgkit
