#pragma once

#include <stdexcept>
#include <string>

namespace oietd {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SpanOutOfRangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace oietd
