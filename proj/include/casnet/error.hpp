// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace casnet {

/// Base error for everything thrown by the library. The CLI maps these to
/// exit code 2 ("data error"); usage problems are reported by the parser.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

#define CASNET_CHECK(cond, ErrType, msg) \
  do {                                   \
    if (!(cond)) throw ErrType(msg);     \
  } while (0)

}  // namespace casnet
