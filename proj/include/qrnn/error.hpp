// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace qrnn {

/// Dimension or layout mismatch between operands.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation (tau not in (0,1), |u| > 1, ...).
class DomainError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input file. The message starts with the offending field path.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}

  const std::string& field_path() const noexcept { return path_; }

private:
  std::string path_;
};

class VersionError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Backward called without a usable forward cache.
class CacheError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Train-mode batch normalization over a single sample.
class DegenerateBatchError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Requested combination is valid input but not implemented (e.g. a univariate method on a
/// multivariate scenario).
class UnsupportedError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace qrnn
