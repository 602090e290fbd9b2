#pragma once

#include <stdexcept>
#include <string>

namespace mozoo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dimension disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf appeared where only finite values are allowed.
class NumericError : public Error {
 public:
  using Error::Error;
};

class LayoutError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class MaskError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public NumericError {
 public:
  TrainingError(const std::string& what, long step = -1)
      : NumericError(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

class SamplingError : public NumericError {
 public:
  SamplingError(const std::string& what, long step)
      : NumericError(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

/// Scene description that cannot be rendered (e.g. subject leaves the frame).
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Failure while reading a dataset, pixmap or checkpoint from disk.
class FormatError : public Error {
 public:
  enum class Kind { malformed_header, truncated_payload, checksum_mismatch, manifest_mismatch, io };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace mozoo
