#pragma once
// Error taxonomy. Each class maps to a distinct CLI exit code (see tools/).

#include <stdexcept>
#include <string>

namespace hqnoise {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape / dimension mismatches; message names the offending axes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or schema violations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Sigma-schedule misuse (e.g. querying an epsilon/v predictor at sigma == 0).
class ScheduleError : public Error {
 public:
  using Error::Error;
};

// Degenerate runtime inputs (zero std in align, empty batches, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Pipeline-protocol violations (e.g. inversion requesting stats that were
// never recorded during inference).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Training-time failures (non-finite loss or gradients, bad batch).
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Identity-verification failures surfaced by the theory harness.
class VerificationError : public Error {
 public:
  using Error::Error;
};

}  // namespace hqnoise
