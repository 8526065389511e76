#pragma once

#include <stdexcept>
#include <string>

namespace scope {

// Root of every error thrown by the library. Callers that only care about
// "something went wrong in scope" can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument values: sizes, percentiles, truncation levels, episode counts.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Matrix / vector dimensions that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Inconsistent or unparseable configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Environment used outside its reset/step lifecycle.
class LifecycleError : public Error {
 public:
  using Error::Error;
};

// Malformed bytes on the environment wire protocol.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Short read, EOF or a failed write on the underlying byte stream.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Optimizer state that cannot be used any more (degenerate covariance, NaN).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A policy evaluation that produced something unusable, e.g. NaN logits.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

// Filesystem read/write failures for checkpoints, CSVs and frames.
class FileError : public Error {
 public:
  using Error::Error;
};

}  // namespace scope
