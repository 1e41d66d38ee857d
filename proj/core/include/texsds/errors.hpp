#pragma once

#include <stdexcept>
#include <string>

namespace texsds {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration value passed to an operation.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Mesh could not be loaded or is geometrically unusable.
class MeshError : public Error {
 public:
  using Error::Error;
};

/// UV charts overlap, so texels cannot be assigned to a single triangle.
class AtlasError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity appeared in gradients or parameters.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Guidance backend failed in a way that a retry might fix (connection
/// refused, timeouts, 5xx). Raised only after the retry budget is spent.
class BackendError : public Error {
 public:
  using Error::Error;
};

class BackendUnavailable : public BackendError {
 public:
  using BackendError::BackendError;
};

/// The model server answered but reported an internal failure.
class ModelError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// The request or response violates the wire protocol. Never retried.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class ProtocolVersionMismatch : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

}  // namespace texsds
