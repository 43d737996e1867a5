#pragma once

#include <stdexcept>
#include <string>

namespace scenerag {

/// Base for every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI and the wire protocol.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error("parse_error", w) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& w) : Error("validation_error", w) {}
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& w) : Error("invalid_argument", w) {}
};

struct DegenerateQuaternion : Error {
  explicit DegenerateQuaternion(const std::string& w) : Error("degenerate_quaternion", w) {}
};

struct ZeroVector : Error {
  explicit ZeroVector(const std::string& w) : Error("zero_vector", w) {}
};

struct NotFound : Error {
  explicit NotFound(const std::string& w) : Error("not_found", w) {}
};

struct EmptyIndex : Error {
  explicit EmptyIndex(const std::string& w) : Error("empty_index", w) {}
};

struct TrainingDiverged : Error {
  explicit TrainingDiverged(const std::string& w) : Error("training_diverged", w) {}
};

struct CheckpointError : Error {
  explicit CheckpointError(const std::string& w) : Error("checkpoint_error", w) {}
};

struct NetworkError : Error {
  explicit NetworkError(const std::string& w) : Error("network_error", w) {}
};

}  // namespace scenerag
