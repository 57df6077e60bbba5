#pragma once

#include <stdexcept>
#include <string>

namespace lgtse {

// Error categories, one per failure class. The CLI maps these to exit codes.
enum class ErrorKind {
  InvalidInput = 2,
  InvalidState = 3,
  Shape = 4,
  Config = 5,
  Ingest = 6,
  Data = 7,
  TrainingDiverged = 8,
  Io = 9,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct InvalidInputError : Error {
  explicit InvalidInputError(const std::string& m) : Error(ErrorKind::InvalidInput, m) {}
};
struct InvalidStateError : Error {
  explicit InvalidStateError(const std::string& m) : Error(ErrorKind::InvalidState, m) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error(ErrorKind::Shape, m) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorKind::Config, m) {}
};
struct IngestError : Error {
  explicit IngestError(const std::string& m) : Error(ErrorKind::Ingest, m) {}
};
struct DataError : Error {
  explicit DataError(const std::string& m) : Error(ErrorKind::Data, m) {}
};
struct TrainingDivergedError : Error {
  explicit TrainingDivergedError(const std::string& m) : Error(ErrorKind::TrainingDiverged, m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorKind::Io, m) {}
};

}  // namespace lgtse
