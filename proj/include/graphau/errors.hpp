#pragma once

#include <stdexcept>
#include <string>

namespace graphau {

// Base for every error thrown by the library. `kind()` is a stable
// machine-readable tag; what() carries the human-readable detail.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

private:
  std::string kind_;
};

struct MissingAUError : Error {
  explicit MissingAUError(int code)
      : Error("MissingAU", "constituent AU" + std::to_string(code) + " absent") {}
};

struct InvalidIntensityError : Error {
  InvalidIntensityError(int code, int value)
      : Error("InvalidIntensity",
              "AU" + std::to_string(code) + " intensity " + std::to_string(value)) {}
};

struct InvalidPSPIError : Error {
  explicit InvalidPSPIError(int value)
      : Error("InvalidPSPI", "PSPI " + std::to_string(value) + " outside [0,16]") {}
};

struct ParseError : Error {
  ParseError(std::size_t line, const std::string& msg)
      : Error("ParseError", "line " + std::to_string(line) + ": " + msg) {}
};

struct DuplicateFrameIdError : Error {
  explicit DuplicateFrameIdError(const std::string& id)
      : Error("DuplicateFrameId", id) {}
};

struct MissingPredictionError : Error {
  explicit MissingPredictionError(const std::string& id)
      : Error("MissingPrediction", "no predicted AUs for frame " + id) {}
};

struct OverlappingSetsError : Error {
  explicit OverlappingSetsError(const std::string& msg) : Error("OverlappingSets", msg) {}
};

struct EmptyCategoryError : Error {
  explicit EmptyCategoryError(const std::string& cat)
      : Error("EmptyCategory", "no samples in category " + cat) {}
};

struct TooFewSubjectsError : Error {
  explicit TooFewSubjectsError(std::size_t n)
      : Error("TooFewSubjects", std::to_string(n) + " subject(s), need at least 2") {}
};

struct InvalidConfigError : Error {
  explicit InvalidConfigError(const std::string& msg) : Error("InvalidConfig", msg) {}
};

struct ShapeMismatchError : Error {
  explicit ShapeMismatchError(const std::string& msg) : Error("ShapeMismatch", msg) {}
};

struct KTooLargeError : Error {
  KTooLargeError(int k, int n)
      : Error("KTooLarge",
              "K=" + std::to_string(k) + " with " + std::to_string(n) + " nodes") {}
};

struct NonOneHotLabelError : Error {
  explicit NonOneHotLabelError(const std::string& msg) : Error("NonOneHotLabel", msg) {}
};

struct EmptyDatasetError : Error {
  explicit EmptyDatasetError(const std::string& msg) : Error("EmptyDataset", msg) {}
};

struct IncompatibleCheckpointError : Error {
  explicit IncompatibleCheckpointError(const std::string& msg)
      : Error("IncompatibleCheckpoint", msg) {}
};

struct LengthMismatchError : Error {
  LengthMismatchError(std::size_t a, std::size_t b)
      : Error("LengthMismatch",
              std::to_string(a) + " predictions vs " + std::to_string(b) + " labels") {}
};

struct EmptyMatrixError : Error {
  EmptyMatrixError() : Error("EmptyMatrix", "confusion matrix has no samples") {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error("Numeric", msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("Io", msg) {}
};

}  // namespace graphau
