#pragma once

#include <stdexcept>
#include <string>

namespace remem {

enum class ErrorCode {
  // time
  MalformedTime,
  InvalidCalendarDate,
  // graph
  EmptyPhrase,
  UnknownNode,
  // retrieval / exploration
  EmptyQuery,
  BadWindow,
  // extraction
  ExtractorUnavailable,
  MalformedExtraction,
  // clients
  EmbeddingUnavailable,
  ProviderUnavailable,
  BudgetExceeded,
  DimensionMismatch,
  // agent
  PlannerUnavailable,
  SynthesizerUnavailable,
  InvalidToolCall,
  // eval
  JudgeUnavailable,
  ParseError,
  // persistence / misc
  SnapshotFormat,
  Io,
  InvalidArgument,
  BadState,
};

const char* error_code_name(ErrorCode code);

// Single exception type for the whole engine. The code survives the trip
// through the C API; what() carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace remem
