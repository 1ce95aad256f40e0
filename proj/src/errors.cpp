#include "remem/errors.hpp"

namespace remem {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedTime: return "MalformedTime";
    case ErrorCode::InvalidCalendarDate: return "InvalidCalendarDate";
    case ErrorCode::EmptyPhrase: return "EmptyPhrase";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::BadWindow: return "BadWindow";
    case ErrorCode::ExtractorUnavailable: return "ExtractorUnavailable";
    case ErrorCode::MalformedExtraction: return "MalformedExtraction";
    case ErrorCode::EmbeddingUnavailable: return "EmbeddingUnavailable";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::PlannerUnavailable: return "PlannerUnavailable";
    case ErrorCode::SynthesizerUnavailable: return "SynthesizerUnavailable";
    case ErrorCode::InvalidToolCall: return "InvalidToolCall";
    case ErrorCode::JudgeUnavailable: return "JudgeUnavailable";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SnapshotFormat: return "SnapshotFormat";
    case ErrorCode::Io: return "Io";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BadState: return "BadState";
  }
  return "Unknown";
}

}  // namespace remem
