#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace subsetpriv {

enum class ErrorCode {
  kInvalidArgument,
  kDomainTooSmall,
  kDomainTooLarge,
  kAsymmetricBase,
  kDegenerateLikelihood,
  kNonInteriorInit,
  kIdentifiabilityViolation,
  kDegenerateTable,
  kUnknownVariable,
  kUnknownSession,
  kQuestionPending,
  kNoPendingQuestion,
  kSessionExpired,
  kIngestError,
  kParseError,
  kIoError,
};

constexpr std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDomainTooSmall: return "DomainTooSmall";
    case ErrorCode::kDomainTooLarge: return "DomainTooLarge";
    case ErrorCode::kAsymmetricBase: return "AsymmetricBase";
    case ErrorCode::kDegenerateLikelihood: return "DegenerateLikelihood";
    case ErrorCode::kNonInteriorInit: return "NonInteriorInit";
    case ErrorCode::kIdentifiabilityViolation: return "IdentifiabilityViolation";
    case ErrorCode::kDegenerateTable: return "DegenerateTable";
    case ErrorCode::kUnknownVariable: return "UnknownVariable";
    case ErrorCode::kUnknownSession: return "UnknownSession";
    case ErrorCode::kQuestionPending: return "QuestionPending";
    case ErrorCode::kNoPendingQuestion: return "NoPendingQuestion";
    case ErrorCode::kSessionExpired: return "SessionExpired";
    case ErrorCode::kIngestError: return "IngestError";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

// Every failure raised by the library carries one of the codes above so
// callers (the CLI, the HTTP service) can map it to exit codes or statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace subsetpriv
