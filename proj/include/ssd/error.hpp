#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ssd {

enum class ErrorKind {
  kInvalidInput,
  kConfig,
  kIo,
  kParse,
  kDuplicateId,
  kBadMagic,
  kTruncated,
  kSizeMismatch,
  kRowSum,
  kUnsupportedVersion,
  kModel,
  kTokenize,
  kIdMismatch,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kDuplicateId: return "duplicate-id";
    case ErrorKind::kBadMagic: return "bad-magic";
    case ErrorKind::kTruncated: return "truncated";
    case ErrorKind::kSizeMismatch: return "size-mismatch";
    case ErrorKind::kRowSum: return "row-sum";
    case ErrorKind::kUnsupportedVersion: return "unsupported-version";
    case ErrorKind::kModel: return "model";
    case ErrorKind::kTokenize: return "tokenize";
    case ErrorKind::kIdMismatch: return "id-mismatch";
  }
  return "unknown";
}

// All library failures are reported through this type; kind() lets callers
// distinguish e.g. a truncated posterior file from a row-sum violation.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ssd
