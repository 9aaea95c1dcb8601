#ifndef SURVCLUST_ERROR_HPP_
#define SURVCLUST_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace survclust {

enum class ErrorCode {
  kEmptySample,
  kNoEvents,
  kInvalidEventCount,
  kInvalidAlpha,
  kInvalidCount,
  kNoEventsAtRoot,
  kSchemaMismatch,
  kNonConvergence,
  kUnreachableK,
  kInvalidHorizons,
  kSingleClass,
  kInvalidCutoff,
  kInvalidLog,
  kInvalidConfig,
  kInvalidSchema,
  kInvalidDataset,
  kParse,
  kIo,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptySample: return "EmptySample";
    case ErrorCode::kNoEvents: return "NoEvents";
    case ErrorCode::kInvalidEventCount: return "InvalidEventCount";
    case ErrorCode::kInvalidAlpha: return "InvalidAlpha";
    case ErrorCode::kInvalidCount: return "InvalidCount";
    case ErrorCode::kNoEventsAtRoot: return "NoEventsAtRoot";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kNonConvergence: return "NonConvergence";
    case ErrorCode::kUnreachableK: return "UnreachableK";
    case ErrorCode::kInvalidHorizons: return "InvalidHorizons";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kInvalidCutoff: return "InvalidCutoff";
    case ErrorCode::kInvalidLog: return "InvalidLog";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kInvalidSchema: return "InvalidSchema";
    case ErrorCode::kInvalidDataset: return "InvalidDataset";
    case ErrorCode::kParse: return "Parse";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string &message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace survclust

#endif  // SURVCLUST_ERROR_HPP_
