#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dctl {

enum class ErrorCode {
  ScriptMiss,
  SchemaViolation,
  TransportError,
  ParseError,
  DuplicateField,
  DanglingTemplate,
  DuplicateDomain,
  UnknownDomain,
  NoSchemaMatch,
  ConstraintViolation,
  PreconditionViolated,
  TemplateError,
  AdapterMissing,
  CapabilityMissing,
  DuplicatePerson,
  InvalidQuery,
  InvalidStore,
  EmptySet,
  InvalidArgument,
  IoError,
  Unsupported,
};

std::string_view to_string(ErrorCode code);

/// One field-level diagnostic attached to an Error.
struct FieldIssue {
  std::string field;
  std::string reason;

  bool operator==(const FieldIssue&) const = default;
};

/// The single exception type thrown by the library. Callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::vector<FieldIssue> issues = {});

  ErrorCode code() const noexcept { return code_; }
  const std::vector<FieldIssue>& issues() const noexcept { return issues_; }
  /// First offending field name, or empty.
  std::string_view field() const noexcept;

 private:
  ErrorCode code_;
  std::vector<FieldIssue> issues_;
};

}  // namespace dctl
