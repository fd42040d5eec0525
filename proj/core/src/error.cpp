#include "dctl/error.hpp"

namespace dctl {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ScriptMiss: return "ScriptMiss";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateField: return "DuplicateField";
    case ErrorCode::DanglingTemplate: return "DanglingTemplate";
    case ErrorCode::DuplicateDomain: return "DuplicateDomain";
    case ErrorCode::UnknownDomain: return "UnknownDomain";
    case ErrorCode::NoSchemaMatch: return "NoSchemaMatch";
    case ErrorCode::ConstraintViolation: return "ConstraintViolation";
    case ErrorCode::PreconditionViolated: return "PreconditionViolated";
    case ErrorCode::TemplateError: return "TemplateError";
    case ErrorCode::AdapterMissing: return "AdapterMissing";
    case ErrorCode::CapabilityMissing: return "CapabilityMissing";
    case ErrorCode::DuplicatePerson: return "DuplicatePerson";
    case ErrorCode::InvalidQuery: return "InvalidQuery";
    case ErrorCode::InvalidStore: return "InvalidStore";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::Unsupported: return "Unsupported";
  }
  return "Unknown";
}

namespace {

std::string compose_message(ErrorCode code, const std::string& message,
                            const std::vector<FieldIssue>& issues) {
  std::string out{to_string(code)};
  out += ": ";
  out += message;
  for (const auto& issue : issues) {
    out += "; ";
    out += issue.field.empty() ? std::string{"<root>"} : issue.field;
    out += ": ";
    out += issue.reason;
  }
  return out;
}

}  // namespace

Error::Error(ErrorCode code, std::string message, std::vector<FieldIssue> issues)
    : std::runtime_error(compose_message(code, message, issues)),
      code_(code),
      issues_(std::move(issues)) {}

std::string_view Error::field() const noexcept {
  return issues_.empty() ? std::string_view{} : std::string_view{issues_.front().field};
}

}  // namespace dctl
