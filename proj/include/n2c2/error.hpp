#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace n2c2 {

enum class ErrorCode {
  InvalidArgument,
  AllZero,
  NonFinite,
  ParseError,
  DimMismatch,
  MissingLabel,
  EmptyDataset,
  Degenerate,
  UnknownId,
  EmptyStore,
  EmptyNeighborSet,
  LengthMismatch,
  ShapeMismatch,
  VersionMismatch,
  DimInconsistency,
  EmptyList,
  EmptyPreds,
  EmptyDev,
  ZeroContentFreeProb,
  LabelSpaceMismatch,
  Io,
};

std::string_view to_string(ErrorCode code);

// Every failure in the library surfaces as this exception; `code()` lets
// callers and tests tell the failure modes apart.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace n2c2
