#include "n2c2/error.hpp"

namespace n2c2 {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::AllZero: return "AllZero";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::MissingLabel: return "MissingLabel";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::Degenerate: return "Degenerate";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::EmptyStore: return "EmptyStore";
    case ErrorCode::EmptyNeighborSet: return "EmptyNeighborSet";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::DimInconsistency: return "DimInconsistency";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::EmptyPreds: return "EmptyPreds";
    case ErrorCode::EmptyDev: return "EmptyDev";
    case ErrorCode::ZeroContentFreeProb: return "ZeroContentFreeProb";
    case ErrorCode::LabelSpaceMismatch: return "LabelSpaceMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace n2c2
