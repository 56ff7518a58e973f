#include "wtrk/errors.hpp"

namespace wtrk {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::EmptySparseSet: return "EmptySparseSet";
    case ErrorCode::NoVisibleFrames: return "NoVisibleFrames";
    case ErrorCode::NoVisibleCoarseNeighbors: return "NoVisibleCoarseNeighbors";
    case ErrorCode::ZeroRawDepth: return "ZeroRawDepth";
    case ErrorCode::NonFiniteObjective: return "NonFiniteObjective";
    case ErrorCode::InsufficientTracks: return "InsufficientTracks";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::InsufficientOverlap: return "InsufficientOverlap";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DegenerateFit: return "DegenerateFit";
    case ErrorCode::EmptyScene: return "EmptyScene";
  }
  return "Unknown";
}

bool is_numerical(ErrorCode code) {
  switch (code) {
    case ErrorCode::BehindCamera:
    case ErrorCode::NonPositiveDepth:
    case ErrorCode::NoVisibleCoarseNeighbors:
    case ErrorCode::ZeroRawDepth:
    case ErrorCode::NonFiniteObjective:
    case ErrorCode::InsufficientTracks:
    case ErrorCode::DegenerateGeometry:
    case ErrorCode::InsufficientOverlap:
    case ErrorCode::DegenerateFit:
      return true;
    default:
      return false;
  }
}

}  // namespace wtrk
