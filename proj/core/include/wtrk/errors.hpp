#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wtrk {

enum class ErrorCode {
  // input / format
  BadMagic,
  DimMismatch,
  UnsupportedDtype,
  MissingFile,
  ShapeMismatch,
  InvalidConfig,
  Io,
  // geometry
  BehindCamera,
  NonPositiveDepth,
  // tracks
  EmptySparseSet,
  NoVisibleFrames,
  NoVisibleCoarseNeighbors,
  ZeroRawDepth,
  // optimization
  NonFiniteObjective,
  InsufficientTracks,
  DegenerateGeometry,
  InsufficientOverlap,
  // evaluation
  LengthMismatch,
  DegenerateFit,
  // synthetic scenes
  EmptyScene,
};

std::string_view to_string(ErrorCode code);

// True for failures caused by the numbers rather than by malformed inputs.
bool is_numerical(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace wtrk
