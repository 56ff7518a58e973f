#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wtrk/config.hpp"
#include "wtrk/geometry.hpp"
#include "wtrk/trackset.hpp"

namespace wtrk {

/// Fewest tracks a clip (or a clip boundary) may be solved from.
inline constexpr int kMinPoseTracks = 6;
inline constexpr int kMaxGatingRounds = 5;

/// Poses of frames [first, last] relative to the clip's first camera.
struct Clip {
  int first = 0;
  int last = 0;
  std::vector<PoseSE3> poses;          // last - first + 1, poses[0] = identity
  std::vector<std::uint8_t> eligible;  // per track: visible in >= 2 clip frames
  std::vector<std::uint8_t> inliers;   // per track, subset of eligible
  double loss = 0.0;
  int rounds = 0;
  bool degenerate = false;

  int length() const { return last - first + 1; }
};

/// mask(i) = residual(i) < tau * image_diagonal, but the `keep_min` smallest
/// residuals (ties by lowest index) are always kept.
std::vector<std::uint8_t> gate_inliers(std::span<const double> residuals, double tau,
                                       double image_diagonal, int keep_min = kMinPoseTracks);

/// Pairwise reprojection loss inside one clip: for every selected track and
/// every ordered pair of distinct visible clip frames, lift the observation at
/// t1 with its depth, move it into t2 and compare with the observation at t2.
/// `poses` holds the clip's frames in order. Gradients w.r.t. the left tangent
/// of each pose are accumulated when `pose_grad` is non-empty.
double clip_projection_loss(std::span<const PoseSE3> poses, int first, const CameraModel& cam,
                            const TrackSet2D& tracks, const TrackDepths& depths,
                            std::span<const std::uint8_t> selected, double image_diagonal,
                            std::span<Vec6> pose_grad = {});

/// Max pairwise reprojection error of each track within the clip (0 when the
/// track has fewer than two visible frames there).
std::vector<double> clip_track_residuals(std::span<const PoseSE3> poses, int first,
                                         const CameraModel& cam, const TrackSet2D& tracks,
                                         const TrackDepths& depths, double image_diagonal);

struct PoseInitOptions {
  bool gating = true;
  int threads = 1;
};

/// Stage 1 for a single clip. Throws InsufficientTracks when fewer than
/// kMinPoseTracks tracks are visible in two or more clip frames.
Clip estimate_clip_poses(const TrackSet2D& tracks, const TrackDepths& depths,
                         const CameraModel& cam, double image_diagonal, int first, int last,
                         const PipelineConfig& cfg, const PoseInitOptions& opts = {});

/// Chains clips into one trajectory with the first camera as world frame. For
/// each boundary a single rigid transform is fitted on the tracks that are
/// inliers of both clips, then refined on the pairwise reprojection residuals
/// that cross the boundary. Throws InsufficientOverlap.
std::vector<PoseSE3> merge_clips(std::span<const Clip> clips, const TrackSet2D& tracks,
                                 const TrackDepths& depths, const CameraModel& cam,
                                 double image_diagonal, const PipelineConfig& cfg);

struct PoseInitResult {
  std::vector<PoseSE3> poses;
  std::vector<Clip> clips;
  /// Per track: 1 unless some clip gated it out.
  std::vector<std::uint8_t> inliers;
  std::vector<std::string> warnings;
  double loss = 0.0;
};

/// Splits [0, T) into clips of cfg.clip_len frames, solves them in parallel
/// and merges them.
PoseInitResult estimate_initial_poses(const TrackSet2D& tracks, const TrackDepths& depths,
                                      const CameraModel& cam, double image_diagonal,
                                      const PipelineConfig& cfg, const PoseInitOptions& opts = {});

}  // namespace wtrk
