#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "wtrk/config.hpp"
#include "wtrk/geometry.hpp"
#include "wtrk/trackset.hpp"

namespace wtrk {

/// World anchor per static track plus a per-frame offset; the point of track
/// i at frame t is anchor(i) + offset(i, t).
struct StaticModel {
  int num_tracks = 0;
  int num_frames = 0;
  std::vector<Vec3> anchors;
  std::vector<Vec3> offsets;  // [i * T + t]

  StaticModel() = default;
  StaticModel(int n, int t)
      : num_tracks(n), num_frames(t), anchors(n, Vec3::Zero()),
        offsets(static_cast<std::size_t>(n) * t, Vec3::Zero()) {}

  Vec3& offset(int i, int t) { return offsets[static_cast<std::size_t>(i) * num_frames + t]; }
  const Vec3& offset(int i, int t) const { return offsets[static_cast<std::size_t>(i) * num_frames + t]; }
  Vec3 position(int i, int t) const { return anchors[i] + offset(i, t); }
  std::vector<Vec3> positions() const;
};

struct StaticGradient {
  std::vector<Vec6> poses;
  std::vector<Vec3> anchors;
  std::vector<Vec3> offsets;

  void reset(const StaticModel& m, std::size_t num_poses);
};

/// Mean of the back-projections over the visible frames of each track.
/// Throws NoVisibleFrames for a track with no visible frame of positive depth.
StaticModel init_static_anchors(const TrackSet2D& tracks, const TrackDepths& depths,
                                std::span<const PoseSE3> poses, const CameraModel& cam);

double loss_ba(const StaticModel& m, std::span<const PoseSE3> poses, const CameraModel& cam,
               const TrackSet2D& tracks, double image_diagonal, StaticGradient* grad = nullptr);
double loss_dc(const StaticModel& m, std::span<const PoseSE3> poses, const TrackSet2D& tracks,
               const TrackDepths& depths, StaticGradient* grad = nullptr);
/// Sum of absolute offset components. Subgradient uses sign(0) = 0.
double loss_asap(const StaticModel& m, StaticGradient* grad = nullptr);

struct RefineOptions {
  bool freeze_offsets = false;
  std::function<void(int, double)> on_iteration;
};

struct RefineResult {
  std::vector<PoseSE3> poses;
  StaticModel model;
  double loss = 0.0;
  double initial_loss = 0.0;
  int iterations = 0;
};

/// Builds the weighted static objective over (poses[1..], anchors, offsets).
/// The first pose is frozen. Offsets at frames where the track is invisible
/// are frozen at their current value (their only term is the L1 prior).
double static_objective(const StaticModel& m, std::span<const PoseSE3> poses,
                        const TrackSet2D& tracks, const TrackDepths& depths,
                        const CameraModel& cam, double image_diagonal, const PipelineConfig& cfg,
                        StaticGradient* grad = nullptr);

RefineResult refine_static(const StaticModel& init, std::span<const PoseSE3> poses,
                           const TrackSet2D& tracks, const TrackDepths& depths,
                           const CameraModel& cam, double image_diagonal,
                           const PipelineConfig& cfg, const RefineOptions& opts = {});

/// mask(i) = max_t ||offset(i, t)|| >= epsilon.
std::vector<std::uint8_t> classify_dynamic_background(const StaticModel& m, double epsilon);

}  // namespace wtrk
