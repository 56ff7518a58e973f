#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "wtrk/config.hpp"
#include "wtrk/geometry.hpp"
#include "wtrk/refine.hpp"
#include "wtrk/trackset.hpp"

namespace wtrk {

/// Added to every inverse-distance weight denominator.
inline constexpr double kIdwEpsilon = 1e-8;

/// Free world positions of dynamic points per frame plus the fixed neighbour
/// graph used by the rigidity prior.
struct DynamicTrackSet {
  int num_tracks = 0;
  int num_frames = 0;
  std::vector<Vec3> positions;        // [i * T + t]
  std::vector<std::uint8_t> visible;  // [i * T + t]
  std::vector<std::vector<int>> knn;

  Vec3& at(int i, int t) { return positions[static_cast<std::size_t>(i) * num_frames + t]; }
  const Vec3& at(int i, int t) const { return positions[static_cast<std::size_t>(i) * num_frames + t]; }
};

/// The min(r, n - 1) nearest other points of each point, nearest first; ties
/// go to the lower index.
std::vector<std::vector<int>> build_knn(std::span<const Vec3> points, int r);

/// Back-projects visible observations and fills the remaining frames by linear
/// interpolation (held constant past the ends). The graph is built from each
/// track's position at its spawn frame. Throws NoVisibleFrames.
DynamicTrackSet init_dynamic(const TrackSet2D& tracks, const TrackDepths& depths,
                             std::span<const PoseSE3> poses, const CameraModel& cam, int r);

/// Sum over t >= 1, k and j in knn(k) of
/// ||(X(k,t) - X(j,t)) - (X(k,t-1) - X(j,t-1))||^2.
double loss_arap(const DynamicTrackSet& dyn, std::span<Vec3> grad = {});
/// Sum over t >= 1 and k of ||X(k,t) - X(k,t-1)||^2.
double loss_ts(const DynamicTrackSet& dyn, std::span<Vec3> grad = {});

double dynamic_objective(const DynamicTrackSet& dyn, std::span<const PoseSE3> poses,
                         const CameraModel& cam, const TrackSet2D& tracks,
                         const TrackDepths& depths, double image_diagonal,
                         const PipelineConfig& cfg, std::span<Vec3> grad = {});

struct DynamicOptions {
  int threads = 1;
  std::function<void(int, double)> on_iteration;
};

struct DynamicResult {
  DynamicTrackSet tracks;
  double loss = 0.0;
  double initial_loss = 0.0;
  int iterations = 0;
};

/// Poses stay fixed. Independent groups of the neighbour graph are solved
/// separately (in parallel when threads > 1); the reported loss is their sum.
DynamicResult optimize_dynamic(const DynamicTrackSet& init, const TrackSet2D& tracks,
                               const TrackDepths& depths, std::span<const PoseSE3> poses,
                               const CameraModel& cam, double image_diagonal,
                               const PipelineConfig& cfg, const DynamicOptions& opts = {});

struct DownsampleIndex {
  std::vector<int> retained;       // full track ids kept, ascending
  std::vector<int> coarse_of;      // full id -> coarse id, or -1
};

/// Keeps the lowest-index track of every (spawn frame, round(x / varpi),
/// round(y / varpi)) key, rounding half to even. varpi = 1 keeps every track.
DownsampleIndex downsample_static(const TrackSet2D& tracks, int varpi);

/// Interpolation of full tracks from coarse ones. Row i lists coarse ids.
///
/// Retained tracks map to themselves with weight 1. Every other track is
/// lifted at its spawn frame with its depth and matched against the coarse
/// tracks visible in that frame, lifted the same way; the r + 1 nearest get
/// weights 1 / (d + eps), normalised. Throws NoVisibleCoarseNeighbors.
UpsampleWeights trajectory_upsample_weights(const TrackSet2D& tracks, const TrackDepths& depths,
                                            const CameraModel& cam, const DownsampleIndex& index,
                                            int r);

/// out[i] = sum_j w_ij * coarse[j].
std::vector<Vec3> apply_upsample(const UpsampleWeights& w, std::span<const Vec3> coarse);

/// Full-resolution anchors from coarse anchors.
std::vector<Vec3> upsample_trajectories(std::span<const Vec3> coarse_anchors,
                                        const TrackSet2D& tracks, const TrackDepths& depths,
                                        const CameraModel& cam, const DownsampleIndex& index,
                                        int r);

/// Anchors and per-frame offsets of a full static model from a coarse one.
StaticModel upsample_static_model(const StaticModel& coarse, const UpsampleWeights& w);

struct DepthSample {
  Vec2 pixel;
  double depth = 0.0;
};

/// Rescales one raw depth frame by locally propagated ratios of tracked to raw
/// depth. Each pixel takes its k nearest samples in the image plane (ties to
/// the lower index) and weights them by 1 / (d + eps), with d the distance
/// between raw-depth lifted points. Samples where the raw depth is not
/// positive are skipped; throws ZeroRawDepth when none remain.
std::vector<double> propagate_depth(std::span<const float> raw, int height, int width,
                                    std::span<const DepthSample> samples,
                                    const CameraModel& cam, int k);

}  // namespace wtrk
