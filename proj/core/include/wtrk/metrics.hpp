#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "wtrk/geometry.hpp"

namespace wtrk {

/// y = scale * rotation * x + translation
struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
};

/// Least-squares similarity taking `src` onto `dst`. When `src` has no spread
/// only the translation is fitted (scale 1, identity rotation).
Similarity align_similarity(std::span<const Vec3> src, std::span<const Vec3> dst);

struct TrajMetrics {
  double ate = 0.0;  // RMSE of aligned camera centres, gt units
  double rte = 0.0;  // mean relative translation error, gt units
  double rre = 0.0;  // mean relative rotation error, degrees
};

/// Estimated camera centres are aligned to the ground truth with a
/// similarity; RTE/RRE compare consecutive relative motions, with the
/// estimated translations rescaled by the alignment scale. Throws
/// LengthMismatch when sizes differ or fewer than two poses are given.
TrajMetrics traj_metrics(std::span<const PoseSE3> est, std::span<const PoseSE3> gt);

struct DepthMetrics {
  double abs_rel = 0.0;
  double delta_125 = 0.0;  // percent
  double scale = 1.0;
  double shift = 0.0;
  int count = 0;
};

/// Fits gt ~ scale * est + shift over pixels where both are finite and gt > 0,
/// then scores the aligned estimate. Aligned values <= 0 count as failures for
/// the ratio test. Throws DegenerateFit for fewer than two valid pixels or a
/// constant est or gt, LengthMismatch for differing sizes.
DepthMetrics depth_metrics(std::span<const double> est, std::span<const double> gt);

/// Per-pixel depth of the nearest tracked point: points are rounded to the
/// nearest pixel, those outside the image are dropped and the smaller depth
/// wins. Empty pixels are NaN.
std::vector<double> rasterize_point_depths(std::span<const Vec2> pixels,
                                           std::span<const double> depths, int height, int width);

inline constexpr std::array<double, 5> kTrackingThresholds = {0.01, 0.02, 0.04, 0.08, 0.16};

struct Tracking3dMetrics {
  double aj = 0.0;
  double apd3d = 0.0;
  double oa = 0.0;
  double scene_scale = 1.0;
};

/// Median distance to the camera of the visible ground-truth points.
double tracking_scene_scale(std::span<const Vec3> gt_cam, std::span<const std::uint8_t> gt_vis);

/// Camera-frame 3D tracks, one entry per (track, frame). Thresholds are
/// kTrackingThresholds times `scene_scale` (computed from gt when <= 0). APD
/// counts over gt-visible entries, OA over all entries, and AJ pools
/// TP / (TP + FP + FN) over all entries. All three are percentages.
Tracking3dMetrics tracking3d_metrics(std::span<const Vec3> est_cam,
                                     std::span<const std::uint8_t> est_vis,
                                     std::span<const Vec3> gt_cam,
                                     std::span<const std::uint8_t> gt_vis,
                                     double scene_scale = -1.0);

struct FlowMetrics {
  double epe = 0.0;
  double iou = 0.0;  // percent, occluded regions; 100 when both are empty
};

/// Throws ShapeMismatch when the inputs differ in length.
FlowMetrics flow_metrics(std::span<const Vec2> est_flow, std::span<const Vec2> gt_flow,
                         std::span<const std::uint8_t> est_vis,
                         std::span<const std::uint8_t> gt_vis);

/// Everything `eval` can report; absent values were not computable.
struct EvalReport {
  std::optional<TrajMetrics> traj;
  std::optional<DepthMetrics> depth;
  std::optional<Tracking3dMetrics> tracking;
  std::optional<FlowMetrics> flow;
  std::optional<double> dynamic_rmse;
  std::optional<double> static_rmse;
};

}  // namespace wtrk
