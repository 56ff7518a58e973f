#pragma once

#include <span>

#include "wtrk/geometry.hpp"
#include "wtrk/trackset.hpp"

namespace wtrk {

/// Squared-pixel reprojection error charged to a point behind the camera, as
/// a multiple of the image diagonal. Such terms carry no gradient.
inline constexpr double kBehindCameraPenaltyDiagonals = 10.0;

/// Sum over visible (i, t) of ||project(pose_t, X(i, t)) - P(i, t)||^2, with
/// X given per track and frame ([i * T + t]). Gradients are accumulated into
/// the spans when they are non-empty.
double reprojection_loss(std::span<const Vec3> world, std::span<const PoseSE3> poses,
                         const CameraModel& cam, const TrackSet2D& tracks, double image_diagonal,
                         std::span<Vec6> pose_grad = {}, std::span<Vec3> point_grad = {});

/// Sum over visible (i, t) of (cam_depth(pose_t, X(i, t)) - D(i, t))^2.
double depth_loss(std::span<const Vec3> world, std::span<const PoseSE3> poses,
                  const TrackSet2D& tracks, const TrackDepths& depths,
                  std::span<Vec6> pose_grad = {}, std::span<Vec3> point_grad = {});

/// Gauss-Newton diagonal of w_ba * reprojection_loss + w_dc * depth_loss,
/// accumulated per pose tangent coordinate and per point coordinate
/// ([i * T + t]). Used only to scale optimization variables.
void observation_curvature(std::span<const Vec3> world, std::span<const PoseSE3> poses,
                           const CameraModel& cam, const TrackSet2D& tracks, double w_ba,
                           double w_dc, std::span<Vec6> pose_curv, std::span<Vec3> point_curv);

}  // namespace wtrk
