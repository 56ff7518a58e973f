#include "wtrk/observation.hpp"

namespace wtrk {

double reprojection_loss(std::span<const Vec3> world, std::span<const PoseSE3> poses,
                         const CameraModel& cam, const TrackSet2D& tracks, double image_diagonal,
                         std::span<Vec6> pose_grad, std::span<Vec3> point_grad) {
  const double penalty = kBehindCameraPenaltyDiagonals * image_diagonal;
  const double behind = penalty * penalty;
  const bool want_pose = !pose_grad.empty();
  const bool want_point = !point_grad.empty();
  const int T = tracks.num_frames;

  std::vector<Mat3> rot(poses.size());
  for (std::size_t t = 0; t < poses.size(); ++t) rot[t] = poses[t].rotation.toRotationMatrix();

  double loss = 0.0;
  for (int i = 0; i < tracks.num_tracks; ++i) {
    for (int t = 0; t < T; ++t) {
      const std::size_t k = tracks.index(i, t);
      if (!tracks.visible[k]) continue;
      const Vec3 xc = rot[t] * world[k] + poses[t].translation;
      if (xc.z() <= kMinDepth) {
        loss += behind;
        continue;
      }
      const double iz = 1.0 / xc.z();
      const Vec2 r(cam.fx * xc.x() * iz + cam.cx - tracks.positions[k].x(),
                   cam.fy * xc.y() * iz + cam.cy - tracks.positions[k].y());
      loss += r.squaredNorm();
      if (!want_pose && !want_point) continue;
      // d loss / d xc
      const Vec3 g(2.0 * r.x() * cam.fx * iz, 2.0 * r.y() * cam.fy * iz,
                   -2.0 * (r.x() * cam.fx * xc.x() + r.y() * cam.fy * xc.y()) * iz * iz);
      if (want_pose) {
        pose_grad[t].head<3>() += xc.cross(g);
        pose_grad[t].tail<3>() += g;
      }
      if (want_point) point_grad[k] += rot[t].transpose() * g;
    }
  }
  return loss;
}

double depth_loss(std::span<const Vec3> world, std::span<const PoseSE3> poses,
                  const TrackSet2D& tracks, const TrackDepths& depths,
                  std::span<Vec6> pose_grad, std::span<Vec3> point_grad) {
  const bool want_pose = !pose_grad.empty();
  const bool want_point = !point_grad.empty();
  const int T = tracks.num_frames;

  std::vector<Mat3> rot(poses.size());
  for (std::size_t t = 0; t < poses.size(); ++t) rot[t] = poses[t].rotation.toRotationMatrix();

  double loss = 0.0;
  for (int i = 0; i < tracks.num_tracks; ++i) {
    for (int t = 0; t < T; ++t) {
      const std::size_t k = tracks.index(i, t);
      if (!tracks.visible[k]) continue;
      const Vec3 xc = rot[t] * world[k] + poses[t].translation;
      const double r = xc.z() - depths.values[k];
      loss += r * r;
      if (!want_pose && !want_point) continue;
      const Vec3 g(0.0, 0.0, 2.0 * r);
      if (want_pose) {
        pose_grad[t].head<3>() += xc.cross(g);
        pose_grad[t].tail<3>() += g;
      }
      if (want_point) point_grad[k] += rot[t].transpose() * g;
    }
  }
  return loss;
}

void observation_curvature(std::span<const Vec3> world, std::span<const PoseSE3> poses,
                           const CameraModel& cam, const TrackSet2D& tracks, double w_ba,
                           double w_dc, std::span<Vec6> pose_curv, std::span<Vec3> point_curv) {
  const int T = tracks.num_frames;
  for (int i = 0; i < tracks.num_tracks; ++i) {
    for (int t = 0; t < T; ++t) {
      const std::size_t k = tracks.index(i, t);
      if (!tracks.visible[k]) continue;
      DepthJacobians dj;
      if (cam_depth(poses[t], world[k], dj) <= kMinDepth) continue;
      ProjectionJacobians pj;
      project(poses[t], cam, world[k], pj);
      const Vec6 dp = 2.0 * (w_ba * pj.d_pose.colwise().squaredNorm().transpose() +
                             w_dc * dj.d_pose.cwiseAbs2().transpose());
      const Vec3 dx = 2.0 * (w_ba * pj.d_point.colwise().squaredNorm().transpose() +
                             w_dc * dj.d_point.cwiseAbs2().transpose());
      if (!pose_curv.empty()) pose_curv[t] += dp;
      if (!point_curv.empty()) point_curv[k] += dx;
    }
  }
}

}  // namespace wtrk
