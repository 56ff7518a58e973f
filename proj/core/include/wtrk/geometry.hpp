#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace wtrk {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Points closer to the image plane than this are treated as behind the camera.
inline constexpr double kMinDepth = 1e-6;

/// Pinhole intrinsics. No distortion.
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Mat3 matrix() const;
  static CameraModel from_matrix(const Mat3& K);
  bool valid() const { return fx > 0.0 && fy > 0.0; }
};

/// Rigid world->camera transform: x_cam = R * x_world + t.
///
/// Optimization uses a 6-vector tangent (omega, v), rotation part first, and
/// left retraction: pose <- exp(delta) * pose.
struct PoseSE3 {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();

  static PoseSE3 identity() { return {}; }
  static PoseSE3 from_matrix(const Mat34& m);

  Mat34 matrix() const;
  Vec3 transform(const Vec3& x) const { return rotation * x + translation; }
  PoseSE3 inverse() const;
  /// Camera centre in world coordinates.
  Vec3 center() const { return -(rotation.conjugate() * translation); }
  void normalize() { rotation.normalize(); }
};

PoseSE3 operator*(const PoseSE3& a, const PoseSE3& b);

PoseSE3 se3_exp(const Vec6& tangent);
Vec6 se3_log(const PoseSE3& pose);
Mat3 skew(const Vec3& w);

/// Adjoint of `pose` in (omega, v) ordering: exp(Ad * d) * pose == pose * exp(d).
Mat6 adjoint(const PoseSE3& pose);

/// Geodesic angle between two rotations, degrees.
double rotation_angle_deg(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

Vec2 project_camera_point(const CameraModel& cam, const Vec3& x_cam);
Vec3 unproject_camera(const CameraModel& cam, const Vec2& pixel, double depth);

/// Throws BehindCamera when the camera-frame depth is <= kMinDepth.
Vec2 project(const PoseSE3& pose, const CameraModel& cam, const Vec3& x_world);
/// Throws NonPositiveDepth when depth <= 0.
Vec3 unproject(const PoseSE3& pose, const CameraModel& cam, const Vec2& pixel, double depth);
/// Camera-frame z of a world point. May be negative.
double cam_depth(const PoseSE3& pose, const Vec3& x_world);

struct ProjectionJacobians {
  Eigen::Matrix<double, 2, 6> d_pose;   // w.r.t. left tangent of the pose
  Eigen::Matrix<double, 2, 3> d_point;  // w.r.t. the world point
};

struct DepthJacobians {
  Eigen::Matrix<double, 1, 6> d_pose;
  Eigen::Matrix<double, 1, 3> d_point;
};

Vec2 project(const PoseSE3& pose, const CameraModel& cam, const Vec3& x_world,
             ProjectionJacobians& jac);
double cam_depth(const PoseSE3& pose, const Vec3& x_world, DepthJacobians& jac);

}  // namespace wtrk
