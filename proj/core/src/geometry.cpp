#include "wtrk/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "wtrk/errors.hpp"

namespace wtrk {

Mat3 CameraModel::matrix() const {
  Mat3 K;
  K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return K;
}

CameraModel CameraModel::from_matrix(const Mat3& K) {
  return CameraModel{K(0, 0), K(1, 1), K(0, 2), K(1, 2)};
}

PoseSE3 PoseSE3::from_matrix(const Mat34& m) {
  PoseSE3 p;
  Mat3 r = m.leftCols<3>();
  p.rotation = Eigen::Quaterniond(r);
  p.rotation.normalize();
  p.translation = m.col(3);
  return p;
}

Mat34 PoseSE3::matrix() const {
  Mat34 m;
  m.leftCols<3>() = rotation.toRotationMatrix();
  m.col(3) = translation;
  return m;
}

PoseSE3 PoseSE3::inverse() const {
  PoseSE3 inv;
  inv.rotation = rotation.conjugate();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

PoseSE3 operator*(const PoseSE3& a, const PoseSE3& b) {
  PoseSE3 c;
  c.rotation = a.rotation * b.rotation;
  c.rotation.normalize();
  c.translation = a.rotation * b.translation + a.translation;
  return c;
}

Mat3 skew(const Vec3& w) {
  Mat3 s;
  s << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return s;
}

namespace {

// Coefficients of V = I + b W + c W^2 for the SE(3) exponential.
void v_coefficients(double theta, double& b, double& c) {
  const double t2 = theta * theta;
  // The closed forms cancel badly below ~1e-2; the series is exact to rounding there.
  if (theta < 1e-2) {
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0 - t2 * t2 * t2 / 40320.0;
    c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0;
  } else {
    b = (1.0 - std::cos(theta)) / t2;
    c = (theta - std::sin(theta)) / (t2 * theta);
  }
}

}  // namespace

PoseSE3 se3_exp(const Vec6& tangent) {
  const Vec3 w = tangent.head<3>();
  const Vec3 v = tangent.tail<3>();
  const double theta = w.norm();

  PoseSE3 p;
  const double half = 0.5 * theta;
  // sin(theta/2)/theta, series near zero
  const double k = theta < 1e-6 ? 0.5 - theta * theta / 48.0 : std::sin(half) / theta;
  p.rotation = Eigen::Quaterniond(std::cos(half), k * w.x(), k * w.y(), k * w.z());
  p.rotation.normalize();

  double b = 0.0, c = 0.0;
  v_coefficients(theta, b, c);
  const Mat3 W = skew(w);
  const Mat3 V = Mat3::Identity() + b * W + c * W * W;
  p.translation = V * v;
  return p;
}

Vec6 se3_log(const PoseSE3& pose) {
  Eigen::Quaterniond q = pose.rotation.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 xyz = q.vec();
  const double n = xyz.norm();
  Vec3 w;
  if (n < 1e-10) {
    w = 2.0 * xyz / q.w();
  } else {
    w = (2.0 * std::atan2(n, q.w()) / n) * xyz;
  }
  const double theta = w.norm();
  const Mat3 W = skew(w);
  double d;
  if (theta < 1e-2) {
    const double t2 = theta * theta;
    d = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    d = (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / (theta * theta);
  }
  const Mat3 V_inv = Mat3::Identity() - 0.5 * W + d * W * W;
  Vec6 out;
  out.head<3>() = w;
  out.tail<3>() = V_inv * pose.translation;
  return out;
}

Mat6 adjoint(const PoseSE3& pose) {
  const Mat3 R = pose.rotation.toRotationMatrix();
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = R;
  ad.bottomLeftCorner<3, 3>() = skew(pose.translation) * R;
  ad.bottomRightCorner<3, 3>() = R;
  return ad;
}

double rotation_angle_deg(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  const Eigen::Quaterniond rel = a.normalized().conjugate() * b.normalized();
  // atan2 stays accurate for tiny angles where acos loses precision.
  const double angle = 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
  return angle * 180.0 / M_PI;
}

Vec2 project_camera_point(const CameraModel& cam, const Vec3& x_cam) {
  return {cam.fx * x_cam.x() / x_cam.z() + cam.cx, cam.fy * x_cam.y() / x_cam.z() + cam.cy};
}

Vec3 unproject_camera(const CameraModel& cam, const Vec2& pixel, double depth) {
  return {(pixel.x() - cam.cx) / cam.fx * depth, (pixel.y() - cam.cy) / cam.fy * depth, depth};
}

Vec2 project(const PoseSE3& pose, const CameraModel& cam, const Vec3& x_world) {
  const Vec3 xc = pose.transform(x_world);
  if (xc.z() <= kMinDepth) {
    throw Error(ErrorCode::BehindCamera, "camera-frame depth " + std::to_string(xc.z()));
  }
  return project_camera_point(cam, xc);
}

Vec3 unproject(const PoseSE3& pose, const CameraModel& cam, const Vec2& pixel, double depth) {
  if (!(depth > 0.0)) {
    throw Error(ErrorCode::NonPositiveDepth, "depth " + std::to_string(depth));
  }
  const Vec3 xc = unproject_camera(cam, pixel, depth);
  return pose.rotation.conjugate() * (xc - pose.translation);
}

double cam_depth(const PoseSE3& pose, const Vec3& x_world) {
  return pose.transform(x_world).z();
}

Vec2 project(const PoseSE3& pose, const CameraModel& cam, const Vec3& x_world,
             ProjectionJacobians& jac) {
  const Mat3 R = pose.rotation.toRotationMatrix();
  const Vec3 xc = R * x_world + pose.translation;
  if (xc.z() <= kMinDepth) {
    throw Error(ErrorCode::BehindCamera, "camera-frame depth " + std::to_string(xc.z()));
  }
  const double iz = 1.0 / xc.z();
  Eigen::Matrix<double, 2, 3> dproj;
  dproj << cam.fx * iz, 0.0, -cam.fx * xc.x() * iz * iz,
           0.0, cam.fy * iz, -cam.fy * xc.y() * iz * iz;
  // d xc / d(omega, v) = [-[xc]x, I]
  jac.d_pose.leftCols<3>() = -dproj * skew(xc);
  jac.d_pose.rightCols<3>() = dproj;
  jac.d_point = dproj * R;
  return project_camera_point(cam, xc);
}

double cam_depth(const PoseSE3& pose, const Vec3& x_world, DepthJacobians& jac) {
  const Mat3 R = pose.rotation.toRotationMatrix();
  const Vec3 xc = R * x_world + pose.translation;
  // row z of [-[xc]x, I]
  jac.d_pose << xc.y(), -xc.x(), 0.0, 0.0, 0.0, 1.0;
  jac.d_point = R.row(2);
  return xc.z();
}

}  // namespace wtrk
