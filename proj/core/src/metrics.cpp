#include "wtrk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Geometry>

#include "wtrk/errors.hpp"

namespace wtrk {

Similarity align_similarity(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size() || src.empty()) {
    throw Error(ErrorCode::LengthMismatch, "alignment needs equal, non-empty point sets");
  }
  const auto n = static_cast<Eigen::Index>(src.size());
  Eigen::Matrix<double, 3, Eigen::Dynamic> a(3, n), b(3, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    a.col(k) = src[k];
    b.col(k) = dst[k];
  }
  Similarity s;
  const Vec3 ma = a.rowwise().mean();
  const Vec3 mb = b.rowwise().mean();
  const double spread = (a.colwise() - ma).squaredNorm();
  if (!(spread > 1e-24 * std::max(1.0, ma.squaredNorm()) * n)) {
    s.translation = mb - ma;
    return s;
  }
  const Eigen::Matrix4d m = Eigen::umeyama(a, b, true);
  const Mat3 sr = m.topLeftCorner<3, 3>();
  s.scale = std::cbrt(sr.determinant());
  s.rotation = sr / s.scale;
  s.translation = m.topRightCorner<3, 1>();
  return s;
}

TrajMetrics traj_metrics(std::span<const PoseSE3> est, std::span<const PoseSE3> gt) {
  if (est.size() != gt.size() || est.size() < 2) {
    throw Error(ErrorCode::LengthMismatch, "trajectories of " + std::to_string(est.size()) +
                                               " and " + std::to_string(gt.size()) + " poses");
  }
  const std::size_t n = est.size();
  std::vector<Vec3> ce(n), cg(n);
  for (std::size_t t = 0; t < n; ++t) {
    ce[t] = est[t].center();
    cg[t] = gt[t].center();
  }
  const Similarity sim = align_similarity(ce, cg);

  TrajMetrics m;
  double sq = 0.0;
  for (std::size_t t = 0; t < n; ++t) sq += (sim.apply(ce[t]) - cg[t]).squaredNorm();
  m.ate = std::sqrt(sq / n);

  for (std::size_t t = 0; t + 1 < n; ++t) {
    const PoseSE3 re = est[t + 1] * est[t].inverse();
    const PoseSE3 rg = gt[t + 1] * gt[t].inverse();
    m.rte += (sim.scale * re.translation - rg.translation).norm();
    m.rre += rotation_angle_deg(re.rotation, rg.rotation);
  }
  m.rte /= static_cast<double>(n - 1);
  m.rre /= static_cast<double>(n - 1);
  return m;
}

DepthMetrics depth_metrics(std::span<const double> est, std::span<const double> gt) {
  if (est.size() != gt.size()) throw Error(ErrorCode::LengthMismatch, "depth maps differ in size");
  std::vector<std::size_t> valid;
  for (std::size_t k = 0; k < est.size(); ++k) {
    if (std::isfinite(est[k]) && std::isfinite(gt[k]) && gt[k] > 0.0) valid.push_back(k);
  }
  if (valid.size() < 2) throw Error(ErrorCode::DegenerateFit, "fewer than two valid depths");

  double se = 0.0, sg = 0.0;
  for (auto k : valid) {
    se += est[k];
    sg += gt[k];
  }
  const double n = static_cast<double>(valid.size());
  const double me = se / n, mg = sg / n;
  double cov = 0.0, var_e = 0.0, var_g = 0.0;
  for (auto k : valid) {
    cov += (est[k] - me) * (gt[k] - mg);
    var_e += (est[k] - me) * (est[k] - me);
    var_g += (gt[k] - mg) * (gt[k] - mg);
  }
  if (var_g <= 0.0) throw Error(ErrorCode::DegenerateFit, "ground-truth depth is constant");
  if (var_e <= 0.0) throw Error(ErrorCode::DegenerateFit, "estimated depth is constant");

  DepthMetrics m;
  m.scale = cov / var_e;
  m.shift = mg - m.scale * me;
  m.count = static_cast<int>(valid.size());
  int good = 0;
  for (auto k : valid) {
    const double a = m.scale * est[k] + m.shift;
    m.abs_rel += std::abs(a - gt[k]) / gt[k];
    if (a > 0.0 && std::max(a / gt[k], gt[k] / a) < 1.25) ++good;
  }
  m.abs_rel /= n;
  m.delta_125 = 100.0 * good / n;
  return m;
}

std::vector<double> rasterize_point_depths(std::span<const Vec2> pixels,
                                           std::span<const double> depths, int height, int width) {
  std::vector<double> img(static_cast<std::size_t>(height) * width,
                          std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < pixels.size(); ++k) {
    const double x = std::nearbyint(pixels[k].x());
    const double y = std::nearbyint(pixels[k].y());
    if (!(x >= 0 && y >= 0 && x < width && y < height) || !std::isfinite(depths[k])) continue;
    double& slot = img[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)];
    if (std::isnan(slot) || depths[k] < slot) slot = depths[k];
  }
  return img;
}

double tracking_scene_scale(std::span<const Vec3> gt_cam, std::span<const std::uint8_t> gt_vis) {
  std::vector<double> d;
  for (std::size_t k = 0; k < gt_cam.size(); ++k) {
    if (gt_vis[k]) d.push_back(gt_cam[k].norm());
  }
  if (d.empty()) return 1.0;
  const auto mid = d.begin() + d.size() / 2;
  std::nth_element(d.begin(), mid, d.end());
  if (d.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(d.begin(), mid);
  return 0.5 * (lower + upper);
}

Tracking3dMetrics tracking3d_metrics(std::span<const Vec3> est_cam,
                                     std::span<const std::uint8_t> est_vis,
                                     std::span<const Vec3> gt_cam,
                                     std::span<const std::uint8_t> gt_vis, double scene_scale) {
  const std::size_t n = gt_cam.size();
  if (est_cam.size() != n || est_vis.size() != n || gt_vis.size() != n) {
    throw Error(ErrorCode::LengthMismatch, "tracking inputs differ in size");
  }
  Tracking3dMetrics m;
  m.scene_scale = scene_scale > 0.0 ? scene_scale : tracking_scene_scale(gt_cam, gt_vis);

  std::size_t agree = 0, gt_visible = 0;
  for (std::size_t k = 0; k < n; ++k) {
    agree += (est_vis[k] != 0) == (gt_vis[k] != 0) ? 1 : 0;
    gt_visible += gt_vis[k] ? 1 : 0;
  }
  m.oa = n ? 100.0 * agree / n : 100.0;

  for (double frac : kTrackingThresholds) {
    const double thr = frac * m.scene_scale;
    std::size_t within = 0, tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const bool close = (est_cam[k] - gt_cam[k]).norm() < thr;
      if (gt_vis[k] && close) ++within;
      const bool hit = gt_vis[k] && est_vis[k] && close;
      tp += hit ? 1 : 0;
      fp += (est_vis[k] && !hit) ? 1 : 0;
      fn += (gt_vis[k] && !hit) ? 1 : 0;
    }
    m.apd3d += gt_visible ? 100.0 * within / gt_visible : 100.0;
    const std::size_t denom = tp + fp + fn;
    m.aj += denom ? 100.0 * tp / denom : 100.0;
  }
  m.apd3d /= kTrackingThresholds.size();
  m.aj /= kTrackingThresholds.size();
  return m;
}

FlowMetrics flow_metrics(std::span<const Vec2> est_flow, std::span<const Vec2> gt_flow,
                         std::span<const std::uint8_t> est_vis,
                         std::span<const std::uint8_t> gt_vis) {
  const std::size_t n = gt_flow.size();
  if (est_flow.size() != n || est_vis.size() != n || gt_vis.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "flow inputs differ in size");
  }
  FlowMetrics m;
  std::size_t inter = 0, uni = 0;
  for (std::size_t k = 0; k < n; ++k) {
    m.epe += (est_flow[k] - gt_flow[k]).norm();
    const bool oe = !est_vis[k], og = !gt_vis[k];
    inter += (oe && og) ? 1 : 0;
    uni += (oe || og) ? 1 : 0;
  }
  m.epe = n ? m.epe / n : 0.0;
  m.iou = uni ? 100.0 * inter / uni : 100.0;
  return m;
}

}  // namespace wtrk
