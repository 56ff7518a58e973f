#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace oracle {

Vec2 project(const wtrk::PoseSE3& pose, const wtrk::CameraModel& cam, const Vec3& x) {
  const wtrk::Mat34 rt = pose.matrix();
  const Eigen::Vector4d xh(x.x(), x.y(), x.z(), 1.0);
  const Vec3 h = cam.matrix() * (rt * xh);
  return {h.x() / h.z(), h.y() / h.z()};
}

std::vector<std::vector<int>> knn(std::span<const Vec3> pts, int r) {
  const int n = static_cast<int>(pts.size());
  std::vector<std::vector<int>> out(n);
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> row;
    for (int j = 0; j < n; ++j) {
      if (j != i) row.emplace_back((pts[i] - pts[j]).norm(), j);
    }
    std::stable_sort(row.begin(), row.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (int k = 0; k < std::min<int>(r, static_cast<int>(row.size())); ++k) out[i].push_back(row[k].second);
  }
  return out;
}

wtrk::Similarity similarity(std::span<const Vec3> src, std::span<const Vec3> dst) {
  const std::size_t n = src.size();
  Vec3 ma = Vec3::Zero(), mb = Vec3::Zero();
  for (std::size_t k = 0; k < n; ++k) {
    ma += src[k];
    mb += dst[k];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  wtrk::Mat3 m = wtrk::Mat3::Zero();
  double sa = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    m += (src[k] - ma) * (dst[k] - mb).transpose();
    sa += (src[k] - ma).squaredNorm();
  }
  const double sxx = m(0, 0), sxy = m(0, 1), sxz = m(0, 2);
  const double syx = m(1, 0), syy = m(1, 1), syz = m(1, 2);
  const double szx = m(2, 0), szy = m(2, 1), szz = m(2, 2);
  Eigen::Matrix4d nmat;
  nmat << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
          syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
          szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
          sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(nmat);
  const Eigen::Vector4d q = es.eigenvectors().col(3);
  wtrk::Similarity s;
  s.rotation = Eigen::Quaterniond(q(0), q(1), q(2), q(3)).normalized().toRotationMatrix();
  double num = 0.0;
  for (std::size_t k = 0; k < n; ++k) num += (dst[k] - mb).dot(s.rotation * (src[k] - ma));
  s.scale = num / sa;
  s.translation = mb - s.scale * (s.rotation * ma);
  return s;
}

wtrk::TrajMetrics traj(std::span<const wtrk::PoseSE3> est, std::span<const wtrk::PoseSE3> gt) {
  const std::size_t n = est.size();
  std::vector<Vec3> ce, cg;
  for (std::size_t t = 0; t < n; ++t) {
    const wtrk::Mat3 re = est[t].rotation.toRotationMatrix();
    const wtrk::Mat3 rg = gt[t].rotation.toRotationMatrix();
    ce.push_back(-re.transpose() * est[t].translation);
    cg.push_back(-rg.transpose() * gt[t].translation);
  }
  const wtrk::Similarity s = similarity(ce, cg);
  wtrk::TrajMetrics m;
  double sq = 0.0;
  for (std::size_t t = 0; t < n; ++t) sq += (s.scale * s.rotation * ce[t] + s.translation - cg[t]).squaredNorm();
  m.ate = std::sqrt(sq / static_cast<double>(n));
  for (std::size_t t = 1; t < n; ++t) {
    const wtrk::Mat34 e0 = est[t - 1].matrix(), e1 = est[t].matrix();
    const wtrk::Mat34 g0 = gt[t - 1].matrix(), g1 = gt[t].matrix();
    // [R1 | t1] [R0 | t0]^-1 = [R1 R0^T | t1 - R1 R0^T t0]
    const wtrk::Mat3 rre = e1.leftCols<3>() * e0.leftCols<3>().transpose();
    const wtrk::Mat3 rrg = g1.leftCols<3>() * g0.leftCols<3>().transpose();
    const Vec3 tre = e1.col(3) - rre * e0.col(3);
    const Vec3 trg = g1.col(3) - rrg * g0.col(3);
    m.rte += (s.scale * tre - trg).norm();
    const double c = std::clamp(((rre.transpose() * rrg).trace() - 1.0) / 2.0, -1.0, 1.0);
    m.rre += std::acos(c) * 180.0 / M_PI;
  }
  m.rte /= static_cast<double>(n - 1);
  m.rre /= static_cast<double>(n - 1);
  return m;
}

wtrk::DepthMetrics depth(std::span<const double> est, std::span<const double> gt) {
  double see = 0.0, se = 0.0, seg = 0.0, sg = 0.0, cnt = 0.0;
  for (std::size_t k = 0; k < est.size(); ++k) {
    if (!std::isfinite(est[k]) || !std::isfinite(gt[k]) || !(gt[k] > 0.0)) continue;
    see += est[k] * est[k];
    se += est[k];
    seg += est[k] * gt[k];
    sg += gt[k];
    cnt += 1.0;
  }
  const double det = see * cnt - se * se;
  wtrk::DepthMetrics m;
  m.scale = (seg * cnt - se * sg) / det;
  m.shift = (see * sg - se * seg) / det;
  m.count = static_cast<int>(cnt);
  double good = 0.0;
  for (std::size_t k = 0; k < est.size(); ++k) {
    if (!std::isfinite(est[k]) || !std::isfinite(gt[k]) || !(gt[k] > 0.0)) continue;
    const double a = m.scale * est[k] + m.shift;
    m.abs_rel += std::abs(a - gt[k]) / gt[k] / cnt;
    if (a > 0.0 && a / gt[k] < 1.25 && gt[k] / a < 1.25) good += 1.0;
  }
  m.delta_125 = 100.0 * good / cnt;
  return m;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

wtrk::Tracking3dMetrics tracking3d(std::span<const Vec3> est, std::span<const std::uint8_t> est_vis,
                                   std::span<const Vec3> gt, std::span<const std::uint8_t> gt_vis) {
  std::vector<double> dists;
  for (std::size_t k = 0; k < gt.size(); ++k) {
    if (gt_vis[k]) dists.push_back(std::sqrt(gt[k].x() * gt[k].x() + gt[k].y() * gt[k].y() + gt[k].z() * gt[k].z()));
  }
  wtrk::Tracking3dMetrics m;
  m.scene_scale = dists.empty() ? 1.0 : median(dists);
  const double fracs[5] = {0.01, 0.02, 0.04, 0.08, 0.16};
  double agree = 0.0;
  for (std::size_t k = 0; k < gt.size(); ++k) agree += (est_vis[k] > 0) == (gt_vis[k] > 0);
  m.oa = 100.0 * agree / static_cast<double>(gt.size());
  for (double f : fracs) {
    double within = 0.0, nvis = 0.0, tp = 0.0, fp = 0.0, fn = 0.0;
    for (std::size_t k = 0; k < gt.size(); ++k) {
      const bool close = (est[k] - gt[k]).norm() < f * m.scene_scale;
      const bool ev = est_vis[k] > 0, gv = gt_vis[k] > 0;
      if (gv) {
        nvis += 1.0;
        if (close) within += 1.0;
      }
      if (ev && gv && close) {
        tp += 1.0;
      } else if (ev && gv) {
        fp += 1.0;
        fn += 1.0;
      } else if (ev) {
        fp += 1.0;
      } else if (gv) {
        fn += 1.0;
      }
    }
    m.apd3d += (nvis > 0 ? 100.0 * within / nvis : 100.0) / 5.0;
    m.aj += (tp + fp + fn > 0 ? 100.0 * tp / (tp + fp + fn) : 100.0) / 5.0;
  }
  return m;
}

wtrk::FlowMetrics flow(std::span<const Vec2> est, std::span<const Vec2> gt,
                       std::span<const std::uint8_t> est_vis,
                       std::span<const std::uint8_t> gt_vis) {
  wtrk::FlowMetrics m;
  double inter = 0.0, uni = 0.0;
  for (std::size_t k = 0; k < gt.size(); ++k) {
    const double dx = est[k].x() - gt[k].x(), dy = est[k].y() - gt[k].y();
    m.epe += std::sqrt(dx * dx + dy * dy) / static_cast<double>(gt.size());
    if (!est_vis[k] && !gt_vis[k]) inter += 1.0;
    if (!est_vis[k] || !gt_vis[k]) uni += 1.0;
  }
  m.iou = uni > 0 ? 100.0 * inter / uni : 100.0;
  return m;
}

double bilinear(std::span<const float> img, int h, int w, double x, double y) {
  x = std::min(std::max(x, 0.0), w - 1.0);
  y = std::min(std::max(y, 0.0), h - 1.0);
  double acc = 0.0;
  for (int yy = 0; yy < h; ++yy) {
    const double wy = std::max(0.0, 1.0 - std::abs(y - yy));
    if (wy == 0.0) continue;
    for (int xx = 0; xx < w; ++xx) {
      const double wx = std::max(0.0, 1.0 - std::abs(x - xx));
      if (wx == 0.0) continue;
      acc += wx * wy * img[static_cast<std::size_t>(yy) * w + xx];
    }
  }
  return acc;
}

std::vector<double> propagate(std::span<const float> raw, int h, int w,
                              std::span<const Vec2> pix, std::span<const double> depth,
                              const wtrk::CameraModel& cam, int k) {
  const wtrk::Mat3 kinv = cam.matrix().inverse();
  auto lift = [&](const Vec2& p, double d) { return Vec3(d * (kinv * Vec3(p.x(), p.y(), 1.0))); };
  std::vector<Vec2> sp;
  std::vector<Vec3> sl;
  std::vector<double> ratio;
  for (std::size_t j = 0; j < pix.size(); ++j) {
    const double d = bilinear(raw, h, w, pix[j].x(), pix[j].y());
    if (!(d > 0.0)) continue;
    sp.push_back(pix[j]);
    sl.push_back(lift(pix[j], d));
    ratio.push_back(depth[j] / d);
  }
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = raw[static_cast<std::size_t>(y) * w + x];
      std::vector<int> order(sp.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return (sp[a] - Vec2(x, y)).squaredNorm() < (sp[b] - Vec2(x, y)).squaredNorm();
      });
      const Vec3 p = lift(Vec2(x, y), d);
      double num = 0.0, den = 0.0;
      for (int n = 0; n < std::min<int>(k, static_cast<int>(order.size())); ++n) {
        const double wt = 1.0 / ((p - sl[order[n]]).norm() + 1e-8);
        num += wt * ratio[order[n]];
        den += wt;
      }
      out[static_cast<std::size_t>(y) * w + x] = d * num / den;
    }
  }
  return out;
}

double arap(std::span<const Vec3> x, int n, int t, const std::vector<std::vector<int>>& nbr) {
  double s = 0.0;
  for (int f = 1; f < t; ++f) {
    for (int a = 0; a < n; ++a) {
      for (int b : nbr[a]) {
        const Vec3 now = x[a * t + f] - x[b * t + f];
        const Vec3 before = x[a * t + f - 1] - x[b * t + f - 1];
        s += (now - before).dot(now - before);
      }
    }
  }
  return s;
}

double ts(std::span<const Vec3> x, int n, int t) {
  double s = 0.0;
  for (int a = 0; a < n; ++a) {
    for (int f = 1; f < t; ++f) s += (x[a * t + f] - x[a * t + f - 1]).dot(x[a * t + f] - x[a * t + f - 1]);
  }
  return s;
}

std::vector<std::uint8_t> coverage(std::span<const Vec2> pts, std::span<const std::uint8_t> vis,
                                   int h, int w, double radius) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(h) * w, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (vis[i] && (pts[i] - Vec2(x, y)).norm() <= radius) out[static_cast<std::size_t>(y) * w + x] = 0;
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> components(std::span<const std::uint8_t> px, int h, int w, int min_size) {
  std::vector<int> comp(px.size(), -1);
  std::vector<int> sizes;
  for (int s = 0; s < h * w; ++s) {
    if (!px[s] || comp[s] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    sizes.push_back(0);
    std::vector<int> stack{s};
    comp[s] = id;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++sizes[id];
      const int x = p % w, y = p / w;
      const int cand[4] = {x > 0 ? p - 1 : -1, x + 1 < w ? p + 1 : -1, y > 0 ? p - w : -1,
                           y + 1 < h ? p + w : -1};
      for (int q : cand) {
        if (q >= 0 && px[q] && comp[q] < 0) {
          comp[q] = id;
          stack.push_back(q);
        }
      }
    }
  }
  std::vector<std::uint8_t> out(px.size(), 0);
  for (std::size_t p = 0; p < px.size(); ++p) out[p] = comp[p] >= 0 && sizes[comp[p]] > min_size;
  return out;
}

std::vector<std::uint8_t> gate(std::span<const double> residuals, double tau, double diag,
                               int keep_min) {
  const int n = static_cast<int>(residuals.size());
  std::vector<std::uint8_t> out(n, 0);
  for (int i = 0; i < n; ++i) {
    int smaller = 0;
    for (int j = 0; j < n; ++j) {
      if (residuals[j] < residuals[i] || (residuals[j] == residuals[i] && j < i)) ++smaller;
    }
    out[i] = residuals[i] < tau * diag || smaller < keep_min;
  }
  return out;
}

Vec2 grid_bilinear(std::span<const Vec2> grid, int cols, int rows, int stride, double x, double y) {
  const double gx = std::min(std::max(x / stride, 0.0), cols - 1.0);
  const double gy = std::min(std::max(y / stride, 0.0), rows - 1.0);
  Vec2 acc = Vec2::Zero();
  for (int r = 0; r < rows; ++r) {
    const double wy = std::max(0.0, 1.0 - std::abs(gy - r));
    for (int c = 0; c < cols; ++c) {
      const double wx = std::max(0.0, 1.0 - std::abs(gx - c));
      acc += wx * wy * grid[static_cast<std::size_t>(r) * cols + c];
    }
  }
  return acc;
}

}  // namespace oracle
