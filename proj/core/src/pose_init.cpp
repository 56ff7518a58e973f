#include "wtrk/pose_init.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Geometry>

#include "wtrk/errors.hpp"
#include "wtrk/observation.hpp"
#include "wtrk/parallel.hpp"
#include "wtrk/solver.hpp"

namespace wtrk {

namespace {

using Matrix3X = Eigen::Matrix<double, 3, Eigen::Dynamic>;

bool usable(const TrackSet2D& tracks, const TrackDepths& depths, int i, int t) {
  return tracks.vis(i, t) && depths.at(i, t) > 0.0;
}

Vec3 lift(const CameraModel& cam, const TrackSet2D& tracks, const TrackDepths& depths, int i, int t) {
  return unproject_camera(cam, tracks.pos(i, t), depths.at(i, t));
}

PoseSE3 pose_from_affine(const Eigen::Matrix4d& m) {
  PoseSE3 p;
  p.rotation = Eigen::Quaterniond(Mat3(m.topLeftCorner<3, 3>()));
  p.rotation.normalize();
  p.translation = m.topRightCorner<3, 1>();
  return p;
}

/// Rigid fit dst ~ R * src + t that repeatedly drops the worst 20% of pairs.
PoseSE3 trimmed_rigid_fit(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  std::vector<int> keep(src.size());
  std::iota(keep.begin(), keep.end(), 0);
  PoseSE3 pose;
  for (int round = 0; round < 3; ++round) {
    Matrix3X a(3, keep.size()), b(3, keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k) {
      a.col(k) = src[keep[k]];
      b.col(k) = dst[keep[k]];
    }
    pose = pose_from_affine(Eigen::umeyama(a, b, false));
    if (round == 2) break;
    std::vector<std::pair<double, int>> err(src.size());
    for (std::size_t k = 0; k < src.size(); ++k) {
      err[k] = {(pose.transform(src[k]) - dst[k]).squaredNorm(), static_cast<int>(k)};
    }
    std::sort(err.begin(), err.end());
    const std::size_t n = std::max<std::size_t>(3, (src.size() * 4 + 4) / 5);
    keep.resize(n);
    for (std::size_t k = 0; k < n; ++k) keep[k] = err[k].second;
    std::sort(keep.begin(), keep.end());
  }
  return pose;
}

/// Rigid transform taking camera `ta` coordinates to camera `tb` coordinates
/// from the selected tracks seen in both, or false when fewer than 3 exist.
bool relative_from_depths(const TrackSet2D& tracks, const TrackDepths& depths,
                          const CameraModel& cam, std::span<const std::uint8_t> selected, int ta,
                          int tb, PoseSE3& out) {
  std::vector<Vec3> src, dst;
  for (int i = 0; i < tracks.num_tracks; ++i) {
    if (!selected[i] || !usable(tracks, depths, i, ta) || !usable(tracks, depths, i, tb)) continue;
    src.push_back(lift(cam, tracks, depths, i, ta));
    dst.push_back(lift(cam, tracks, depths, i, tb));
  }
  if (src.size() < 3) return false;
  out = trimmed_rigid_fit(src, dst);
  return true;
}

// Gradient of a pixel loss w.r.t. delta for x_out = B * exp(sign * delta) * y,
// given g = d loss / d x_out and R_B.
inline Vec6 tangent_grad(const Mat3& rot_b, const Vec3& y, const Vec3& g, double sign) {
  const Vec3 h = rot_b.transpose() * g;
  Vec6 out;
  out.head<3>() = sign * y.cross(h);
  out.tail<3>() = sign * h;
  return out;
}

// Pixel residual of x_cam against `observed`; returns the squared error and
// writes d loss / d x_cam into g. Behind-camera points get the fixed penalty
// and a zero gradient.
inline double pixel_term(const CameraModel& cam, const Vec3& xc, const Vec2& observed,
                         double behind_penalty, Vec3& g) {
  if (xc.z() <= kMinDepth) {
    g.setZero();
    return behind_penalty;
  }
  const double iz = 1.0 / xc.z();
  const Vec2 r(cam.fx * xc.x() * iz + cam.cx - observed.x(), cam.fy * xc.y() * iz + cam.cy - observed.y());
  g = Vec3(2.0 * r.x() * cam.fx * iz, 2.0 * r.y() * cam.fy * iz,
           -2.0 * (r.x() * cam.fx * xc.x() + r.y() * cam.fy * xc.y()) * iz * iz);
  return r.squaredNorm();
}

double behind_penalty(double image_diagonal) {
  const double p = kBehindCameraPenaltyDiagonals * image_diagonal;
  return p * p;
}

bool is_degenerate(const TrackSet2D& tracks, const TrackDepths& depths,
                   std::span<const std::uint8_t> selected, int first, int last) {
  double dmin = INFINITY, dmax = -INFINITY;
  for (int i = 0; i < tracks.num_tracks; ++i) {
    if (!selected[i]) continue;
    const Vec2* ref = nullptr;
    for (int t = first; t <= last; ++t) {
      if (!usable(tracks, depths, i, t)) continue;
      dmin = std::min(dmin, depths.at(i, t));
      dmax = std::max(dmax, depths.at(i, t));
      if (!ref) {
        ref = &tracks.pos(i, t);
      } else if (tracks.pos(i, t) != *ref) {
        return false;
      }
    }
  }
  return dmax - dmin <= 1e-12 * std::max(1.0, std::abs(dmax));
}

}  // namespace

std::vector<std::uint8_t> gate_inliers(std::span<const double> residuals, double tau,
                                       double image_diagonal, int keep_min) {
  const double tau_px = tau * image_diagonal;
  std::vector<std::uint8_t> mask(residuals.size(), 0);
  for (std::size_t i = 0; i < residuals.size(); ++i) mask[i] = residuals[i] < tau_px ? 1 : 0;
  std::vector<int> order(residuals.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return residuals[a] < residuals[b]; });
  const std::size_t floor = std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(0, keep_min)));
  for (std::size_t k = 0; k < floor; ++k) mask[order[k]] = 1;
  return mask;
}

double clip_projection_loss(std::span<const PoseSE3> poses, int first, const CameraModel& cam,
                            const TrackSet2D& tracks, const TrackDepths& depths,
                            std::span<const std::uint8_t> selected, double image_diagonal,
                            std::span<Vec6> pose_grad) {
  const int n = static_cast<int>(poses.size());
  const bool want_grad = !pose_grad.empty();
  const double behind = behind_penalty(image_diagonal);
  std::vector<Mat3> rot(n);
  for (int k = 0; k < n; ++k) rot[k] = poses[k].rotation.toRotationMatrix();

  double loss = 0.0;
  std::vector<Vec3> lifted(n);
  std::vector<int> frames;
  frames.reserve(n);
  for (int i = 0; i < tracks.num_tracks; ++i) {
    if (!selected[i]) continue;
    frames.clear();
    for (int k = 0; k < n; ++k) {
      if (!usable(tracks, depths, i, first + k)) continue;
      frames.push_back(k);
      lifted[k] = lift(cam, tracks, depths, i, first + k);
    }
    for (int a : frames) {
      // world point seen from frame a
      const Vec3 xw = rot[a].transpose() * (lifted[a] - poses[a].translation);
      for (int b : frames) {
        if (a == b) continue;
        const Vec3 xc = rot[b] * xw + poses[b].translation;
        Vec3 g;
        loss += pixel_term(cam, xc, tracks.pos(i, first + b), behind, g);
        if (!want_grad || g.isZero(0.0)) continue;
        pose_grad[b].head<3>() += xc.cross(g);
        pose_grad[b].tail<3>() += g;
        // x_c = (pose_b * pose_a^-1) * exp(-delta_a) * lifted_a
        pose_grad[a] += tangent_grad(rot[b] * rot[a].transpose(), lifted[a], g, -1.0);
      }
    }
  }
  return loss;
}

std::vector<double> clip_track_residuals(std::span<const PoseSE3> poses, int first,
                                         const CameraModel& cam, const TrackSet2D& tracks,
                                         const TrackDepths& depths, double image_diagonal) {
  const int n = static_cast<int>(poses.size());
  const double behind = kBehindCameraPenaltyDiagonals * image_diagonal;
  std::vector<double> out(tracks.num_tracks, 0.0);
  for (int i = 0; i < tracks.num_tracks; ++i) {
    double worst = 0.0;
    for (int a = 0; a < n; ++a) {
      if (!usable(tracks, depths, i, first + a)) continue;
      const Vec3 xw = poses[a].inverse().transform(lift(cam, tracks, depths, i, first + a));
      for (int b = 0; b < n; ++b) {
        if (a == b || !usable(tracks, depths, i, first + b)) continue;
        const Vec3 xc = poses[b].transform(xw);
        const double e = xc.z() <= kMinDepth
                             ? behind
                             : (project_camera_point(cam, xc) - tracks.pos(i, first + b)).norm();
        worst = std::max(worst, e);
      }
    }
    out[i] = worst;
  }
  return out;
}

Clip estimate_clip_poses(const TrackSet2D& tracks, const TrackDepths& depths,
                         const CameraModel& cam, double image_diagonal, int first, int last,
                         const PipelineConfig& cfg, const PoseInitOptions& opts) {
  Clip clip;
  clip.first = first;
  clip.last = last;
  const int n = clip.length();
  const int N = tracks.num_tracks;
  clip.poses.assign(n, PoseSE3::identity());
  clip.eligible.assign(N, 0);

  const int need = std::min(2, n);
  int eligible_count = 0;
  for (int i = 0; i < N; ++i) {
    int seen = 0;
    for (int t = first; t <= last; ++t) seen += usable(tracks, depths, i, t) ? 1 : 0;
    clip.eligible[i] = seen >= need ? 1 : 0;
    eligible_count += clip.eligible[i];
  }
  clip.inliers = clip.eligible;
  if (n == 1) return clip;
  if (eligible_count < kMinPoseTracks) {
    throw Error(ErrorCode::InsufficientTracks,
                "clip [" + std::to_string(first) + ", " + std::to_string(last) + "] has " +
                    std::to_string(eligible_count) + " usable tracks");
  }
  if (is_degenerate(tracks, depths, clip.eligible, first, last)) {
    clip.degenerate = true;
    return clip;
  }

  for (int k = 1; k < n; ++k) {
    PoseSE3 rel;
    if (relative_from_depths(tracks, depths, cam, clip.eligible, first, first + k, rel)) {
      clip.poses[k] = rel;
    } else if (relative_from_depths(tracks, depths, cam, clip.eligible, first + k - 1, first + k, rel)) {
      clip.poses[k] = rel * clip.poses[k - 1];
    } else {
      clip.poses[k] = clip.poses[k - 1];
    }
  }

  const SolverOptions so = SolverOptions::from(cfg.solver);
  for (int round = 0; round < kMaxGatingRounds; ++round) {
    clip.rounds = round + 1;
    ParamBlocks x;
    x.poses = clip.poses;
    x.pose_frozen.assign(n, 0);
    x.pose_frozen[0] = 1;
    const std::vector<std::uint8_t> selected = clip.inliers;
    const Objective f = [&](const ParamBlocks& p, Gradient* g) {
      return clip_projection_loss(p.poses, first, cam, tracks, depths, selected, image_diagonal,
                                  g ? std::span<Vec6>(g->poses) : std::span<Vec6>());
    };
    SolverResult r = minimize(f, std::move(x), so);
    clip.poses = std::move(r.params.poses);
    clip.loss = r.loss;
    if (!opts.gating) break;

    const auto residuals = clip_track_residuals(clip.poses, first, cam, tracks, depths, image_diagonal);
    std::vector<double> eligible_res;
    std::vector<int> ids;
    for (int i = 0; i < N; ++i) {
      if (!clip.eligible[i]) continue;
      eligible_res.push_back(residuals[i]);
      ids.push_back(i);
    }
    const auto mask = gate_inliers(eligible_res, cfg.inlier_tau, image_diagonal);
    std::vector<std::uint8_t> next(N, 0);
    for (std::size_t k = 0; k < ids.size(); ++k) next[ids[k]] = mask[k];
    if (next == clip.inliers) break;
    clip.inliers = std::move(next);
  }
  return clip;
}

namespace {

struct BoundaryTerm {
  int track;
  int frame_a;  // earlier clip, global pose fixed
  int frame_b;  // later clip, pose = local_b * G
  Vec3 world_a; // observation at frame_a mapped to world by the fixed pose
  Vec3 local_b; // observation at frame_b mapped to the later clip's frame
};

double boundary_loss(const PoseSE3& G, std::span<const BoundaryTerm> terms,
                     std::span<const PoseSE3> fixed, std::span<const PoseSE3> local,
                     int local_first, const CameraModel& cam, const TrackSet2D& tracks,
                     double image_diagonal, Vec6* grad) {
  const double behind = behind_penalty(image_diagonal);
  const Mat3 rg = G.rotation.toRotationMatrix();
  const PoseSE3 g_inv = G.inverse();
  const Mat3 rg_inv = rg.transpose();
  std::vector<Mat3> rot_fixed(fixed.size()), rot_local(local.size());
  for (std::size_t k = 0; k < fixed.size(); ++k) rot_fixed[k] = fixed[k].rotation.toRotationMatrix();
  for (std::size_t k = 0; k < local.size(); ++k) rot_local[k] = local[k].rotation.toRotationMatrix();

  double loss = 0.0;
  for (const auto& term : terms) {
    const int lb_idx = term.frame_b - local_first;
    const Mat3& ra = rot_fixed[term.frame_a];
    const Mat3& rl = rot_local[lb_idx];
    Vec3 g;
    {
      // a -> b: x = L_b * exp(delta) * (G * world_a)
      const Vec3 y = rg * term.world_a + G.translation;
      const Vec3 xc = rl * y + local[lb_idx].translation;
      loss += pixel_term(cam, xc, tracks.pos(term.track, term.frame_b), behind, g);
      if (grad) *grad += tangent_grad(rl, y, g, 1.0);
    }
    {
      // b -> a: x = (pa * G^-1) * exp(-delta) * local_b
      const Vec3 xc = ra * (rg_inv * term.local_b + g_inv.translation) + fixed[term.frame_a].translation;
      loss += pixel_term(cam, xc, tracks.pos(term.track, term.frame_a), behind, g);
      if (grad) *grad += tangent_grad(ra * rg_inv, term.local_b, g, -1.0);
    }
  }
  return loss;
}

}  // namespace

std::vector<PoseSE3> merge_clips(std::span<const Clip> clips, const TrackSet2D& tracks,
                                 const TrackDepths& depths, const CameraModel& cam,
                                 double image_diagonal, const PipelineConfig& cfg) {
  std::vector<PoseSE3> global(tracks.num_frames, PoseSE3::identity());
  if (clips.empty()) return global;
  for (int k = 0; k < clips[0].length(); ++k) global[clips[0].first + k] = clips[0].poses[k];

  const SolverOptions so = SolverOptions::from(cfg.solver);
  for (std::size_t c = 1; c < clips.size(); ++c) {
    const Clip& prev = clips[c - 1];
    const Clip& cur = clips[c];
    std::vector<Vec3> world_pts, local_pts;
    std::vector<BoundaryTerm> terms;
    for (int i = 0; i < tracks.num_tracks; ++i) {
      if (!prev.inliers[i] || !cur.inliers[i]) continue;
      Vec3 w = Vec3::Zero(), l = Vec3::Zero();
      int nw = 0, nl = 0;
      for (int t = prev.first; t <= prev.last; ++t) {
        if (!usable(tracks, depths, i, t)) continue;
        w += global[t].inverse().transform(lift(cam, tracks, depths, i, t));
        ++nw;
      }
      for (int t = cur.first; t <= cur.last; ++t) {
        if (!usable(tracks, depths, i, t)) continue;
        l += cur.poses[t - cur.first].inverse().transform(lift(cam, tracks, depths, i, t));
        ++nl;
      }
      if (nw == 0 || nl == 0) continue;
      world_pts.push_back(w / nw);
      local_pts.push_back(l / nl);
      for (int ta = prev.first; ta <= prev.last; ++ta) {
        if (!usable(tracks, depths, i, ta)) continue;
        for (int tb = cur.first; tb <= cur.last; ++tb) {
          if (!usable(tracks, depths, i, tb)) continue;
          terms.push_back({i, ta, tb, global[ta].inverse().transform(lift(cam, tracks, depths, i, ta)),
                           cur.poses[tb - cur.first].inverse().transform(lift(cam, tracks, depths, i, tb))});
        }
      }
    }
    if (static_cast<int>(world_pts.size()) < kMinPoseTracks) {
      throw Error(ErrorCode::InsufficientOverlap,
                  "clips " + std::to_string(c - 1) + " and " + std::to_string(c) + " share " +
                      std::to_string(world_pts.size()) + " tracks");
    }

    ParamBlocks x;
    x.poses = {trimmed_rigid_fit(world_pts, local_pts)};
    x.pose_frozen = {0};
    const Objective f = [&](const ParamBlocks& p, Gradient* g) {
      return boundary_loss(p.poses[0], terms, global, cur.poses, cur.first, cam, tracks,
                           image_diagonal, g ? &g->poses[0] : nullptr);
    };
    const PoseSE3 G = minimize(f, std::move(x), so).params.poses[0];
    for (int k = 0; k < cur.length(); ++k) {
      global[cur.first + k] = cur.poses[k] * G;
      global[cur.first + k].normalize();
    }
  }
  return global;
}

PoseInitResult estimate_initial_poses(const TrackSet2D& tracks, const TrackDepths& depths,
                                      const CameraModel& cam, double image_diagonal,
                                      const PipelineConfig& cfg, const PoseInitOptions& opts) {
  const int T = tracks.num_frames;
  std::vector<std::pair<int, int>> ranges;
  for (int a = 0; a < T; a += cfg.clip_len) ranges.emplace_back(a, std::min(T, a + cfg.clip_len) - 1);

  PoseInitResult out;
  out.clips.resize(ranges.size());
  parallel_for(ranges.size(), opts.threads, [&](std::size_t c) {
    out.clips[c] = estimate_clip_poses(tracks, depths, cam, image_diagonal, ranges[c].first,
                                       ranges[c].second, cfg, opts);
  });

  out.inliers.assign(tracks.num_tracks, 1);
  for (const Clip& clip : out.clips) {
    if (clip.degenerate) {
      out.warnings.push_back("DegenerateGeometry: clip [" + std::to_string(clip.first) + ", " +
                             std::to_string(clip.last) + "] has no parallax; identity poses used");
    }
    out.loss += clip.loss;
    for (int i = 0; i < tracks.num_tracks; ++i) {
      if (clip.eligible[i] && !clip.inliers[i]) out.inliers[i] = 0;
    }
  }
  out.poses = merge_clips(out.clips, tracks, depths, cam, image_diagonal, cfg);
  return out;
}

}  // namespace wtrk
