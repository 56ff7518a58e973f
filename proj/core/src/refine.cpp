#include "wtrk/refine.hpp"

#include <algorithm>
#include <cmath>

#include "wtrk/errors.hpp"
#include "wtrk/observation.hpp"
#include "wtrk/solver.hpp"

namespace wtrk {

std::vector<Vec3> StaticModel::positions() const {
  std::vector<Vec3> out(offsets.size());
  for (int i = 0; i < num_tracks; ++i) {
    for (int t = 0; t < num_frames; ++t) out[static_cast<std::size_t>(i) * num_frames + t] = position(i, t);
  }
  return out;
}

void StaticGradient::reset(const StaticModel& m, std::size_t num_poses) {
  poses.assign(num_poses, Vec6::Zero());
  anchors.assign(m.anchors.size(), Vec3::Zero());
  offsets.assign(m.offsets.size(), Vec3::Zero());
}

StaticModel init_static_anchors(const TrackSet2D& tracks, const TrackDepths& depths,
                                std::span<const PoseSE3> poses, const CameraModel& cam) {
  StaticModel m(tracks.num_tracks, tracks.num_frames);
  for (int i = 0; i < tracks.num_tracks; ++i) {
    Vec3 sum = Vec3::Zero();
    int count = 0;
    for (int t = 0; t < tracks.num_frames; ++t) {
      if (!tracks.vis(i, t) || !(depths.at(i, t) > 0.0)) continue;
      sum += unproject(poses[t], cam, tracks.pos(i, t), depths.at(i, t));
      ++count;
    }
    if (count == 0) throw Error(ErrorCode::NoVisibleFrames, "static track " + std::to_string(i));
    m.anchors[i] = sum / count;
  }
  return m;
}

namespace {

void fold_into_model(const StaticModel& m, std::span<const Vec3> point_grad, StaticGradient& g) {
  for (int i = 0; i < m.num_tracks; ++i) {
    for (int t = 0; t < m.num_frames; ++t) {
      const std::size_t k = static_cast<std::size_t>(i) * m.num_frames + t;
      g.anchors[i] += point_grad[k];
      g.offsets[k] += point_grad[k];
    }
  }
}

}  // namespace

double loss_ba(const StaticModel& m, std::span<const PoseSE3> poses, const CameraModel& cam,
               const TrackSet2D& tracks, double image_diagonal, StaticGradient* grad) {
  const auto world = m.positions();
  if (!grad) return reprojection_loss(world, poses, cam, tracks, image_diagonal);
  std::vector<Vec3> pg(world.size(), Vec3::Zero());
  const double loss = reprojection_loss(world, poses, cam, tracks, image_diagonal, grad->poses, pg);
  fold_into_model(m, pg, *grad);
  return loss;
}

double loss_dc(const StaticModel& m, std::span<const PoseSE3> poses, const TrackSet2D& tracks,
               const TrackDepths& depths, StaticGradient* grad) {
  const auto world = m.positions();
  if (!grad) return depth_loss(world, poses, tracks, depths);
  std::vector<Vec3> pg(world.size(), Vec3::Zero());
  const double loss = depth_loss(world, poses, tracks, depths, grad->poses, pg);
  fold_into_model(m, pg, *grad);
  return loss;
}

double loss_asap(const StaticModel& m, StaticGradient* grad) {
  double loss = 0.0;
  for (std::size_t k = 0; k < m.offsets.size(); ++k) {
    const Vec3& o = m.offsets[k];
    loss += o.cwiseAbs().sum();
    if (grad) {
      for (int c = 0; c < 3; ++c) grad->offsets[k][c] += (o[c] > 0.0) - (o[c] < 0.0);
    }
  }
  return loss;
}

double static_objective(const StaticModel& m, std::span<const PoseSE3> poses,
                        const TrackSet2D& tracks, const TrackDepths& depths,
                        const CameraModel& cam, double image_diagonal, const PipelineConfig& cfg,
                        StaticGradient* grad) {
  if (!grad) {
    return cfg.lambda_ba * loss_ba(m, poses, cam, tracks, image_diagonal) +
           cfg.lambda_dc * loss_dc(m, poses, tracks, depths) + cfg.lambda_asap * loss_asap(m);
  }
  StaticGradient part;
  double total = 0.0;
  auto accumulate = [&](double weight, double value) {
    total += weight * value;
    for (std::size_t k = 0; k < grad->poses.size(); ++k) grad->poses[k] += weight * part.poses[k];
    for (std::size_t k = 0; k < grad->anchors.size(); ++k) grad->anchors[k] += weight * part.anchors[k];
    for (std::size_t k = 0; k < grad->offsets.size(); ++k) grad->offsets[k] += weight * part.offsets[k];
  };
  part.reset(m, poses.size());
  accumulate(cfg.lambda_ba, loss_ba(m, poses, cam, tracks, image_diagonal, &part));
  part.reset(m, poses.size());
  accumulate(cfg.lambda_dc, loss_dc(m, poses, tracks, depths, &part));
  part.reset(m, poses.size());
  accumulate(cfg.lambda_asap, loss_asap(m, &part));
  return total;
}

RefineResult refine_static(const StaticModel& init, std::span<const PoseSE3> poses,
                           const TrackSet2D& tracks, const TrackDepths& depths,
                           const CameraModel& cam, double image_diagonal,
                           const PipelineConfig& cfg, const RefineOptions& opts) {
  const int N = init.num_tracks;
  const int T = init.num_frames;

  // Layout: poses[T]; point blocks = anchors[N] then offsets[N * T].
  ParamBlocks x;
  x.poses.assign(poses.begin(), poses.end());
  x.pose_frozen.assign(x.poses.size(), 0);
  if (!x.poses.empty()) x.pose_frozen[0] = 1;
  x.points.resize(3 * (static_cast<std::size_t>(N) + init.offsets.size()));
  for (int i = 0; i < N; ++i) x.set_point(i, init.anchors[i]);
  for (std::size_t k = 0; k < init.offsets.size(); ++k) x.set_point(N + k, init.offsets[k]);
  x.point_frozen.assign(x.num_point_blocks(), 0);
  for (int i = 0; i < N; ++i) {
    for (int t = 0; t < T; ++t) {
      const std::size_t k = static_cast<std::size_t>(i) * T + t;
      if (opts.freeze_offsets || !tracks.vis(i, t)) x.point_frozen[N + k] = 1;
    }
  }

  // Variable scaling from the Gauss-Newton diagonal at the start point.
  {
    std::vector<Vec6> pc(T, Vec6::Zero());
    std::vector<Vec3> xc(init.offsets.size(), Vec3::Zero());
    observation_curvature(init.positions(), poses, cam, tracks, cfg.lambda_ba, cfg.lambda_dc, pc, xc);
    x.pose_curvature = pc;
    x.point_curvature.assign(x.points.size(), 0.0);
    for (int i = 0; i < N; ++i) {
      for (int t = 0; t < T; ++t) {
        const std::size_t k = static_cast<std::size_t>(i) * T + t;
        for (int c = 0; c < 3; ++c) {
          x.point_curvature[3 * i + c] += xc[k][c];
          x.point_curvature[3 * (N + k) + c] = xc[k][c];
        }
      }
    }
  }

  // The L1 prior on offsets is handled by the solver's orthant-wise steps.
  x.point_l1.assign(x.num_point_blocks(), 0.0);
  std::fill(x.point_l1.begin() + N, x.point_l1.end(), cfg.lambda_asap);
  PipelineConfig smooth = cfg;
  smooth.lambda_asap = 0.0;

  auto unpack = [N](const ParamBlocks& p, StaticModel& m) {
    for (int i = 0; i < N; ++i) m.anchors[i] = p.point(i);
    for (std::size_t k = 0; k < m.offsets.size(); ++k) m.offsets[k] = p.point(N + k);
  };

  StaticModel scratch = init;
  StaticGradient sg;
  const Objective objective = [&](const ParamBlocks& p, Gradient* g) {
    unpack(p, scratch);
    if (!g) return static_objective(scratch, p.poses, tracks, depths, cam, image_diagonal, smooth);
    sg.reset(scratch, p.poses.size());
    const double loss =
        static_objective(scratch, p.poses, tracks, depths, cam, image_diagonal, smooth, &sg);
    for (std::size_t k = 0; k < sg.poses.size(); ++k) g->poses[k] += sg.poses[k];
    for (int i = 0; i < N; ++i) g->add_point(i, sg.anchors[i]);
    for (std::size_t k = 0; k < sg.offsets.size(); ++k) g->add_point(N + k, sg.offsets[k]);
    return loss;
  };

  SolverOptions so = SolverOptions::from(cfg.solver);
  so.on_iteration = opts.on_iteration;
  SolverResult sr = minimize(objective, std::move(x), so);

  RefineResult out;
  out.poses = sr.params.poses;
  out.model = init;
  unpack(sr.params, out.model);
  out.loss = sr.loss;
  out.initial_loss = sr.initial_loss;
  out.iterations = sr.iterations;
  return out;
}

std::vector<std::uint8_t> classify_dynamic_background(const StaticModel& m, double epsilon) {
  std::vector<std::uint8_t> mask(m.num_tracks, 0);
  for (int i = 0; i < m.num_tracks; ++i) {
    double worst = 0.0;
    for (int t = 0; t < m.num_frames; ++t) worst = std::max(worst, m.offset(i, t).norm());
    mask[i] = worst >= epsilon ? 1 : 0;
  }
  return mask;
}

}  // namespace wtrk
