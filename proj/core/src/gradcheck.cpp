#include "wtrk/gradcheck.hpp"

#include <algorithm>
#include <random>

#include "wtrk/dyntrack.hpp"
#include "wtrk/refine.hpp"
#include "wtrk/solver.hpp"

namespace wtrk {

namespace {

using StaticLoss = std::function<double(const StaticModel&, std::span<const PoseSE3>, StaticGradient*)>;

ParamBlocks pack_static(const StaticModel& m, std::span<const PoseSE3> poses) {
  ParamBlocks p;
  p.poses.assign(poses.begin(), poses.end());
  p.points.reserve(3 * (m.anchors.size() + m.offsets.size()));
  for (const auto& a : m.anchors) p.points.insert(p.points.end(), {a.x(), a.y(), a.z()});
  for (const auto& o : m.offsets) p.points.insert(p.points.end(), {o.x(), o.y(), o.z()});
  p.resize_masks();
  return p;
}

Objective static_objective_for(const StaticLoss& loss, int n, int t) {
  return [loss, n, t](const ParamBlocks& p, Gradient* g) {
    StaticModel m(n, t);
    for (int i = 0; i < n; ++i) m.anchors[i] = p.point(i);
    for (std::size_t k = 0; k < m.offsets.size(); ++k) m.offsets[k] = p.point(n + k);
    if (!g) return loss(m, p.poses, nullptr);
    StaticGradient sg;
    sg.reset(m, p.poses.size());
    const double v = loss(m, p.poses, &sg);
    for (std::size_t k = 0; k < sg.poses.size(); ++k) g->poses[k] += sg.poses[k];
    for (int i = 0; i < n; ++i) g->add_point(i, sg.anchors[i]);
    for (std::size_t k = 0; k < sg.offsets.size(); ++k) g->add_point(n + k, sg.offsets[k]);
    return v;
  };
}

Objective dynamic_objective_for(double (*loss)(const DynamicTrackSet&, std::span<Vec3>),
                                const DynamicTrackSet& shape) {
  return [loss, shape](const ParamBlocks& p, Gradient* g) {
    DynamicTrackSet d = shape;
    for (std::size_t k = 0; k < d.positions.size(); ++k) d.positions[k] = p.point(k);
    if (!g) return loss(d, {});
    std::vector<Vec3> grad(d.positions.size(), Vec3::Zero());
    const double v = loss(d, grad);
    for (std::size_t k = 0; k < grad.size(); ++k) g->add_point(k, grad[k]);
    return v;
  };
}

Vec3 gauss3(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  return {n(rng), n(rng), n(rng)};
}

// L1 is differentiable only off the coordinate planes; a central difference
// that straddles one measures the kink, not the gradient.
Vec3 away_from_kink(Vec3 v, std::mt19937_64& rng, double margin) {
  std::uniform_real_distribution<double> u(margin, 0.05);
  for (int c = 0; c < 3; ++c) {
    if (std::abs(v[c]) < margin) v[c] = (rng() & 1 ? 1.0 : -1.0) * u(rng);
  }
  return v;
}

}  // namespace

SynthConfig grad_audit_scene_config() {
  SynthConfig cfg;
  cfg.frames = 6;
  cfg.height = 48;
  cfg.width = 64;
  cfg.static_points = 24;
  SynthObject obj;
  obj.kind = MotionKind::Deforming;
  obj.points = 12;
  obj.u = 0.6;
  obj.radius = 0.3;
  cfg.objects.push_back(obj);
  cfg.seed = 7;
  return cfg;
}

GradAuditResult audit_gradients(const SynthScene& s, const GradAuditOptions& opts) {
  const SceneBundle& sc = s.scene;
  const int T = sc.num_frames();
  const double diag = sc.image_diagonal();

  std::vector<int> static_ids, dynamic_ids;
  for (int i = 0; i < s.num_tracks(); ++i) (s.object_id[i] < 0 ? static_ids : dynamic_ids).push_back(i);
  const TrackSet2D st = sc.tracks.subset(static_ids);
  const TrackDepths sd = sc.track_depth.subset(static_ids);
  const int n = st.num_tracks;

  const std::vector<std::pair<std::string, StaticLoss>> static_losses = {
      {"ba", [&](const StaticModel& m, std::span<const PoseSE3> p, StaticGradient* g) {
         return loss_ba(m, p, sc.camera, st, diag, g);
       }},
      {"dc", [&](const StaticModel& m, std::span<const PoseSE3> p, StaticGradient* g) {
         return loss_dc(m, p, st, sd, g);
       }},
      {"asap", [](const StaticModel& m, std::span<const PoseSE3>, StaticGradient* g) {
         return loss_asap(m, g);
       }},
  };

  DynamicTrackSet dyn;
  dyn.num_tracks = static_cast<int>(dynamic_ids.size());
  dyn.num_frames = T;
  for (int i : dynamic_ids) {
    for (int t = 0; t < T; ++t) {
      dyn.positions.push_back(s.gt_world[static_cast<std::size_t>(i) * T + t]);
      dyn.visible.push_back(sc.tracks.vis(i, t));
    }
  }
  {
    std::vector<Vec3> first;
    for (int k = 0; k < dyn.num_tracks; ++k) first.push_back(dyn.at(k, 0));
    dyn.knn = build_knn(first, sc.config.knn_r);
  }

  GradAuditResult worst;
  for (const auto& [name, loss] : static_losses) worst[name] = 0.0;
  worst["arap"] = worst["ts"] = 0.0;

  std::mt19937_64 rng(opts.seed);
  for (int state = 0; state < opts.states; ++state) {
    std::vector<PoseSE3> poses = s.gt_poses;
    for (auto& p : poses) {
      Vec6 d;
      d << gauss3(rng, 0.01), gauss3(rng, 0.02);
      p = se3_exp(d) * p;
    }
    StaticModel m(n, T);
    for (int k = 0; k < n; ++k) {
      m.anchors[k] = s.gt_world[static_cast<std::size_t>(static_ids[k]) * T] + gauss3(rng, 0.05);
      for (int t = 0; t < T; ++t) m.offset(k, t) = away_from_kink(gauss3(rng, 0.02), rng, 10.0 * opts.h);
    }
    const ParamBlocks sp = pack_static(m, poses);
    for (const auto& [name, loss] : static_losses) {
      worst[name] = std::max(worst[name], grad_check(static_objective_for(loss, n, T), sp, opts.h));
    }

    if (dyn.num_tracks == 0) continue;
    ParamBlocks dp;
    for (const auto& x : dyn.positions) {
      const Vec3 v = x + gauss3(rng, 0.05);
      dp.points.insert(dp.points.end(), {v.x(), v.y(), v.z()});
    }
    dp.resize_masks();
    worst["arap"] = std::max(worst["arap"], grad_check(dynamic_objective_for(&loss_arap, dyn), dp, opts.h));
    worst["ts"] = std::max(worst["ts"], grad_check(dynamic_objective_for(&loss_ts, dyn), dp, opts.h));
  }
  return worst;
}

}  // namespace wtrk
