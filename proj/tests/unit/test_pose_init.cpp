#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "wtrk/errors.hpp"
#include "wtrk/metrics.hpp"
#include "wtrk/pose_init.hpp"
#include "wtrk/synth.hpp"

using namespace wtrk;

namespace {

// Ground-truth pose of frame first + k relative to camera `first`.
PoseSE3 gt_relative(const SynthScene& s, int first, int k) {
  return s.gt_poses[first + k] * s.gt_poses[first].inverse();
}

struct ClipError {
  double rot_deg = 0.0;
  double trans = 0.0;  // fraction of scene scale
};

ClipError clip_error(const SynthScene& s, const Clip& c) {
  ClipError e;
  for (int k = 0; k < c.length(); ++k) {
    const PoseSE3 g = gt_relative(s, c.first, k);
    e.rot_deg = std::max(e.rot_deg, rotation_angle_deg(c.poses[k].rotation, g.rotation));
    e.trans = std::max(e.trans, (c.poses[k].translation - g.translation).norm() / s.scene_scale());
  }
  return e;
}

}  // namespace

TEST_CASE("relative poses are a zero of the clip loss") {
  const SynthScene s = generate(fixture::small_static(0));
  const auto& sc = s.scene;
  std::vector<PoseSE3> rel;
  for (int k = 0; k < 5; ++k) rel.push_back(gt_relative(s, 0, k));
  std::vector<std::uint8_t> all(s.num_tracks(), 1);
  CHECK(clip_projection_loss(rel, 0, sc.camera, sc.tracks, sc.track_depth, all, sc.image_diagonal()) < 1e-16);
  rel[3] = se3_exp((Vec6() << 0.01, 0, 0, 0, 0, 0).finished()) * rel[3];
  CHECK(clip_projection_loss(rel, 0, sc.camera, sc.tracks, sc.track_depth, all, sc.image_diagonal()) > 1e-3);
}

TEST_CASE("noiseless static clip recovers ground-truth relative poses") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const SynthScene s = generate(fixture::small_static(seed));
    const auto& sc = s.scene;
    const Clip c = estimate_clip_poses(sc.tracks, sc.track_depth, sc.camera, sc.image_diagonal(), 2, 6, sc.config);
    CHECK(c.poses.size() == 5u);
    CHECK(c.poses[0].matrix() == PoseSE3::identity().matrix());
    const ClipError e = clip_error(s, c);
    CHECK(e.rot_deg < 1e-4);
    CHECK(e.trans < 1e-5);
  }
}

TEST_CASE("wildly wrong depths on 20% of tracks are gated out") {
  SynthScene s = generate(fixture::small_static(4));
  auto& sc = s.scene;
  // On a 64 x 48 frame the default threshold is 8 px, more than these depth
  // errors move a reprojection over a 5-frame baseline.
  sc.config.inlier_tau = 0.02;

  std::mt19937_64 rng(9);
  std::vector<std::uint8_t> bad(s.num_tracks(), 0);
  for (int i = 0; i < s.num_tracks(); ++i) {
    if (rng() % 5 != 0) continue;
    bad[i] = 1;
    const double factor = rng() % 2 ? 3.0 : 0.3;
    for (int t = 0; t < sc.num_frames(); ++t) sc.track_depth.at(i, t) *= (t % 2 ? factor : 1.0);
  }
  const Clip c = estimate_clip_poses(sc.tracks, sc.track_depth, sc.camera, sc.image_diagonal(), 0, 4, sc.config);
  int clean_kept = 0, clean_total = 0, bad_kept = 0;
  for (int i = 0; i < s.num_tracks(); ++i) {
    if (!c.eligible[i]) continue;
    if (bad[i]) {
      bad_kept += c.inliers[i];
    } else {
      ++clean_total;
      clean_kept += c.inliers[i];
    }
  }
  CHECK(clean_kept == clean_total);
  CHECK(bad_kept == 0);
  CHECK(c.rounds > 1);
  const ClipError e = clip_error(s, c);
  CHECK(e.rot_deg < 1e-2);
  CHECK(e.trans < 1e-3);
}

TEST_CASE("gating matches a brute-force threshold sweep and is monotone in tau") {
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> ex(1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> r(30);
    for (auto& v : r) v = ex(rng) * 10.0;
    if (trial % 3 == 0) r[4] = r[7];  // ties
    const double diag = 100.0;
    std::vector<std::uint8_t> prev(r.size(), 0);
    for (double tau : {0.0, 0.01, 0.02, 0.05, 0.1, 0.3}) {
      const auto m = gate_inliers(r, tau, diag);
      CHECK(m == oracle::gate(r, tau, diag, kMinPoseTracks));
      for (std::size_t i = 0; i < r.size(); ++i) CHECK(m[i] >= prev[i]);
      prev = m;
    }
  }
}

TEST_CASE("too few tracks in a clip is an error") {
  const SynthScene s = generate(fixture::small_static(0, 200));
  std::vector<int> few = {0, 1, 2, 3, 4};
  const TrackSet2D t = s.scene.tracks.subset(few);
  const TrackDepths d = s.scene.track_depth.subset(few);
  try {
    estimate_clip_poses(t, d, s.scene.camera, s.scene.image_diagonal(), 0, 4, s.scene.config);
    FAIL("expected InsufficientTracks");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientTracks);
  }
}

TEST_CASE("merged clips match the ground-truth trajectory") {
  SynthConfig cfg = fixture::small_static(6);
  cfg.frames = 12;
  const SynthScene s = generate(cfg);
  const auto& sc = s.scene;
  const PoseInitResult r = estimate_initial_poses(sc.tracks, sc.track_depth, sc.camera, sc.image_diagonal(), sc.config);
  CHECK(r.clips.size() >= 2u);
  for (const Clip& c : r.clips) {
    CHECK((c.length() == sc.config.clip_len || &c == &r.clips.back()));
  }
  REQUIRE(r.poses.size() == 12u);
  CHECK(r.poses[0].matrix() == PoseSE3::identity().matrix());
  CHECK(traj_metrics(r.poses, s.gt_poses).ate < 1e-5 * s.scene_scale());
}

TEST_CASE("clip results do not depend on the number of threads") {
  SynthConfig cfg = fixture::small_static(7);
  cfg.frames = 12;
  cfg.noise.track_sigma = 0.3;
  const SynthScene s = generate(cfg);
  const auto& sc = s.scene;
  PoseInitOptions one, three;
  three.threads = 3;
  const auto a = estimate_initial_poses(sc.tracks, sc.track_depth, sc.camera, sc.image_diagonal(), sc.config, one);
  const auto b = estimate_initial_poses(sc.tracks, sc.track_depth, sc.camera, sc.image_diagonal(), sc.config, three);
  for (std::size_t t = 0; t < a.poses.size(); ++t) CHECK(a.poses[t].matrix() == b.poses[t].matrix());
  CHECK(a.inliers == b.inliers);
  CHECK(a.loss == b.loss);
}

TEST_CASE("residuals: zero for a track seen once, positive for a corrupted one") {
  SynthScene s = generate(fixture::small_static(8));
  auto& sc = s.scene;
  std::vector<PoseSE3> rel;
  for (int k = 0; k < 5; ++k) rel.push_back(gt_relative(s, 0, k));
  sc.tracks.pos(3, 2) += Vec2(5.0, 0.0);
  const auto res = clip_track_residuals(rel, 0, sc.camera, sc.tracks, sc.track_depth, sc.image_diagonal());
  REQUIRE(res.size() == static_cast<std::size_t>(s.num_tracks()));
  for (int i = 0; i < s.num_tracks(); ++i) {
    int seen = 0;
    for (int t = 0; t < 5; ++t) seen += sc.tracks.vis(i, t);
    if (seen < 2) CHECK(res[i] == 0.0);
  }
  if (sc.tracks.vis(3, 2) && sc.tracks.vis(3, 0)) CHECK(res[3] > 4.0);
}
