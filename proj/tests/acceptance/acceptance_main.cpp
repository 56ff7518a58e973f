// Acceptance suite: one PASS/FAIL line per criterion with the measured values.
//
// Usage: wtrk_acceptance [--expect-fail 1,2] [--only 3]
// Exits 0 when the set of failing criteria equals the expected set.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "fixtures.hpp"
#include "fuzz.hpp"
#include "oracles.hpp"
#include "wtrk/dyntrack.hpp"
#include "wtrk/errors.hpp"
#include "wtrk/gradcheck.hpp"
#include "wtrk/metrics.hpp"
#include "wtrk/pipeline.hpp"
#include "wtrk/pose_init.hpp"
#include "wtrk/refine.hpp"
#include "wtrk/synth.hpp"
#include "wtrk/trackset.hpp"

using namespace wtrk;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kAteScale = 1e-4;         // 1: fraction of scene scale
constexpr double kRreDeg = 0.01;           // 1
constexpr double kDynRmse = 1e-4;          // 1
constexpr double kRuntimeSec = 120.0;      // 1
constexpr double kLossAtTruth = 1e-10;     // 2
constexpr double kGradRel = 1e-4;          // 3
constexpr double kGradStep = 1e-5;         // 3
constexpr int kGradStates = 50;            // 3
constexpr double kSpeedupRmse = 1e-2;      // 6: fraction of scene scale
constexpr double kSpeedupRatio = 0.5;      // 6
constexpr double kIdentityDiff = 1e-9;     // 6
constexpr double kDepthExact = 1e-10;      // 7
constexpr double kAffineEpe = 1e-6;        // 8
constexpr double kMetricExact = 1e-10;     // 9
constexpr double kAteInvariance = 1e-9;    // 9
constexpr double kRetainClean = 0.95;      // 10
constexpr double kRejectOutliers = 0.90;   // 10

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SynthConfig oracle_scene() {
  SynthConfig c;
  c.frames = 20;
  c.static_points = 500;
  c.path = CameraPath::Orbit;
  SynthObject mover;  // rigid, 50 points
  mover.spin = 0.0;   // pure translation keeps neighbour offsets constant
  c.objects.push_back(mover);
  c.seed = 1;
  return c;
}

double dynamic_rmse(const SynthScene& s, const PipelineResult& r) {
  std::vector<std::string> warnings;
  const auto m = flatten(evaluate(fixture::estimate(r), fixture::ground_truth(s), warnings));
  return m.count("dynamic_rmse") ? m.at("dynamic_rmse") : std::numeric_limits<double>::infinity();
}

// 1 -------------------------------------------------------------------------
Verdict noiseless_recovery() {
  const SynthScene s = generate(oracle_scene());
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineResult r = run_scene(s.scene, RunFlags{});
  const double secs = seconds_since(t0);
  const TrajMetrics tm = traj_metrics(r.poses, s.gt_poses);
  const double dyn = dynamic_rmse(s, r);

  // Diagnostics only: without the temporal prior, and the same for a mover
  // that also spins.
  SynthScene ablated = s;
  ablated.scene.config.lambda_ts = 0.0;
  const double dyn_no_ts = dynamic_rmse(ablated, run_scene(ablated.scene, RunFlags{}));
  SynthConfig spinning = oracle_scene();
  spinning.objects[0].spin = 0.02;
  SynthScene spun = generate(spinning);
  spun.scene.config.lambda_ts = 0.0;
  const double dyn_spin = dynamic_rmse(spun, run_scene(spun.scene, RunFlags{}));

  const double ate = tm.ate / s.scene_scale();
  Verdict v;
  v.pass = ate < kAteScale && tm.rre < kRreDeg && dyn < kDynRmse && secs < kRuntimeSec;
  v.detail = fmt("ATE/scale=%.2e (<%.0e) RRE=%.2e deg (<%.2g) dyn_rmse=%.2e (<%.0e) runtime=%.1fs (<%.0fs); "
                 "diagnostics dyn_rmse with lambda_ts=0: %.2e, same with a 0.02 rad/frame spin: %.2e",
                 ate, kAteScale, tm.rre, kRreDeg, dyn, kDynRmse, secs, kRuntimeSec, dyn_no_ts, dyn_spin);
  return v;
}

// 2 -------------------------------------------------------------------------
Verdict loss_at_truth() {
  const SynthScene s = generate(oracle_scene());
  const auto& sc = s.scene;
  const int T = sc.num_frames();
  std::vector<int> stat, dyn;
  for (int i = 0; i < s.num_tracks(); ++i) (s.gt_role[i] == TrackRole::Static ? stat : dyn).push_back(i);

  const TrackSet2D st = sc.tracks.subset(stat);
  const TrackDepths sd = sc.track_depth.subset(stat);
  StaticModel m(static_cast<int>(stat.size()), T);
  for (std::size_t k = 0; k < stat.size(); ++k) {
    const auto base = static_cast<std::size_t>(stat[k]) * T;
    m.anchors[k] = s.gt_world[base];
    for (int t = 0; t < T; ++t) m.offset(static_cast<int>(k), t) = s.gt_world[base + t] - m.anchors[k];
  }
  const double ba = loss_ba(m, s.gt_poses, sc.camera, st, sc.image_diagonal());
  const double dc = loss_dc(m, s.gt_poses, st, sd);
  const double asap = loss_asap(m);

  DynamicTrackSet d;
  d.num_tracks = static_cast<int>(dyn.size());
  d.num_frames = T;
  d.positions = fixture::gt_world(s, dyn);
  const TrackSet2D dt = sc.tracks.subset(dyn);
  d.visible = dt.visible;
  std::vector<Vec3> at_spawn;
  for (int k = 0; k < d.num_tracks; ++k) at_spawn.push_back(d.at(k, dt.spawn_frame[k]));
  d.knn = build_knn(at_spawn, sc.config.knn_r);
  const double arap = loss_arap(d);
  const double ts = loss_ts(d);

  Verdict v;
  v.pass = std::max({ba, dc, asap, arap, ts}) < kLossAtTruth;
  v.detail = fmt("ba=%.2e dc=%.2e asap=%.2e arap=%.2e ts=%.2e (each <%.0e)", ba, dc, asap, arap, ts,
                 kLossAtTruth);
  return v;
}

// 3 -------------------------------------------------------------------------
Verdict gradient_audit() {
  GradAuditOptions o;
  o.states = kGradStates;
  o.h = kGradStep;
  const auto worst = audit_gradients(generate(grad_audit_scene_config()), o);
  Verdict v;
  v.pass = worst.size() == 5;
  std::ostringstream ss;
  for (const auto& [name, err] : worst) {
    v.pass = v.pass && err < kGradRel;
    ss << name << '=' << fmt("%.2e", err) << ' ';
  }
  v.detail = ss.str() + fmt("(<%.0e over %d states, h=%.0e)", kGradRel, kGradStates, kGradStep);
  return v;
}

// 4 -------------------------------------------------------------------------
SynthConfig hidden_mover_scene(std::uint64_t seed, double velocity, int points) {
  SynthConfig c;
  c.frames = 20;
  c.static_points = 500;
  c.seed = seed;
  SynthObject o;
  o.hidden = true;
  o.points = points;
  o.velocity = Vec3(velocity, 0.0, 0.0);
  o.spin = 0.0;
  o.u = 0.7;
  o.v = 0.4;
  o.depth = 4.0;
  c.objects.push_back(o);
  return c;
}

Verdict ablation_directions() {
  double full = 0.0, frozen = 0.0, ungated = 0.0;
  const int seeds = 3;
  for (int seed = 0; seed < seeds; ++seed) {
    const SynthScene s = generate(hidden_mover_scene(seed, 0.2, 25));
    RunFlags f;
    f.stage = 2;
    full += traj_metrics(run_scene(s.scene, f).poses, s.gt_poses).ate / seeds;
    f.freeze_offsets = true;
    frozen += traj_metrics(run_scene(s.scene, f).poses, s.gt_poses).ate / seeds;
    f.freeze_offsets = false;
    f.gating = false;
    ungated += traj_metrics(run_scene(s.scene, f).poses, s.gt_poses).ate / seeds;
  }
  Verdict v;
  v.pass = full < frozen && full < ungated;
  v.detail = fmt("mean ATE over seeds 0-2: full=%.3e frozen_offsets=%.3e no_gating=%.3e", full, frozen, ungated);
  return v;
}

// 5 -------------------------------------------------------------------------
Verdict hidden_mover_classification() {
  int tp = 0, fp = 0, fn = 0, excluded = 0;
  for (int seed = 0; seed < 3; ++seed) {
    const SynthScene s = generate(hidden_mover_scene(seed, 0.03, 25));
    const double eps = s.scene.config.epsilon;
    RunFlags f;
    f.stage = 2;
    f.speedup = false;
    const PipelineResult r = run_scene(s.scene, f);
    std::set<int> flagged(r.dynamic_background_ids.begin(), r.dynamic_background_ids.end());
    std::vector<int> considered = r.static_ids;
    considered.insert(considered.end(), flagged.begin(), flagged.end());
    const int T = s.scene.num_frames();
    for (int i : considered) {
      const bool hidden = s.gt_role[i] == TrackRole::DynamicBackground;
      const bool yes = flagged.count(i) != 0;
      if (hidden) {
        double range = 0.0;
        for (int a = 0; a < T; ++a) {
          for (int b = 0; b < T; ++b) {
            if (!s.scene.tracks.vis(i, a) || !s.scene.tracks.vis(i, b)) continue;
            const auto base = static_cast<std::size_t>(i) * T;
            range = std::max(range, (s.gt_world[base + a] - s.gt_world[base + b]).norm());
          }
        }
        if (range / 2.0 < 2.0 * eps) {
          ++excluded;
          continue;
        }
        (yes ? tp : fn) += 1;
      } else if (yes) {
        ++fp;
      }
    }
  }
  const double precision = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double recall = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
  Verdict v;
  v.pass = tp > 0 && fp == 0 && fn == 0;
  v.detail = fmt("precision=%.3f recall=%.3f (tp=%d fp=%d fn=%d, %d sub-threshold movers excluded)", precision,
                 recall, tp, fp, fn, excluded);
  return v;
}

// 6 -------------------------------------------------------------------------
Verdict speedup_equivalence() {
  SynthConfig c;
  c.frames = 20;
  c.static_points = 2000;
  c.height = 108;
  c.width = 144;
  c.noise.track_sigma = 0.3;
  c.seed = 3;
  const SynthScene s = generate(c);
  RunFlags f;
  f.stage = 2;
  const PipelineResult fast = run_scene(s.scene, f);
  f.speedup = false;
  const PipelineResult full = run_scene(s.scene, f);
  const int T = s.scene.num_frames();

  double sq = 0.0;
  std::size_t n = 0;
  const bool same_ids = fast.static_ids == full.static_ids;
  if (same_ids) {
    for (std::size_t k = 0; k < fast.static_world.size(); ++k, ++n) {
      sq += (fast.static_world[k] - full.static_world[k]).squaredNorm();
    }
  }
  const double rmse = n ? std::sqrt(sq / n) / s.scene_scale() : std::numeric_limits<double>::infinity();
  const double ratio = fast.manifest.stages.at(1).seconds / full.manifest.stages.at(1).seconds;

  const auto& sc = s.scene;
  std::vector<Vec3> anchors(s.num_tracks());
  for (int i = 0; i < s.num_tracks(); ++i) anchors[i] = s.gt_world[static_cast<std::size_t>(i) * T];
  const DownsampleIndex one = downsample_static(sc.tracks, 1);
  std::vector<Vec3> coarse;
  for (int i : one.retained) coarse.push_back(anchors[i]);
  const auto back = upsample_trajectories(coarse, sc.tracks, sc.track_depth, sc.camera, one, sc.config.knn_r);
  double diff = 0.0;
  for (int i = 0; i < s.num_tracks(); ++i) diff = std::max(diff, (back[i] - anchors[i]).norm());

  Verdict v;
  v.pass = same_ids && rmse < kSpeedupRmse && ratio < kSpeedupRatio && diff < kIdentityDiff;
  v.detail = fmt("anchor RMSE/scale=%.2e (<%.0e) stage-2 time ratio=%.2f (<%.1f, %zu coarse of %zu) "
                 "varpi=1 round trip=%.1e (<%.0e)",
                 rmse, kSpeedupRmse, ratio, kSpeedupRatio, fast.coarse_ids.size(), fast.static_ids.size(), diff,
                 kIdentityDiff);
  return v;
}

// 7 -------------------------------------------------------------------------
Verdict depth_propagation() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> raw_d(1.0f, 6.0f);
  std::uniform_real_distribution<double> px(0.0, 23.0), ratio(0.5, 2.0);
  CameraModel cam;
  cam.fx = cam.fy = 30.0;
  cam.cx = cam.cy = 11.5;
  const int H = 24, W = 24;
  double worst_const = 0.0, worst_brute = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<float> raw(H * W);
    for (auto& v : raw) v = raw_d(rng);
    std::vector<DepthSample> samples(40);
    const double c = ratio(rng);
    for (auto& s : samples) {
      s.pixel = Vec2(px(rng), px(rng));
      s.depth = c * sample_bilinear(raw, H, W, s.pixel.x(), s.pixel.y());
    }
    const auto flat = propagate_depth(raw, H, W, samples, cam, 4);
    for (int p = 0; p < H * W; ++p) worst_const = std::max(worst_const, std::abs(flat[p] - c * raw[p]));

    std::vector<Vec2> pix;
    std::vector<double> dep;
    for (auto& s : samples) {
      s.depth = ratio(rng) * sample_bilinear(raw, H, W, s.pixel.x(), s.pixel.y());
      pix.push_back(s.pixel);
      dep.push_back(s.depth);
    }
    const auto got = propagate_depth(raw, H, W, samples, cam, 4);
    const auto want = oracle::propagate(raw, H, W, pix, dep, cam, 4);
    for (int p = 0; p < H * W; ++p) worst_brute = std::max(worst_brute, std::abs(got[p] - want[p]));
  }
  Verdict v;
  v.pass = worst_const < kDepthExact && worst_brute < kDepthExact;
  v.detail = fmt("constant ratio max err=%.1e, brute force max err=%.1e (<%.0e, 10 frames)", worst_const,
                 worst_brute, kDepthExact);
  return v;
}

// 8 -------------------------------------------------------------------------
TrackSet2D grid_tracks(int h, int w, int stride, int frames, const std::function<Vec2(const Vec2&, int)>& field) {
  const int cols = w / stride, rows = h / stride;
  TrackSet2D s(cols * rows, frames);
  for (int j = 0; j < cols * rows; ++j) {
    const Vec2 p0((j % cols) * stride, (j / cols) * stride);
    for (int t = 0; t < frames; ++t) {
      s.pos(j, t) = field(p0, t);
      s.visible[s.index(j, t)] = 1;
    }
  }
  return s;
}

Verdict upsampler_fidelity() {
  const int H = 40, W = 48, T = 4, S = 4, K = 4;
  auto affine = [](const Vec2& p, int t) {
    Eigen::Matrix2d A;
    A << 1.0 + 0.03 * t, -0.02 * t, 0.01 * t, 1.0 - 0.02 * t;
    return Vec2(A * p + Vec2(-0.4 * t, 0.9 * t));
  };
  const DenseTracks da = upsample_tracks(grid_tracks(H, W, S, T, affine), 0, H, W, S, K);
  double affine_epe = 0.0;
  int n = 0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int t = 1; t < T; ++t, ++n) affine_epe += (da.tracks.pos(y * W + x, t) - affine(Vec2(x, y), t)).norm();
    }
  }
  affine_epe /= n;

  auto wave = [](const Vec2& p, int t) {
    return Vec2(p + t * Vec2(2.0 * std::sin(p.x() / 7.0) + 0.01 * p.y() * p.y(),
                             1.5 * std::cos(p.y() / 9.0) - 0.02 * p.x() * p.y() / 8.0));
  };
  const TrackSet2D grid = grid_tracks(H, W, S, T, wave);
  const DenseTracks dw = upsample_tracks(grid, 0, H, W, S, K);
  const int cols = W / S, rows = H / S;
  double up = 0.0, base = 0.0;
  for (int t = 1; t < T; ++t) {
    std::vector<Vec2> flow(cols * rows);
    for (int j = 0; j < cols * rows; ++j) flow[j] = grid.pos(j, t) - grid.pos(j, 0);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const Vec2 truth = wave(Vec2(x, y), t);
        up += (dw.tracks.pos(y * W + x, t) - truth).norm();
        base += (Vec2(x, y) + oracle::grid_bilinear(flow, cols, rows, S, x, y) - truth).norm();
      }
    }
  }
  up /= n;
  base /= n;
  Verdict v;
  v.pass = affine_epe < kAffineEpe && up <= base;
  v.detail = fmt("affine EPE=%.1e (<%.0e) nonlinear EPE=%.4f vs bilinear baseline %.4f", affine_epe, kAffineEpe,
                 up, base);
  return v;
}

// 9 -------------------------------------------------------------------------
Verdict metric_oracles() {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.5, 10.0), sc(0.2, 5.0);
  double worst = 0.0;
  auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  const int instances = 20;
  for (int k = 0; k < instances; ++k) {
    std::vector<PoseSE3> est, gt;
    for (int i = 0; i < 4 + k; ++i) {
      est.push_back(fixture::random_pose(rng, 0.4, 1.0));
      gt.push_back(fixture::random_pose(rng, 0.4, 1.0));
    }
    const TrajMetrics a = traj_metrics(est, gt), b = oracle::traj(est, gt);
    track(a.ate, b.ate);
    track(a.rte, b.rte);
    track(a.rre, b.rre);

    std::vector<double> de(200), dg(200);
    for (std::size_t i = 0; i < de.size(); ++i) {
      dg[i] = u(rng);
      de[i] = 0.7 * dg[i] + 0.4 + 0.2 * g(rng);
    }
    const DepthMetrics da = depth_metrics(de, dg), db = oracle::depth(de, dg);
    track(da.abs_rel, db.abs_rel);
    track(da.delta_125, db.delta_125);

    const int n = 30 + 5 * k;
    std::vector<Vec3> pe, pg;
    std::vector<std::uint8_t> ve, vg;
    std::vector<Vec2> fe, fg;
    for (int i = 0; i < n; ++i) {
      const Vec3 p(g(rng), g(rng), 4.0 + g(rng));
      pg.push_back(p);
      pe.push_back(p + (0.02 + 0.3 * std::abs(g(rng))) * Vec3(g(rng), g(rng), g(rng)));
      vg.push_back(rng() % 4 != 0);
      ve.push_back(rng() % 3 != 0);
      fg.push_back(Vec2(2 * g(rng), 2 * g(rng)));
      fe.push_back(fg.back() + 0.3 * Vec2(g(rng), g(rng)));
    }
    const Tracking3dMetrics ta = tracking3d_metrics(pe, ve, pg, vg), tb = oracle::tracking3d(pe, ve, pg, vg);
    track(ta.aj, tb.aj);
    track(ta.apd3d, tb.apd3d);
    track(ta.oa, tb.oa);
    const FlowMetrics fa = flow_metrics(fe, fg, ve, vg), fb = oracle::flow(fe, fg, ve, vg);
    track(fa.epe, fb.epe);
    track(fa.iou, fb.iou);
  }

  std::vector<PoseSE3> gt, est;
  for (int i = 0; i < 12; ++i) gt.push_back(fixture::random_pose(rng, 0.4, 1.0));
  est = gt;
  for (auto& p : est) p.translation += 0.05 * Vec3(g(rng), g(rng), g(rng));
  const double base = traj_metrics(est, gt).ate;
  double drift = 0.0;
  for (int k = 0; k < 100; ++k) {
    const PoseSE3 G = fixture::random_pose(rng, 1.5, 3.0);
    const double s = sc(rng);
    auto moved = est;
    for (auto& p : moved) {
      const PoseSE3 q = p * G.inverse();
      p.rotation = q.rotation;
      p.translation = s * q.translation;
    }
    drift = std::max(drift, std::abs(traj_metrics(moved, gt).ate - base));
  }
  Verdict v;
  v.pass = worst < kMetricExact && drift < kAteInvariance;
  v.detail = fmt("max |lib - oracle|=%.1e over %d instances x 4 metric families (<%.0e); "
                 "ATE drift under 100 similarities=%.1e (<%.0e)",
                 worst, instances, kMetricExact, drift, kAteInvariance);
  return v;
}

// 10 ------------------------------------------------------------------------
Verdict robustness() {
  long clean = 0, kept = 0, outliers = 0, rejected = 0;
  for (int seed = 0; seed < 10; ++seed) {
    SynthConfig c;
    c.seed = seed;
    c.noise.track_sigma = 0.5;
    c.noise.outlier_fraction = 0.1;
    const SynthScene s = generate(c);
    const auto& sc = s.scene;
    const PoseInitResult r = estimate_initial_poses(sc.tracks, sc.track_depth, sc.camera, sc.image_diagonal(), sc.config);
    for (int i = 0; i < s.num_tracks(); ++i) {
      if (s.outlier[i]) {
        ++outliers;
        rejected += !r.inliers[i];
      } else {
        ++clean;
        kept += r.inliers[i];
      }
    }
  }
  const double retain = static_cast<double>(kept) / clean, reject = static_cast<double>(rejected) / outliers;

  int cases = 0, errors = 0, escaped = 0;
  std::string first_escape;
  {
    fixture::TempDir base("accept_fuzz_base"), work("accept_fuzz_work");
    fuzz::write_tiny_scene(base.path());
    for (const auto& fc : fuzz::scene_cases(10, 8)) {
      const fs::path dir = work / ("case" + std::to_string(cases++));
      fs::create_directories(dir);
      for (const auto& e : fs::directory_iterator(base.path())) fs::copy_file(e.path(), dir / e.path().filename());
      try {
        fc.apply(dir);
        run_scene(load_scene(dir), RunFlags{});
      } catch (const Error&) {
        ++errors;
      } catch (const std::exception& e) {
        if (escaped++ == 0) first_escape = fc.name + ": " + e.what();
      } catch (...) {
        if (escaped++ == 0) first_escape = fc.name + ": unknown exception";
      }
    }
  }
  Verdict v;
  v.pass = retain >= kRetainClean && reject >= kRejectOutliers && escaped == 0;
  v.detail = fmt("clean retained=%.3f (>=%.2f) outliers rejected=%.3f (>=%.2f) over 10 seeds; "
                 "fuzz: %d cases, %d typed errors, %d escaped",
                 retain, kRetainClean, reject, kRejectOutliers, cases, errors, escaped);
  if (!first_escape.empty()) v.detail += " [" + first_escape + "]";
  return v;
}

std::set<int> parse_ids(const std::string& list) {
  std::set<int> out;
  std::stringstream ss(list);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.insert(std::stoi(tok));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string expect_fail, only;
  app.add_option("--expect-fail", expect_fail, "Comma-separated criteria known to fail");
  app.add_option("--only", only, "Comma-separated criteria to run");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"noiseless end-to-end recovery", noiseless_recovery},
      {"loss at truth", loss_at_truth},
      {"gradient audit", gradient_audit},
      {"ablation directions", ablation_directions},
      {"hidden-mover classification", hidden_mover_classification},
      {"speed-up equivalence", speedup_equivalence},
      {"depth propagation exactness", depth_propagation},
      {"upsampler fidelity", upsampler_fidelity},
      {"metric oracles", metric_oracles},
      {"robustness", robustness},
  };
  const std::set<int> expected = parse_ids(expect_fail), selected = parse_ids(only);

  std::set<int> failed;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v.detail = std::string("exception: ") + e.what();
    }
    if (!v.pass) failed.insert(id);
    std::cout << (v.pass ? "PASS" : "FAIL") << ' ' << id << " " << criteria[k].first << ": " << v.detail
              << fmt(" [%.1fs]", seconds_since(t0)) << std::endl;
  }

  std::set<int> expected_here;
  for (int id : expected) {
    if (selected.empty() || selected.count(id)) expected_here.insert(id);
  }
  if (failed != expected_here) {
    std::cout << "failing criteria differ from --expect-fail" << std::endl;
    return 1;
  }
  return 0;
}
