#include "wtrk/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "wtrk/errors.hpp"
#include "wtrk/observation.hpp"
#include "wtrk/parallel.hpp"
#include "wtrk/pose_init.hpp"

namespace wtrk {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

json poses_to_json(std::span<const PoseSE3> poses) {
  json arr = json::array();
  for (const auto& p : poses) {
    arr.push_back({p.rotation.w(), p.rotation.x(), p.rotation.y(), p.rotation.z(),
                   p.translation.x(), p.translation.y(), p.translation.z()});
  }
  return arr;
}

std::vector<PoseSE3> poses_from_json(const json& arr) {
  std::vector<PoseSE3> out;
  for (const auto& e : arr) {
    PoseSE3 p;
    p.rotation = Eigen::Quaterniond(e[0].get<double>(), e[1].get<double>(), e[2].get<double>(), e[3].get<double>());
    p.translation = Vec3(e[4].get<double>(), e[5].get<double>(), e[6].get<double>());
    out.push_back(p);
  }
  return out;
}

json points_to_json(std::span<const Vec3> pts) {
  json arr = json::array();
  for (const auto& v : pts) {
    arr.push_back(v.x());
    arr.push_back(v.y());
    arr.push_back(v.z());
  }
  return arr;
}

std::vector<Vec3> points_from_json(const json& arr) {
  std::vector<Vec3> out(arr.size() / 3);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = Vec3(arr[3 * k].get<double>(), arr[3 * k + 1].get<double>(), arr[3 * k + 2].get<double>());
  }
  return out;
}

std::optional<json> read_checkpoint(const fs::path& path, const std::string& key) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    json j = json::parse(in);
    if (j.value("key", std::string()) != key) return std::nullopt;
    return j;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

std::vector<int> pick(std::span<const int> ids, std::span<const std::uint8_t> mask, bool value) {
  std::vector<int> out;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if ((mask[k] != 0) == value) out.push_back(ids[k]);
  }
  return out;
}

std::vector<int> remap(std::span<const int> local, std::span<const int> to_global) {
  std::vector<int> out;
  out.reserve(local.size());
  for (int i : local) out.push_back(to_global[i]);
  return out;
}

// Positions of the tracks `rows` (indices into `model`) over all frames.
std::vector<Vec3> model_rows(const StaticModel& model, std::span<const int> rows) {
  std::vector<Vec3> out;
  out.reserve(rows.size() * model.num_frames);
  for (int i : rows) {
    for (int t = 0; t < model.num_frames; ++t) out.push_back(model.position(i, t));
  }
  return out;
}

}  // namespace

PipelineResult run_scene(const SceneBundle& scene, const RunFlags& flags,
                         const std::optional<fs::path>& checkpoint_dir) {
  if (flags.stage < 1 || flags.stage > 3) {
    throw Error(ErrorCode::InvalidConfig, "--stage must be 1, 2 or 3");
  }
  const PipelineConfig& cfg = scene.config;
  const int T = scene.num_frames();
  const int H = scene.height, W = scene.width;
  const double diag = scene.image_diagonal();
  const CameraModel& cam = scene.camera;

  PipelineResult res;
  res.manifest.config_hash = config_hash(cfg);
  std::ostringstream key_stream;
  key_stream << res.manifest.config_hash << "/speedup=" << flags.speedup << "/gating=" << flags.gating
             << "/freeze=" << flags.freeze_offsets << "/tracks=" << scene.tracks.num_tracks
             << "/frames=" << T;
  const std::string key = key_stream.str();
  if (checkpoint_dir) fs::create_directories(*checkpoint_dir);

  // Track bookkeeping.
  const auto keep = eliminate_redundant_tracks(scene.tracks, H, W, cfg.effective_spawn_radius(),
                                               cfg.component_min_size);
  std::vector<int> all_ids(scene.tracks.num_tracks);
  for (int i = 0; i < scene.tracks.num_tracks; ++i) all_ids[i] = i;
  const std::vector<int> kept_ids = pick(all_ids, keep, true);
  res.redundant_ids = pick(all_ids, keep, false);
  const MaskSplit split = split_by_mask(scene.tracks.subset(kept_ids), scene.masks);
  const std::vector<int> static_ids = remap(split.static_ids, kept_ids);
  res.dynamic_foreground_ids = remap(split.dynamic_ids, kept_ids);
  const TrackSet2D static_tracks = scene.tracks.subset(static_ids);
  const TrackDepths static_depths = scene.track_depth.subset(static_ids);

  // Stage 1: clip poses and inlier gating.
  {
    Stopwatch sw;
    StageRecord rec{"stage1"};
    const fs::path ck = checkpoint_dir ? *checkpoint_dir / "stage1.json" : fs::path();
    std::optional<json> saved = (checkpoint_dir && flags.resume) ? read_checkpoint(ck, key) : std::nullopt;
    std::vector<std::uint8_t> inliers;
    if (saved) {
      res.poses = poses_from_json(saved->at("poses"));
      inliers = saved->at("inliers").get<std::vector<std::uint8_t>>();
      rec.final_loss = saved->at("loss").get<double>();
      rec.iterations = saved->at("rounds").get<int>();
      res.manifest.warnings = saved->at("warnings").get<std::vector<std::string>>();
      rec.resumed = true;
    } else {
      PoseInitOptions po;
      po.gating = flags.gating;
      po.threads = flags.threads;
      PoseInitResult pr = estimate_initial_poses(static_tracks, static_depths, cam, diag, cfg, po);
      res.poses = std::move(pr.poses);
      inliers = std::move(pr.inliers);
      rec.final_loss = pr.loss;
      res.manifest.warnings = pr.warnings;
      for (const auto& clip : pr.clips) rec.iterations = std::max(rec.iterations, clip.rounds);
      if (checkpoint_dir) {
        json j = {{"key", key},
                  {"poses", poses_to_json(res.poses)},
                  {"inliers", inliers},
                  {"loss", rec.final_loss},
                  {"rounds", rec.iterations},
                  {"warnings", res.manifest.warnings}};
        write_text_atomic(ck, j.dump() + "\n");
      }
    }
    res.gated_ids = pick(static_ids, inliers, false);
    res.curves["stage1"] = {rec.final_loss};
    rec.initial_loss = rec.final_loss;
    rec.seconds = sw.seconds();
    res.manifest.stages.push_back(rec);
    res.completed_stage = 1;
    if (flags.stage == 1) return res;

    // Stage 2 operates on the inliers.
    const std::vector<int> inlier_local = [&] {
      std::vector<int> v;
      for (int k = 0; k < static_tracks.num_tracks; ++k) {
        if (inliers[k]) v.push_back(k);
      }
      return v;
    }();
    const std::vector<int> inlier_ids = remap(inlier_local, static_ids);
    const TrackSet2D s_tracks = scene.tracks.subset(inlier_ids);
    const TrackDepths s_depths = scene.track_depth.subset(inlier_ids);

    Stopwatch sw2;
    StageRecord rec2{"stage2"};
    StaticModel model;
    const fs::path ck2 = checkpoint_dir ? *checkpoint_dir / "stage2.json" : fs::path();
    saved = (checkpoint_dir && flags.resume && rec.resumed) ? read_checkpoint(ck2, key) : std::nullopt;
    if (saved) {
      res.poses = poses_from_json(saved->at("poses"));
      model = StaticModel(s_tracks.num_tracks, T);
      model.anchors = points_from_json(saved->at("anchors"));
      model.offsets = points_from_json(saved->at("offsets"));
      res.coarse_ids = saved->at("coarse_ids").get<std::vector<int>>();
      rec2.initial_loss = saved->at("initial_loss").get<double>();
      rec2.final_loss = saved->at("loss").get<double>();
      rec2.iterations = saved->at("iterations").get<int>();
      res.final_ba_static = saved->at("ba").get<double>();
      res.curves["stage2"] = saved->at("curve").get<std::vector<double>>();
      rec2.resumed = true;
    } else {
      RefineOptions ro;
      ro.freeze_offsets = flags.freeze_offsets;
      std::vector<double>& curve = res.curves["stage2"];
      ro.on_iteration = [&curve](int, double loss) { curve.push_back(loss); };
      RefineResult rr;
      if (flags.speedup && cfg.downsample_varpi > 1) {
        const DownsampleIndex index = downsample_static(s_tracks, cfg.downsample_varpi);
        const TrackSet2D c_tracks = s_tracks.subset(index.retained);
        const TrackDepths c_depths = s_depths.subset(index.retained);
        const StaticModel init = init_static_anchors(c_tracks, c_depths, res.poses, cam);
        rr = refine_static(init, res.poses, c_tracks, c_depths, cam, diag, cfg, ro);
        const UpsampleWeights w = trajectory_upsample_weights(s_tracks, s_depths, cam, index, cfg.knn_r);
        model = upsample_static_model(rr.model, w);
        res.final_ba_static = loss_ba(rr.model, rr.poses, cam, c_tracks, diag);
        res.coarse_ids = remap(index.retained, inlier_ids);
      } else {
        const StaticModel init = init_static_anchors(s_tracks, s_depths, res.poses, cam);
        rr = refine_static(init, res.poses, s_tracks, s_depths, cam, diag, cfg, ro);
        model = rr.model;
        res.final_ba_static = loss_ba(rr.model, rr.poses, cam, s_tracks, diag);
        res.coarse_ids = inlier_ids;
      }
      res.poses = rr.poses;
      rec2.initial_loss = rr.initial_loss;
      rec2.final_loss = rr.loss;
      rec2.iterations = rr.iterations;
      if (checkpoint_dir) {
        json j = {{"key", key},
                  {"poses", poses_to_json(res.poses)},
                  {"anchors", points_to_json(model.anchors)},
                  {"offsets", points_to_json(model.offsets)},
                  {"coarse_ids", res.coarse_ids},
                  {"initial_loss", rec2.initial_loss},
                  {"loss", rec2.final_loss},
                  {"iterations", rec2.iterations},
                  {"ba", res.final_ba_static},
                  {"curve", res.curves["stage2"]}};
        write_text_atomic(ck2, j.dump() + "\n");
      }
    }

    const auto background = classify_dynamic_background(model, cfg.epsilon);
    std::vector<int> static_rows, background_rows;
    for (int k = 0; k < model.num_tracks; ++k) (background[k] ? background_rows : static_rows).push_back(k);
    res.static_ids = remap(static_rows, inlier_ids);
    res.dynamic_background_ids = remap(background_rows, inlier_ids);
    res.static_world = model_rows(model, static_rows);
    res.ba_static_dense = reprojection_loss(res.static_world, res.poses, cam,
                                            scene.tracks.subset(res.static_ids), diag);
    rec2.seconds = sw2.seconds();
    res.manifest.stages.push_back(rec2);
    res.completed_stage = 2;
    if (flags.stage == 2) return res;
  }

  // Stage 3: dynamic foreground plus reclassified background.
  res.dynamic_ids = res.dynamic_foreground_ids;
  res.dynamic_ids.insert(res.dynamic_ids.end(), res.dynamic_background_ids.begin(),
                         res.dynamic_background_ids.end());
  {
    Stopwatch sw;
    StageRecord rec{"stage3"};
    const fs::path ck = checkpoint_dir ? *checkpoint_dir / "stage3.json" : fs::path();
    const bool chain = checkpoint_dir && flags.resume && res.manifest.stages.back().resumed;
    const std::optional<json> saved = chain ? read_checkpoint(ck, key) : std::nullopt;
    if (res.dynamic_ids.empty()) {
      res.manifest.warnings.push_back("no dynamic tracks; stage 3 skipped");
    } else if (saved) {
      res.dynamic_world = points_from_json(saved->at("positions"));
      res.final_ba_dynamic = saved->at("ba").get<double>();
      rec.initial_loss = saved->at("initial_loss").get<double>();
      rec.final_loss = saved->at("loss").get<double>();
      rec.iterations = saved->at("iterations").get<int>();
      res.curves["stage3"] = saved->at("curve").get<std::vector<double>>();
      rec.resumed = true;
    } else {
      const TrackSet2D d_tracks = scene.tracks.subset(res.dynamic_ids);
      const TrackDepths d_depths = scene.track_depth.subset(res.dynamic_ids);
      const DynamicTrackSet init = init_dynamic(d_tracks, d_depths, res.poses, cam, cfg.knn_r);
      DynamicOptions dopt;
      dopt.threads = flags.threads;
      std::vector<double>& curve = res.curves["stage3"];
      dopt.on_iteration = [&curve](int, double loss) { curve.push_back(loss); };
      const DynamicResult dr = optimize_dynamic(init, d_tracks, d_depths, res.poses, cam, diag, cfg, dopt);
      res.dynamic_world = dr.tracks.positions;
      res.final_ba_dynamic = reprojection_loss(res.dynamic_world, res.poses, cam, d_tracks, diag);
      rec.initial_loss = dr.initial_loss;
      rec.final_loss = dr.loss;
      rec.iterations = dr.iterations;
      if (checkpoint_dir) {
        json j = {{"key", key},
                  {"positions", points_to_json(res.dynamic_world)},
                  {"ba", res.final_ba_dynamic},
                  {"initial_loss", rec.initial_loss},
                  {"loss", rec.final_loss},
                  {"iterations", rec.iterations},
                  {"curve", curve}};
        write_text_atomic(ck, j.dump() + "\n");
      }
    }
    rec.seconds = sw.seconds();
    res.manifest.stages.push_back(rec);
    res.completed_stage = 3;
  }

  if (flags.depth_out) {
    Stopwatch sw;
    DepthStack aligned(T, H, W, 0.0f);
    std::vector<std::vector<DepthSample>> samples(T);
    auto collect = [&](std::span<const int> ids, std::span<const Vec3> world) {
      for (std::size_t k = 0; k < ids.size(); ++k) {
        for (int t = 0; t < T; ++t) {
          if (!scene.tracks.vis(ids[k], t)) continue;
          const double d = cam_depth(res.poses[t], world[k * T + t]);
          if (d > 0.0) samples[t].push_back({scene.tracks.pos(ids[k], t), d});
        }
      }
    };
    collect(res.static_ids, res.static_world);
    collect(res.dynamic_ids, res.dynamic_world);
    std::vector<std::string> frame_warnings(T);
    parallel_for(T, flags.threads, [&](std::size_t t) {
      const auto raw = scene.depth.frame(static_cast<int>(t));
      auto dst = aligned.frame(static_cast<int>(t));
      try {
        const auto out = propagate_depth(raw, H, W, samples[t], cam, cfg.depth_knn_k);
        for (std::size_t p = 0; p < out.size(); ++p) dst[p] = static_cast<float>(out[p]);
      } catch (const Error& e) {
        std::copy(raw.begin(), raw.end(), dst.begin());
        frame_warnings[t] = "frame " + std::to_string(t) + ": " + e.what() + "; raw depth kept";
      }
    });
    for (auto& w : frame_warnings) {
      if (!w.empty()) res.manifest.warnings.push_back(std::move(w));
    }
    res.aligned_depth = std::move(aligned);
    res.manifest.stages.push_back({"depth", sw.seconds(), 0.0, 0.0, 0, false});
  }
  return res;
}

namespace {

json metrics_json(const std::map<std::string, double>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[k] = std::isfinite(v) ? json(v) : json(nullptr);
  return j;
}

Estimate estimate_from(const PipelineResult& r) {
  Estimate e;
  e.poses = r.poses;
  e.static_ids = r.static_ids;
  e.static_world = r.static_world;
  e.dynamic_ids = r.dynamic_ids;
  e.dynamic_world = r.dynamic_world;
  return e;
}

void write_trajectories(const fs::path& path, std::span<const Vec3> world, std::size_t n, int T,
                        std::vector<std::string>& warnings) {
  if (n == 0) {
    warnings.push_back(path.filename().string() + " not written: no tracks");
    return;
  }
  write_tensor(path, trajectories_to_tensor(world, static_cast<int>(n), T));
}

}  // namespace

RunManifest run_pipeline(const fs::path& input_dir, const fs::path& output_dir, const RunFlags& flags) {
  const SceneBundle scene = load_scene(input_dir);
  fs::create_directories(output_dir);
  PipelineResult r = run_scene(scene, flags, output_dir / "checkpoints");
  RunManifest& m = r.manifest;
  m.input_dir = input_dir.string();
  m.output_dir = output_dir.string();
  const int T = scene.num_frames();

  write_poses_json(output_dir / "poses.json", r.poses);
  if (r.completed_stage >= 2) {
    write_trajectories(output_dir / "traj_static.wt", r.static_world, r.static_ids.size(), T, m.warnings);
  }
  if (r.completed_stage >= 3) {
    write_trajectories(output_dir / "traj_dynamic.wt", r.dynamic_world, r.dynamic_ids.size(), T, m.warnings);
  }
  if (r.aligned_depth) {
    write_tensor(output_dir / "aligned_depth.wt",
                 Tensor::from_f32({T, scene.height, scene.width}, r.aligned_depth->values));
  }

  std::map<std::string, double> metrics;
  for (const auto& s : m.stages) {
    metrics[s.name + "_loss"] = s.final_loss;
    metrics[s.name + "_seconds"] = s.seconds;
  }
  if (r.completed_stage >= 2) {
    metrics["final_ba_static"] = r.final_ba_static;
    metrics["ba_static_dense"] = r.ba_static_dense;
  }
  if (r.completed_stage >= 3) metrics["final_ba_dynamic"] = r.final_ba_dynamic;
  if (flags.eval_dir) {
    const GroundTruth gt = load_ground_truth(*flags.eval_dir);
    const EvalReport rep = evaluate(estimate_from(r), gt, m.warnings);
    for (const auto& [k, v] : flatten(rep)) metrics[k] = v;
  }

  json curves = json::object();
  for (const auto& [k, v] : r.curves) curves[k] = v;
  json report = {
      {"metrics", metrics_json(metrics)},
      {"tracks",
       {{"num_input", scene.tracks.num_tracks},
        {"static", r.static_ids},
        {"dynamic", r.dynamic_ids},
        {"dynamic_foreground", r.dynamic_foreground_ids},
        {"dynamic_background", r.dynamic_background_ids},
        {"redundant", r.redundant_ids},
        {"gated", r.gated_ids}}},
      {"completed_stage", r.completed_stage},
      {"config", json::parse(config_to_json(scene.config))},
      {"loss_curves", curves},
      {"warnings", m.warnings}};
  write_text_atomic(output_dir / "report.json", report.dump(2) + "\n");

  std::ostringstream csv;
  csv << "stage,iteration,loss\n";
  csv.precision(17);
  for (const auto& [stage, values] : r.curves) {
    for (std::size_t k = 0; k < values.size(); ++k) csv << stage << ',' << k + 1 << ',' << values[k] << '\n';
  }
  write_text_atomic(output_dir / "losses.csv", csv.str());

  json stages = json::array();
  for (const auto& s : m.stages) {
    stages.push_back({{"name", s.name},
                      {"seconds", s.seconds},
                      {"initial_loss", s.initial_loss},
                      {"final_loss", s.final_loss},
                      {"iterations", s.iterations},
                      {"resumed", s.resumed}});
  }
  json manifest = {{"input_dir", m.input_dir},
                   {"output_dir", m.output_dir},
                   {"config_hash", m.config_hash},
                   {"stages", stages},
                   {"warnings", m.warnings}};
  write_text_atomic(output_dir / "manifest.json", manifest.dump(2) + "\n");
  return m;
}

GroundTruth load_ground_truth(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingFile, dir.string() + " is not a directory");
  GroundTruth gt;
  const auto k = read_tensor(dir / "intrinsics.wt");
  if (k.dims != std::vector<std::int64_t>{3, 3}) throw Error(ErrorCode::ShapeMismatch, "intrinsics must be 3x3");
  const auto kv = k.to_f32();
  Mat3 K;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) K(r, c) = kv[r * 3 + c];
  gt.camera = CameraModel::from_matrix(K);

  const Tensor tr = read_tensor(dir / "tracks.wt");
  const Tensor vis = read_tensor(dir / "visibility.wt");
  if (tr.dims.size() != 3 || tr.dims[2] != 2 || vis.dims.size() != 2 || vis.dims[0] != tr.dims[0] ||
      vis.dims[1] != tr.dims[1]) {
    throw Error(ErrorCode::ShapeMismatch, "tracks/visibility shapes disagree");
  }
  const int N = static_cast<int>(tr.dims[0]);
  const int T = static_cast<int>(tr.dims[1]);
  gt.observed = TrackSet2D(N, T);
  const auto pos = tr.to_f32();
  for (std::size_t i = 0; i < gt.observed.positions.size(); ++i) {
    gt.observed.positions[i] = Vec2(pos[2 * i], pos[2 * i + 1]);
  }
  gt.observed.visible = vis.to_u8();
  gt.observed.infer_spawn_frames();

  if (fs::exists(dir / "depth.wt")) {
    const Tensor d = read_tensor(dir / "depth.wt");
    if (d.dims.size() == 3) {
      gt.height = static_cast<int>(d.dims[1]);
      gt.width = static_cast<int>(d.dims[2]);
    }
  }
  if (fs::exists(dir / "gt_poses.json")) gt.poses = read_poses_json(dir / "gt_poses.json");
  if (fs::exists(dir / "gt_traj.wt")) {
    int n = 0, t = 0;
    gt.world = tensor_to_trajectories(read_tensor(dir / "gt_traj.wt"), n, t);
    if (n != N || t != T) throw Error(ErrorCode::ShapeMismatch, "gt_traj.wt does not match tracks.wt");
  }
  if (fs::exists(dir / "gt_visibility.wt")) {
    const Tensor g = read_tensor(dir / "gt_visibility.wt");
    if (g.dims != vis.dims) throw Error(ErrorCode::ShapeMismatch, "gt_visibility.wt does not match tracks.wt");
    gt.visible = g.to_u8();
  }
  if (fs::exists(dir / "gt_depth.wt")) {
    const Tensor g = read_tensor(dir / "gt_depth.wt");
    if (g.dims.size() != 3 || g.dims[0] != T) throw Error(ErrorCode::ShapeMismatch, "gt_depth.wt shape");
    DepthStack ds(T, static_cast<int>(g.dims[1]), static_cast<int>(g.dims[2]));
    ds.values = g.to_f32();
    gt.height = ds.height;
    gt.width = ds.width;
    gt.depth = std::move(ds);
  }
  return gt;
}

EvalReport evaluate(const Estimate& est, const GroundTruth& gt, std::vector<std::string>& warnings) {
  EvalReport rep;
  const int T = gt.observed.num_frames;

  Similarity sim;
  if (est.poses && gt.poses) {
    rep.traj = traj_metrics(*est.poses, *gt.poses);
    std::vector<Vec3> ce, cg;
    for (int t = 0; t < T; ++t) {
      ce.push_back((*est.poses)[t].center());
      cg.push_back((*gt.poses)[t].center());
    }
    sim = align_similarity(ce, cg);
  } else {
    warnings.push_back("trajectory metrics skipped: " +
                       std::string(est.poses ? "gt_poses.json" : "poses.json") + " missing");
  }

  // Track-level data: ids with their estimated world positions.
  std::vector<int> ids = est.static_ids;
  ids.insert(ids.end(), est.dynamic_ids.begin(), est.dynamic_ids.end());
  std::vector<Vec3> world = est.static_world;
  world.insert(world.end(), est.dynamic_world.begin(), est.dynamic_world.end());
  if (ids.empty()) {
    warnings.push_back("track metrics skipped: no estimated trajectories");
    return rep;
  }

  if (gt.world) {
    auto rmse = [&](std::span<const int> sel, std::span<const Vec3> pts) {
      double sq = 0.0;
      for (std::size_t k = 0; k < sel.size(); ++k) {
        for (int t = 0; t < T; ++t) {
          sq += (sim.apply(pts[k * T + t]) - (*gt.world)[static_cast<std::size_t>(sel[k]) * T + t]).squaredNorm();
        }
      }
      return std::sqrt(sq / (static_cast<double>(sel.size()) * T));
    };
    if (!est.static_ids.empty()) rep.static_rmse = rmse(est.static_ids, est.static_world);
    if (!est.dynamic_ids.empty()) rep.dynamic_rmse = rmse(est.dynamic_ids, est.dynamic_world);
  }

  const std::vector<PoseSE3>* cam_poses = est.poses ? &*est.poses : (gt.poses ? &*gt.poses : nullptr);
  if (!cam_poses) {
    warnings.push_back("depth, tracking and flow metrics skipped: no poses");
    return rep;
  }
  if (!est.poses) warnings.push_back("estimated poses missing; ground-truth poses used for camera frames");
  const double cam_scale = est.poses ? sim.scale : 1.0;

  const std::size_t M = ids.size();
  std::vector<Vec3> est_cam(M * T);
  for (std::size_t k = 0; k < M; ++k) {
    for (int t = 0; t < T; ++t) est_cam[k * T + t] = cam_scale * (*cam_poses)[t].transform(world[k * T + t]);
  }

  if (gt.depth) {
    std::vector<double> e_all, g_all;
    for (int t = 0; t < T; ++t) {
      std::vector<Vec2> px;
      std::vector<double> dz;
      for (std::size_t k = 0; k < M; ++k) {
        if (!gt.observed.vis(ids[k], t)) continue;
        px.push_back(gt.observed.pos(ids[k], t));
        dz.push_back(est_cam[k * T + t].z());
      }
      const auto img = rasterize_point_depths(px, dz, gt.depth->height, gt.depth->width);
      const auto ref = gt.depth->frame(t);
      for (std::size_t p = 0; p < img.size(); ++p) {
        if (std::isnan(img[p])) continue;
        e_all.push_back(img[p]);
        g_all.push_back(ref[p]);
      }
    }
    try {
      rep.depth = depth_metrics(e_all, g_all);
    } catch (const Error& e) {
      warnings.push_back(std::string("depth metrics skipped: ") + e.what());
    }
  } else {
    warnings.push_back("depth metrics skipped: gt_depth.wt missing");
  }

  if (gt.world && gt.poses && gt.visible) {
    std::vector<Vec3> gt_cam(M * T);
    std::vector<std::uint8_t> ev(M * T), gv(M * T);
    std::vector<Vec2> ef(M * T), gf(M * T);
    for (std::size_t k = 0; k < M; ++k) {
      const int i = ids[k];
      const int s = gt.observed.spawn_frame[i];
      auto proj = [&](const Vec3& xc) {
        return xc.z() > kMinDepth ? project_camera_point(gt.camera, xc) : Vec2(gt.camera.cx, gt.camera.cy);
      };
      const Vec2 e0 = proj((*cam_poses)[s].transform(world[k * T + s]));
      const Vec2 g0 = proj((*gt.poses)[s].transform((*gt.world)[static_cast<std::size_t>(i) * T + s]));
      for (int t = 0; t < T; ++t) {
        const std::size_t o = k * T + t;
        gt_cam[o] = (*gt.poses)[t].transform((*gt.world)[static_cast<std::size_t>(i) * T + t]);
        ev[o] = gt.observed.visible[gt.observed.index(i, t)];
        gv[o] = (*gt.visible)[gt.observed.index(i, t)];
        ef[o] = proj((*cam_poses)[t].transform(world[o])) - e0;
        gf[o] = proj(gt_cam[o]) - g0;
      }
    }
    rep.tracking = tracking3d_metrics(est_cam, ev, gt_cam, gv);
    rep.flow = flow_metrics(ef, gf, ev, gv);
  } else {
    warnings.push_back("tracking and flow metrics skipped: gt trajectories, poses or visibility missing");
  }
  return rep;
}

EvalReport eval_only(const fs::path& est_dir, const fs::path& gt_dir, std::vector<std::string>& warnings) {
  if (!fs::is_directory(est_dir)) throw Error(ErrorCode::MissingFile, est_dir.string() + " is not a directory");
  const GroundTruth gt = load_ground_truth(gt_dir);
  const int T = gt.observed.num_frames;
  Estimate est;
  if (fs::exists(est_dir / "poses.json")) {
    est.poses = read_poses_json(est_dir / "poses.json");
    if (static_cast<int>(est.poses->size()) != T) throw Error(ErrorCode::LengthMismatch, "poses.json frame count");
  }

  json tracks;
  if (fs::exists(est_dir / "report.json")) {
    std::ifstream in(est_dir / "report.json");
    try {
      tracks = json::parse(in).at("tracks");
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ShapeMismatch, std::string("report.json: ") + e.what());
    }
  } else {
    warnings.push_back("report.json missing; trajectories cannot be matched to tracks");
  }
  auto load = [&](const char* file, const char* key, std::vector<int>& ids, std::vector<Vec3>& world) {
    if (!fs::exists(est_dir / file)) {
      warnings.push_back(std::string(file) + " missing");
      return;
    }
    if (tracks.is_null()) return;
    int n = 0, t = 0;
    world = tensor_to_trajectories(read_tensor(est_dir / file), n, t);
    ids = tracks.at(key).get<std::vector<int>>();
    if (n != static_cast<int>(ids.size()) || t != T) {
      throw Error(ErrorCode::ShapeMismatch, std::string(file) + " does not match report.json");
    }
    for (int i : ids) {
      if (i < 0 || i >= gt.observed.num_tracks) throw Error(ErrorCode::ShapeMismatch, "track id out of range");
    }
  };
  load("traj_static.wt", "static", est.static_ids, est.static_world);
  load("traj_dynamic.wt", "dynamic", est.dynamic_ids, est.dynamic_world);
  return evaluate(est, gt, warnings);
}

std::map<std::string, double> flatten(const EvalReport& r) {
  std::map<std::string, double> m;
  if (r.traj) {
    m["ate"] = r.traj->ate;
    m["rte"] = r.traj->rte;
    m["rre"] = r.traj->rre;
  }
  if (r.depth) {
    m["abs_rel"] = r.depth->abs_rel;
    m["delta_125"] = r.depth->delta_125;
  }
  if (r.tracking) {
    m["aj"] = r.tracking->aj;
    m["apd3d"] = r.tracking->apd3d;
    m["oa"] = r.tracking->oa;
  }
  if (r.flow) {
    m["epe"] = r.flow->epe;
    m["iou"] = r.flow->iou;
  }
  if (r.static_rmse) m["static_rmse"] = *r.static_rmse;
  if (r.dynamic_rmse) m["dynamic_rmse"] = *r.dynamic_rmse;
  return m;
}

}  // namespace wtrk
