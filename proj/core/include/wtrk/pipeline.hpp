#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wtrk/dyntrack.hpp"
#include "wtrk/metrics.hpp"
#include "wtrk/refine.hpp"
#include "wtrk/tensorio.hpp"

namespace wtrk {

struct RunFlags {
  bool speedup = true;
  bool depth_out = false;
  std::optional<std::filesystem::path> eval_dir;
  int stage = 3;  // stop after this stage (1..3)
  bool resume = false;
  int threads = 1;
  // Ablation switches; not exposed on the command line.
  bool gating = true;
  bool freeze_offsets = false;
};

struct StageRecord {
  std::string name;
  double seconds = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
  bool resumed = false;
};

struct RunManifest {
  std::string input_dir;
  std::string output_dir;
  std::string config_hash;
  std::vector<StageRecord> stages;
  std::vector<std::string> warnings;
};

/// Loss value after each accepted solver iteration, per stage.
using LossCurves = std::map<std::string, std::vector<double>>;

/// In-memory result of one run. Track ids index the input track set.
struct PipelineResult {
  std::vector<PoseSE3> poses;
  std::vector<int> static_ids;              // final static tracks
  std::vector<Vec3> static_world;           // [k * T + t]
  std::vector<int> dynamic_ids;             // foreground then background
  std::vector<int> dynamic_foreground_ids;
  std::vector<int> dynamic_background_ids;
  std::vector<Vec3> dynamic_world;          // [k * T + t]
  std::vector<int> redundant_ids;           // removed by spawn filtering
  std::vector<int> gated_ids;               // rejected by inlier gating
  std::vector<int> coarse_ids;              // static tracks optimized when speeding up
  std::optional<DepthStack> aligned_depth;
  double final_ba_static = 0.0;   // reprojection term over the optimized static tracks
  double ba_static_dense = 0.0;   // same over every output static track
  double final_ba_dynamic = 0.0;
  int completed_stage = 0;
  RunManifest manifest;
  LossCurves curves;
};

/// Runs the stages on an already loaded scene. When `checkpoint_dir` is set,
/// each finished stage is stored there, and with flags.resume stored stages
/// whose key matches the config and flags are reused.
PipelineResult run_scene(const SceneBundle& scene, const RunFlags& flags,
                         const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

/// load_scene + run_scene + outputs: poses.json, traj_static.wt,
/// traj_dynamic.wt, report.json, manifest.json, losses.csv and, with
/// --depth-out, aligned_depth.wt. Stage 1 runs write poses.json only.
RunManifest run_pipeline(const std::filesystem::path& input_dir,
                         const std::filesystem::path& output_dir, const RunFlags& flags);

/// Reference data for evaluation; every part is optional except intrinsics
/// and the observed tracks.
struct GroundTruth {
  CameraModel camera;
  int height = 0;
  int width = 0;
  TrackSet2D observed;  // input tracks (positions + predicted visibility)
  std::optional<std::vector<PoseSE3>> poses;
  std::optional<std::vector<Vec3>> world;              // [i * T + t]
  std::optional<std::vector<std::uint8_t>> visible;    // [i * T + t]
  std::optional<DepthStack> depth;
};

/// Reads intrinsics.wt, tracks.wt, visibility.wt and whatever of
/// gt_poses.json, gt_traj.wt, gt_visibility.wt, gt_depth.wt is present.
GroundTruth load_ground_truth(const std::filesystem::path& dir);

struct Estimate {
  std::optional<std::vector<PoseSE3>> poses;
  std::vector<int> static_ids;
  std::vector<Vec3> static_world;
  std::vector<int> dynamic_ids;
  std::vector<Vec3> dynamic_world;
};

EvalReport evaluate(const Estimate& est, const GroundTruth& gt, std::vector<std::string>& warnings);

/// Reads poses.json, report.json and the trajectory tensors from `est_dir`.
/// Missing optional artifacts skip their metrics with a warning. Throws
/// MissingFile when either directory does not exist.
EvalReport eval_only(const std::filesystem::path& est_dir, const std::filesystem::path& gt_dir,
                     std::vector<std::string>& warnings);

/// Flat metric-name -> value map.
std::map<std::string, double> flatten(const EvalReport& report);

}  // namespace wtrk
