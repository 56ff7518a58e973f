#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wtrk/geometry.hpp"
#include "wtrk/tensorio.hpp"
#include "wtrk/trackset.hpp"

namespace wtrk {

enum class CameraPath { Orbit, Dolly, RandomSmooth };
enum class MotionKind { Rigid, Deforming };

struct SynthObject {
  MotionKind kind = MotionKind::Rigid;
  int points = 50;
  /// Left out of the masks: appears static to the pipeline but moves.
  bool hidden = false;
  /// Initial centre given as a frame-0 pixel and depth.
  double u = 0.3, v = 0.5;  // fractions of width / height
  double depth = 3.0;
  double radius = 0.4;
  bool flat = false;        // disk facing the first camera instead of a ball
  Vec3 velocity = Vec3(0.03, 0.0, 0.0);  // world units per frame
  double spin = 0.02;                    // radians per frame about the vertical axis
};

struct SynthNoise {
  double track_sigma = 0.0;     // pixels
  double depth_sigma = 0.0;     // relative
  double outlier_fraction = 0.0;
};

struct SynthConfig {
  int frames = 20;
  int height = 72;
  int width = 96;
  CameraPath path = CameraPath::Orbit;
  double path_extent = 1.0;  // orbit sweep in radians x 0.35, dolly length x 0.5
  int static_points = 500;
  bool wavy = true;
  double scene_depth = 5.0;
  std::vector<SynthObject> objects;
  SynthNoise noise;
  std::uint64_t seed = 0;
};

/// Parses the JSON form used by `wtrk synth --config`. Unknown keys raise
/// InvalidConfig.
SynthConfig parse_synth_config(const std::string& json_text);
std::string synth_config_to_json(const SynthConfig& cfg);

struct SynthScene {
  SceneBundle scene;
  std::vector<PoseSE3> gt_poses;
  std::vector<Vec3> gt_world;               // [i * T + t]
  std::vector<std::uint8_t> gt_visible;     // before perturbation
  std::vector<TrackRole> gt_role;
  std::vector<int> object_id;               // -1 for background
  std::vector<std::uint8_t> outlier;
  DepthStack gt_depth;

  int num_tracks() const { return scene.tracks.num_tracks; }
  /// Median frame-0 depth of the static points.
  double scene_scale() const;
};

/// Deterministic in `cfg` (including the seed). Tracks are ordered static
/// points first, then each object's points. Throws EmptyScene.
SynthScene generate(const SynthConfig& cfg);

/// Adds Gaussian track noise, relative depth noise and round(f * N) random
/// walk outliers to the observed inputs; ground truth is untouched.
void perturb(SynthScene& s, const SynthNoise& noise, std::uint64_t seed);

/// Scene files plus gt_poses.json, gt_traj.wt, gt_visibility.wt, gt_depth.wt
/// and gt_info.json (roles, object ids, outlier flags, scene scale).
void write_synth(const std::filesystem::path& dir, const SynthScene& s);

}  // namespace wtrk
