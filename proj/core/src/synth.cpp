#include "wtrk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>

#include <json.hpp>

#include "wtrk/errors.hpp"

namespace wtrk {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("synth key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw Error(ErrorCode::InvalidConfig, std::string("unknown ") + where + " key '" + key + "'");
    }
  }
}

const char* path_name(CameraPath p) {
  switch (p) {
    case CameraPath::Orbit: return "orbit";
    case CameraPath::Dolly: return "dolly";
    case CameraPath::RandomSmooth: return "random_smooth";
  }
  return "orbit";
}

Mat3 rot_y(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix();
}

// World->camera pose of a camera at `c` looking at `target`; image y points
// along world +y.
PoseSE3 look_at(const Vec3& c, const Vec3& target) {
  const Vec3 z = (target - c).normalized();
  const Vec3 x = Vec3::UnitY().cross(z).normalized();
  const Vec3 y = z.cross(x);
  Mat3 R;
  R.row(0) = x.transpose();
  R.row(1) = y.transpose();
  R.row(2) = z.transpose();
  PoseSE3 p;
  p.rotation = Eigen::Quaterniond(R);
  p.rotation.normalize();
  p.translation = -(R * c);
  return p;
}

std::vector<PoseSE3> camera_path(const SynthConfig& cfg, std::mt19937_64& rng) {
  const int T = cfg.frames;
  const double D = cfg.scene_depth;
  std::vector<PoseSE3> poses(T);
  const Vec3 target(0.0, 0.0, D);
  std::uniform_real_distribution<double> uni(0.0, 2.0 * kPi);
  std::array<double, 6> phase{};
  for (auto& p : phase) p = uni(rng);
  for (int t = 0; t < T; ++t) {
    const double s = T > 1 ? static_cast<double>(t) / (T - 1) : 0.0;
    switch (cfg.path) {
      case CameraPath::Orbit: {
        const double theta = 0.35 * cfg.path_extent * s;
        Vec3 c = target + rot_y(theta) * Vec3(0.0, 0.0, -D);
        c.y() += 0.04 * D * std::sin(kPi * s);
        poses[t] = look_at(c, target);
        break;
      }
      case CameraPath::Dolly: {
        const Vec3 c = cfg.path_extent * Vec3(0.5 * s, 0.05 * std::sin(kPi * s), 0.3 * s);
        PoseSE3 p;
        p.rotation = Eigen::Quaterniond(rot_y(-0.08 * cfg.path_extent * s));
        p.translation = -(p.rotation * c);
        poses[t] = p;
        break;
      }
      case CameraPath::RandomSmooth: {
        auto wave = [&](int k, double amp) {
          return amp * (std::sin(2.0 * kPi * s + phase[k]) - std::sin(phase[k]));
        };
        const Vec3 c = cfg.path_extent * Vec3(wave(0, 0.4), wave(1, 0.1), wave(2, 0.25));
        const Vec3 w = cfg.path_extent * Vec3(wave(3, 0.03), wave(4, 0.08), wave(5, 0.02));
        PoseSE3 p;
        const double a = w.norm();
        p.rotation = a > 0.0 ? Eigen::Quaterniond(Eigen::AngleAxisd(a, w / a)) : Eigen::Quaterniond::Identity();
        p.translation = -(p.rotation * c);
        poses[t] = p;
        break;
      }
    }
  }
  poses[0] = PoseSE3::identity();
  return poses;
}

double surface_depth(const SynthConfig& cfg, double u, double v) {
  const double a = u / cfg.width, b = v / cfg.height;
  if (cfg.wavy) {
    return cfg.scene_depth * (1.0 + 0.15 * std::sin(2.0 * kPi * 1.5 * a) * std::cos(2.0 * kPi * b));
  }
  return cfg.scene_depth * (1.0 + 0.2 * (a - 0.5));
}

// Nearest filled pixel for every empty one (multi-source BFS, 4-neighbours).
std::vector<int> nearest_fill(const std::vector<int>& owner, int H, int W) {
  std::vector<int> out = owner;
  std::deque<int> q;
  for (int p = 0; p < H * W; ++p) {
    if (out[p] >= 0) q.push_back(p);
  }
  while (!q.empty()) {
    const int p = q.front();
    q.pop_front();
    const int y = p / W, x = p % W;
    const int nb[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
    for (const auto& n : nb) {
      if (n[0] < 0 || n[1] < 0 || n[0] >= W || n[1] >= H) continue;
      const int np = n[1] * W + n[0];
      if (out[np] < 0) {
        out[np] = out[p];
        q.push_back(np);
      }
    }
  }
  return out;
}

}  // namespace

SynthConfig parse_synth_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("synth config: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "synth config must be an object");
  reject_unknown(j, {"frames", "height", "width", "path", "path_extent", "static_points", "wavy",
                     "scene_depth", "objects", "noise", "seed"},
                 "synth");
  SynthConfig c;
  take(j, "frames", c.frames);
  take(j, "height", c.height);
  take(j, "width", c.width);
  take(j, "path_extent", c.path_extent);
  take(j, "static_points", c.static_points);
  take(j, "wavy", c.wavy);
  take(j, "scene_depth", c.scene_depth);
  take(j, "seed", c.seed);
  if (j.contains("path")) {
    std::string p;
    take(j, "path", p);
    if (p == "orbit") c.path = CameraPath::Orbit;
    else if (p == "dolly") c.path = CameraPath::Dolly;
    else if (p == "random_smooth") c.path = CameraPath::RandomSmooth;
    else throw Error(ErrorCode::InvalidConfig, "unknown camera path '" + p + "'");
  }
  if (j.contains("noise")) {
    const json& n = j.at("noise");
    reject_unknown(n, {"track_sigma", "depth_sigma", "outlier_fraction"}, "noise");
    take(n, "track_sigma", c.noise.track_sigma);
    take(n, "depth_sigma", c.noise.depth_sigma);
    take(n, "outlier_fraction", c.noise.outlier_fraction);
  }
  if (j.contains("objects")) {
    for (const json& o : j.at("objects")) {
      reject_unknown(o, {"kind", "points", "hidden", "u", "v", "depth", "radius", "flat", "velocity", "spin"},
                     "object");
      SynthObject obj;
      std::string kind = "rigid";
      take(o, "kind", kind);
      if (kind == "rigid") obj.kind = MotionKind::Rigid;
      else if (kind == "deforming") obj.kind = MotionKind::Deforming;
      else throw Error(ErrorCode::InvalidConfig, "unknown object kind '" + kind + "'");
      take(o, "points", obj.points);
      take(o, "hidden", obj.hidden);
      take(o, "u", obj.u);
      take(o, "v", obj.v);
      take(o, "depth", obj.depth);
      take(o, "radius", obj.radius);
      take(o, "flat", obj.flat);
      take(o, "spin", obj.spin);
      if (o.contains("velocity")) {
        std::vector<double> v;
        take(o, "velocity", v);
        if (v.size() != 3) throw Error(ErrorCode::InvalidConfig, "object velocity needs 3 numbers");
        obj.velocity = Vec3(v[0], v[1], v[2]);
      }
      c.objects.push_back(obj);
    }
  }
  if (c.frames < 1 || c.height < 2 || c.width < 2 || c.static_points < 0 || c.scene_depth <= 0.0 ||
      c.noise.track_sigma < 0.0 || c.noise.depth_sigma < 0.0 || c.noise.outlier_fraction < 0.0 ||
      c.noise.outlier_fraction > 1.0) {
    throw Error(ErrorCode::InvalidConfig, "synth config out of range");
  }
  for (const auto& o : c.objects) {
    if (o.points < 0 || o.depth <= 0.0 || o.radius < 0.0) {
      throw Error(ErrorCode::InvalidConfig, "synth object out of range");
    }
  }
  return c;
}

std::string synth_config_to_json(const SynthConfig& c) {
  json objs = json::array();
  for (const auto& o : c.objects) {
    objs.push_back({{"kind", o.kind == MotionKind::Rigid ? "rigid" : "deforming"},
                    {"points", o.points},
                    {"hidden", o.hidden},
                    {"u", o.u},
                    {"v", o.v},
                    {"depth", o.depth},
                    {"radius", o.radius},
                    {"flat", o.flat},
                    {"velocity", {o.velocity.x(), o.velocity.y(), o.velocity.z()}},
                    {"spin", o.spin}});
  }
  json j = {{"frames", c.frames},
            {"height", c.height},
            {"width", c.width},
            {"path", path_name(c.path)},
            {"path_extent", c.path_extent},
            {"static_points", c.static_points},
            {"wavy", c.wavy},
            {"scene_depth", c.scene_depth},
            {"objects", objs},
            {"noise",
             {{"track_sigma", c.noise.track_sigma},
              {"depth_sigma", c.noise.depth_sigma},
              {"outlier_fraction", c.noise.outlier_fraction}}},
            {"seed", c.seed}};
  return j.dump(2);
}

double SynthScene::scene_scale() const {
  std::vector<double> d;
  const int T = scene.tracks.num_frames;
  for (int i = 0; i < num_tracks(); ++i) {
    if (gt_role[i] == TrackRole::Static) d.push_back(gt_poses[0].transform(gt_world[static_cast<std::size_t>(i) * T]).z());
  }
  if (d.empty()) return 1.0;
  const auto mid = d.begin() + d.size() / 2;
  std::nth_element(d.begin(), mid, d.end());
  if (d.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(d.begin(), mid));
}

SynthScene generate(const SynthConfig& cfg) {
  int total = cfg.static_points;
  for (const auto& o : cfg.objects) total += o.points;
  if (total <= 0 || cfg.frames < 1) throw Error(ErrorCode::EmptyScene, "no points or frames");
  if (cfg.static_points > cfg.height * cfg.width) {
    throw Error(ErrorCode::InvalidConfig, "more static points than pixels");
  }

  const int T = cfg.frames, H = cfg.height, W = cfg.width;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  CameraModel cam;
  cam.fx = cam.fy = 0.9 * W;
  cam.cx = 0.5 * (W - 1);
  cam.cy = 0.5 * (H - 1);
  const std::vector<PoseSE3> poses = camera_path(cfg, rng);

  // World positions for every candidate point and frame.
  std::vector<std::vector<Vec3>> world;
  std::vector<TrackRole> role;
  std::vector<int> object_id;

  std::vector<int> pixels(static_cast<std::size_t>(H) * W);
  std::iota(pixels.begin(), pixels.end(), 0);
  for (int k = 0; k < cfg.static_points; ++k) {
    std::uniform_int_distribution<int> pick(k, H * W - 1);
    std::swap(pixels[k], pixels[pick(rng)]);
    const double u = pixels[k] % W + (unit(rng) - 0.5) * 0.6;
    const double v = pixels[k] / W + (unit(rng) - 0.5) * 0.6;
    const Vec3 X = unproject_camera(cam, Vec2(u, v), surface_depth(cfg, u, v));
    world.emplace_back(T, X);
    role.push_back(TrackRole::Static);
    object_id.push_back(-1);
  }
  for (std::size_t o = 0; o < cfg.objects.size(); ++o) {
    const SynthObject& obj = cfg.objects[o];
    const Vec3 c0 = unproject_camera(cam, Vec2(obj.u * (W - 1), obj.v * (H - 1)), obj.depth);
    for (int k = 0; k < obj.points; ++k) {
      Vec3 local;
      if (obj.flat) {
        const double r = obj.radius * std::sqrt(unit(rng)), a = 2.0 * kPi * unit(rng);
        local = Vec3(r * std::cos(a), r * std::sin(a), 0.0);
      } else {
        Vec3 dir;
        do {
          dir = Vec3(unit(rng), unit(rng), unit(rng)) * 2.0 - Vec3::Ones();
        } while (dir.squaredNorm() > 1.0 || dir.squaredNorm() < 1e-6);
        local = obj.radius * std::cbrt(unit(rng)) * dir.normalized();
      }
      const double phase = 2.0 * kPi * unit(rng);
      std::vector<Vec3> traj(T);
      for (int t = 0; t < T; ++t) {
        Vec3 l = local;
        if (obj.kind == MotionKind::Deforming) l *= 1.0 + 0.15 * std::sin(0.4 * t + phase);
        traj[t] = c0 + obj.velocity * t + rot_y(obj.spin * t) * l;
      }
      world.push_back(std::move(traj));
      role.push_back(obj.hidden ? TrackRole::DynamicBackground : TrackRole::DynamicForeground);
      object_id.push_back(static_cast<int>(o));
    }
  }

  // Render: z-buffer winners on rounded pixels decide visibility.
  const int P = static_cast<int>(world.size());
  std::vector<Vec2> proj(static_cast<std::size_t>(P) * T);
  std::vector<double> zc(static_cast<std::size_t>(P) * T);
  std::vector<std::uint8_t> vis(static_cast<std::size_t>(P) * T, 0);
  DepthStack depth(T, H, W, 0.0f);
  DepthStack gt_depth(T, H, W, 0.0f);
  MaskStack masks(T, H, W, 0);
  for (int t = 0; t < T; ++t) {
    std::vector<int> owner(static_cast<std::size_t>(H) * W, -1);
    std::vector<double> zbuf(static_cast<std::size_t>(H) * W, INFINITY);
    for (int k = 0; k < P; ++k) {
      const std::size_t idx = static_cast<std::size_t>(k) * T + t;
      const Vec3 xc = poses[t].transform(world[k][t]);
      zc[idx] = xc.z();
      if (xc.z() <= kMinDepth) {
        proj[idx] = t > 0 ? proj[idx - 1] : Vec2(cam.cx, cam.cy);
        continue;
      }
      proj[idx] = project_camera_point(cam, xc);
      const Vec2& p = proj[idx];
      if (!(p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= W - 1 && p.y() <= H - 1)) continue;
      const int pix = static_cast<int>(std::nearbyint(p.y())) * W + static_cast<int>(std::nearbyint(p.x()));
      if (xc.z() < zbuf[pix]) {
        zbuf[pix] = xc.z();
        owner[pix] = k;
      }
    }
    for (int pix = 0; pix < H * W; ++pix) {
      if (owner[pix] >= 0) vis[static_cast<std::size_t>(owner[pix]) * T + t] = 1;
    }
    const auto filled = nearest_fill(owner, H, W);
    for (int pix = 0; pix < H * W; ++pix) {
      const int k = filled[pix];
      if (k < 0) continue;
      const float z = static_cast<float>(zc[static_cast<std::size_t>(k) * T + t]);
      depth.values[static_cast<std::size_t>(t) * H * W + pix] = z;
      gt_depth.values[static_cast<std::size_t>(t) * H * W + pix] = z;
      masks.values[static_cast<std::size_t>(t) * H * W + pix] =
          role[k] == TrackRole::DynamicForeground ? 1 : 0;
    }
  }

  // Keep points seen at least once.
  std::vector<int> keep;
  for (int k = 0; k < P; ++k) {
    for (int t = 0; t < T; ++t) {
      if (vis[static_cast<std::size_t>(k) * T + t]) {
        keep.push_back(k);
        break;
      }
    }
  }
  if (keep.empty()) throw Error(ErrorCode::EmptyScene, "no point is ever visible");

  SynthScene s;
  const int N = static_cast<int>(keep.size());
  s.gt_poses = poses;
  s.gt_depth = std::move(gt_depth);
  SceneBundle& sc = s.scene;
  sc.height = H;
  sc.width = W;
  sc.camera = cam;
  sc.depth = std::move(depth);
  sc.masks = std::move(masks);
  sc.tracks = TrackSet2D(N, T);
  sc.track_depth = TrackDepths(N, T);
  s.gt_world.resize(static_cast<std::size_t>(N) * T);
  for (int i = 0; i < N; ++i) {
    const int k = keep[i];
    for (int t = 0; t < T; ++t) {
      const std::size_t src = static_cast<std::size_t>(k) * T + t;
      const std::size_t dst = sc.tracks.index(i, t);
      sc.tracks.positions[dst] = proj[src];
      sc.tracks.visible[dst] = vis[src];
      sc.track_depth.values[dst] = vis[src] ? zc[src] : 0.0;
      s.gt_world[dst] = world[k][t];
    }
    s.gt_role.push_back(role[k]);
    s.object_id.push_back(object_id[k]);
  }
  sc.tracks.infer_spawn_frames();
  for (int i = 0; i < N; ++i) {
    sc.tracks.role[i] = s.gt_role[i] == TrackRole::DynamicForeground ? TrackRole::DynamicForeground
                                                                      : TrackRole::Static;
  }
  s.gt_visible = sc.tracks.visible;
  s.outlier.assign(N, 0);

  const bool noisy = cfg.noise.track_sigma > 0.0 || cfg.noise.depth_sigma > 0.0 ||
                     cfg.noise.outlier_fraction > 0.0;
  if (noisy) perturb(s, cfg.noise, cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  return s;
}

void perturb(SynthScene& s, const SynthNoise& noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SceneBundle& sc = s.scene;
  TrackSet2D& tr = sc.tracks;
  const int N = tr.num_tracks, T = tr.num_frames, H = sc.height, W = sc.width;
  const double diag = sc.image_diagonal();

  const int outliers = static_cast<int>(std::lround(noise.outlier_fraction * N));
  if (outliers > 0) {
    std::vector<int> ids(N);
    std::iota(ids.begin(), ids.end(), 0);
    for (int k = 0; k < outliers; ++k) {
      std::uniform_int_distribution<int> pick(k, N - 1);
      std::swap(ids[k], ids[pick(rng)]);
    }
    std::sort(ids.begin(), ids.begin() + outliers);
    const double step = 0.1 * diag;
    for (int k = 0; k < outliers; ++k) {
      const int i = ids[k];
      s.outlier[i] = 1;
      Vec2 p = tr.pos(i, tr.spawn_frame[i]);
      for (int t = tr.spawn_frame[i] + 1; t < T; ++t) {
        p += step * Vec2(gauss(rng), gauss(rng));
        p.x() = std::clamp(p.x(), 0.0, W - 1.0);
        p.y() = std::clamp(p.y(), 0.0, H - 1.0);
        tr.pos(i, t) = p;
        if (tr.vis(i, t)) sc.track_depth.at(i, t) = sample_bilinear(sc.depth.frame(t), H, W, p.x(), p.y());
      }
    }
  }

  if (noise.track_sigma > 0.0) {
    for (std::size_t k = 0; k < tr.positions.size(); ++k) {
      if (!tr.visible[k]) continue;
      Vec2& p = tr.positions[k];
      p += noise.track_sigma * Vec2(gauss(rng), gauss(rng));
      p.x() = std::clamp(p.x(), -0.5, W - 0.5);
      p.y() = std::clamp(p.y(), -0.5, H - 0.5);
    }
  }

  if (noise.depth_sigma > 0.0) {
    for (auto& d : sc.track_depth.values) {
      if (d > 0.0) d *= std::max(0.05, 1.0 + noise.depth_sigma * gauss(rng));
    }
    for (auto& d : sc.depth.values) {
      d = static_cast<float>(d * std::max(0.05, 1.0 + noise.depth_sigma * gauss(rng)));
    }
  }
}

void write_synth(const fs::path& dir, const SynthScene& s) {
  save_scene(dir, s.scene);
  const int N = s.num_tracks();
  const int T = s.scene.tracks.num_frames;
  write_poses_json(dir / "gt_poses.json", s.gt_poses);
  write_tensor(dir / "gt_traj.wt", trajectories_to_tensor(s.gt_world, N, T));
  write_tensor(dir / "gt_visibility.wt", Tensor::from_u8({N, T}, s.gt_visible));
  write_tensor(dir / "gt_depth.wt", Tensor::from_f32({T, s.scene.height, s.scene.width}, s.gt_depth.values));
  json roles = json::array();
  for (auto r : s.gt_role) roles.push_back(static_cast<int>(r));
  json info = {{"roles", roles},
               {"object_id", s.object_id},
               {"outlier", s.outlier},
               {"scene_scale", s.scene_scale()}};
  write_text_atomic(dir / "gt_info.json", info.dump(2) + "\n");
}

}  // namespace wtrk
