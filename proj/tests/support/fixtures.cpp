#include "fixtures.hpp"

#include <atomic>
#include <fstream>
#include <sstream>

#include <unistd.h>

namespace fs = std::filesystem;

namespace fixture {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("wtrk_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

wtrk::SynthConfig small_static(std::uint64_t seed, int points) {
  wtrk::SynthConfig c;
  c.frames = 8;
  c.height = 48;
  c.width = 64;
  c.static_points = points;
  c.seed = seed;
  return c;
}

wtrk::SynthConfig small_dynamic(std::uint64_t seed) {
  wtrk::SynthConfig c = small_static(seed);
  wtrk::SynthObject o;
  o.points = 30;
  o.u = 0.35;
  o.depth = 3.0;
  c.objects.push_back(o);
  return c;
}

wtrk::GroundTruth ground_truth(const wtrk::SynthScene& s) {
  wtrk::GroundTruth gt;
  gt.camera = s.scene.camera;
  gt.height = s.scene.height;
  gt.width = s.scene.width;
  gt.observed = s.scene.tracks;
  gt.poses = s.gt_poses;
  gt.world = s.gt_world;
  gt.visible = s.gt_visible;
  gt.depth = s.gt_depth;
  return gt;
}

wtrk::Estimate estimate(const wtrk::PipelineResult& r) {
  wtrk::Estimate e;
  e.poses = r.poses;
  e.static_ids = r.static_ids;
  e.static_world = r.static_world;
  e.dynamic_ids = r.dynamic_ids;
  e.dynamic_world = r.dynamic_world;
  return e;
}

std::vector<wtrk::Vec3> gt_world(const wtrk::SynthScene& s, const std::vector<int>& ids) {
  const int T = s.scene.tracks.num_frames;
  std::vector<wtrk::Vec3> out;
  out.reserve(ids.size() * T);
  for (int i : ids) {
    for (int t = 0; t < T; ++t) out.push_back(s.gt_world[static_cast<std::size_t>(i) * T + t]);
  }
  return out;
}

wtrk::PoseSE3 random_pose(std::mt19937_64& rng, double angle, double shift) {
  std::normal_distribution<double> g(0.0, 1.0);
  wtrk::Vec6 xi;
  for (int k = 0; k < 3; ++k) xi(k) = angle * g(rng);
  for (int k = 3; k < 6; ++k) xi(k) = shift * g(rng);
  return wtrk::se3_exp(xi);
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[e.path().filename().string()] = ss.str();
  }
  return out;
}

}  // namespace fixture
