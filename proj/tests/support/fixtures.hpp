#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>

#include "wtrk/pipeline.hpp"
#include "wtrk/synth.hpp"

namespace fixture {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Small orbit scene: 8 frames, 48 x 64, static points only.
wtrk::SynthConfig small_static(std::uint64_t seed = 0, int points = 200);

// small_static plus one rigid foreground mover.
wtrk::SynthConfig small_dynamic(std::uint64_t seed = 0);

wtrk::GroundTruth ground_truth(const wtrk::SynthScene& s);
wtrk::Estimate estimate(const wtrk::PipelineResult& r);

// Ground-truth world positions of the given tracks, [k * T + t].
std::vector<wtrk::Vec3> gt_world(const wtrk::SynthScene& s, const std::vector<int>& ids);

wtrk::PoseSE3 random_pose(std::mt19937_64& rng, double angle = 0.5, double shift = 1.0);

// Bytes of every regular file in `dir`, keyed by file name.
std::map<std::string, std::string> snapshot(const std::filesystem::path& dir);

}  // namespace fixture
