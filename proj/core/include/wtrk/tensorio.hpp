#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wtrk/config.hpp"
#include "wtrk/geometry.hpp"
#include "wtrk/image.hpp"
#include "wtrk/trackset.hpp"

namespace wtrk {

enum class DType : std::uint32_t { F32 = 0, U8 = 1 };

std::size_t dtype_size(DType d);

/// Dense row-major tensor with a little-endian byte payload. See
/// docs/tensor_format.md for the on-disk layout.
struct Tensor {
  DType dtype = DType::F32;
  std::vector<std::int64_t> dims;
  std::vector<std::uint8_t> payload;

  std::size_t element_count() const;
  bool operator==(const Tensor&) const = default;

  static Tensor from_f32(std::vector<std::int64_t> dims, std::span<const float> values);
  static Tensor from_u8(std::vector<std::int64_t> dims, std::span<const std::uint8_t> values);
  std::vector<float> to_f32() const;
  std::vector<std::uint8_t> to_u8() const;
};

inline constexpr char kTensorMagic[8] = {'W', 'T', 'R', 'K', 'T', 'N', 'S', 'R'};
inline constexpr int kMaxRank = 4;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
/// Throws BadMagic, UnsupportedDtype or DimMismatch.
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

/// Everything the pipeline consumes for one video.
struct SceneBundle {
  int height = 0;
  int width = 0;
  TrackSet2D tracks;
  DepthStack depth;
  MaskStack masks;
  CameraModel camera;
  PipelineConfig config;
  /// Per-track depths. Loaded from track_depth.wt when present, otherwise
  /// bilinear samples of `depth` at the track positions.
  TrackDepths track_depth;

  int num_frames() const { return tracks.num_frames; }
  double image_diagonal() const;
};

/// Reads tracks.wt, visibility.wt, depth.wt, masks.wt, intrinsics.wt,
/// config.json and the optional track_depth.wt from `dir`.
SceneBundle load_scene(const std::filesystem::path& dir);
void save_scene(const std::filesystem::path& dir, const SceneBundle& scene,
                bool write_track_depth = true);

/// poses.json: {"poses": [[12 numbers, row-major 3x4 world->camera], ...]}
void write_poses_json(const std::filesystem::path& path, std::span<const PoseSE3> poses);
std::vector<PoseSE3> read_poses_json(const std::filesystem::path& path);

/// N x T x 3 f32 world trajectories.
Tensor trajectories_to_tensor(std::span<const Vec3> points, int n, int t);
std::vector<Vec3> tensor_to_trajectories(const Tensor& tensor, int& n, int& t);

/// Writes through a temporary sibling and renames.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace wtrk
