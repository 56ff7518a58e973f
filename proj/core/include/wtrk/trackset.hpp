#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wtrk/geometry.hpp"
#include "wtrk/image.hpp"

namespace wtrk {

enum class TrackRole : std::uint8_t { Static = 0, DynamicForeground = 1, DynamicBackground = 2 };

/// N 2D trajectories over T frames. Positions are pixel coordinates with the
/// pixel centre at integer values.
struct TrackSet2D {
  int num_tracks = 0;
  int num_frames = 0;
  std::vector<Vec2> positions;       // [i * T + t]
  std::vector<std::uint8_t> visible; // [i * T + t]
  std::vector<int> spawn_frame;
  std::vector<TrackRole> role;

  TrackSet2D() = default;
  TrackSet2D(int n, int t);

  std::size_t index(int i, int t) const { return static_cast<std::size_t>(i) * num_frames + t; }
  Vec2& pos(int i, int t) { return positions[index(i, t)]; }
  const Vec2& pos(int i, int t) const { return positions[index(i, t)]; }
  bool vis(int i, int t) const { return visible[index(i, t)] != 0; }

  int visible_count(int i) const;
  /// Sets every spawn frame to the first visible frame (or 0 when never visible).
  void infer_spawn_frames();
  TrackSet2D subset(std::span<const int> ids) const;
};

/// Per-track depth samples D(i, t), same indexing as TrackSet2D.
struct TrackDepths {
  int num_tracks = 0;
  int num_frames = 0;
  std::vector<double> values;

  TrackDepths() = default;
  TrackDepths(int n, int t) : num_tracks(n), num_frames(t), values(static_cast<std::size_t>(n) * t, 0.0) {}

  double& at(int i, int t) { return values[static_cast<std::size_t>(i) * num_frames + t]; }
  double at(int i, int t) const { return values[static_cast<std::size_t>(i) * num_frames + t]; }
  TrackDepths subset(std::span<const int> ids) const;
};

/// Bilinear depth lookup at every visible track position; invisible entries are 0.
TrackDepths sample_track_depths(const TrackSet2D& tracks, const DepthStack& depth);

/// Sparse-to-dense interpolation weights, CSR layout: pixel p uses entries
/// [row_begin[p], row_begin[p + 1]).
struct UpsampleWeights {
  std::vector<int> row_begin;
  std::vector<int> source;
  std::vector<double> weight;

  std::size_t num_rows() const { return row_begin.empty() ? 0 : row_begin.size() - 1; }
};

struct DenseTracks {
  TrackSet2D tracks;  // H * W tracks, pixel (x, y) at index y * W + x
  UpsampleWeights weights;
};

/// Lifts tracks seeded on a sparse grid of `spawn` to one track per pixel.
///
/// Each dense trajectory is a convex combination of anchor trajectories plus
/// the spawn-frame displacement to the pixel carried by a local affine fit of
/// the anchors' motion. When the anchors form a regular grid the weights are
/// bilinear over the enclosing (clamped) cell; otherwise inverse-distance
/// weights over the `k` nearest anchors are used. Exact for affine motion, and
/// for bilinear motion inside the grid.
DenseTracks upsample_tracks(const TrackSet2D& sparse, int spawn, int height, int width,
                            int stride, int k);

/// Pixels of frame `t` farther than `radius` from every track of `existing`
/// visible at `t`. Returned as an H x W 0/1 mask.
std::vector<std::uint8_t> spawn_new_tracks(int t, const TrackSet2D& existing, int height,
                                           int width, double radius);

/// Keeps the 4-connected components with strictly more than `min_size` pixels.
std::vector<std::uint8_t> filter_components(std::span<const std::uint8_t> pixels, int height,
                                            int width, int min_size);

/// Drops tracks spawned after frame 0 whose spawn pixel was already covered by
/// an earlier visible track, or falls in a small new region. Returns keep flags.
std::vector<std::uint8_t> eliminate_redundant_tracks(const TrackSet2D& tracks, int height,
                                                     int width, double radius, int min_size);

struct MaskSplit {
  std::vector<int> static_ids;
  std::vector<int> dynamic_ids;
  TrackSet2D static_tracks;
  TrackSet2D dynamic_tracks;
};

/// A track is dynamic foreground iff the mask at its spawn frame and nearest
/// spawn pixel is set.
MaskSplit split_by_mask(const TrackSet2D& tracks, const MaskStack& masks);

}  // namespace wtrk
