#include "wtrk/trackset.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "wtrk/errors.hpp"

namespace wtrk {

double sample_bilinear(std::span<const float> frame, int height, int width, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  auto at = [&](int yy, int xx) {
    return static_cast<double>(frame[static_cast<std::size_t>(yy) * width + xx]);
  };
  return (1.0 - ay) * ((1.0 - ax) * at(y0, x0) + ax * at(y0, x1)) +
         ay * ((1.0 - ax) * at(y1, x0) + ax * at(y1, x1));
}

TrackSet2D::TrackSet2D(int n, int t)
    : num_tracks(n),
      num_frames(t),
      positions(static_cast<std::size_t>(n) * t, Vec2::Zero()),
      visible(static_cast<std::size_t>(n) * t, 0),
      spawn_frame(n, 0),
      role(n, TrackRole::Static) {}

int TrackSet2D::visible_count(int i) const {
  int c = 0;
  for (int t = 0; t < num_frames; ++t) c += vis(i, t) ? 1 : 0;
  return c;
}

void TrackSet2D::infer_spawn_frames() {
  for (int i = 0; i < num_tracks; ++i) {
    spawn_frame[i] = 0;
    for (int t = 0; t < num_frames; ++t) {
      if (vis(i, t)) {
        spawn_frame[i] = t;
        break;
      }
    }
  }
}

TrackSet2D TrackSet2D::subset(std::span<const int> ids) const {
  TrackSet2D out(static_cast<int>(ids.size()), num_frames);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const int i = ids[k];
    for (int t = 0; t < num_frames; ++t) {
      out.positions[out.index(static_cast<int>(k), t)] = pos(i, t);
      out.visible[out.index(static_cast<int>(k), t)] = visible[index(i, t)];
    }
    out.spawn_frame[k] = spawn_frame[i];
    out.role[k] = role[i];
  }
  return out;
}

TrackDepths TrackDepths::subset(std::span<const int> ids) const {
  TrackDepths out(static_cast<int>(ids.size()), num_frames);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    for (int t = 0; t < num_frames; ++t) out.at(static_cast<int>(k), t) = at(ids[k], t);
  }
  return out;
}

TrackDepths sample_track_depths(const TrackSet2D& tracks, const DepthStack& depth) {
  TrackDepths out(tracks.num_tracks, tracks.num_frames);
  for (int i = 0; i < tracks.num_tracks; ++i) {
    for (int t = 0; t < tracks.num_frames; ++t) {
      if (!tracks.vis(i, t)) continue;
      const Vec2& p = tracks.pos(i, t);
      out.at(i, t) = sample_bilinear(depth.frame(t), depth.height, depth.width, p.x(), p.y());
    }
  }
  return out;
}

namespace {

struct GridLayout {
  bool regular = false;
  int cols = 0;
  int rows = 0;
  Vec2 origin = Vec2::Zero();
};

GridLayout detect_grid(const TrackSet2D& sparse, int spawn, int height, int width, int stride) {
  GridLayout g;
  if (stride < 1) return g;
  g.cols = width / stride;
  g.rows = height / stride;
  if (g.cols * g.rows != sparse.num_tracks || g.cols == 0 || g.rows == 0) return g;
  g.origin = sparse.pos(0, spawn);
  for (int j = 0; j < sparse.num_tracks; ++j) {
    const Vec2 expect = g.origin + Vec2((j % g.cols) * stride, (j / g.cols) * stride);
    if ((sparse.pos(j, spawn) - expect).norm() > 1e-9) return g;
  }
  g.regular = true;
  return g;
}

// Least-squares 2x2 linear part of the map anchor(spawn) -> anchor(t).
Eigen::Matrix2d fit_local_linear(const TrackSet2D& sparse, std::span<const int> ids, int spawn,
                                 int t) {
  if (ids.size() < 3) return Eigen::Matrix2d::Identity();
  Vec2 mp = Vec2::Zero(), mq = Vec2::Zero();
  for (int j : ids) {
    mp += sparse.pos(j, spawn);
    mq += sparse.pos(j, t);
  }
  mp /= static_cast<double>(ids.size());
  mq /= static_cast<double>(ids.size());
  Eigen::Matrix2d spp = Eigen::Matrix2d::Zero(), sqp = Eigen::Matrix2d::Zero();
  for (int j : ids) {
    const Vec2 a = sparse.pos(j, spawn) - mp;
    const Vec2 b = sparse.pos(j, t) - mq;
    spp += a * a.transpose();
    sqp += b * a.transpose();
  }
  if (std::abs(spp.determinant()) < 1e-12 * std::max(1.0, spp.squaredNorm())) {
    return Eigen::Matrix2d::Identity();
  }
  return sqp * spp.inverse();
}

}  // namespace

DenseTracks upsample_tracks(const TrackSet2D& sparse, int spawn, int height, int width,
                            int stride, int k) {
  if (sparse.num_tracks == 0) throw Error(ErrorCode::EmptySparseSet, "no sparse tracks");
  const int T = sparse.num_frames;
  k = std::clamp(k, 1, sparse.num_tracks);
  const GridLayout grid = detect_grid(sparse, spawn, height, width, stride);

  DenseTracks out;
  out.tracks = TrackSet2D(height * width, T);
  out.weights.row_begin.push_back(0);

  std::vector<int> fit_ids;
  std::vector<std::pair<int, double>> entries;
  std::vector<std::pair<double, int>> by_dist(sparse.num_tracks);

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Vec2 q(x, y);
      entries.clear();
      fit_ids.clear();

      if (grid.regular) {
        auto axis = [&](double coord, int n, int& i0, double& a) {
          double f = std::clamp(coord / stride, 0.0, static_cast<double>(n - 1));
          i0 = n >= 2 ? std::min(static_cast<int>(std::floor(f)), n - 2) : 0;
          a = n >= 2 ? f - i0 : 0.0;
        };
        int gx = 0, gy = 0;
        double ax = 0.0, ay = 0.0;
        axis(q.x() - grid.origin.x(), grid.cols, gx, ax);
        axis(q.y() - grid.origin.y(), grid.rows, gy, ay);
        const int gx1 = std::min(gx + 1, grid.cols - 1);
        const int gy1 = std::min(gy + 1, grid.rows - 1);
        const int corner[4] = {gy * grid.cols + gx, gy * grid.cols + gx1, gy1 * grid.cols + gx,
                               gy1 * grid.cols + gx1};
        const double w[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
        for (int c = 0; c < 4; ++c) {
          if (std::find(fit_ids.begin(), fit_ids.end(), corner[c]) == fit_ids.end()) {
            fit_ids.push_back(corner[c]);
          }
          if (w[c] <= 0.0) continue;
          auto it = std::find_if(entries.begin(), entries.end(),
                                 [&](const auto& e) { return e.first == corner[c]; });
          if (it == entries.end()) {
            entries.emplace_back(corner[c], w[c]);
          } else {
            it->second += w[c];
          }
        }
      } else {
        for (int j = 0; j < sparse.num_tracks; ++j) {
          by_dist[j] = {(sparse.pos(j, spawn) - q).norm(), j};
        }
        std::partial_sort(by_dist.begin(), by_dist.begin() + k, by_dist.end());
        if (by_dist[0].first == 0.0) {
          entries.emplace_back(by_dist[0].second, 1.0);
        } else {
          double total = 0.0;
          for (int n = 0; n < k; ++n) total += 1.0 / by_dist[n].first;
          for (int n = 0; n < k; ++n) {
            entries.emplace_back(by_dist[n].second, (1.0 / by_dist[n].first) / total);
          }
        }
        for (int n = 0; n < k; ++n) fit_ids.push_back(by_dist[n].second);
      }

      Vec2 centroid = Vec2::Zero();
      for (const auto& [j, w] : entries) centroid += w * sparse.pos(j, spawn);
      const Vec2 residual = q - centroid;
      const bool needs_transport = residual.norm() > 1e-12;

      const int row = y * width + x;
      for (int t = 0; t < T; ++t) {
        Vec2 p = Vec2::Zero();
        bool vis = true;
        for (const auto& [j, w] : entries) {
          p += w * sparse.pos(j, t);
          vis = vis && sparse.vis(j, t);
        }
        if (needs_transport) {
          p += (t == spawn ? Eigen::Matrix2d::Identity()
                           : fit_local_linear(sparse, fit_ids, spawn, t)) * residual;
        }
        out.tracks.pos(row, t) = p;
        out.tracks.visible[out.tracks.index(row, t)] = vis ? 1 : 0;
      }
      out.tracks.spawn_frame[row] = spawn;
      for (const auto& [j, w] : entries) {
        out.weights.source.push_back(j);
        out.weights.weight.push_back(w);
      }
      out.weights.row_begin.push_back(static_cast<int>(out.weights.source.size()));
    }
  }
  return out;
}

std::vector<std::uint8_t> spawn_new_tracks(int t, const TrackSet2D& existing, int height,
                                           int width, double radius) {
  std::vector<std::uint8_t> free_px(static_cast<std::size_t>(height) * width, 1);
  const double r2 = radius * radius;
  for (int i = 0; i < existing.num_tracks; ++i) {
    if (!existing.vis(i, t)) continue;
    const Vec2& p = existing.pos(i, t);
    const int x0 = std::max(0, static_cast<int>(std::floor(p.x() - radius)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(p.x() + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(p.y() - radius)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(p.y() + radius)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - p.x(), dy = y - p.y();
        if (dx * dx + dy * dy <= r2) free_px[static_cast<std::size_t>(y) * width + x] = 0;
      }
    }
  }
  return free_px;
}

std::vector<std::uint8_t> filter_components(std::span<const std::uint8_t> pixels, int height,
                                            int width, int min_size) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  std::vector<std::uint8_t> kept(n, 0);
  std::vector<int> label(n, -1);
  std::vector<int> members;
  std::deque<int> queue;
  int next = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (!pixels[s] || label[s] >= 0) continue;
    members.clear();
    queue.push_back(static_cast<int>(s));
    label[s] = next;
    while (!queue.empty()) {
      const int p = queue.front();
      queue.pop_front();
      members.push_back(p);
      const int x = p % width, y = p / width;
      const int nbr[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& nb : nbr) {
        if (nb[0] < 0 || nb[0] >= width || nb[1] < 0 || nb[1] >= height) continue;
        const int q = nb[1] * width + nb[0];
        if (pixels[q] && label[q] < 0) {
          label[q] = next;
          queue.push_back(q);
        }
      }
    }
    if (static_cast<int>(members.size()) > min_size) {
      for (int p : members) kept[p] = 1;
    }
    ++next;
  }
  return kept;
}

namespace {

int nearest_index(double v, int n) {
  return std::clamp(static_cast<int>(std::lround(v)), 0, n - 1);
}

}  // namespace

std::vector<std::uint8_t> eliminate_redundant_tracks(const TrackSet2D& tracks, int height,
                                                     int width, double radius, int min_size) {
  std::vector<std::uint8_t> keep(tracks.num_tracks, 1);
  for (int t = 1; t < tracks.num_frames; ++t) {
    std::vector<int> earlier;
    bool any_new = false;
    for (int i = 0; i < tracks.num_tracks; ++i) {
      if (!keep[i]) continue;
      if (tracks.spawn_frame[i] < t) earlier.push_back(i);
      if (tracks.spawn_frame[i] == t) any_new = true;
    }
    if (!any_new) continue;
    const TrackSet2D existing = tracks.subset(earlier);
    const auto candidates = spawn_new_tracks(t, existing, height, width, radius);
    const auto retained = filter_components(candidates, height, width, min_size);
    for (int i = 0; i < tracks.num_tracks; ++i) {
      if (tracks.spawn_frame[i] != t) continue;
      const Vec2& p = tracks.pos(i, t);
      const std::size_t px = static_cast<std::size_t>(nearest_index(p.y(), height)) * width +
                             nearest_index(p.x(), width);
      keep[i] = retained[px];
    }
  }
  return keep;
}

MaskSplit split_by_mask(const TrackSet2D& tracks, const MaskStack& masks) {
  MaskSplit out;
  for (int i = 0; i < tracks.num_tracks; ++i) {
    const int t = tracks.spawn_frame[i];
    const Vec2& p = tracks.pos(i, t);
    const bool dyn =
        masks.at(t, nearest_index(p.y(), masks.height), nearest_index(p.x(), masks.width)) != 0;
    (dyn ? out.dynamic_ids : out.static_ids).push_back(i);
  }
  out.static_tracks = tracks.subset(out.static_ids);
  out.dynamic_tracks = tracks.subset(out.dynamic_ids);
  for (auto& r : out.static_tracks.role) r = TrackRole::Static;
  for (auto& r : out.dynamic_tracks.role) r = TrackRole::DynamicForeground;
  return out;
}

}  // namespace wtrk
