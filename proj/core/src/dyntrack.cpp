#include "wtrk/dyntrack.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <tuple>

#include "wtrk/errors.hpp"
#include "wtrk/observation.hpp"
#include "wtrk/parallel.hpp"
#include "wtrk/solver.hpp"

namespace wtrk {

namespace {

// Indices of the k smallest (key, index) pairs, ascending.
template <typename DistFn>
std::vector<int> k_smallest(int n, int k, DistFn&& dist) {
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry> heap;  // max-heap on (distance, index)
  for (int j = 0; j < n; ++j) {
    const double d = dist(j);
    if (std::isnan(d)) continue;
    if (static_cast<int>(heap.size()) < k) {
      heap.emplace(d, j);
    } else if (Entry(d, j) < heap.top()) {
      heap.pop();
      heap.emplace(d, j);
    }
  }
  std::vector<int> out(heap.size());
  for (int p = static_cast<int>(out.size()) - 1; p >= 0; --p) {
    out[p] = heap.top().second;
    heap.pop();
  }
  return out;
}

}  // namespace

std::vector<std::vector<int>> build_knn(std::span<const Vec3> points, int r) {
  const int n = static_cast<int>(points.size());
  const int k = std::max(0, std::min(r, n - 1));
  std::vector<std::vector<int>> out(n);
  for (int i = 0; i < n; ++i) {
    out[i] = k_smallest(n, k, [&](int j) {
      return j == i ? NAN : (points[j] - points[i]).squaredNorm();
    });
  }
  return out;
}

DynamicTrackSet init_dynamic(const TrackSet2D& tracks, const TrackDepths& depths,
                             std::span<const PoseSE3> poses, const CameraModel& cam, int r) {
  const int N = tracks.num_tracks;
  const int T = tracks.num_frames;
  DynamicTrackSet dyn;
  dyn.num_tracks = N;
  dyn.num_frames = T;
  dyn.positions.assign(static_cast<std::size_t>(N) * T, Vec3::Zero());
  dyn.visible = tracks.visible;

  std::vector<Vec3> seeds(N);
  for (int i = 0; i < N; ++i) {
    std::vector<int> known;
    for (int t = 0; t < T; ++t) {
      if (tracks.vis(i, t) && depths.at(i, t) > 0.0) {
        dyn.at(i, t) = unproject(poses[t], cam, tracks.pos(i, t), depths.at(i, t));
        known.push_back(t);
      }
    }
    if (known.empty()) throw Error(ErrorCode::NoVisibleFrames, "dynamic track " + std::to_string(i));
    for (int t = 0; t < known.front(); ++t) dyn.at(i, t) = dyn.at(i, known.front());
    for (int t = known.back() + 1; t < T; ++t) dyn.at(i, t) = dyn.at(i, known.back());
    for (std::size_t k = 0; k + 1 < known.size(); ++k) {
      const int a = known[k], b = known[k + 1];
      for (int t = a + 1; t < b; ++t) {
        const double s = static_cast<double>(t - a) / (b - a);
        dyn.at(i, t) = (1.0 - s) * dyn.at(i, a) + s * dyn.at(i, b);
      }
    }
    const int spawn = std::clamp(tracks.spawn_frame.empty() ? known.front() : tracks.spawn_frame[i], 0, T - 1);
    seeds[i] = dyn.at(i, spawn);
  }
  dyn.knn = build_knn(seeds, r);
  return dyn;
}

double loss_arap(const DynamicTrackSet& dyn, std::span<Vec3> grad) {
  const bool want = !grad.empty();
  double loss = 0.0;
  for (int t = 1; t < dyn.num_frames; ++t) {
    for (int k = 0; k < dyn.num_tracks; ++k) {
      for (int j : dyn.knn[k]) {
        const Vec3 e = (dyn.at(k, t) - dyn.at(j, t)) - (dyn.at(k, t - 1) - dyn.at(j, t - 1));
        loss += e.squaredNorm();
        if (!want) continue;
        const Vec3 g = 2.0 * e;
        const int T = dyn.num_frames;
        grad[k * T + t] += g;
        grad[j * T + t] -= g;
        grad[k * T + t - 1] -= g;
        grad[j * T + t - 1] += g;
      }
    }
  }
  return loss;
}

double loss_ts(const DynamicTrackSet& dyn, std::span<Vec3> grad) {
  const bool want = !grad.empty();
  const int T = dyn.num_frames;
  double loss = 0.0;
  for (int k = 0; k < dyn.num_tracks; ++k) {
    for (int t = 1; t < T; ++t) {
      const Vec3 e = dyn.at(k, t) - dyn.at(k, t - 1);
      loss += e.squaredNorm();
      if (!want) continue;
      grad[k * T + t] += 2.0 * e;
      grad[k * T + t - 1] -= 2.0 * e;
    }
  }
  return loss;
}

double dynamic_objective(const DynamicTrackSet& dyn, std::span<const PoseSE3> poses,
                         const CameraModel& cam, const TrackSet2D& tracks,
                         const TrackDepths& depths, double image_diagonal,
                         const PipelineConfig& cfg, std::span<Vec3> grad) {
  if (grad.empty()) {
    return cfg.lambda_ba * reprojection_loss(dyn.positions, poses, cam, tracks, image_diagonal) +
           cfg.lambda_dc * depth_loss(dyn.positions, poses, tracks, depths) +
           cfg.lambda_arap * loss_arap(dyn) + cfg.lambda_ts * loss_ts(dyn);
  }
  std::vector<Vec3> part(grad.size());
  double total = 0.0;
  auto add = [&](double weight, double value) {
    total += weight * value;
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += weight * part[k];
  };
  std::fill(part.begin(), part.end(), Vec3::Zero());
  add(cfg.lambda_ba, reprojection_loss(dyn.positions, poses, cam, tracks, image_diagonal, {}, part));
  std::fill(part.begin(), part.end(), Vec3::Zero());
  add(cfg.lambda_dc, depth_loss(dyn.positions, poses, tracks, depths, {}, part));
  std::fill(part.begin(), part.end(), Vec3::Zero());
  add(cfg.lambda_arap, loss_arap(dyn, part));
  std::fill(part.begin(), part.end(), Vec3::Zero());
  add(cfg.lambda_ts, loss_ts(dyn, part));
  return total;
}

namespace {

// Connected groups of the undirected neighbour graph, each sorted ascending,
// ordered by their smallest member.
std::vector<std::vector<int>> graph_groups(const std::vector<std::vector<int>>& knn) {
  const int n = static_cast<int>(knn.size());
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n; ++i) {
    for (int j : knn[i]) {
      adj[i].push_back(j);
      adj[j].push_back(i);
    }
  }
  std::vector<int> label(n, -1);
  std::vector<std::vector<int>> groups;
  for (int s = 0; s < n; ++s) {
    if (label[s] >= 0) continue;
    const int g = static_cast<int>(groups.size());
    groups.emplace_back();
    std::vector<int> stack{s};
    label[s] = g;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      groups[g].push_back(v);
      for (int w : adj[v]) {
        if (label[w] < 0) {
          label[w] = g;
          stack.push_back(w);
        }
      }
    }
    std::sort(groups[g].begin(), groups[g].end());
  }
  return groups;
}

DynamicTrackSet subset_dynamic(const DynamicTrackSet& dyn, std::span<const int> ids) {
  DynamicTrackSet out;
  out.num_tracks = static_cast<int>(ids.size());
  out.num_frames = dyn.num_frames;
  std::map<int, int> local;
  for (std::size_t k = 0; k < ids.size(); ++k) local[ids[k]] = static_cast<int>(k);
  for (int i : ids) {
    for (int t = 0; t < dyn.num_frames; ++t) {
      out.positions.push_back(dyn.at(i, t));
      out.visible.push_back(dyn.visible[static_cast<std::size_t>(i) * dyn.num_frames + t]);
    }
    std::vector<int> nb;
    for (int j : dyn.knn[i]) nb.push_back(local.at(j));
    out.knn.push_back(std::move(nb));
  }
  return out;
}

}  // namespace

DynamicResult optimize_dynamic(const DynamicTrackSet& init, const TrackSet2D& tracks,
                               const TrackDepths& depths, std::span<const PoseSE3> poses,
                               const CameraModel& cam, double image_diagonal,
                               const PipelineConfig& cfg, const DynamicOptions& opts) {
  DynamicResult out;
  out.tracks = init;
  const int T = init.num_frames;
  const auto groups = graph_groups(init.knn);

  struct GroupResult {
    std::vector<Vec3> positions;
    double loss = 0.0;
    double initial_loss = 0.0;
    int iterations = 0;
  };
  std::vector<GroupResult> results(groups.size());
  const bool single = groups.size() == 1;

  parallel_for(groups.size(), opts.threads, [&](std::size_t g) {
    const auto& ids = groups[g];
    DynamicTrackSet sub = subset_dynamic(init, ids);
    const TrackSet2D sub_tracks = tracks.subset(ids);
    const TrackDepths sub_depths = depths.subset(ids);

    ParamBlocks x;
    x.points.resize(3 * sub.positions.size());
    for (std::size_t k = 0; k < sub.positions.size(); ++k) x.set_point(k, sub.positions[k]);
    x.point_frozen.assign(sub.positions.size(), 0);

    DynamicTrackSet scratch = sub;
    std::vector<Vec3> pg(sub.positions.size());
    const Objective f = [&](const ParamBlocks& p, Gradient* grad) {
      for (std::size_t k = 0; k < scratch.positions.size(); ++k) scratch.positions[k] = p.point(k);
      if (!grad) {
        return dynamic_objective(scratch, poses, cam, sub_tracks, sub_depths, image_diagonal, cfg);
      }
      std::fill(pg.begin(), pg.end(), Vec3::Zero());
      const double loss =
          dynamic_objective(scratch, poses, cam, sub_tracks, sub_depths, image_diagonal, cfg, pg);
      for (std::size_t k = 0; k < pg.size(); ++k) grad->add_point(k, pg[k]);
      return loss;
    };
    SolverOptions so = SolverOptions::from(cfg.solver);
    if (single) so.on_iteration = opts.on_iteration;
    SolverResult r = minimize(f, std::move(x), so);

    GroupResult& res = results[g];
    res.positions.resize(sub.positions.size());
    for (std::size_t k = 0; k < res.positions.size(); ++k) res.positions[k] = r.params.point(k);
    res.loss = r.loss;
    res.initial_loss = r.initial_loss;
    res.iterations = r.iterations;
  });

  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& ids = groups[g];
    for (std::size_t k = 0; k < ids.size(); ++k) {
      for (int t = 0; t < T; ++t) out.tracks.at(ids[k], t) = results[g].positions[k * T + t];
    }
    out.loss += results[g].loss;
    out.initial_loss += results[g].initial_loss;
    out.iterations = std::max(out.iterations, results[g].iterations);
  }
  if (!single && opts.on_iteration) opts.on_iteration(out.iterations, out.loss);
  return out;
}

DownsampleIndex downsample_static(const TrackSet2D& tracks, int varpi) {
  DownsampleIndex idx;
  idx.coarse_of.assign(tracks.num_tracks, -1);
  if (varpi <= 1) {
    // No downsampling; sub-pixel tracks sharing a rounded pixel are kept.
    idx.retained.resize(tracks.num_tracks);
    std::iota(idx.retained.begin(), idx.retained.end(), 0);
    idx.coarse_of = idx.retained;
    return idx;
  }
  std::map<std::tuple<int, long long, long long>, int> seen;
  for (int i = 0; i < tracks.num_tracks; ++i) {
    const int t = tracks.spawn_frame[i];
    const Vec2& p = tracks.pos(i, t);
    const auto key = std::make_tuple(t, static_cast<long long>(std::nearbyint(p.x() / varpi)),
                                     static_cast<long long>(std::nearbyint(p.y() / varpi)));
    if (seen.emplace(key, i).second) {
      idx.coarse_of[i] = static_cast<int>(idx.retained.size());
      idx.retained.push_back(i);
    }
  }
  return idx;
}

UpsampleWeights trajectory_upsample_weights(const TrackSet2D& tracks, const TrackDepths& depths,
                                            const CameraModel& cam, const DownsampleIndex& index,
                                            int r) {
  const int N = tracks.num_tracks;
  const int T = tracks.num_frames;
  // Coarse candidates per frame, lifted into that frame's camera.
  std::vector<std::vector<int>> cand_ids(T);
  std::vector<std::vector<Vec3>> cand_pts(T);
  for (std::size_t c = 0; c < index.retained.size(); ++c) {
    const int i = index.retained[c];
    for (int t = 0; t < T; ++t) {
      if (!tracks.vis(i, t) || !(depths.at(i, t) > 0.0)) continue;
      cand_ids[t].push_back(static_cast<int>(c));
      cand_pts[t].push_back(unproject_camera(cam, tracks.pos(i, t), depths.at(i, t)));
    }
  }

  UpsampleWeights w;
  w.row_begin.reserve(N + 1);
  w.row_begin.push_back(0);
  for (int i = 0; i < N; ++i) {
    if (index.coarse_of[i] >= 0) {
      w.source.push_back(index.coarse_of[i]);
      w.weight.push_back(1.0);
      w.row_begin.push_back(static_cast<int>(w.source.size()));
      continue;
    }
    const int t = tracks.spawn_frame[i];
    const auto& pts = cand_pts[t];
    if (pts.empty() || !(depths.at(i, t) > 0.0)) {
      throw Error(ErrorCode::NoVisibleCoarseNeighbors,
                  "track " + std::to_string(i) + " at frame " + std::to_string(t));
    }
    const Vec3 q = unproject_camera(cam, tracks.pos(i, t), depths.at(i, t));
    const auto nn = k_smallest(static_cast<int>(pts.size()), r + 1,
                               [&](int j) { return (pts[j] - q).norm(); });
    double total = 0.0;
    const std::size_t begin = w.weight.size();
    for (int j : nn) {
      const double wt = 1.0 / ((pts[j] - q).norm() + kIdwEpsilon);
      w.source.push_back(cand_ids[t][j]);
      w.weight.push_back(wt);
      total += wt;
    }
    for (std::size_t k = begin; k < w.weight.size(); ++k) w.weight[k] /= total;
    w.row_begin.push_back(static_cast<int>(w.source.size()));
  }
  return w;
}

std::vector<Vec3> apply_upsample(const UpsampleWeights& w, std::span<const Vec3> coarse) {
  std::vector<Vec3> out(w.num_rows(), Vec3::Zero());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (int k = w.row_begin[i]; k < w.row_begin[i + 1]; ++k) out[i] += w.weight[k] * coarse[w.source[k]];
  }
  return out;
}

std::vector<Vec3> upsample_trajectories(std::span<const Vec3> coarse_anchors,
                                        const TrackSet2D& tracks, const TrackDepths& depths,
                                        const CameraModel& cam, const DownsampleIndex& index,
                                        int r) {
  return apply_upsample(trajectory_upsample_weights(tracks, depths, cam, index, r), coarse_anchors);
}

StaticModel upsample_static_model(const StaticModel& coarse, const UpsampleWeights& w) {
  const int N = static_cast<int>(w.num_rows());
  const int T = coarse.num_frames;
  StaticModel out(N, T);
  out.anchors = apply_upsample(w, coarse.anchors);
  for (int i = 0; i < N; ++i) {
    for (int k = w.row_begin[i]; k < w.row_begin[i + 1]; ++k) {
      for (int t = 0; t < T; ++t) out.offset(i, t) += w.weight[k] * coarse.offset(w.source[k], t);
    }
  }
  return out;
}

std::vector<double> propagate_depth(std::span<const float> raw, int height, int width,
                                    std::span<const DepthSample> samples,
                                    const CameraModel& cam, int k) {
  std::vector<Vec2> pix;
  std::vector<Vec3> lifted;
  std::vector<double> ratio;
  for (const auto& s : samples) {
    const double d_raw = sample_bilinear(raw, height, width, s.pixel.x(), s.pixel.y());
    if (!(d_raw > 0.0)) continue;
    pix.push_back(s.pixel);
    lifted.push_back(unproject_camera(cam, s.pixel, d_raw));
    ratio.push_back(s.depth / d_raw);
  }
  if (pix.empty()) throw Error(ErrorCode::ZeroRawDepth, "no tracked point with positive raw depth");

  const int m = static_cast<int>(pix.size());
  std::vector<double> out(static_cast<std::size_t>(height) * width, 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double d = raw[static_cast<std::size_t>(y) * width + x];
      const Vec2 p(x, y);
      const Vec3 P = unproject_camera(cam, p, d);
      const auto nn = k_smallest(m, k, [&](int j) { return (pix[j] - p).squaredNorm(); });
      double wsum = 0.0, rsum = 0.0;
      for (int j : nn) {
        const double w = 1.0 / ((P - lifted[j]).norm() + kIdwEpsilon);
        wsum += w;
        rsum += w * ratio[j];
      }
      out[static_cast<std::size_t>(y) * width + x] = (rsum / wsum) * d;
    }
  }
  return out;
}

}  // namespace wtrk
