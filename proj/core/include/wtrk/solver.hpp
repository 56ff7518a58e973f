#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wtrk/config.hpp"
#include "wtrk/geometry.hpp"

namespace wtrk {

/// Mixed optimization variables: SE(3) poses updated by left retraction and
/// Euclidean 3-vector blocks stored flat.
struct ParamBlocks {
  std::vector<PoseSE3> poses;
  std::vector<std::uint8_t> pose_frozen;
  std::vector<double> points;               // 3 * num_point_blocks()
  std::vector<std::uint8_t> point_frozen;   // one flag per 3-block
  /// Optional weight c_b of an L1 penalty c_b * |x| on every coordinate of
  /// point block b. The solver adds the penalty itself (orthant-wise steps),
  /// so the objective must leave it out. Empty means no penalty.
  std::vector<double> point_l1;
  /// Optional positive curvature estimates (e.g. Gauss-Newton diagonals) per
  /// pose tangent coordinate and per point coordinate. When present, L-BFGS
  /// works in variables scaled by their inverse square roots.
  std::vector<Vec6> pose_curvature;
  std::vector<double> point_curvature;  // same length as points

  std::size_t num_point_blocks() const { return points.size() / 3; }
  std::size_t free_dimension() const;

  Vec3 point(std::size_t b) const { return {points[3 * b], points[3 * b + 1], points[3 * b + 2]}; }
  void set_point(std::size_t b, const Vec3& v) {
    points[3 * b] = v.x();
    points[3 * b + 1] = v.y();
    points[3 * b + 2] = v.z();
  }
  /// Makes the frozen masks match the block counts (new entries unfrozen).
  void resize_masks();
};

/// d loss / d(left tangent) per pose and d loss / d point per coordinate.
struct Gradient {
  std::vector<Vec6> poses;
  std::vector<double> points;

  void reset(const ParamBlocks& p) {
    poses.assign(p.poses.size(), Vec6::Zero());
    points.assign(p.points.size(), 0.0);
  }
  void add_point(std::size_t b, const Vec3& g) {
    points[3 * b] += g.x();
    points[3 * b + 1] += g.y();
    points[3 * b + 2] += g.z();
  }
};

/// Returns the loss at `params`; fills `grad` (already reset to zero) when
/// non-null.
using Objective = std::function<double(const ParamBlocks& params, Gradient* grad)>;

struct SolverOptions {
  int max_iters = 500;
  double step = 1.0;
  double tol = 1e-8;
  SolverMethod method = SolverMethod::Lbfgs;
  int history = 10;
  /// Called after every accepted iteration with the current loss.
  std::function<void(int iteration, double loss)> on_iteration;

  static SolverOptions from(const SolverConfig& c) {
    SolverOptions o;
    o.max_iters = c.max_iters;
    o.step = c.step;
    o.tol = c.tol;
    o.method = c.method;
    return o;
  }
};

struct SolverResult {
  ParamBlocks params;
  double loss = 0.0;
  double initial_loss = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes `objective` (plus the L1 penalty of `init.point_l1`) from
/// `init`. The returned loss includes the penalty; it is the best seen and
/// never exceeds the initial loss. Frozen blocks are returned untouched.
/// Throws NonFiniteObjective when the objective or gradient at `init` is not
/// finite.
SolverResult minimize(const Objective& objective, ParamBlocks init, const SolverOptions& opts);

/// Max over free coordinates of |g_analytic - g_fd| / max(1, |g_analytic|, |g_fd|)
/// using central differences of step `h` (tangent steps for poses).
double grad_check(const Objective& objective, const ParamBlocks& params, double h = 1e-5);

}  // namespace wtrk
