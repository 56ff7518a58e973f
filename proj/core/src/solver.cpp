#include "wtrk/solver.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <deque>

#include <Eigen/Dense>

#include "wtrk/errors.hpp"

namespace wtrk {

std::size_t ParamBlocks::free_dimension() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < poses.size(); ++k) n += pose_frozen[k] ? 0 : 6;
  for (std::size_t b = 0; b < num_point_blocks(); ++b) n += point_frozen[b] ? 0 : 3;
  return n;
}

void ParamBlocks::resize_masks() {
  pose_frozen.resize(poses.size(), 0);
  point_frozen.resize(num_point_blocks(), 0);
  if (!point_l1.empty()) point_l1.resize(num_point_blocks(), 0.0);
}

namespace {

using VecX = Eigen::VectorXd;

class FlatView {
 public:
  explicit FlatView(const ParamBlocks& p) {
    for (std::size_t k = 0; k < p.poses.size(); ++k) {
      if (!p.pose_frozen[k]) free_poses_.push_back(k);
    }
    for (std::size_t b = 0; b < p.num_point_blocks(); ++b) {
      if (!p.point_frozen[b]) free_points_.push_back(b);
    }
    l1_ = VecX::Zero(size());
    if (!p.point_l1.empty()) {
      Eigen::Index o = 6 * static_cast<Eigen::Index>(free_poses_.size());
      for (auto b : free_points_) {
        l1_.segment<3>(o).setConstant(p.point_l1[b]);
        o += 3;
      }
    }
    has_l1_ = l1_.size() > 0 && l1_.maxCoeff() > 0.0;

    scale_ = VecX::Ones(size());
    if (!p.pose_curvature.empty() || !p.point_curvature.empty()) {
      VecX curv = VecX::Zero(size());
      Eigen::Index o = 0;
      for (auto k : free_poses_) {
        if (!p.pose_curvature.empty()) curv.segment<6>(o) = p.pose_curvature[k];
        o += 6;
      }
      for (auto b : free_points_) {
        if (!p.point_curvature.empty()) curv.segment<3>(o) = Eigen::Map<const Vec3>(&p.point_curvature[3 * b]);
        o += 3;
      }
      const double top = curv.size() ? curv.maxCoeff() : 0.0;
      if (top > 0.0) {
        const double floor = 1e-10 * top;
        for (Eigen::Index i = 0; i < curv.size(); ++i) scale_[i] = 1.0 / std::sqrt(std::max(curv[i], floor));
      }
    }
  }

  Eigen::Index size() const {
    return static_cast<Eigen::Index>(6 * free_poses_.size() + 3 * free_points_.size());
  }
  bool has_l1() const { return has_l1_; }
  const VecX& l1() const { return l1_; }
  /// Per-coordinate variable scaling (ones without curvature hints).
  const VecX& scale() const { return scale_; }

  VecX pack(const Gradient& g) const {
    VecX v(size());
    Eigen::Index o = 0;
    for (auto k : free_poses_) {
      v.segment<6>(o) = g.poses[k];
      o += 6;
    }
    for (auto b : free_points_) {
      v.segment<3>(o) = Eigen::Map<const Vec3>(&g.points[3 * b]);
      o += 3;
    }
    return v;
  }

  // Point coordinates in flat order; pose slots hold zero.
  VecX values(const ParamBlocks& p) const {
    VecX v = VecX::Zero(size());
    Eigen::Index o = 6 * static_cast<Eigen::Index>(free_poses_.size());
    for (auto b : free_points_) {
      v.segment<3>(o) = Eigen::Map<const Vec3>(&p.points[3 * b]);
      o += 3;
    }
    return v;
  }

  // Includes frozen blocks so the reported loss matches the full objective.
  static double penalty(const ParamBlocks& p) {
    double sum = 0.0;
    for (std::size_t b = 0; b < p.point_l1.size(); ++b) {
      if (p.point_l1[b] == 0.0) continue;
      sum += p.point_l1[b] * (std::abs(p.points[3 * b]) + std::abs(p.points[3 * b + 1]) +
                              std::abs(p.points[3 * b + 2]));
    }
    return sum;
  }

  ParamBlocks retract(const ParamBlocks& p, const VecX& d, double alpha) const {
    ParamBlocks out = p;
    Eigen::Index o = 0;
    for (auto k : free_poses_) {
      const Vec6 delta = alpha * d.segment<6>(o);
      out.poses[k] = se3_exp(delta) * p.poses[k];
      out.poses[k].normalize();
      assert(std::abs(out.poses[k].rotation.norm() - 1.0) < 1e-9);
      o += 6;
    }
    for (auto b : free_points_) {
      for (int c = 0; c < 3; ++c) out.points[3 * b + c] += alpha * d[o + c];
      o += 3;
    }
    return out;
  }

  // Zeroes penalized coordinates that left the orthant `xi`.
  void project(ParamBlocks& p, const VecX& xi) const {
    Eigen::Index o = 6 * static_cast<Eigen::Index>(free_poses_.size());
    for (auto b : free_points_) {
      for (int c = 0; c < 3; ++c) {
        double& v = p.points[3 * b + c];
        if (l1_[o + c] > 0.0 && v * xi[o + c] <= 0.0) v = 0.0;
      }
      o += 3;
    }
  }

 private:
  std::vector<std::size_t> free_poses_;
  std::vector<std::size_t> free_points_;
  VecX l1_;
  bool has_l1_ = false;
  VecX scale_;
};

struct Evaluation {
  double loss = 0.0;  // objective plus L1 penalty
  VecX grad;          // gradient of the smooth objective only
};

Evaluation evaluate(const Objective& f, const ParamBlocks& p, const FlatView& view, Gradient& scratch) {
  scratch.reset(p);
  Evaluation e;
  e.loss = f(p, &scratch) + view.penalty(p);
  e.grad = view.pack(scratch);
  return e;
}

// Minimum-norm subgradient of smooth + L1 at x.
VecX pseudo_gradient(const VecX& g, const VecX& x, const FlatView& view) {
  if (!view.has_l1()) return g;
  const VecX& c = view.l1();
  VecX pg = g;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (c[i] <= 0.0) continue;
    if (x[i] > 0.0) pg[i] = g[i] + c[i];
    else if (x[i] < 0.0) pg[i] = g[i] - c[i];
    else if (g[i] + c[i] < 0.0) pg[i] = g[i] + c[i];
    else if (g[i] - c[i] > 0.0) pg[i] = g[i] - c[i];
    else pg[i] = 0.0;
  }
  return pg;
}

[[noreturn]] void report_non_finite(const ParamBlocks& p, const Gradient& g, double loss) {
  for (std::size_t k = 0; k < g.poses.size(); ++k) {
    if (!g.poses[k].allFinite() || !p.poses[k].translation.allFinite()) {
      throw Error(ErrorCode::NonFiniteObjective, "pose block " + std::to_string(k));
    }
  }
  for (std::size_t b = 0; b < p.num_point_blocks(); ++b) {
    for (int c = 0; c < 3; ++c) {
      if (!std::isfinite(g.points[3 * b + c]) || !std::isfinite(p.points[3 * b + c])) {
        throw Error(ErrorCode::NonFiniteObjective, "point block " + std::to_string(b));
      }
    }
  }
  throw Error(ErrorCode::NonFiniteObjective, "loss value " + std::to_string(loss));
}

// Relative decrease test with a unit floor, so losses already near zero stop
// once the absolute decrease drops below tol.
bool converged_step(double f_old, double f_new, double tol) {
  return f_new == 0.0 || std::abs(f_old - f_new) <= tol * std::max({std::abs(f_old), std::abs(f_new), 1.0});
}

// L-BFGS with Armijo backtracking. With L1 weights present this is the
// orthant-wise variant: steps follow the pseudo-gradient and never cross zero
// in a penalized coordinate within one iteration.
SolverResult run_lbfgs(const Objective& f, ParamBlocks x, const SolverOptions& opts,
                       const FlatView& view, Evaluation cur) {
  SolverResult res;
  res.initial_loss = cur.loss;
  Gradient scratch;
  std::deque<VecX> s_hist, y_hist;
  std::deque<double> rho_hist;
  const bool owl = view.has_l1();
  const VecX& S = view.scale();  // x = S * z; the history lives in z

  int iter = 0;
  for (; iter < opts.max_iters; ++iter) {
    const VecX xv = owl ? view.values(x) : VecX();
    const VecX pg = owl ? pseudo_gradient(cur.grad, xv, view) : cur.grad;
    const VecX pgz = S.cwiseProduct(pg);
    if (pg.size() == 0 || pg.lpNorm<Eigen::Infinity>() == 0.0) {
      res.converged = true;
      break;
    }

    bool accepted = false;
    Evaluation next;
    ParamBlocks x_next;
    VecX disp;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      VecX d = -pgz;
      if (!s_hist.empty()) {
        // two-loop recursion
        std::vector<double> a(s_hist.size());
        for (int k = static_cast<int>(s_hist.size()) - 1; k >= 0; --k) {
          a[k] = rho_hist[k] * s_hist[k].dot(d);
          d -= a[k] * y_hist[k];
        }
        d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        for (std::size_t k = 0; k < s_hist.size(); ++k) {
          const double b = rho_hist[k] * y_hist[k].dot(d);
          d += (a[k] - b) * s_hist[k];
        }
      }
      VecX xi;
      if (owl) {
        const VecX& c = view.l1();
        xi = VecX::Zero(d.size());
        for (Eigen::Index i = 0; i < d.size(); ++i) {
          if (c[i] <= 0.0) continue;
          if (d[i] * pg[i] >= 0.0) d[i] = 0.0;
          xi[i] = xv[i] != 0.0 ? (xv[i] > 0.0 ? 1.0 : -1.0) : (pg[i] < 0.0 ? 1.0 : (pg[i] > 0.0 ? -1.0 : 0.0));
        }
      }
      if (!(pgz.dot(d) < 0.0)) {
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        d = -pgz;
      }
      d = S.cwiseProduct(d);  // back to x coordinates
      double alpha = s_hist.empty() ? opts.step * std::min(1.0, 1.0 / pgz.norm()) : 1.0;
      for (int ls = 0; ls < 60; ++ls) {
        x_next = view.retract(x, d, alpha);
        disp = alpha * d;
        if (owl) {
          view.project(x_next, xi);
          const VecX xn = view.values(x_next);
          const VecX& c = view.l1();
          for (Eigen::Index i = 0; i < d.size(); ++i) {
            if (c[i] > 0.0) disp[i] = xn[i] - xv[i];
          }
        }
        next = evaluate(f, x_next, view, scratch);
        if (std::isfinite(next.loss) && next.grad.allFinite() &&
            next.loss <= cur.loss + 1e-4 * pg.dot(disp)) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted && s_hist.empty()) break;
      if (!accepted) {
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
      }
    }
    if (!accepted) {
      res.converged = true;
      break;
    }

    const VecX y = S.cwiseProduct(next.grad - cur.grad);
    const VecX sz = disp.cwiseQuotient(S);
    const double sy = sz.dot(y);
    if (sy > 1e-12 * std::max(1.0, y.squaredNorm())) {
      s_hist.push_back(sz);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double f_old = cur.loss;
    x = std::move(x_next);
    cur = std::move(next);
    if (opts.on_iteration) opts.on_iteration(iter + 1, cur.loss);
    if (converged_step(f_old, cur.loss, opts.tol)) {
      res.converged = true;
      ++iter;
      break;
    }
  }
  res.params = std::move(x);
  res.loss = cur.loss;
  res.iterations = iter;
  return res;
}

// Normalized gradient steps; the L1 penalty enters through its subgradient
// with sign(0) = 0.
SolverResult run_rms(const Objective& f, ParamBlocks x, const SolverOptions& opts,
                     const FlatView& view, Evaluation cur) {
  SolverResult res;
  res.initial_loss = cur.loss;
  Gradient scratch;
  auto full_grad = [&view](const Evaluation& e, const ParamBlocks& p) {
    if (!view.has_l1()) return e.grad;
    return VecX(e.grad + view.l1().cwiseProduct(view.values(p).cwiseSign()));
  };
  VecX g = full_grad(cur, x);
  VecX mean_sq = g.cwiseAbs2();
  double lr = 1e-2 * opts.step;
  int iter = 0;
  int rejected = 0;
  for (; iter < opts.max_iters; ++iter) {
    if (g.size() == 0 || g.lpNorm<Eigen::Infinity>() == 0.0) {
      res.converged = true;
      break;
    }
    mean_sq = 0.9 * mean_sq + 0.1 * g.cwiseAbs2();
    const VecX d = -g.cwiseQuotient((mean_sq.cwiseSqrt().array() + 1e-12).matrix());
    ParamBlocks x_next = view.retract(x, d, lr);
    Evaluation next = evaluate(f, x_next, view, scratch);
    if (!std::isfinite(next.loss) || !next.grad.allFinite() || next.loss > cur.loss) {
      lr *= 0.5;
      if (++rejected > 60) {
        res.converged = true;
        break;
      }
      continue;
    }
    rejected = 0;
    lr *= 1.1;
    const double f_old = cur.loss;
    x = std::move(x_next);
    cur = std::move(next);
    g = full_grad(cur, x);
    if (opts.on_iteration) opts.on_iteration(iter + 1, cur.loss);
    if (converged_step(f_old, cur.loss, opts.tol)) {
      res.converged = true;
      ++iter;
      break;
    }
  }
  res.params = std::move(x);
  res.loss = cur.loss;
  res.iterations = iter;
  return res;
}

}  // namespace

SolverResult minimize(const Objective& objective, ParamBlocks init, const SolverOptions& opts) {
  init.resize_masks();
  const FlatView view(init);
  Gradient scratch;
  Evaluation cur = evaluate(objective, init, view, scratch);
  if (!std::isfinite(cur.loss) || !cur.grad.allFinite()) report_non_finite(init, scratch, cur.loss);

  if (opts.method == SolverMethod::RmsGradient) return run_rms(objective, std::move(init), opts, view, cur);
  return run_lbfgs(objective, std::move(init), opts, view, cur);
}

double grad_check(const Objective& objective, const ParamBlocks& params_in, double h) {
  ParamBlocks params = params_in;
  params.resize_masks();
  Gradient g;
  g.reset(params);
  objective(params, &g);

  double worst = 0.0;
  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
  };
  for (std::size_t k = 0; k < params.poses.size(); ++k) {
    if (params.pose_frozen[k]) continue;
    for (int c = 0; c < 6; ++c) {
      Vec6 e = Vec6::Zero();
      e[c] = h;
      const PoseSE3 saved = params.poses[k];
      params.poses[k] = se3_exp(e) * saved;
      const double fp = objective(params, nullptr);
      params.poses[k] = se3_exp(-e) * saved;
      const double fm = objective(params, nullptr);
      params.poses[k] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      worst = std::max(worst, rel(g.poses[k][c], fd));
    }
  }
  for (std::size_t b = 0; b < params.num_point_blocks(); ++b) {
    if (params.point_frozen[b]) continue;
    for (int c = 0; c < 3; ++c) {
      double& v = params.points[3 * b + c];
      const double saved = v;
      v = saved + h;
      const double fp = objective(params, nullptr);
      v = saved - h;
      const double fm = objective(params, nullptr);
      v = saved;
      const double fd = (fp - fm) / (2.0 * h);
      worst = std::max(worst, rel(g.points[3 * b + c], fd));
    }
  }
  return worst;
}

}  // namespace wtrk
