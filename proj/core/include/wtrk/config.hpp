#pragma once

#include <cstdint>
#include <string>

namespace wtrk {

enum class SolverMethod { Lbfgs, RmsGradient };

struct SolverConfig {
  int max_iters = 500;
  double step = 1.0;
  double tol = 1e-8;
  bool grad_check = false;
  SolverMethod method = SolverMethod::Lbfgs;
};

/// Resolved pipeline parameters. Every key absent from config.json keeps the
/// default below.
struct PipelineConfig {
  int stride_s = 4;
  double inlier_tau = 0.1;  // fraction of the image diagonal
  int clip_len = 5;
  double epsilon = 0.1;     // world units
  double lambda_ba = 1.0;
  double lambda_dc = 1.0;
  double lambda_asap = 5.0;
  double lambda_arap = 100.0;
  double lambda_ts = 10.0;
  int component_min_size = 50;
  int downsample_varpi = 4;
  int knn_r = 4;
  int depth_knn_k = 4;
  double spawn_radius = -1.0;  // <= 0 means stride_s / 2
  SolverConfig solver;

  double effective_spawn_radius() const {
    return spawn_radius > 0.0 ? spawn_radius : 0.5 * stride_s;
  }
};

/// Throws InvalidConfig on unknown keys, wrong types or violated bounds.
PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::string& path);
std::string config_to_json(const PipelineConfig& cfg, int indent = 2);
void validate(const PipelineConfig& cfg);

/// Stable 64-bit FNV-1a hash of the canonical JSON form, as 16 hex digits.
std::string config_hash(const PipelineConfig& cfg);

}  // namespace wtrk
