#include "wtrk/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "wtrk/errors.hpp"

namespace wtrk {

using nlohmann::json;

namespace {

// Scene-shape keys that may appear next to the parameters; checked by load_scene.
const std::set<std::string> kShapeKeys = {"num_frames", "height", "width", "num_tracks"};

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<T, int>) {
      if (!it->is_number_integer()) throw Error(ErrorCode::InvalidConfig, std::string(key) + " must be an integer");
      out = it->get<int>();
    } else if constexpr (std::is_same_v<T, bool>) {
      out = it->get<bool>();
    } else {
      if (!it->is_number()) throw Error(ErrorCode::InvalidConfig, std::string(key) + " must be a number");
      out = it->get<T>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string(key) + ": " + e.what());
  }
}

}  // namespace

void validate(const PipelineConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidConfig, what);
  };
  require(c.stride_s >= 1, "stride_s must be >= 1");
  require(c.inlier_tau > 0.0, "inlier_tau must be > 0");
  require(c.clip_len >= 2, "clip_len must be >= 2");
  require(c.epsilon > 0.0, "epsilon must be > 0");
  require(c.lambda_ba >= 0.0 && c.lambda_dc >= 0.0 && c.lambda_asap >= 0.0 &&
              c.lambda_arap >= 0.0 && c.lambda_ts >= 0.0,
          "lambda weights must be >= 0");
  require(c.component_min_size >= 0, "component_min_size must be >= 0");
  require(c.downsample_varpi >= 1, "downsample_varpi must be >= 1");
  require(c.knn_r >= 1, "knn_r must be >= 1");
  require(c.depth_knn_k >= 1, "depth_knn_k must be >= 1");
  require(c.solver.max_iters >= 0, "max_iters must be >= 0");
  require(c.solver.step > 0.0, "step must be > 0");
  require(c.solver.tol >= 0.0, "tol must be >= 0");
}

PipelineConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");

  static const std::set<std::string> known = {
      "stride_s",    "inlier_tau",  "clip_len",   "epsilon",      "lambda_ba",
      "lambda_dc",   "lambda_asap", "lambda_arap", "lambda_ts",   "component_min_size",
      "downsample_varpi", "knn_r",  "depth_knn_k", "spawn_radius", "max_iters",
      "step",        "tol",         "grad_check", "solver_method"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key) && !kShapeKeys.contains(key)) {
      throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "'");
    }
  }

  PipelineConfig c;
  read_key(j, "stride_s", c.stride_s);
  read_key(j, "inlier_tau", c.inlier_tau);
  read_key(j, "clip_len", c.clip_len);
  read_key(j, "epsilon", c.epsilon);
  read_key(j, "lambda_ba", c.lambda_ba);
  read_key(j, "lambda_dc", c.lambda_dc);
  read_key(j, "lambda_asap", c.lambda_asap);
  read_key(j, "lambda_arap", c.lambda_arap);
  read_key(j, "lambda_ts", c.lambda_ts);
  read_key(j, "component_min_size", c.component_min_size);
  read_key(j, "downsample_varpi", c.downsample_varpi);
  read_key(j, "knn_r", c.knn_r);
  read_key(j, "depth_knn_k", c.depth_knn_k);
  read_key(j, "spawn_radius", c.spawn_radius);
  read_key(j, "max_iters", c.solver.max_iters);
  read_key(j, "step", c.solver.step);
  read_key(j, "tol", c.solver.tol);
  read_key(j, "grad_check", c.solver.grad_check);
  if (auto it = j.find("solver_method"); it != j.end()) {
    if (!it->is_string()) throw Error(ErrorCode::InvalidConfig, "solver_method must be a string");
    const auto m = it->get<std::string>();
    if (m == "lbfgs") {
      c.solver.method = SolverMethod::Lbfgs;
    } else if (m == "rms") {
      c.solver.method = SolverMethod::RmsGradient;
    } else {
      throw Error(ErrorCode::InvalidConfig, "solver_method must be 'lbfgs' or 'rms'");
    }
  }
  validate(c);
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const PipelineConfig& c, int indent) {
  json j = {
      {"stride_s", c.stride_s},
      {"inlier_tau", c.inlier_tau},
      {"clip_len", c.clip_len},
      {"epsilon", c.epsilon},
      {"lambda_ba", c.lambda_ba},
      {"lambda_dc", c.lambda_dc},
      {"lambda_asap", c.lambda_asap},
      {"lambda_arap", c.lambda_arap},
      {"lambda_ts", c.lambda_ts},
      {"component_min_size", c.component_min_size},
      {"downsample_varpi", c.downsample_varpi},
      {"knn_r", c.knn_r},
      {"depth_knn_k", c.depth_knn_k},
      {"spawn_radius", c.spawn_radius},
      {"max_iters", c.solver.max_iters},
      {"step", c.solver.step},
      {"tol", c.solver.tol},
      {"grad_check", c.solver.grad_check},
      {"solver_method", c.solver.method == SolverMethod::Lbfgs ? "lbfgs" : "rms"},
  };
  return j.dump(indent);
}

std::string config_hash(const PipelineConfig& cfg) {
  const std::string canon = config_to_json(cfg, -1);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace wtrk
