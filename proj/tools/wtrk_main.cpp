// wtrk: command-line driver for the tracking pipeline.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "wtrk/errors.hpp"
#include "wtrk/gradcheck.hpp"
#include "wtrk/pipeline.hpp"
#include "wtrk/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

// WTRK_THREADS wins over --threads.
int resolve_threads(int flag_value) {
  const char* env = std::getenv("WTRK_THREADS");
  if (!env || !*env) return flag_value;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 1024) {
    throw wtrk::Error(wtrk::ErrorCode::InvalidConfig, std::string("WTRK_THREADS='") + env + "'");
  }
  return static_cast<int>(v);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw wtrk::Error(wtrk::ErrorCode::MissingFile, p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

json metrics_json(const std::map<std::string, double>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense world-frame tracking from 2D tracks and depth"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run the pipeline on a scene directory");
  std::string run_in, run_out;
  wtrk::RunFlags flags;
  bool no_speedup = false;
  std::string eval_dir;
  run->add_option("input", run_in, "Scene directory")->required();
  run->add_option("output", run_out, "Output directory")->required();
  run->add_flag("--no-speedup", no_speedup, "Optimize every static track (skip downsampling)");
  run->add_flag("--depth-out", flags.depth_out, "Write aligned_depth.wt");
  run->add_option("--eval", eval_dir, "Ground-truth directory to evaluate against");
  run->add_option("--stage", flags.stage, "Stop after this stage")->check(CLI::Range(1, 3));
  run->add_flag("--resume", flags.resume, "Reuse matching checkpoints in <output>/checkpoints");
  run->add_option("--threads", flags.threads, "Worker threads")->check(CLI::Range(1, 1024));

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene with ground truth");
  std::string synth_out, synth_cfg;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("output", synth_out, "Output directory")->required();
  synth->add_option("--config", synth_cfg, "Generator config (JSON)");
  synth->add_option("--seed", synth_seed, "Override the config seed");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate an output directory against ground truth");
  std::string est_dir, gt_dir;
  eval->add_option("estimate", est_dir, "Directory written by `run`")->required();
  eval->add_option("ground_truth", gt_dir, "Directory written by `synth`")->required();

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "Finite-difference audit of every loss gradient");
  wtrk::GradAuditOptions gopts;
  double gtol = 1e-4;
  std::string gc_cfg;
  gc->add_option("--states", gopts.states, "Random states per loss")->check(CLI::PositiveNumber);
  gc->add_option("--seed", gopts.seed, "Random seed");
  gc->add_option("--step", gopts.h, "Central-difference step")->check(CLI::PositiveNumber);
  gc->add_option("--tol", gtol, "Failure threshold on the relative error");
  gc->add_option("--config", gc_cfg, "Synthetic scene config (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*run) {
      flags.speedup = !no_speedup;
      flags.threads = resolve_threads(flags.threads);
      if (!eval_dir.empty()) flags.eval_dir = eval_dir;
      const wtrk::RunManifest m = wtrk::run_pipeline(run_in, run_out, flags);
      for (const auto& s : m.stages) {
        std::cout << s.name << ": loss " << s.initial_loss << " -> " << s.final_loss << " in "
                  << s.iterations << " iterations, " << s.seconds << " s" << (s.resumed ? " (resumed)" : "")
                  << '\n';
      }
      print_warnings(m.warnings);
    } else if (*synth) {
      wtrk::SynthConfig cfg = synth_cfg.empty() ? wtrk::SynthConfig{} : wtrk::parse_synth_config(read_file(synth_cfg));
      if (synth_seed) cfg.seed = *synth_seed;
      const wtrk::SynthScene s = wtrk::generate(cfg);
      wtrk::write_synth(synth_out, s);
      std::cout << "wrote " << s.num_tracks() << " tracks x " << cfg.frames << " frames to " << synth_out << '\n';
    } else if (*eval) {
      std::vector<std::string> warnings;
      const wtrk::EvalReport r = wtrk::eval_only(est_dir, gt_dir, warnings);
      std::cout << metrics_json(wtrk::flatten(r)).dump(2) << '\n';
      print_warnings(warnings);
    } else if (*gc) {
      const wtrk::SynthConfig cfg =
          gc_cfg.empty() ? wtrk::grad_audit_scene_config() : wtrk::parse_synth_config(read_file(gc_cfg));
      const auto worst = wtrk::audit_gradients(wtrk::generate(cfg), gopts);
      bool ok = true;
      for (const auto& [name, err] : worst) {
        std::cout << name << ' ' << err << '\n';
        ok = ok && err < gtol;
      }
      if (!ok) return kExitNumerical;
    }
  } catch (const wtrk::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return wtrk::is_numerical(e.code()) ? kExitNumerical : kExitInput;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}
