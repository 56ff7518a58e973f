#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "wtrk/synth.hpp"

namespace wtrk {

struct GradAuditOptions {
  int states = 50;
  double h = 1e-5;
  std::uint64_t seed = 0;
};

/// Worst relative error per loss ("ba", "dc", "asap", "arap", "ts") over all
/// audited states.
using GradAuditResult = std::map<std::string, double>;

/// Finite-difference audit of every loss gradient at random states around
/// the ground truth of `scene`. The static losses vary pose tangents, anchors
/// and offsets; the dynamic priors vary per-frame positions.
GradAuditResult audit_gradients(const SynthScene& scene, const GradAuditOptions& opts = {});

/// Small scene used by `wtrk grad-check` when no config is given.
SynthConfig grad_audit_scene_config();

}  // namespace wtrk
