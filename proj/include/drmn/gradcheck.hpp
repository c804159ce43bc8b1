#pragma once

#include <functional>
#include <string>
#include <vector>

#include "drmn/model.hpp"

namespace drmn {

struct ParamCheck {
  std::string name;
  double worst_relative = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_relative = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;
  bool passed() const { return max_relative < tolerance; }
};

/// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients of `loss` with central differences over
/// every scalar of every parameter. `loss` must build a 1x1 node on the graph
/// it is given and be deterministic; two evaluations that differ raise
/// NumericError.
GradCheckReport grad_check(ad::ParamSet& params, const std::function<Var(Graph&)>& loss, double step,
                           double tolerance);

struct TinyInstance {
  Model model;
  ModelInput input;
  Vocabulary vocab;
};

/// Vocabulary of 50, dims 16/8/12, two context turns and one similar
/// conversation that carries an out-of-vocabulary token the gold copies.
TinyInstance make_tiny_instance(std::uint64_t seed, MemoryKeys keys = MemoryKeys::kWords);

}  // namespace drmn
