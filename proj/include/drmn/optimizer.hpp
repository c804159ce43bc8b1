#pragma once

#include <string>
#include <vector>

#include "drmn/autodiff.hpp"

namespace drmn {

enum class OptimizerKind { kAdam, kSgd };
OptimizerKind parse_optimizer(const std::string& name);
std::string optimizer_name(OptimizerKind kind);

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
double clip_global_norm(ad::Gradients& grads, double max_norm);

class Optimizer {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  Optimizer() = default;
  Optimizer(OptimizerKind kind, double learning_rate, const ad::ParamSet& params);

  void step(ad::ParamSet& params, const ad::Gradients& grads);

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return lr_; }
  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t s) { steps_ = s; }
  /// First and second moment estimates (Adam only; empty for SGD).
  std::vector<ad::Matrix>& first_moments() { return m_; }
  std::vector<ad::Matrix>& second_moments() { return v_; }
  const std::vector<ad::Matrix>& first_moments() const { return m_; }
  const std::vector<ad::Matrix>& second_moments() const { return v_; }

 private:
  OptimizerKind kind_ = OptimizerKind::kAdam;
  double lr_ = 5e-4;
  std::uint64_t steps_ = 0;
  std::vector<ad::Matrix> m_;
  std::vector<ad::Matrix> v_;
};

}  // namespace drmn
