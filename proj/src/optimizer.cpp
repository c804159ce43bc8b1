#include "drmn/optimizer.hpp"

#include <cmath>

#include "drmn/error.hpp"

namespace drmn {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw UsageError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

std::string optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "sgd"; }

double clip_global_norm(ad::Gradients& grads, double max_norm) {
  double norm = grads.global_norm();
  if (max_norm > 0.0 && norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, const ad::ParamSet& params)
    : kind_(kind), lr_(learning_rate) {
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (kind_ == OptimizerKind::kAdam) {
    for (const auto& p : params) {
      m_.push_back(ad::Matrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(ad::Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
}

void Optimizer::step(ad::ParamSet& params, const ad::Gradients& grads) {
  if (grads.size() != params.size()) throw UsageError("optimizer: gradient count mismatch");
  ++steps_;
  if (kind_ == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].value -= lr_ * grads[i];
    return;
  }
  if (m_.size() != params.size()) throw UsageError("optimizer: state does not match parameters");
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(kBeta1, t);
  const double c2 = 1.0 - std::pow(kBeta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grads[i];
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grads[i].cwiseProduct(grads[i]);
    auto& p = params[i].value;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      double mhat = m_[i].data()[k] / c1;
      double vhat = v_[i].data()[k] / c2;
      p.data()[k] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

}  // namespace drmn
