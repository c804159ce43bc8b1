#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "drmn/autodiff.hpp"
#include "drmn/random.hpp"

namespace drmn::nn {

using ad::Graph;
using ad::Matrix;
using ad::ParamSet;
using ad::Var;

/// Softmax of a plain vector, max-shifted. Throws UsageError on empty input.
std::vector<double> softmax(std::span<const double> scores);

/// Inverted dropout on a plain matrix: survivors are scaled by 1/keep_prob.
/// Identity when `training` is false or keep_prob == 1. Throws for keep_prob
/// outside (0, 1].
Matrix dropout(const Matrix& x, double keep_prob, bool training, SplitMix64& rng);

/// Dropout applied to graph nodes. Holds a borrowed generator.
class Dropout {
 public:
  Dropout() = default;
  Dropout(double keep_prob, bool training, SplitMix64* rng);
  Var operator()(Var x) const;
  bool active() const { return training_ && keep_prob_ < 1.0; }

 private:
  double keep_prob_ = 1.0;
  bool training_ = false;
  SplitMix64* rng_ = nullptr;
};

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, SplitMix64& rng);
/// Glorot-uniform initialization.
Matrix xavier(Eigen::Index rows, Eigen::Index cols, SplitMix64& rng);

/// softmax(Q K^T / sqrt(d)) V. Throws UsageError when K has no rows.
/// When `weights` is non-null it receives the attention matrix node.
Var scaled_dot_attention(Var q, Var k, Var v, double d, Var* weights = nullptr);

/// One direction of one LSTM layer. Gate layout is [input forget output candidate].
struct LstmLayer {
  std::size_t w = 0;  // input x 4H
  std::size_t u = 0;  // H x 4H
  std::size_t b = 0;  // 1 x 4H
  int input = 0;
  int hidden = 0;

  static LstmLayer create(ParamSet& params, const std::string& prefix, int input, int hidden,
                          SplitMix64& rng);
  /// Hidden state for every row of `seq`, in input order.
  Var run(Graph& g, Var seq, bool reverse) const;

  struct State {
    Var h;
    Var c;
  };
  /// One step from a 1 x input row.
  State step(Graph& g, Var x, const State& prev) const;
};

/// Stacked bidirectional LSTM; each layer's output is [forward backward].
struct BiLstm {
  std::vector<LstmLayer> forward;
  std::vector<LstmLayer> backward;

  static BiLstm create(ParamSet& params, const std::string& prefix, int input, int hidden, int layers,
                       SplitMix64& rng);
  int output_width() const { return 2 * forward.front().hidden; }
  /// Dropout is applied to each layer's output.
  Var run(Graph& g, Var seq, const Dropout& dropout) const;
};

/// LayerNorm(x + max(0, x Wf + bf) Wh + bh) with learnable gain and bias.
struct FfnNorm {
  static constexpr double kEps = 1e-6;
  std::size_t wf = 0, bf = 0, wh = 0, bh = 0, gain = 0, bias = 0;

  static FfnNorm create(ParamSet& params, const std::string& prefix, int width, int inner,
                        SplitMix64& rng);
  Var operator()(Graph& g, Var x) const;
};

/// A learned affine map x W + b.
struct Linear {
  std::size_t w = 0;
  std::size_t b = 0;

  static Linear create(ParamSet& params, const std::string& prefix, int in, int out, SplitMix64& rng);
  Var operator()(Graph& g, Var x) const;
};

}  // namespace drmn::nn
