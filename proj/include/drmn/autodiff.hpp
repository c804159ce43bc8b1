#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace drmn::ad {

/// Row-major so that rows are contiguous and checkpoints serialize in
/// row-major order without a transpose.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Matrix value;
};

/// Named trainable tensors. Names are unique and insertion order is stable.
class ParamSet {
 public:
  std::size_t add(const std::string& name, Matrix init);
  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t index(const std::string& name) const;  // throws when unknown
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }
  std::size_t scalar_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

/// Gradient buffers aligned with a ParamSet.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamSet& params);

  std::size_t size() const { return grads_.size(); }
  Matrix& operator[](std::size_t i) { return grads_[i]; }
  const Matrix& operator[](std::size_t i) const { return grads_[i]; }

  void zero();
  void add(const Gradients& other);
  void scale(double s);
  double global_norm() const;
  bool all_finite() const;

 private:
  std::vector<Matrix> grads_;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}

  Graph* graph() const { return graph_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;

 private:
  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

/// A recorded forward computation (tape). Reverse-mode gradients flow from a
/// scalar node back to the parameter leaves and land in a Gradients buffer.
/// A Graph belongs to one thread; several graphs may read one ParamSet.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Matrix& upstream)>;

  /// `record_grad == false` skips building backward closures (inference).
  explicit Graph(const ParamSet* params = nullptr, bool record_grad = true);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  Var zeros(Eigen::Index rows, Eigen::Index cols);
  /// Leaf for parameter `index`; one leaf per parameter per graph.
  Var param(std::size_t index);
  Var param(const std::string& name);

  /// Low-level node creation used by the op library.
  Var record(Matrix value, std::initializer_list<Var> inputs, const char* op, BackwardFn backward);
  Var record(Matrix value, std::span<const Var> inputs, const char* op, BackwardFn backward);

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  /// Gradient accumulator of a node, zero-initialized on first access.
  Matrix& grad(Var v);
  /// Adds `g` into the gradient of `v` when `v` participates in differentiation.
  void accumulate(Var v, const Matrix& g);

  /// Runs reverse-mode differentiation from a 1x1 loss. Parameter gradients
  /// are added to `out`. Throws UsageError for non-scalar or non-finite loss.
  void backward(Var loss, Gradients& out);

  std::size_t node_count() const { return nodes_.size(); }
  const ParamSet* params() const { return params_; }
  bool recording() const { return record_grad_; }

  /// Name of the first node (in creation order) holding a non-finite value,
  /// or empty when every value is finite.
  std::string first_non_finite() const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    const char* op = "";
    std::int64_t param = -1;
    bool requires_grad = false;
    bool has_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<std::size_t, std::uint32_t> param_leaves_;
  const ParamSet* params_;
  bool record_grad_;
};

// ---------------------------------------------------------------------------
// Operations. Shapes follow row-vector conventions: a sequence is a matrix with
// one row per position.

Var matmul(Var a, Var b);
Var transpose(Var a);
/// Elementwise sum of equal shapes, or `b` broadcast over rows when it is 1 x cols.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
/// Multiplies every entry of `a` by the 1x1 node `s`.
Var scale_by(Var a, Var s);
/// 1 - a, elementwise.
Var one_minus(Var a);

Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
/// ln(max(a, floor)); entries at the floor receive zero gradient.
Var log_floor(Var a, double floor);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}
inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}
Var row(Var a, Eigen::Index r);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);

/// Row-wise softmax with the row maximum subtracted before exponentiation.
Var softmax_rows(Var a);
Var sum_all(Var a);
/// r x c -> r x 1, summing each row.
Var sum_cols(Var a);
Var mean_all(Var a);

/// Per-row standardization with learnable gain and bias (both 1 x cols).
Var layer_norm_rows(Var x, Var gain, Var bias, double eps);

/// Rows of `table` selected by `ids`.
Var gather_rows(Var table, std::span<const int> ids);
/// 1 x n -> 1 x width, out[targets[i]] += a[i].
Var scatter_cols(Var a, std::span<const int> targets, Eigen::Index width);
/// 1 x n -> 1 x width with zeros appended (width >= n).
Var pad_cols(Var a, Eigen::Index width);
/// 1x1 node holding a(r, c).
Var pick(Var a, Eigen::Index r, Eigen::Index c);
/// Elementwise product with a constant mask.
Var mask_mul(Var a, const Matrix& mask);

/// Fused LSTM cell. `z` holds pre-activations [i f o g] (1 x 4H), `c` the
/// previous cell (1 x H). Returns [h' c'] (1 x 2H) with
/// c' = sigmoid(f) c + sigmoid(i) tanh(g), h' = sigmoid(o) tanh(c').
Var lstm_cell(Var z, Var c);

}  // namespace drmn::ad
