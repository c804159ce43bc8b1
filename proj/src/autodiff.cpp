#include "drmn/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "drmn/error.hpp"

namespace drmn::ad {

std::size_t ParamSet::add(const std::string& name, Matrix init) {
  if (by_name_.count(name)) throw UsageError("duplicate parameter name '" + name + "'");
  by_name_.emplace(name, params_.size());
  params_.push_back({name, std::move(init)});
  return params_.size() - 1;
}

std::size_t ParamSet::index(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

Gradients::Gradients(const ParamSet& params) {
  grads_.reserve(params.size());
  for (const auto& p : params) grads_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
}

void Gradients::zero() {
  for (auto& g : grads_) g.setZero();
}

void Gradients::add(const Gradients& other) {
  for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += other.grads_[i];
}

void Gradients::scale(double s) {
  for (auto& g : grads_) g *= s;
}

double Gradients::global_norm() const {
  double sq = 0.0;
  for (const auto& g : grads_) sq += g.squaredNorm();
  return std::sqrt(sq);
}

bool Gradients::all_finite() const {
  return std::all_of(grads_.begin(), grads_.end(), [](const Matrix& g) { return g.allFinite(); });
}

const Matrix& Var::value() const { return graph_->value(*this); }

double Var::scalar() const {
  const auto& v = value();
  if (v.size() != 1) throw UsageError("scalar() on a non-1x1 node");
  return v(0, 0);
}

// ---------------------------------------------------------------------------

Graph::Graph(const ParamSet* params, bool record_grad) : params_(params), record_grad_(record_grad) {
  nodes_.reserve(1024);
}

Var Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::zeros(Eigen::Index rows, Eigen::Index cols) { return constant(Matrix::Zero(rows, cols)); }

Var Graph::param(std::size_t index) {
  if (!params_ || index >= params_->size()) throw UsageError("parameter index out of range");
  auto it = param_leaves_.find(index);
  if (it != param_leaves_.end()) return {this, it->second};
  Node n;
  n.value = (*params_)[index].value;
  n.op = (*params_)[index].name.c_str();
  n.param = static_cast<std::int64_t>(index);
  n.requires_grad = record_grad_;
  nodes_.push_back(std::move(n));
  auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  param_leaves_.emplace(index, id);
  return {this, id};
}

Var Graph::param(const std::string& name) {
  if (!params_) throw UsageError("graph has no parameter set");
  return param(params_->index(name));
}

Var Graph::record(Matrix value, std::initializer_list<Var> inputs, const char* op, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), op,
                std::move(backward));
}

Var Graph::record(Matrix value, std::span<const Var> inputs, const char* op, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  if (record_grad_) {
    for (const Var& in : inputs) {
      if (nodes_[in.id()].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Matrix& Graph::grad(Var v) {
  Node& n = nodes_[v.id()];
  if (!n.has_grad) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::accumulate(Var v, const Matrix& g) {
  if (!nodes_[v.id()].requires_grad) return;
  grad(v) += g;
}

void Graph::backward(Var loss, Gradients& out) {
  const Node& root = nodes_[loss.id()];
  if (root.value.size() != 1) throw UsageError("backward() needs a scalar loss");
  if (!std::isfinite(root.value(0, 0))) throw NumericError("non-finite loss");
  if (!root.requires_grad) return;
  grad(loss)(0, 0) += 1.0;
  for (std::int64_t i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param >= 0) out[static_cast<std::size_t>(n.param)] += n.grad;
  }
}

std::string Graph::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.allFinite()) return std::string(nodes_[i].op) + " (node " + std::to_string(i) + ")";
  }
  return {};
}

// ---------------------------------------------------------------------------

namespace {

Graph& graph_of(Var a) { return *a.graph(); }

void check(bool ok, const char* what) {
  if (!ok) throw UsageError(what);
}

}  // namespace

Var matmul(Var a, Var b) {
  check(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix v = a.value() * b.value();
  return graph_of(a).record(std::move(v), {a, b}, "matmul", [a, b](Graph& g, const Matrix& up) {
    if (g.requires_grad(a)) g.grad(a).noalias() += up * g.value(b).transpose();
    if (g.requires_grad(b)) g.grad(b).noalias() += g.value(a).transpose() * up;
  });
}

Var transpose(Var a) {
  Matrix v = a.value().transpose();
  return graph_of(a).record(std::move(v), {a}, "transpose",
                            [a](Graph& g, const Matrix& up) { g.accumulate(a, up.transpose()); });
}

Var add(Var a, Var b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    Matrix v = a.value() + b.value();
    return graph_of(a).record(std::move(v), {a, b}, "add", [a, b](Graph& g, const Matrix& up) {
      g.accumulate(a, up);
      g.accumulate(b, up);
    });
  }
  check(b.rows() == 1 && b.cols() == a.cols(), "add: shapes differ and rhs is not a row to broadcast");
  Matrix v = a.value().rowwise() + b.value().row(0);
  return graph_of(a).record(std::move(v), {a, b}, "add_row", [a, b](Graph& g, const Matrix& up) {
    g.accumulate(a, up);
    if (g.requires_grad(b)) g.grad(b) += up.colwise().sum();
  });
}

Var sub(Var a, Var b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shapes differ");
  Matrix v = a.value() - b.value();
  return graph_of(a).record(std::move(v), {a, b}, "sub", [a, b](Graph& g, const Matrix& up) {
    g.accumulate(a, up);
    if (g.requires_grad(b)) g.grad(b) -= up;
  });
}

Var hadamard(Var a, Var b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard: shapes differ");
  Matrix v = a.value().cwiseProduct(b.value());
  return graph_of(a).record(std::move(v), {a, b}, "hadamard", [a, b](Graph& g, const Matrix& up) {
    if (g.requires_grad(a)) g.grad(a) += up.cwiseProduct(g.value(b));
    if (g.requires_grad(b)) g.grad(b) += up.cwiseProduct(g.value(a));
  });
}

Var scale(Var a, double s) {
  Matrix v = a.value() * s;
  return graph_of(a).record(std::move(v), {a}, "scale",
                            [a, s](Graph& g, const Matrix& up) { g.accumulate(a, up * s); });
}

Var scale_by(Var a, Var s) {
  check(s.rows() == 1 && s.cols() == 1, "scale_by: factor must be 1x1");
  Matrix v = a.value() * s.value()(0, 0);
  return graph_of(a).record(std::move(v), {a, s}, "scale_by", [a, s](Graph& g, const Matrix& up) {
    if (g.requires_grad(a)) g.grad(a) += up * g.value(s)(0, 0);
    if (g.requires_grad(s)) g.grad(s)(0, 0) += up.cwiseProduct(g.value(a)).sum();
  });
}

Var one_minus(Var a) {
  Matrix v = (1.0 - a.value().array()).matrix();
  return graph_of(a).record(std::move(v), {a}, "one_minus", [a](Graph& g, const Matrix& up) {
    if (g.requires_grad(a)) g.grad(a) -= up;
  });
}

Var tanh(Var a) {
  Matrix v = a.value().array().tanh().matrix();
  Graph& gr = graph_of(a);
  auto out_id = static_cast<std::uint32_t>(gr.node_count());
  return gr.record(std::move(v), {a}, "tanh", [a, out_id](Graph& g, const Matrix& up) {
    if (!g.requires_grad(a)) return;
    const Matrix& y = g.value(Var(&g, out_id));
    g.grad(a).array() += up.array() * (1.0 - y.array().square());
  });
}

Var sigmoid(Var a) {
  Matrix v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  Graph& gr = graph_of(a);
  auto out_id = static_cast<std::uint32_t>(gr.node_count());
  return gr.record(std::move(v), {a}, "sigmoid", [a, out_id](Graph& g, const Matrix& up) {
    if (!g.requires_grad(a)) return;
    const Matrix& y = g.value(Var(&g, out_id));
    g.grad(a).array() += up.array() * y.array() * (1.0 - y.array());
  });
}

Var relu(Var a) {
  Matrix v = a.value().cwiseMax(0.0);
  return graph_of(a).record(std::move(v), {a}, "relu", [a](Graph& g, const Matrix& up) {
    if (!g.requires_grad(a)) return;
    g.grad(a).array() += (g.value(a).array() > 0.0).select(up.array(), 0.0);
  });
}

Var log_floor(Var a, double floor) {
  Matrix v = a.value().cwiseMax(floor).array().log().matrix();
  return graph_of(a).record(std::move(v), {a}, "log", [a, floor](Graph& g, const Matrix& up) {
    if (!g.requires_grad(a)) return;
    const Matrix& x = g.value(a);
    g.grad(a).array() += (x.array() > floor).select(up.array() / x.array(), 0.0);
  });
}

Var concat_cols(std::span<const Var> parts) {
  check(!parts.empty(), "concat_cols: no inputs");
  Eigen::Index rows = parts[0].rows(), cols = 0;
  for (const Var& p : parts) {
    check(p.rows() == rows, "concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix v(rows, cols);
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return graph_of(parts[0]).record(std::move(v), parts, "concat_cols", [ins](Graph& g, const Matrix& up) {
    Eigen::Index o = 0;
    for (const Var& p : ins) {
      Eigen::Index c = g.value(p).cols();
      if (g.requires_grad(p)) g.grad(p) += up.middleCols(o, c);
      o += c;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  check(!parts.empty(), "concat_rows: no inputs");
  Eigen::Index cols = parts[0].cols(), rows = 0;
  for (const Var& p : parts) {
    check(p.cols() == cols, "concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix v(rows, cols);
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return graph_of(parts[0]).record(std::move(v), parts, "concat_rows", [ins](Graph& g, const Matrix& up) {
    Eigen::Index o = 0;
    for (const Var& p : ins) {
      Eigen::Index r = g.value(p).rows();
      if (g.requires_grad(p)) g.grad(p) += up.middleRows(o, r);
      o += r;
    }
  });
}

Var row(Var a, Eigen::Index r) {
  check(r >= 0 && r < a.rows(), "row: index out of range");
  Matrix v = a.value().row(r);
  return graph_of(a).record(std::move(v), {a}, "row", [a, r](Graph& g, const Matrix& up) {
    if (g.requires_grad(a)) g.grad(a).row(r) += up.row(0);
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  check(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: range out of bounds");
  Matrix v = a.value().middleCols(start, count);
  return graph_of(a).record(std::move(v), {a}, "slice_cols", [a, start, count](Graph& g, const Matrix& up) {
    if (g.requires_grad(a)) g.grad(a).middleCols(start, count) += up;
  });
}

Var softmax_rows(Var a) {
  check(a.cols() >= 1, "softmax: empty input");
  Matrix v(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    // Scalar loop so results match nn::softmax bit for bit.
    double mx = a.value()(r, 0);
    for (Eigen::Index c = 1; c < a.cols(); ++c) mx = std::max(mx, a.value()(r, c));
    double total = 0.0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      v(r, c) = std::exp(a.value()(r, c) - mx);
      total += v(r, c);
    }
    for (Eigen::Index c = 0; c < a.cols(); ++c) v(r, c) /= total;
  }
  Graph& gr = graph_of(a);
  auto out_id = static_cast<std::uint32_t>(gr.node_count());
  return gr.record(std::move(v), {a}, "softmax", [a, out_id](Graph& g, const Matrix& up) {
    if (!g.requires_grad(a)) return;
    const Matrix& y = g.value(Var(&g, out_id));
    Matrix& ga = g.grad(a);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      double dot = up.row(r).dot(y.row(r));
      ga.row(r).array() += y.row(r).array() * (up.row(r).array() - dot);
    }
  });
}

Var sum_all(Var a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return graph_of(a).record(std::move(v), {a}, "sum_all", [a](Graph& g, const Matrix& up) {
    if (g.requires_grad(a)) g.grad(a).array() += up(0, 0);
  });
}

Var sum_cols(Var a) {
  Matrix v = a.value().rowwise().sum();
  return graph_of(a).record(std::move(v), {a}, "sum_cols", [a](Graph& g, const Matrix& up) {
    if (g.requires_grad(a)) g.grad(a).colwise() += up.col(0);
  });
}

Var mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size())); }

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Eigen::Index n = x.cols();
  check(gain.rows() == 1 && gain.cols() == n && bias.rows() == 1 && bias.cols() == n,
        "layer_norm: gain/bias must be 1 x cols");
  Matrix xhat(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mean = x.value().row(r).mean();
    auto centered = (x.value().row(r).array() - mean).eval();
    double var = centered.square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (centered * inv_std(r)).matrix();
  }
  Matrix v = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  v.rowwise() += bias.value().row(0);
  return graph_of(x).record(
      std::move(v), {x, gain, bias}, "layer_norm",
      [x, gain, bias, xhat, inv_std](Graph& g, const Matrix& up) {
        if (g.requires_grad(gain)) g.grad(gain) += up.cwiseProduct(xhat).colwise().sum();
        if (g.requires_grad(bias)) g.grad(bias) += up.colwise().sum();
        if (!g.requires_grad(x)) return;
        const auto& gv = g.value(gain);
        Matrix& gx = g.grad(x);
        for (Eigen::Index r = 0; r < up.rows(); ++r) {
          Eigen::ArrayXd dxhat = (up.row(r).array() * gv.row(0).array()).transpose();
          Eigen::ArrayXd xh = xhat.row(r).array().transpose();
          double m1 = dxhat.mean();
          double m2 = (dxhat * xh).mean();
          gx.row(r).array() += (inv_std(r) * (dxhat - m1 - xh * m2)).transpose();
        }
      });
}

Var gather_rows(Var table, std::span<const int> ids) {
  Matrix v(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    check(ids[i] >= 0 && ids[i] < table.rows(), "gather_rows: id out of range");
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return graph_of(table).record(std::move(v), {table}, "gather_rows", [table, idv](Graph& g, const Matrix& up) {
    if (!g.requires_grad(table)) return;
    Matrix& gt = g.grad(table);
    for (std::size_t i = 0; i < idv.size(); ++i) gt.row(idv[i]) += up.row(static_cast<Eigen::Index>(i));
  });
}

Var scatter_cols(Var a, std::span<const int> targets, Eigen::Index width) {
  check(a.rows() == 1 && a.cols() == static_cast<Eigen::Index>(targets.size()),
        "scatter_cols: need a 1 x n input with n targets");
  Matrix v = Matrix::Zero(1, width);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    check(targets[i] >= 0 && targets[i] < width, "scatter_cols: target out of range");
    v(0, targets[i]) += a.value()(0, static_cast<Eigen::Index>(i));
  }
  std::vector<int> tv(targets.begin(), targets.end());
  return graph_of(a).record(std::move(v), {a}, "scatter_cols", [a, tv](Graph& g, const Matrix& up) {
    if (!g.requires_grad(a)) return;
    Matrix& ga = g.grad(a);
    for (std::size_t i = 0; i < tv.size(); ++i) ga(0, static_cast<Eigen::Index>(i)) += up(0, tv[i]);
  });
}

Var pad_cols(Var a, Eigen::Index width) {
  check(width >= a.cols(), "pad_cols: width smaller than input");
  Matrix v = Matrix::Zero(a.rows(), width);
  v.leftCols(a.cols()) = a.value();
  Eigen::Index n = a.cols();
  return graph_of(a).record(std::move(v), {a}, "pad_cols", [a, n](Graph& g, const Matrix& up) {
    if (g.requires_grad(a)) g.grad(a) += up.leftCols(n);
  });
}

Var pick(Var a, Eigen::Index r, Eigen::Index c) {
  check(r >= 0 && r < a.rows() && c >= 0 && c < a.cols(), "pick: index out of range");
  Matrix v(1, 1);
  v(0, 0) = a.value()(r, c);
  return graph_of(a).record(std::move(v), {a}, "pick", [a, r, c](Graph& g, const Matrix& up) {
    if (g.requires_grad(a)) g.grad(a)(r, c) += up(0, 0);
  });
}

Var mask_mul(Var a, const Matrix& mask) {
  check(mask.rows() == a.rows() && mask.cols() == a.cols(), "mask_mul: shapes differ");
  Matrix v = a.value().cwiseProduct(mask);
  return graph_of(a).record(std::move(v), {a}, "dropout", [a, mask](Graph& g, const Matrix& up) {
    if (g.requires_grad(a)) g.grad(a) += up.cwiseProduct(mask);
  });
}

Var lstm_cell(Var z, Var c) {
  const Eigen::Index h = c.cols();
  check(z.rows() == 1 && c.rows() == 1 && z.cols() == 4 * h, "lstm_cell: expected z 1x4H and c 1xH");
  const auto& zv = z.value();
  Eigen::ArrayXXd i = 1.0 / (1.0 + (-zv.middleCols(0, h).array()).exp());
  Eigen::ArrayXXd f = 1.0 / (1.0 + (-zv.middleCols(h, h).array()).exp());
  Eigen::ArrayXXd o = 1.0 / (1.0 + (-zv.middleCols(2 * h, h).array()).exp());
  Eigen::ArrayXXd gg = zv.middleCols(3 * h, h).array().tanh();
  Eigen::ArrayXXd c_new = f * c.value().array() + i * gg;
  Eigen::ArrayXXd tc = c_new.tanh();
  Matrix v(1, 2 * h);
  v.leftCols(h) = (o * tc).matrix();
  v.rightCols(h) = c_new.matrix();
  return graph_of(z).record(
      std::move(v), {z, c}, "lstm_cell", [z, c, i, f, o, gg, tc, h](Graph& g, const Matrix& up) {
        Eigen::ArrayXXd dh = up.leftCols(h).array();
        Eigen::ArrayXXd dc = up.rightCols(h).array() + dh * o * (1.0 - tc.square());
        if (g.requires_grad(z)) {
          Matrix& gz = g.grad(z);
          gz.middleCols(0, h).array() += dc * gg * i * (1.0 - i);
          gz.middleCols(h, h).array() += dc * g.value(c).array() * f * (1.0 - f);
          gz.middleCols(2 * h, h).array() += dh * tc * o * (1.0 - o);
          gz.middleCols(3 * h, h).array() += dc * i * (1.0 - gg.square());
        }
        if (g.requires_grad(c)) g.grad(c).array() += dc * f;
      });
}

}  // namespace drmn::ad
