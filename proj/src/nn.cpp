#include "drmn/nn.hpp"

#include <cmath>

#include "drmn/error.hpp"

namespace drmn::nn {

std::vector<double> softmax(std::span<const double> scores) {
  if (scores.empty()) throw UsageError("softmax of an empty vector");
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - mx);
    total += out[i];
  }
  for (double& o : out) o /= total;
  return out;
}

namespace {

void check_keep(double keep_prob) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw UsageError("keep_prob must lie in (0, 1]");
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double keep_prob, SplitMix64& rng) {
  Matrix mask(rows, cols);
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    mask.data()[i] = rng.uniform() < keep_prob ? 1.0 / keep_prob : 0.0;
  return mask;
}

}  // namespace

Matrix dropout(const Matrix& x, double keep_prob, bool training, SplitMix64& rng) {
  check_keep(keep_prob);
  if (!training || keep_prob == 1.0) return x;
  return x.cwiseProduct(dropout_mask(x.rows(), x.cols(), keep_prob, rng));
}

Dropout::Dropout(double keep_prob, bool training, SplitMix64* rng)
    : keep_prob_(keep_prob), training_(training), rng_(rng) {
  check_keep(keep_prob);
  if (active() && rng_ == nullptr) throw UsageError("training-mode dropout needs a generator");
}

Var Dropout::operator()(Var x) const {
  if (!active()) return x;
  return ad::mask_mul(x, dropout_mask(x.rows(), x.cols(), keep_prob_, *rng_));
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, SplitMix64& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

Matrix xavier(Eigen::Index rows, Eigen::Index cols, SplitMix64& rng) {
  return uniform_matrix(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)), rng);
}

Var scaled_dot_attention(Var q, Var k, Var v, double d, Var* weights) {
  if (k.rows() == 0 || v.rows() == 0) throw UsageError("attention over zero keys");
  if (q.cols() != k.cols()) throw UsageError("attention: query and key widths differ");
  if (k.rows() != v.rows()) throw UsageError("attention: key and value counts differ");
  Var logits = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(d));
  Var w = ad::softmax_rows(logits);
  if (weights) *weights = w;
  return ad::matmul(w, v);
}

LstmLayer LstmLayer::create(ParamSet& params, const std::string& prefix, int input, int hidden,
                            SplitMix64& rng) {
  LstmLayer l;
  l.input = input;
  l.hidden = hidden;
  double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  l.w = params.add(prefix + ".w", uniform_matrix(input, 4 * hidden, bound, rng));
  l.u = params.add(prefix + ".u", uniform_matrix(hidden, 4 * hidden, bound, rng));
  Matrix b = Matrix::Zero(1, 4 * hidden);
  b.middleCols(hidden, hidden).setConstant(1.0);  // forget gate
  l.b = params.add(prefix + ".b", std::move(b));
  return l;
}

LstmLayer::State LstmLayer::step(Graph& g, Var x, const State& prev) const {
  Var z = ad::add(ad::add(ad::matmul(x, g.param(w)), ad::matmul(prev.h, g.param(u))), g.param(b));
  Var hc = ad::lstm_cell(z, prev.c);
  return {ad::slice_cols(hc, 0, hidden), ad::slice_cols(hc, hidden, hidden)};
}

Var LstmLayer::run(Graph& g, Var seq, bool reverse) const {
  const Eigen::Index n = seq.rows();
  Var proj = ad::add(ad::matmul(seq, g.param(w)), g.param(b));
  Var u_mat = g.param(u);
  Var h = g.zeros(1, hidden);
  Var c = g.zeros(1, hidden);
  std::vector<Var> out(static_cast<std::size_t>(n));
  for (Eigen::Index step = 0; step < n; ++step) {
    Eigen::Index t = reverse ? n - 1 - step : step;
    Var z = ad::add(ad::row(proj, t), ad::matmul(h, u_mat));
    Var hc = ad::lstm_cell(z, c);
    h = ad::slice_cols(hc, 0, hidden);
    c = ad::slice_cols(hc, hidden, hidden);
    out[static_cast<std::size_t>(t)] = h;
  }
  return ad::concat_rows(out);
}

BiLstm BiLstm::create(ParamSet& params, const std::string& prefix, int input, int hidden, int layers,
                      SplitMix64& rng) {
  if (layers < 1) throw UsageError("BiLstm needs at least one layer");
  BiLstm m;
  for (int l = 0; l < layers; ++l) {
    int in = l == 0 ? input : 2 * hidden;
    std::string p = prefix + ".l" + std::to_string(l);
    m.forward.push_back(LstmLayer::create(params, p + ".fwd", in, hidden, rng));
    m.backward.push_back(LstmLayer::create(params, p + ".bwd", in, hidden, rng));
  }
  return m;
}

Var BiLstm::run(Graph& g, Var seq, const Dropout& dropout) const {
  Var x = seq;
  for (std::size_t l = 0; l < forward.size(); ++l) {
    Var f = forward[l].run(g, x, false);
    Var b = backward[l].run(g, x, true);
    x = dropout(ad::concat_cols({f, b}));
  }
  return x;
}

FfnNorm FfnNorm::create(ParamSet& params, const std::string& prefix, int width, int inner,
                        SplitMix64& rng) {
  FfnNorm f;
  f.wf = params.add(prefix + ".wf", xavier(width, inner, rng));
  f.bf = params.add(prefix + ".bf", Matrix::Zero(1, inner));
  f.wh = params.add(prefix + ".wh", xavier(inner, width, rng));
  f.bh = params.add(prefix + ".bh", Matrix::Zero(1, width));
  f.gain = params.add(prefix + ".ln_gain", Matrix::Ones(1, width));
  f.bias = params.add(prefix + ".ln_bias", Matrix::Zero(1, width));
  return f;
}

Var FfnNorm::operator()(Graph& g, Var x) const {
  Var inner = ad::relu(ad::add(ad::matmul(x, g.param(wf)), g.param(bf)));
  Var ffn = ad::add(ad::matmul(inner, g.param(wh)), g.param(bh));
  return ad::layer_norm_rows(ad::add(x, ffn), g.param(gain), g.param(bias), kEps);
}

Linear Linear::create(ParamSet& params, const std::string& prefix, int in, int out, SplitMix64& rng) {
  Linear l;
  l.w = params.add(prefix + ".w", xavier(in, out, rng));
  l.b = params.add(prefix + ".b", Matrix::Zero(1, out));
  return l;
}

Var Linear::operator()(Graph& g, Var x) const {
  return ad::add(ad::matmul(x, g.param(w)), g.param(b));
}

}  // namespace drmn::nn
