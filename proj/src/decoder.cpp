#include "drmn/decoder.hpp"

#include <cmath>

#include "drmn/error.hpp"

namespace drmn {

int SourceBank::oov_id(const std::string& token) const {
  for (std::size_t k = 0; k < oov_tokens.size(); ++k)
    if (oov_tokens[k] == token) return vocab_size + static_cast<int>(k);
  return -1;
}

std::string SourceBank::surface(int id, const Vocabulary& vocab) const {
  if (id >= vocab_size) {
    std::size_t k = static_cast<std::size_t>(id - vocab_size);
    if (k >= oov_tokens.size()) throw UsageError("extended id out of range");
    return oov_tokens[k];
  }
  return vocab.token(id);
}

void SourceBankBuilder::add(Var states, const EncodedTurn& turn, Origin origin) {
  if (static_cast<std::size_t>(states.rows()) != turn.ids.size())
    throw UsageError("bank: state rows and tokens differ");
  parts_.push_back(states);
  for (std::size_t i = 0; i < turn.ids.size(); ++i) {
    int id = turn.ids[i];
    const std::string& tok = turn.tokens[i];
    if (id == Vocabulary::kUnk) {
      id = bank_.oov_id(tok);
      if (id < 0) {
        id = bank_.extended_size();
        bank_.oov_tokens.push_back(tok);
      }
    }
    bank_.tokens.push_back(tok);
    bank_.ext_ids.push_back(id);
    bank_.origins.push_back(origin);
  }
}

SourceBank SourceBankBuilder::finish() {
  if (parts_.empty()) throw UsageError("source bank is empty");
  bank_.states = ad::concat_rows(parts_);
  parts_.clear();
  return std::move(bank_);
}

Decoder Decoder::create(ad::ParamSet& params, const ModelConfig& config, std::size_t word_embedding,
                        SplitMix64& rng) {
  Decoder d;
  d.width_ = config.state_width();
  d.vocab_size_ = config.vocab_size;
  d.word_emb_ = word_embedding;
  d.lstm_ = nn::LstmLayer::create(params, "dec.lstm", config.word_dim, d.width_, rng);
  d.init_ = nn::Linear::create(params, "dec.init", d.width_, d.width_, rng);
  d.mix_ = nn::Linear::create(params, "dec.mix", 2 * d.width_, d.width_, rng);
  d.project_ = nn::Linear::create(params, "dec.out", d.width_, config.vocab_size, rng);
  d.gate_merged_ = params.add("dec.gate.merged", nn::xavier(d.width_, 1, rng));
  d.gate_context_ = params.add("dec.gate.context", nn::xavier(d.width_, 1, rng));
  d.gate_state_ = params.add("dec.gate.state", nn::xavier(d.width_, 1, rng));
  d.gate_bias_ = params.add("dec.gate.bias", ad::Matrix::Zero(1, 1));
  return d;
}

DecoderState Decoder::start(Graph& g, Var summary, Var memory) const {
  if (summary.cols() != width_ || memory.cols() != width_) throw UsageError("decoder start: width mismatch");
  DecoderState s;
  s.merged = ad::add(summary, memory);
  s.lstm.h = ad::tanh(init_(g, s.merged));
  s.lstm.c = g.zeros(1, width_);
  return s;
}

GenerationStep Decoder::step(Graph& g, DecoderState& state, int prev, const SourceBank& bank,
                             const nn::Dropout& dropout, std::optional<double> gate_override) const {
  if (bank.size() == 0) throw UsageError("decoder step over an empty bank");
  int fed = prev >= vocab_size_ ? Vocabulary::kUnk : prev;
  if (fed < 0) throw UsageError("negative token id");
  Var x = dropout(ad::gather_rows(g.param(word_emb_), std::span<const int>(&fed, 1)));
  state.lstm = lstm_.step(g, x, state.lstm);

  GenerationStep s;
  s.state = state.lstm.h;
  s.context = nn::scaled_dot_attention(s.state, bank.states, bank.states, static_cast<double>(width_), &s.attention);
  Var hidden = mix_(g, ad::concat_cols({s.context, s.state}));
  s.vocab = ad::softmax_rows(project_(g, hidden));
  if (gate_override) {
    s.gate = g.constant(ad::Matrix::Constant(1, 1, *gate_override));
  } else {
    Var logit = ad::add(ad::add(ad::matmul(state.merged, g.param(gate_merged_)),
                                ad::matmul(s.context, g.param(gate_context_))),
                        ad::add(ad::matmul(s.state, g.param(gate_state_)), g.param(gate_bias_)));
    s.gate = ad::sigmoid(logit);
  }
  const int width = bank.extended_size();
  Var generated = ad::scale_by(ad::pad_cols(s.vocab, width), s.gate);
  Var copied = ad::scale_by(ad::scatter_cols(s.attention, bank.ext_ids, width), ad::one_minus(s.gate));
  s.final = ad::add(generated, copied);
  return s;
}

}  // namespace drmn
