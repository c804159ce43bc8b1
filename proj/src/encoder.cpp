#include "drmn/encoder.hpp"

#include <cmath>

#include "drmn/error.hpp"

namespace drmn {

namespace {
// Unit-variance uniform embeddings.
const double kEmbeddingBound = std::sqrt(3.0);
}  // namespace

AttentionPool AttentionPool::create(ad::ParamSet& params, const std::string& prefix, int width,
                                    SplitMix64& rng) {
  AttentionPool a;
  a.w = params.add(prefix + ".w", nn::xavier(width, width, rng));
  a.b = params.add(prefix + ".b", ad::Matrix::Zero(1, width));
  return a;
}

std::pair<Var, Var> AttentionPool::operator()(Graph& g, Var states) const {
  Var keys = ad::tanh(ad::add(ad::matmul(states, g.param(w)), g.param(b)));
  Var scores = ad::transpose(ad::sum_cols(ad::hadamard(keys, states)));
  Var weights = ad::softmax_rows(scores);
  return {weights, ad::matmul(weights, states)};
}

Encoder Encoder::create(ad::ParamSet& params, const ModelConfig& config, SplitMix64& rng) {
  if (config.vocab_size <= 0 || config.role_count <= 0) throw UsageError("encoder needs vocabulary and roles");
  if (config.word_dim <= 0 || config.role_dim <= 0 || config.hidden <= 0 || config.layers <= 0)
    throw UsageError("encoder dimensions must be positive");
  Encoder e;
  e.width_ = config.state_width();
  e.word_emb_ = params.add("embed.word", nn::uniform_matrix(config.vocab_size, config.word_dim, kEmbeddingBound, rng));
  e.role_emb_ = params.add("embed.role", nn::uniform_matrix(config.role_count, config.role_dim, kEmbeddingBound, rng));
  e.utterance_lstm_ =
      nn::BiLstm::create(params, "enc.utt", config.word_dim + config.role_dim, config.hidden, config.layers, rng);
  e.word_attention_ = AttentionPool::create(params, "enc.word_attn", e.width_, rng);
  e.conversation_lstm_ = nn::BiLstm::create(params, "enc.conv", e.width_, config.hidden, config.layers, rng);
  e.sentence_attention_ = AttentionPool::create(params, "enc.sent_attn", e.width_, rng);
  return e;
}

Var Encoder::embed_turn(Graph& g, const EncodedTurn& turn, const nn::Dropout& dropout) const {
  if (turn.ids.empty()) throw DataError("cannot embed an empty turn");
  Var words = ad::gather_rows(g.param(word_emb_), turn.ids);
  std::vector<int> roles(turn.ids.size(), turn.role);
  Var role_rows = ad::gather_rows(g.param(role_emb_), roles);
  return dropout(ad::concat_cols({words, role_rows}));
}

UtteranceEncoding Encoder::encode_utterance(Graph& g, Var rows, const nn::Dropout& dropout) const {
  UtteranceEncoding u;
  u.states = utterance_lstm_.run(g, rows, dropout);
  std::tie(u.weights, u.pooled) = word_attention_(g, u.states);
  return u;
}

ConversationEncoding Encoder::encode_conversation(Graph& g, std::span<const EncodedTurn> turns,
                                                  const nn::Dropout& dropout) const {
  if (turns.empty()) throw DataError("conversation encoding needs at least one turn");
  ConversationEncoding c;
  std::vector<Var> pooled;
  for (const auto& t : turns) {
    c.utterances.push_back(encode_utterance(g, embed_turn(g, t, dropout), dropout));
    pooled.push_back(c.utterances.back().pooled);
  }
  c.last_query = c.utterances.back().pooled;
  c.sentence_states = conversation_lstm_.run(g, ad::concat_rows(pooled), dropout);
  std::tie(c.weights, c.pooled) = sentence_attention_(g, c.sentence_states);
  Var self = nn::scaled_dot_attention(c.sentence_states, c.sentence_states, c.sentence_states,
                                      static_cast<double>(width_), &c.summary_attention);
  c.summary = ad::matmul(c.weights, self);
  return c;
}

SimilarEncoding Encoder::encode_similar(Graph& g, const std::string& id, std::span<const EncodedTurn> turns,
                                        const nn::Dropout& dropout) const {
  if (turns.empty()) throw DataError("similar conversation '" + id + "' has no turns");
  SimilarEncoding s;
  s.id = id;
  for (const auto& t : turns) s.utterances.push_back(encode_utterance(g, embed_turn(g, t, dropout), dropout));
  return s;
}

}  // namespace drmn
