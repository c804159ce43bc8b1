#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "drmn/corpus.hpp"
#include "drmn/nn.hpp"

namespace drmn {

using ad::Graph;
using ad::Var;

/// Which vectors the memory recurrence reads from each similar utterance.
enum class MemoryKeys {
  kWords,   // the utterance's word-state matrix
  kPooled,  // its single attention-pooled vector
};

struct ModelConfig {
  int vocab_size = 0;
  int role_count = 0;
  int word_dim = 300;
  int role_dim = 100;
  int hidden = 300;  // per direction; encoder states are 2 * hidden wide
  int layers = 2;
  double keep_prob = 0.8;
  MemoryKeys memory_keys = MemoryKeys::kWords;
  bool bank_target_only = false;

  int state_width() const { return 2 * hidden; }
};

struct UtteranceEncoding {
  Var states;   // l x D word states
  Var weights;  // 1 x l word attention
  Var pooled;   // 1 x D
};

struct ConversationEncoding {
  std::vector<UtteranceEncoding> utterances;
  Var sentence_states;    // n x D conversation-layer states
  Var weights;            // 1 x n sentence attention
  Var pooled;             // 1 x D conversation vector
  Var last_query;         // pooled utterance vector of the final context turn
  Var summary;            // X: self-attended, sentence-attention pooled
  Var summary_attention;  // n x n self-attention weights behind X
};

struct SimilarEncoding {
  std::string id;
  std::vector<UtteranceEncoding> utterances;
};

/// Attention pooling with score tanh(h W + b)^T h for each row h.
struct AttentionPool {
  std::size_t w = 0;
  std::size_t b = 0;

  static AttentionPool create(ad::ParamSet& params, const std::string& prefix, int width, SplitMix64& rng);
  /// Returns {weights (1 x n), pooled (1 x D)}.
  std::pair<Var, Var> operator()(Graph& g, Var states) const;
};

/// Hierarchical encoder: a word-level Bi-LSTM with attention pooling per
/// utterance, then a sentence-level Bi-LSTM with attention pooling. Similar
/// conversations share the utterance layer.
class Encoder {
 public:
  static Encoder create(ad::ParamSet& params, const ModelConfig& config, SplitMix64& rng);

  /// Row j = [word embedding of token j, role embedding of the turn].
  Var embed_turn(Graph& g, const EncodedTurn& turn, const nn::Dropout& dropout) const;
  UtteranceEncoding encode_utterance(Graph& g, Var rows, const nn::Dropout& dropout) const;
  ConversationEncoding encode_conversation(Graph& g, std::span<const EncodedTurn> turns,
                                           const nn::Dropout& dropout) const;
  SimilarEncoding encode_similar(Graph& g, const std::string& id, std::span<const EncodedTurn> turns,
                                 const nn::Dropout& dropout) const;

  std::size_t word_embedding() const { return word_emb_; }
  std::size_t role_embedding() const { return role_emb_; }

 private:
  std::size_t word_emb_ = 0;
  std::size_t role_emb_ = 0;
  nn::BiLstm utterance_lstm_;
  nn::BiLstm conversation_lstm_;
  AttentionPool word_attention_;
  AttentionPool sentence_attention_;
  int width_ = 0;
};

}  // namespace drmn
