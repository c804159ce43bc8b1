#pragma once

#include <optional>
#include <string>
#include <vector>

#include "drmn/encoder.hpp"

namespace drmn {

enum class Origin { kTarget, kSimilar };

/// Word states and surfaces the decoder attends to and copies from.
/// Tokens outside the vocabulary receive extended ids vocab_size + k, one per
/// distinct surface string.
struct SourceBank {
  Var states;  // N x D
  std::vector<std::string> tokens;
  std::vector<int> ext_ids;
  std::vector<Origin> origins;
  std::vector<std::string> oov_tokens;
  int vocab_size = 0;

  std::size_t size() const { return tokens.size(); }
  int extended_size() const { return vocab_size + static_cast<int>(oov_tokens.size()); }
  /// Extended id of an out-of-vocabulary surface present in the bank, or -1.
  int oov_id(const std::string& token) const;
  /// Surface string for any id in the extended vocabulary.
  std::string surface(int id, const Vocabulary& vocab) const;
};

/// Appends one utterance's word states; `turn` supplies the parallel ids and surfaces.
class SourceBankBuilder {
 public:
  explicit SourceBankBuilder(int vocab_size) { bank_.vocab_size = vocab_size; }
  void add(Var states, const EncodedTurn& turn, Origin origin);
  SourceBank finish();

 private:
  SourceBank bank_;
  std::vector<Var> parts_;
};

struct DecoderState {
  nn::LstmLayer::State lstm;
  Var merged;  // X + memory, reused by the gate every step
};

struct GenerationStep {
  Var state;      // 1 x D
  Var attention;  // 1 x N
  Var context;    // 1 x D
  Var vocab;      // 1 x V
  Var gate;       // 1 x 1
  Var final;      // 1 x extended
};

/// Single-layer LSTM pointer-generator.
class Decoder {
 public:
  static Decoder create(ad::ParamSet& params, const ModelConfig& config, std::size_t word_embedding,
                        SplitMix64& rng);

  DecoderState start(Graph& g, Var summary, Var memory) const;
  /// Feeds `prev` (ids past the vocabulary are fed as UNK) and scores the next
  /// token. `gate_override` replaces the learned gate with a constant.
  GenerationStep step(Graph& g, DecoderState& state, int prev, const SourceBank& bank, const nn::Dropout& dropout,
                      std::optional<double> gate_override = std::nullopt) const;

  int width() const { return width_; }
  int vocab_size() const { return vocab_size_; }

 private:
  std::size_t word_emb_ = 0;
  nn::LstmLayer lstm_;
  nn::Linear init_;
  nn::Linear mix_;      // [C s] -> D
  nn::Linear project_;  // D -> V
  std::size_t gate_merged_ = 0, gate_context_ = 0, gate_state_ = 0, gate_bias_ = 0;
  int width_ = 0;
  int vocab_size_ = 0;
};

}  // namespace drmn
