#pragma once

#include <optional>
#include <string>
#include <vector>

#include "drmn/decoder.hpp"
#include "drmn/encoder.hpp"
#include "drmn/esm.hpp"

namespace drmn {

struct SimilarConversation {
  std::string id;
  std::vector<EncodedTurn> turns;
};

/// Everything one forward pass needs.
struct ModelInput {
  std::string id;
  std::vector<EncodedTurn> context;
  /// The first `borrowed_turns` context turns were taken from similar
  /// conversations; their bank positions are tagged as similar.
  std::size_t borrowed_turns = 0;
  std::vector<SimilarConversation> similar;  // retrieval order
  bool use_memory = true;
  std::vector<int> gold_ids;               // BOS ... EOS; may be empty for generation
  std::vector<std::string> gold_tokens;    // parallel to gold_ids without framing
};

struct Encoded {
  ConversationEncoding conversation;
  std::vector<SimilarEncoding> similar;
  std::vector<MemoryItem> plan;
  MemoryResult memory;
  SourceBank bank;
  DecoderState start;
};

struct LossResult {
  Var loss;  // mean negative log-likelihood per target token
  std::vector<int> targets;
  std::vector<GenerationStep> steps;
  int correct = 0;  // argmax hits
};

struct CopyInfo {
  bool copied = false;
  int position = -1;
  Origin origin = Origin::kTarget;
};

struct GenerationResult {
  std::vector<int> ids;  // extended ids, EOS excluded
  std::vector<std::string> tokens;
  std::vector<double> gates;
  std::vector<CopyInfo> copies;
  bool finished = false;  // EOS reached before max_len
  int copied_from_similar = 0;
  double gate_mean() const;
  std::string text() const;
};

struct GenerateOptions {
  int beam_width = 1;  // 1 = greedy
  int max_len = 40;
};

class Model {
 public:
  static constexpr double kProbFloor = 1e-12;

  Model() = default;
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }
  const Encoder& encoder() const { return encoder_; }
  const SharedMemory& memory() const { return memory_; }
  const Decoder& decoder() const { return decoder_; }

  Encoded encode(Graph& g, const ModelInput& input, const nn::Dropout& dropout) const;
  /// Decoder targets: gold ids after BOS, with out-of-vocabulary gold tokens
  /// redirected to their bank copy entry when one exists.
  std::vector<int> targets(const ModelInput& input, const SourceBank& bank) const;
  /// Teacher-forced loss.
  LossResult loss(Graph& g, const ModelInput& input, const nn::Dropout& dropout,
                  std::optional<double> gate_override = std::nullopt) const;
  GenerationResult generate(const ModelInput& input, const Vocabulary& vocab, const GenerateOptions& options) const;

  /// Overwrites word-embedding rows from a word2vec text file; returns the
  /// number of rows replaced. Vector width must equal word_dim.
  std::size_t load_word_vectors(const std::string& path, const Vocabulary& vocab);

 private:
  ModelConfig config_;
  ad::ParamSet params_;
  Encoder encoder_;
  SharedMemory memory_;
  Decoder decoder_;
};

}  // namespace drmn
