#pragma once

#include <string>
#include <vector>

#include "drmn/encoder.hpp"

namespace drmn {

/// One utterance consumed by the memory recurrence.
struct MemoryItem {
  std::string conversation_id;
  int utterance_index = 0;
  Var keys;  // rows read at this step (word states or a single pooled row)
};

/// Utterances of the similar conversations in retrieval order, each
/// conversation's turns in their original order.
std::vector<MemoryItem> make_memory_plan(std::span<const SimilarEncoding> similar, MemoryKeys keys);

struct MemoryStep {
  int step = 0;  // 1-based
  std::string conversation_id;
  int utterance_index = 0;
  Var weights;   // 1 x rows(keys)
  Var attended;  // 1 x D, before the feed-forward block
  Var memory;    // 1 x D
};

struct MemoryResult {
  Var memory;  // final memory vector, zeros when the plan is empty
  std::vector<MemoryStep> trace;
};

/// Iterative attention memory: the query reads the first utterance, then each
/// memory vector reads the next one; every read passes through the shared
/// feed-forward + layer-norm block.
class SharedMemory {
 public:
  static SharedMemory create(ad::ParamSet& params, int width, SplitMix64& rng);

  Var init(Graph& g, Var query, Var keys) const { return read(g, query, keys, nullptr, nullptr); }
  Var step(Graph& g, Var previous, Var keys) const { return read(g, previous, keys, nullptr, nullptr); }
  MemoryResult build(Graph& g, Var query, std::span<const MemoryItem> plan) const;

  const nn::FfnNorm& block() const { return block_; }
  int width() const { return width_; }

 private:
  Var read(Graph& g, Var from, Var keys, Var* weights, Var* attended) const;

  nn::FfnNorm block_;
  int width_ = 0;
};

/// Plain-text dump: one line per step, `step conv_id utt_idx w1 w2 ...`.
std::string format_trace(const MemoryResult& result);

}  // namespace drmn
