#include "drmn/esm.hpp"

#include <cmath>
#include <cstdio>

#include "drmn/error.hpp"

namespace drmn {

std::vector<MemoryItem> make_memory_plan(std::span<const SimilarEncoding> similar, MemoryKeys keys) {
  std::vector<MemoryItem> plan;
  for (const auto& conv : similar) {
    for (std::size_t i = 0; i < conv.utterances.size(); ++i) {
      const auto& u = conv.utterances[i];
      plan.push_back({conv.id, static_cast<int>(i), keys == MemoryKeys::kWords ? u.states : u.pooled});
    }
  }
  return plan;
}

SharedMemory SharedMemory::create(ad::ParamSet& params, int width, SplitMix64& rng) {
  SharedMemory m;
  m.width_ = width;
  m.block_ = nn::FfnNorm::create(params, "esm.ffn", width, width, rng);
  return m;
}

Var SharedMemory::read(Graph& g, Var from, Var keys, Var* weights, Var* attended) const {
  if (keys.rows() == 0) throw DataError("memory read over an empty utterance");
  if (keys.cols() != from.cols()) throw UsageError("memory read: width mismatch");
  Var a = nn::scaled_dot_attention(from, keys, keys, static_cast<double>(width_), weights);
  if (attended) *attended = a;
  return block_(g, a);
}

MemoryResult SharedMemory::build(Graph& g, Var query, std::span<const MemoryItem> plan) const {
  MemoryResult r;
  if (plan.empty()) {
    r.memory = g.zeros(1, width_);
    return r;
  }
  Var y = query;
  int t = 0;
  for (const auto& item : plan) {
    MemoryStep s;
    s.step = ++t;
    s.conversation_id = item.conversation_id;
    s.utterance_index = item.utterance_index;
    y = read(g, y, item.keys, &s.weights, &s.attended);
    s.memory = y;
    r.trace.push_back(std::move(s));
  }
  r.memory = y;
  return r;
}

std::string format_trace(const MemoryResult& result) {
  std::string out;
  char buf[64];
  for (const auto& s : result.trace) {
    out += std::to_string(s.step) + " " + s.conversation_id + " " + std::to_string(s.utterance_index);
    const auto& w = s.weights.value();
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      std::snprintf(buf, sizeof buf, " %.6f", w.data()[i]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace drmn
