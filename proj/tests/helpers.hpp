#pragma once

#include <functional>
#include <string>
#include <vector>

#include "drmn/autodiff.hpp"
#include "drmn/gradcheck.hpp"
#include "drmn/model.hpp"
#include "drmn/random.hpp"

namespace drmn::testing {

inline ad::Matrix random_matrix(Eigen::Index r, Eigen::Index c, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  ad::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

/// Gradient check of `op` in isolation: every input becomes a parameter and
/// the loss is a fixed random projection of the op's output.
inline GradCheckReport check_op(const std::vector<ad::Matrix>& inputs,
                                const std::function<ad::Var(ad::Graph&, const std::vector<ad::Var>&)>& op,
                                std::uint64_t seed = 11) {
  ad::ParamSet params;
  for (std::size_t i = 0; i < inputs.size(); ++i) params.add("in" + std::to_string(i), inputs[i]);
  ad::Matrix proj;
  {
    ad::Graph g(&params, false);
    std::vector<ad::Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(g.param(i));
    ad::Var out = op(g, vars);
    SplitMix64 rng(seed);
    proj = random_matrix(out.rows(), out.cols(), rng);
  }
  return grad_check(
      params,
      [&](ad::Graph& g) {
        std::vector<ad::Var> vars;
        for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(g.param(i));
        return ad::sum_all(ad::hadamard(op(g, vars), g.constant(proj)));
      },
      1e-4, 1e-3);
}

/// Vocabulary w0..w{n-5} plus the reserved entries, roles "a" and "b".
inline Vocabulary word_vocab(int size = 50) {
  Vocabulary v;
  for (int i = 0; v.size() < size; ++i) v.append("w" + std::to_string(i), size - i);
  v.set_roles({"a", "b"});
  return v;
}

inline ModelConfig tiny_config(int vocab_size, MemoryKeys keys = MemoryKeys::kWords) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.role_count = 2;
  c.word_dim = 16;
  c.role_dim = 8;
  c.hidden = 12;
  c.layers = 2;
  c.keep_prob = 1.0;
  c.memory_keys = keys;
  return c;
}

/// A turn of `len` random tokens; with probability `oov_rate` a position holds
/// one of a few out-of-vocabulary surfaces, so repeats occur.
inline EncodedTurn random_turn(SplitMix64& rng, const Vocabulary& vocab, std::size_t len, double oov_rate = 0.0) {
  EncodedTurn t;
  t.role = static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab.role_count())));
  for (std::size_t i = 0; i < len; ++i) {
    if (rng.uniform() < oov_rate) {
      t.ids.push_back(Vocabulary::kUnk);
      t.tokens.push_back("oov" + std::to_string(rng.below(3)));
    } else {
      int id = Vocabulary::kReserved + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab.size() - Vocabulary::kReserved)));
      t.ids.push_back(id);
      t.tokens.push_back(vocab.token(id));
    }
  }
  return t;
}

/// Random context, similar conversations and gold of bounded sizes.
inline ModelInput random_input(SplitMix64& rng, const Vocabulary& vocab, std::size_t max_turns = 3,
                               std::size_t max_len = 5, std::size_t max_similar = 2, double oov_rate = 0.2) {
  ModelInput in;
  in.id = "r" + std::to_string(rng.below(1000000));
  std::size_t n = 1 + rng.below(max_turns);
  for (std::size_t i = 0; i < n; ++i) in.context.push_back(random_turn(rng, vocab, 1 + rng.below(max_len), oov_rate));
  std::size_t k = rng.below(max_similar + 1);
  for (std::size_t c = 0; c < k; ++c) {
    SimilarConversation s;
    s.id = "s" + std::to_string(c);
    std::size_t m = 1 + rng.below(max_turns);
    for (std::size_t i = 0; i < m; ++i) s.turns.push_back(random_turn(rng, vocab, 1 + rng.below(max_len), oov_rate));
    in.similar.push_back(std::move(s));
  }
  EncodedTurn gold = random_turn(rng, vocab, 1 + rng.below(max_len), oov_rate);
  in.gold_ids.push_back(Vocabulary::kBos);
  in.gold_ids.insert(in.gold_ids.end(), gold.ids.begin(), gold.ids.end());
  in.gold_ids.push_back(Vocabulary::kEos);
  in.gold_tokens = gold.tokens;
  return in;
}

}  // namespace drmn::testing
