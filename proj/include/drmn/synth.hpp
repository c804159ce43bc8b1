#pragma once

#include <cstddef>
#include <cstdint>

#include "drmn/corpus.hpp"

namespace drmn {

/// Templated court-style dialogues (plaintiff, judge, defendant). Conversations
/// come in clusters of near-duplicates that share a surname, two topic words
/// and a statute number. The statute number appears only in each
/// conversation's final judge turn, so a judge turn can recover it only from a
/// retrieved sibling conversation.
struct SynthOptions {
  std::size_t conversations = 1000;
  std::size_t cluster_size = 3;
  std::uint64_t seed = 7;
};

Corpus synthesize_corpus(const SynthOptions& options);

}  // namespace drmn
