#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace drmn {

/// Lowercases ASCII and splits on whitespace; every ASCII punctuation
/// character becomes its own token. Bytes >= 0x80 are kept as word characters.
std::vector<std::string> tokenize(std::string_view text);

struct Utterance {
  std::string role;
  std::string text;
  std::vector<std::string> tokens;
};

struct Conversation {
  std::string id;
  std::vector<Utterance> turns;
};

class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Conversation> conversations);

  const std::vector<Conversation>& conversations() const { return conversations_; }
  std::size_t size() const { return conversations_.size(); }
  bool empty() const { return conversations_.empty(); }
  const Conversation& operator[](std::size_t i) const { return conversations_[i]; }

  /// Index of the conversation with this id, if present.
  std::optional<std::size_t> find(const std::string& id) const;

  /// Sorted role labels appearing anywhere in the corpus.
  std::vector<std::string> roles() const;

  /// Conversations whose id hashes into the requested split.
  Corpus subset(const std::vector<std::size_t>& indices) const;

 private:
  std::vector<Conversation> conversations_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// Parses a JSONL corpus. Throws DataError naming the offending line for
/// malformed records, duplicate ids, conversations with fewer than two turns
/// and turns that tokenize to nothing. Unknown fields are ignored.
Corpus load_corpus(const std::string& path);
Corpus parse_corpus(std::string_view jsonl, const std::string& source = "<memory>");

/// One JSON object per line, `{"id":..,"turns":[{"role":..,"text":..}]}`.
std::string serialize_corpus(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::string& path);

enum class Split { kTrain, kDev, kTest };

/// 80/10/10 split keyed on a stable hash of the conversation id.
Split split_of(const std::string& conversation_id);
std::vector<std::size_t> split_indices(const Corpus& corpus, Split split);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kReserved = 4;

  Vocabulary();

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::int64_t frequency(int id) const { return freqs_.at(static_cast<std::size_t>(id)); }

  void set_roles(std::vector<std::string> roles);
  const std::vector<std::string>& roles() const { return roles_; }
  int role_count() const { return static_cast<int>(roles_.size()); }
  /// Throws DataError for roles outside the closed role set.
  int role_id(const std::string& role) const;

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  /// `token<TAB>frequency` per line in id order, reserved entries first.
  void save(const std::string& path) const;
  std::string serialize() const;
  static Vocabulary load(const std::string& path);
  static Vocabulary parse(std::string_view text);

  // Used by build_vocab.
  void append(const std::string& token, std::int64_t freq);

 private:
  std::vector<std::string> tokens_;
  std::vector<std::int64_t> freqs_;
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> roles_;
  std::unordered_map<std::string, int> role_ids_;
};

inline constexpr int kDefaultMinFreq = 2;
inline constexpr int kDefaultMaxVocab = 50000;

/// Keeps tokens with frequency >= min_freq, most frequent first with
/// lexicographic tie-breaking, truncated so the total size (reserved ids
/// included) is at most max_size. The role set is collected from every turn.
Vocabulary build_vocab(const Corpus& corpus, int min_freq = kDefaultMinFreq,
                       int max_size = kDefaultMaxVocab);

struct TrainingExample {
  std::string id;  // "<conversation id>#<turn index>"
  std::string conversation_id;
  std::size_t turn_index = 0;  // 0-based index of the gold turn
  std::vector<Utterance> context;
  Utterance gold;
  std::string target_role;
};

/// One example per target-role turn that has at least one earlier turn.
std::vector<TrainingExample> make_examples(const Corpus& corpus, const std::string& target_role);

struct TruncationLimits {
  std::size_t max_tokens_per_turn = 30;
  std::size_t max_context_turns = 20;
};

struct EncodedTurn {
  int role = 0;
  std::vector<int> ids;
  std::vector<std::string> tokens;  // surface strings, parallel to ids
};

struct EncodedExample {
  std::string id;
  std::vector<EncodedTurn> context;
  std::vector<int> gold_ids;           // BOS ... EOS
  std::vector<std::string> gold_tokens;  // without framing
  int target_role = 0;
};

EncodedTurn encode_turn(const Utterance& turn, const Vocabulary& vocab,
                        const TruncationLimits& limits = {});

/// Maps tokens through the vocabulary (UNK for misses), frames the gold turn
/// with BOS/EOS and keeps only the newest max_context_turns context turns.
EncodedExample encode_example(const TrainingExample& example, const Vocabulary& vocab,
                              const TruncationLimits& limits = {});

}  // namespace drmn
