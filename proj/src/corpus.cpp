#include "drmn/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "drmn/error.hpp"
#include "drmn/io.hpp"
#include "drmn/random.hpp"

namespace drmn {

using nlohmann::ordered_json;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

Corpus::Corpus(std::vector<Conversation> conversations) : conversations_(std::move(conversations)) {
  for (std::size_t i = 0; i < conversations_.size(); ++i) {
    if (!by_id_.emplace(conversations_[i].id, i).second) {
      throw DataError("duplicate conversation id '" + conversations_[i].id + "'");
    }
  }
}

std::optional<std::size_t> Corpus::find(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Corpus::roles() const {
  std::set<std::string> roles;
  for (const auto& c : conversations_)
    for (const auto& t : c.turns) roles.insert(t.role);
  return {roles.begin(), roles.end()};
}

Corpus Corpus::subset(const std::vector<std::size_t>& indices) const {
  std::vector<Conversation> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(conversations_.at(i));
  return Corpus(std::move(out));
}

Corpus parse_corpus(std::string_view jsonl, const std::string& source) {
  std::vector<Conversation> convs;
  std::unordered_map<std::string, std::size_t> first_line;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    std::string_view line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    auto where = source + ":" + std::to_string(line_no) + ": ";
    ordered_json rec;
    try {
      rec = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw DataError(where + "malformed JSON: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string())
      throw DataError(where + "record needs a string field 'id'");
    if (!rec.contains("turns") || !rec["turns"].is_array())
      throw DataError(where + "record needs an array field 'turns'");

    Conversation conv;
    conv.id = rec["id"].get<std::string>();
    for (const auto& t : rec["turns"]) {
      if (!t.is_object() || !t.contains("role") || !t.contains("text") || !t["role"].is_string() ||
          !t["text"].is_string())
        throw DataError(where + "each turn needs string fields 'role' and 'text'");
      Utterance u;
      u.role = t["role"].get<std::string>();
      u.text = t["text"].get<std::string>();
      u.tokens = tokenize(u.text);
      if (u.role.empty()) throw DataError(where + "empty role");
      if (u.tokens.empty()) throw DataError(where + "turn with no tokens in '" + conv.id + "'");
      conv.turns.push_back(std::move(u));
    }
    if (conv.turns.empty()) throw DataError(where + "empty turns in '" + conv.id + "'");
    if (conv.turns.size() < 2)
      throw DataError(where + "conversation '" + conv.id + "' needs at least two turns");
    auto [it, inserted] = first_line.emplace(conv.id, line_no);
    if (!inserted)
      throw DataError(where + "duplicate id '" + conv.id + "' (first seen on line " +
                      std::to_string(it->second) + ")");
    convs.push_back(std::move(conv));
  }
  return Corpus(std::move(convs));
}

Corpus load_corpus(const std::string& path) {
  return parse_corpus(read_file(path), path);
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& c : corpus.conversations()) {
    ordered_json rec;
    rec["id"] = c.id;
    rec["turns"] = ordered_json::array();
    for (const auto& t : c.turns) {
      ordered_json jt;
      jt["role"] = t.role;
      jt["text"] = t.text;
      rec["turns"].push_back(std::move(jt));
    }
    out += rec.dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  write_file_atomic(path, serialize_corpus(corpus));
}

Split split_of(const std::string& conversation_id) {
  auto bucket = fnv1a64(conversation_id.data(), conversation_id.size()) % 10;
  if (bucket < 8) return Split::kTrain;
  return bucket == 8 ? Split::kDev : Split::kTest;
}

std::vector<std::size_t> split_indices(const Corpus& corpus, Split split) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (split_of(corpus[i].id) == split) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<unk>", "<bos>", "<eos>"}) append(t, 0);
}

void Vocabulary::append(const std::string& token, std::int64_t freq) {
  if (ids_.count(token)) throw DataError("duplicate vocabulary entry '" + token + "'");
  ids_.emplace(token, size());
  tokens_.push_back(token);
  freqs_.push_back(freq);
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

void Vocabulary::set_roles(std::vector<std::string> roles) {
  roles_ = std::move(roles);
  role_ids_.clear();
  for (std::size_t i = 0; i < roles_.size(); ++i) role_ids_[roles_[i]] = static_cast<int>(i);
}

int Vocabulary::role_id(const std::string& role) const {
  auto it = role_ids_.find(role);
  if (it == role_ids_.end()) throw DataError("unknown role '" + role + "'");
  return it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (int i = 0; i < size(); ++i) {
    out += tokens_[static_cast<std::size_t>(i)];
    out += '\t';
    out += std::to_string(freqs_[static_cast<std::size_t>(i)]);
    out += '\n';
  }
  return out;
}

void Vocabulary::save(const std::string& path) const { write_file_atomic(path, serialize()); }

Vocabulary Vocabulary::parse(std::string_view text) {
  Vocabulary v;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.rfind('\t');
    if (tab == std::string::npos)
      throw DataError("vocabulary line " + std::to_string(line_no) + ": expected token<TAB>frequency");
    std::string token = line.substr(0, tab);
    std::int64_t freq = 0;
    try {
      freq = std::stoll(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw DataError("vocabulary line " + std::to_string(line_no) + ": bad frequency");
    }
    if (line_no <= kReserved) {
      if (token != v.tokens_[static_cast<std::size_t>(line_no - 1)])
        throw DataError("vocabulary line " + std::to_string(line_no) + ": expected reserved token '" +
                        v.tokens_[static_cast<std::size_t>(line_no - 1)] + "'");
      continue;
    }
    v.append(token, freq);
  }
  if (line_no < kReserved) throw DataError("vocabulary file lacks the reserved-token header");
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) { return parse(read_file(path)); }

Vocabulary build_vocab(const Corpus& corpus, int min_freq, int max_size) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& c : corpus.conversations())
    for (const auto& t : c.turns)
      for (const auto& tok : t.tokens) ++counts[tok];

  std::vector<std::pair<std::string, std::int64_t>> items;
  for (auto& [tok, n] : counts)
    if (n >= min_freq) items.emplace_back(tok, n);
  // std::map iteration is already lexicographic, so a stable sort on
  // frequency leaves equal counts in lexicographic order.
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary v;
  for (const auto& [tok, n] : items) {
    if (v.size() >= max_size) break;
    v.append(tok, n);
  }
  v.set_roles(corpus.roles());
  return v;
}

std::vector<TrainingExample> make_examples(const Corpus& corpus, const std::string& target_role) {
  std::vector<TrainingExample> out;
  for (const auto& c : corpus.conversations()) {
    for (std::size_t t = 1; t < c.turns.size(); ++t) {
      if (c.turns[t].role != target_role) continue;
      TrainingExample ex;
      ex.id = c.id + "#" + std::to_string(t);
      ex.conversation_id = c.id;
      ex.turn_index = t;
      ex.context.assign(c.turns.begin(), c.turns.begin() + static_cast<std::ptrdiff_t>(t));
      ex.gold = c.turns[t];
      ex.target_role = target_role;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

EncodedTurn encode_turn(const Utterance& turn, const Vocabulary& vocab, const TruncationLimits& limits) {
  EncodedTurn et;
  et.role = vocab.role_id(turn.role);
  std::size_t n = std::min(turn.tokens.size(), limits.max_tokens_per_turn);
  et.tokens.assign(turn.tokens.begin(), turn.tokens.begin() + static_cast<std::ptrdiff_t>(n));
  et.ids = vocab.encode(et.tokens);
  return et;
}

EncodedExample encode_example(const TrainingExample& example, const Vocabulary& vocab,
                              const TruncationLimits& limits) {
  if (example.context.empty()) throw DataError("example '" + example.id + "' has empty context");
  if (example.gold.role != example.target_role)
    throw DataError("example '" + example.id + "' gold role differs from the target role");
  EncodedExample out;
  out.id = example.id;
  out.target_role = vocab.role_id(example.target_role);
  std::size_t first = example.context.size() > limits.max_context_turns
                          ? example.context.size() - limits.max_context_turns
                          : 0;
  for (std::size_t i = first; i < example.context.size(); ++i)
    out.context.push_back(encode_turn(example.context[i], vocab, limits));

  std::size_t n = std::min(example.gold.tokens.size(), limits.max_tokens_per_turn);
  out.gold_tokens.assign(example.gold.tokens.begin(),
                         example.gold.tokens.begin() + static_cast<std::ptrdiff_t>(n));
  out.gold_ids.push_back(Vocabulary::kBos);
  for (const auto& t : out.gold_tokens) out.gold_ids.push_back(vocab.id(t));
  out.gold_ids.push_back(Vocabulary::kEos);
  return out;
}

}  // namespace drmn
