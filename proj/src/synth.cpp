#include "drmn/synth.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "drmn/random.hpp"

namespace drmn {
namespace {

constexpr std::array<const char*, 14> kSyllables = {"ka", "lo", "mi", "ren", "tas", "vo", "bel",
                                                    "dor", "san", "qui", "po", "lem", "tu", "far"};

constexpr std::array<const char*, 24> kTopics = {
    "loan",   "house",  "car",      "rent",   "salary", "contract", "land",  "shop",
    "fence",  "garden", "tractor",  "boat",   "roof",   "deposit",  "horse", "bakery",
    "window", "piano",  "computer", "wheat",  "barn",   "truck",    "wedding", "tuition"};

template <std::size_t N>
const char* pick(const std::array<const char*, N>& items, SplitMix64& rng) {
  return items[rng.below(N)];
}

std::string fill(const std::string& pattern, const std::string& surname, const std::string& topic1,
                 const std::string& topic2, const std::string& amount, const std::string& statute) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '{') {
      auto end = pattern.find('}', i);
      auto key = pattern.substr(i + 1, end - i - 1);
      if (key == "name") out += surname;
      else if (key == "t1") out += topic1;
      else if (key == "t2") out += topic2;
      else if (key == "amount") out += amount;
      else if (key == "statute") out += statute;
      i = end;
    } else {
      out += pattern[i];
    }
  }
  return out;
}

struct Cluster {
  std::string surname;
  std::string topic1;
  std::string topic2;
  std::string statute;
};

}  // namespace

Corpus synthesize_corpus(const SynthOptions& options) {
  SplitMix64 rng(options.seed);
  const std::size_t cluster_size = std::max<std::size_t>(1, options.cluster_size);
  const std::size_t n_clusters = (options.conversations + cluster_size - 1) / cluster_size;

  // Unique surnames: three syllables, with a numeric suffix once combinations run out.
  const std::size_t n_syl = kSyllables.size();
  std::vector<std::size_t> name_codes(n_syl * n_syl * n_syl);
  std::iota(name_codes.begin(), name_codes.end(), 0);
  std::shuffle(name_codes.begin(), name_codes.end(), rng);

  const std::size_t statute_span = std::max<std::size_t>(900, 2 * n_clusters);
  std::vector<std::size_t> statutes(statute_span);
  std::iota(statutes.begin(), statutes.end(), 100);
  std::shuffle(statutes.begin(), statutes.end(), rng);

  std::vector<Cluster> clusters;
  for (std::size_t c = 0; c < n_clusters; ++c) {
    Cluster cl;
    std::size_t code = name_codes[c % name_codes.size()];
    cl.surname = std::string(kSyllables[code / (n_syl * n_syl)]) + kSyllables[(code / n_syl) % n_syl] +
                 kSyllables[code % n_syl];
    if (c >= name_codes.size()) cl.surname += std::to_string(c / name_codes.size());
    cl.topic1 = pick(kTopics, rng);
    do {
      cl.topic2 = pick(kTopics, rng);
    } while (cl.topic2 == cl.topic1);
    cl.statute = std::to_string(statutes[c]);
    clusters.push_back(std::move(cl));
  }

  static const std::array<const char*, 3> kOpen = {
      "my name is {name} and i want the {t1} money back .",
      "i am {name} , the defendant owes me for the {t1} .",
      "{name} here , i ask the court about the {t1} debt ."};
  static const std::array<const char*, 2> kAsk = {"please describe the {t1} dispute .",
                                                  "what happened with the {t1} ?"};
  static const std::array<const char*, 3> kReply = {
      "i borrowed {amount} for the {t2} from {name} .",
      "the {t2} payment of {amount} is not finished .",
      "{name} gave me {amount} for the {t2} but it was a gift ."};
  static const std::array<const char*, 2> kConfirm = {"yes , that is correct .",
                                                      "i have the receipt for the {t2} ."};
  static const std::array<const char*, 2> kRuling = {
      "{name} , according to article {statute} you must repay the {t2} .",
      "according to article {statute} , {name} should receive the {t2} money ."};

  std::vector<Conversation> convs;
  convs.reserve(options.conversations);
  for (std::size_t i = 0; i < options.conversations; ++i) {
    const Cluster& cl = clusters[i / cluster_size];
    char id[64];
    std::snprintf(id, sizeof id, "c%05zu-%zu", i / cluster_size, i % cluster_size);
    std::string amount = std::to_string(1000 * (1 + rng.below(49)));
    auto turn = [&](const char* role, const char* pattern) {
      Utterance u;
      u.role = role;
      u.text = fill(pattern, cl.surname, cl.topic1, cl.topic2, amount, cl.statute);
      u.tokens = tokenize(u.text);
      return u;
    };
    Conversation conv;
    conv.id = id;
    conv.turns.push_back(turn("plaintiff", pick(kOpen, rng)));
    conv.turns.push_back(turn("judge", pick(kAsk, rng)));
    conv.turns.push_back(turn("defendant", pick(kReply, rng)));
    if (rng.below(2) == 0) conv.turns.push_back(turn("plaintiff", pick(kConfirm, rng)));
    conv.turns.push_back(turn("judge", pick(kRuling, rng)));
    convs.push_back(std::move(conv));
  }
  return Corpus(std::move(convs));
}

}  // namespace drmn
