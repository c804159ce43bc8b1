#include "drmn/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "drmn/error.hpp"
#include "drmn/io.hpp"

namespace drmn {

double GenerationResult::gate_mean() const {
  if (gates.empty()) return 0.0;
  double s = 0.0;
  for (double g : gates) s += g;
  return s / static_cast<double>(gates.size());
}

std::string GenerationResult::text() const {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  if (!(config.keep_prob > 0.0 && config.keep_prob <= 1.0)) throw UsageError("keep_prob must lie in (0, 1]");
  SplitMix64 rng(seed);
  encoder_ = Encoder::create(params_, config_, rng);
  memory_ = SharedMemory::create(params_, config_.state_width(), rng);
  decoder_ = Decoder::create(params_, config_, encoder_.word_embedding(), rng);
}

Encoded Model::encode(Graph& g, const ModelInput& input, const nn::Dropout& dropout) const {
  if (input.context.empty()) throw DataError("example '" + input.id + "' has no context");
  for (const auto& t : input.context)
    if (t.role < 0 || t.role >= config_.role_count) throw DataError("role id out of range");
  Encoded e;
  e.conversation = encoder_.encode_conversation(g, input.context, dropout);
  if (input.use_memory) {
    for (const auto& s : input.similar) e.similar.push_back(encoder_.encode_similar(g, s.id, s.turns, dropout));
  }
  e.plan = make_memory_plan(e.similar, config_.memory_keys);
  e.memory = memory_.build(g, e.conversation.last_query, e.plan);

  SourceBankBuilder bank(config_.vocab_size);
  for (std::size_t i = 0; i < input.context.size(); ++i)
    bank.add(e.conversation.utterances[i].states, input.context[i],
             i < input.borrowed_turns ? Origin::kSimilar : Origin::kTarget);
  if (!config_.bank_target_only) {
    for (std::size_t c = 0; c < e.similar.size(); ++c)
      for (std::size_t i = 0; i < e.similar[c].utterances.size(); ++i)
        bank.add(e.similar[c].utterances[i].states, input.similar[c].turns[i], Origin::kSimilar);
  }
  e.bank = bank.finish();
  e.start = decoder_.start(g, e.conversation.summary, e.memory.memory);
  return e;
}

std::vector<int> Model::targets(const ModelInput& input, const SourceBank& bank) const {
  if (input.gold_ids.size() < 2) throw DataError("example '" + input.id + "' has no framed gold");
  std::vector<int> out;
  for (std::size_t j = 1; j < input.gold_ids.size(); ++j) {
    int id = input.gold_ids[j];
    if (id == Vocabulary::kUnk && j - 1 < input.gold_tokens.size()) {
      int ext = bank.oov_id(input.gold_tokens[j - 1]);
      if (ext >= 0) id = ext;
    }
    out.push_back(id);
  }
  return out;
}

LossResult Model::loss(Graph& g, const ModelInput& input, const nn::Dropout& dropout,
                       std::optional<double> gate_override) const {
  Encoded e = encode(g, input, dropout);
  LossResult r;
  r.targets = targets(input, e.bank);
  DecoderState state = e.start;
  std::vector<Var> terms;
  for (std::size_t j = 0; j < r.targets.size(); ++j) {
    GenerationStep s = decoder_.step(g, state, input.gold_ids[j], e.bank, dropout, gate_override);
    const auto& vf = s.final.value();
    Eigen::Index best = 0;
    vf.row(0).maxCoeff(&best);
    if (best == r.targets[j]) ++r.correct;
    terms.push_back(ad::log_floor(ad::pick(s.final, 0, r.targets[j]), kProbFloor));
    r.steps.push_back(s);
  }
  r.loss = ad::scale(ad::sum_all(ad::concat_cols(terms)), -1.0 / static_cast<double>(terms.size()));
  return r;
}

namespace {

struct Hypothesis {
  DecoderState state;
  std::vector<int> ids;
  std::vector<double> gates;
  std::vector<CopyInfo> copies;
  double logprob = 0.0;
  bool finished = false;

  double normalized() const { return logprob / static_cast<double>(std::max<std::size_t>(ids.size(), 1)); }
};

CopyInfo provenance(const GenerationStep& s, const SourceBank& bank, int chosen) {
  const double p = s.gate.scalar();
  const auto& a = s.attention.value();
  double copy = 0.0;
  int best = -1;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    if (bank.ext_ids[i] != chosen) continue;
    copy += a(0, static_cast<Eigen::Index>(i));
    if (best < 0 || a(0, static_cast<Eigen::Index>(i)) > a(0, best)) best = static_cast<int>(i);
  }
  double gen = chosen < bank.vocab_size ? p * s.vocab.value()(0, chosen) : 0.0;
  CopyInfo info;
  if (best >= 0 && (1.0 - p) * copy > gen) {
    info.copied = true;
    info.position = best;
    info.origin = bank.origins[static_cast<std::size_t>(best)];
  }
  return info;
}

bool selectable(int id) { return id != Vocabulary::kPad && id != Vocabulary::kBos; }

}  // namespace

GenerationResult Model::generate(const ModelInput& input, const Vocabulary& vocab,
                                 const GenerateOptions& options) const {
  if (options.beam_width < 1) throw UsageError("beam width must be at least 1");
  if (options.max_len < 1) throw UsageError("max_len must be at least 1");
  Graph g(&params_, false);
  nn::Dropout off;
  Encoded e = encode(g, input, off);
  const std::size_t width = static_cast<std::size_t>(options.beam_width);

  std::vector<Hypothesis> alive(1);
  alive[0].state = e.start;
  std::vector<Hypothesis> finished;

  struct Candidate {
    std::size_t parent;
    int id;
    double logprob;
    double score;
  };

  for (int t = 0; t < options.max_len && !alive.empty() && finished.size() < width; ++t) {
    std::vector<Candidate> pool;
    std::vector<GenerationStep> steps;
    std::vector<DecoderState> states;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      DecoderState st = alive[h].state;
      int prev = alive[h].ids.empty() ? Vocabulary::kBos : alive[h].ids.back();
      steps.push_back(decoder_.step(g, st, prev, e.bank, off));
      states.push_back(st);
      const auto& vf = steps.back().final.value();
      // Best `width` tokens of this hypothesis, lowest id first on ties.
      std::vector<int> order;
      for (int id = 0; id < vf.cols(); ++id)
        if (selectable(id)) order.push_back(id);
      std::size_t keep = std::min(width, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                        [&](int a, int b) { return vf(0, a) > vf(0, b) || (vf(0, a) == vf(0, b) && a < b); });
      for (std::size_t i = 0; i < keep; ++i) {
        int id = order[i];
        double lp = alive[h].logprob + std::log(std::max(vf(0, id), kProbFloor));
        pool.push_back({h, id, lp, lp / static_cast<double>(alive[h].ids.size() + 1)});
      }
    }
    std::stable_sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
      return a.score > b.score;
    });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < pool.size() && next.size() < width; ++i) {
      const Candidate& c = pool[i];
      Hypothesis hyp = alive[c.parent];
      hyp.state = states[c.parent];
      hyp.ids.push_back(c.id);
      hyp.logprob = c.logprob;
      hyp.gates.push_back(steps[c.parent].gate.scalar());
      hyp.copies.push_back(provenance(steps[c.parent], e.bank, c.id));
      if (c.id == Vocabulary::kEos) {
        hyp.finished = true;
        finished.push_back(std::move(hyp));
        if (finished.size() >= width) break;
      } else {
        next.push_back(std::move(hyp));
      }
    }
    alive = std::move(next);
  }

  const std::vector<Hypothesis>& source = finished.empty() ? alive : finished;
  const Hypothesis* best = &source.front();
  for (const auto& h : source)
    if (h.normalized() > best->normalized()) best = &h;

  GenerationResult r;
  r.finished = best->finished;
  r.gates = best->gates;
  r.copies = best->copies;
  for (std::size_t i = 0; i < best->ids.size(); ++i) {
    int id = best->ids[i];
    if (id == Vocabulary::kEos) break;
    r.ids.push_back(id);
    r.tokens.push_back(e.bank.surface(id, vocab));
  }
  for (const auto& c : r.copies)
    if (c.copied && c.origin == Origin::kSimilar) ++r.copied_from_similar;
  return r;
}

std::size_t Model::load_word_vectors(const std::string& path, const Vocabulary& vocab) {
  std::istringstream in(read_file(path));
  auto& table = params_[encoder_.word_embedding()].value;
  std::string line;
  std::size_t replaced = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> v;
    double x;
    while (fields >> x) v.push_back(x);
    if (line_no == 1 && v.size() == 1) continue;  // "count dim" header
    if (static_cast<int>(v.size()) != config_.word_dim)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(config_.word_dim) +
                      " values");
    if (!vocab.contains(token)) continue;
    int id = vocab.id(token);
    for (int j = 0; j < config_.word_dim; ++j) table(id, j) = v[static_cast<std::size_t>(j)];
    ++replaced;
  }
  return replaced;
}

}  // namespace drmn
