#include "drmn/training.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <sstream>

#include "drmn/error.hpp"
#include "drmn/io.hpp"

namespace drmn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

Mode parse_mode(const std::string& name) {
  if (name == "drmn") return Mode::kDrmn;
  if (name == "esm_off") return Mode::kEsmOff;
  if (name == "concat_tc_sc") return Mode::kConcat;
  throw UsageError("unknown mode '" + name + "' (expected drmn, esm_off or concat_tc_sc)");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::kDrmn: return "drmn";
    case Mode::kEsmOff: return "esm_off";
    case Mode::kConcat: return "concat_tc_sc";
  }
  return "drmn";
}

MemoryKeys parse_memory_keys(const std::string& name) {
  if (name == "words") return MemoryKeys::kWords;
  if (name == "pooled") return MemoryKeys::kPooled;
  throw UsageError("unknown memory keys '" + name + "' (expected words or pooled)");
}

std::string memory_keys_name(MemoryKeys keys) { return keys == MemoryKeys::kWords ? "words" : "pooled"; }

// ---------------------------------------------------------------------------
// TrainConfig

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  if (!(in >> out) || !(in >> std::ws).eof()) throw UsageError("config key '" + key + "': bad value '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw UsageError("config key '" + key + "': expected true or false");
}

}  // namespace

void TrainConfig::validate() const {
  if (word_dim <= 0 || role_dim <= 0 || hidden <= 0 || layers <= 0) throw UsageError("dimensions must be positive");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw UsageError("keep_prob must lie in (0, 1]");
  if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
  if (batch_size < 1) throw UsageError("batch_size must be at least 1");
  if (top_k < 0 || top_k > 3) throw UsageError("top_k must be 0, 1, 2 or 3");
  if ((top_k == 0) != (mode == Mode::kEsmOff)) throw UsageError("top_k = 0 exactly when mode = esm_off");
  if (max_epochs < 0) throw UsageError("max_epochs must be non-negative");
  if (patience < 1) throw UsageError("patience must be at least 1");
  if (clip_norm < 0.0) throw UsageError("clip_norm must be non-negative");
  if (max_tokens_per_turn < 1 || max_context_turns < 1) throw UsageError("truncation limits must be positive");
  if (target_role.empty()) throw UsageError("target_role is empty");
}

ModelConfig TrainConfig::model_config(int vocab_size, int role_count) const {
  ModelConfig m;
  m.vocab_size = vocab_size;
  m.role_count = role_count;
  m.word_dim = word_dim;
  m.role_dim = role_dim;
  m.hidden = hidden;
  m.layers = layers;
  m.keep_prob = keep_prob;
  m.memory_keys = memory_keys;
  m.bank_target_only = bank_target_only;
  return m;
}

std::string TrainConfig::serialize() const {
  std::string s;
  auto put = [&](const char* k, const std::string& v) { s += std::string(k) + "=" + v + "\n"; };
  put("word_dim", std::to_string(word_dim));
  put("role_dim", std::to_string(role_dim));
  put("hidden", std::to_string(hidden));
  put("layers", std::to_string(layers));
  put("keep_prob", fmt_double(keep_prob));
  put("learning_rate", fmt_double(learning_rate));
  put("batch_size", std::to_string(batch_size));
  put("top_k", std::to_string(top_k));
  put("mode", mode_name(mode));
  put("optimizer", optimizer_name(optimizer));
  put("seed", std::to_string(seed));
  put("max_epochs", std::to_string(max_epochs));
  put("patience", std::to_string(patience));
  put("clip_norm", fmt_double(clip_norm));
  put("memory_keys", memory_keys_name(memory_keys));
  put("bank_target_only", bank_target_only ? "true" : "false");
  put("target_role", target_role);
  put("max_tokens_per_turn", std::to_string(max_tokens_per_turn));
  put("max_context_turns", std::to_string(max_context_turns));
  return s;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "word_dim") word_dim = parse_number<int>(key, value);
  else if (key == "role_dim") role_dim = parse_number<int>(key, value);
  else if (key == "hidden") hidden = parse_number<int>(key, value);
  else if (key == "layers") layers = parse_number<int>(key, value);
  else if (key == "keep_prob") keep_prob = parse_number<double>(key, value);
  else if (key == "learning_rate") learning_rate = parse_number<double>(key, value);
  else if (key == "batch_size") batch_size = parse_number<int>(key, value);
  else if (key == "top_k") top_k = parse_number<int>(key, value);
  else if (key == "mode") mode = parse_mode(value);
  else if (key == "optimizer") optimizer = parse_optimizer(value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "max_epochs") max_epochs = parse_number<int>(key, value);
  else if (key == "patience") patience = parse_number<int>(key, value);
  else if (key == "clip_norm") clip_norm = parse_number<double>(key, value);
  else if (key == "memory_keys") memory_keys = parse_memory_keys(value);
  else if (key == "bank_target_only") bank_target_only = parse_bool(key, value);
  else if (key == "target_role") target_role = value;
  else if (key == "max_tokens_per_turn") max_tokens_per_turn = parse_number<std::size_t>(key, value);
  else if (key == "max_context_turns") max_context_turns = parse_number<std::size_t>(key, value);
  else throw UsageError("unknown config key '" + key + "'");
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line without '=': " + line);
    c.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Inputs

std::vector<ModelInput> build_inputs(const std::vector<TrainingExample>& examples, const Corpus& corpus,
                                     const Vocabulary& vocab, const RetrievalCache* cache, Mode mode, int top_k,
                                     const TruncationLimits& limits) {
  if (mode != Mode::kEsmOff && cache == nullptr) throw UsageError("mode " + mode_name(mode) + " needs a retrieval cache");
  std::vector<ModelInput> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    EncodedExample enc = encode_example(ex, vocab, limits);
    ModelInput in;
    in.id = enc.id;
    in.gold_ids = std::move(enc.gold_ids);
    in.gold_tokens = std::move(enc.gold_tokens);
    in.use_memory = mode == Mode::kDrmn;

    std::vector<SimilarConversation> similar;
    if (mode != Mode::kEsmOff) {
      const auto* neighbors = cache->find(ex.id);
      if (neighbors == nullptr) throw DataError("retrieval cache has no entry for example '" + ex.id + "'");
      std::size_t k = std::min(neighbors->size(), static_cast<std::size_t>(top_k));
      for (std::size_t i = 0; i < k; ++i) {
        const auto& n = (*neighbors)[i];
        auto idx = corpus.find(n.id);
        if (!idx) throw DataError("retrieved conversation '" + n.id + "' is not in the corpus");
        SimilarConversation sc;
        sc.id = n.id;
        for (const auto& t : corpus[*idx].turns) sc.turns.push_back(encode_turn(t, vocab, limits));
        similar.push_back(std::move(sc));
      }
    }

    if (mode == Mode::kConcat) {
      std::vector<EncodedTurn> turns;
      for (auto& sc : similar)
        for (auto& t : sc.turns) turns.push_back(std::move(t));
      std::size_t borrowed = turns.size();
      for (auto& t : enc.context) turns.push_back(std::move(t));
      std::size_t drop = turns.size() > limits.max_context_turns ? turns.size() - limits.max_context_turns : 0;
      in.context.assign(std::make_move_iterator(turns.begin() + static_cast<std::ptrdiff_t>(drop)),
                        std::make_move_iterator(turns.end()));
      in.borrowed_turns = borrowed > drop ? borrowed - drop : 0;
    } else {
      in.context = std::move(enc.context);
      if (mode == Mode::kDrmn) in.similar = std::move(similar);
    }
    out.push_back(std::move(in));
  }
  return out;
}

Dataset build_dataset(const Corpus& corpus, const Vocabulary& vocab, const RetrievalCache* cache,
                      const TrainConfig& config) {
  std::vector<TrainingExample> parts[3];
  for (auto& ex : make_examples(corpus, config.target_role))
    parts[static_cast<int>(split_of(ex.conversation_id))].push_back(std::move(ex));
  Dataset d;
  auto build = [&](const std::vector<TrainingExample>& e) {
    return build_inputs(e, corpus, vocab, cache, config.mode, config.top_k, config.limits());
  };
  d.train = build(parts[static_cast<int>(Split::kTrain)]);
  d.dev = build(parts[static_cast<int>(Split::kDev)]);
  d.test = build(parts[static_cast<int>(Split::kTest)]);
  return d;
}

std::string format_log_header() { return "epoch,train_loss,dev_loss,seconds\n"; }

std::string format_log_line(const EpochLog& log) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.10f,%.10f,%.3f\n", log.epoch, log.train_loss, log.dev_loss, log.seconds);
  return buf;
}

EvalStats evaluate_loss(const Model& model, const std::vector<ModelInput>& inputs) {
  EvalStats s;
  if (inputs.empty()) return s;
  nn::Dropout off;
  std::size_t correct = 0;
  for (const auto& in : inputs) {
    Graph g(&model.params(), false);
    LossResult r = model.loss(g, in, off);
    s.loss += r.loss.scalar();
    correct += static_cast<std::size_t>(r.correct);
    s.tokens += r.targets.size();
  }
  s.loss /= static_cast<double>(inputs.size());
  s.accuracy = s.tokens ? static_cast<double>(correct) / static_cast<double>(s.tokens) : 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_ += s;
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& data, const std::string& source) : data_(data), source_(source) {}
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    auto n = pod<std::uint64_t>();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void raw(char* p, std::size_t n) {
    need(n);
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw DataError(source_ + ": truncated checkpoint");
  }
  const std::string& data_;
  std::string source_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'D', 'R', 'M', 'N'};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.raw(kMagic, 4);
  w.pod<std::uint32_t>(Checkpoint::kVersion);
  std::string blob = c.config.serialize() + "vocab_size=" + std::to_string(c.vocab_size) + "\n";
  for (const auto& r : c.roles) blob += "role=" + r + "\n";
  w.str(blob);
  w.pod<std::int32_t>(c.epoch);
  w.pod<std::uint64_t>(c.rng_state);
  w.pod<std::uint64_t>(c.optimizer_steps);
  w.pod<double>(c.best_dev);
  w.pod<std::int32_t>(c.bad_epochs);
  w.pod<std::uint64_t>(c.tensors.size());
  for (const auto& [name, m] : c.tensors) {
    w.str(name);
    w.pod<std::uint32_t>(2);
    w.pod<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    w.pod<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    w.raw(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  return w.take();
}

Checkpoint parse_checkpoint(const std::string& bytes, const std::string& source) {
  Reader r(bytes, source);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError(source + ": not a checkpoint file");
  auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    throw DataError(source + ": checkpoint version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(Checkpoint::kVersion) + ")");
  Checkpoint c;
  std::istringstream blob(r.str());
  std::string line;
  while (std::getline(blob, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(source + ": malformed config blob");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "vocab_size") c.vocab_size = std::stoi(value);
    else if (key == "role") c.roles.push_back(value);
    else c.config.set(key, value);
  }
  c.epoch = r.pod<std::int32_t>();
  c.rng_state = r.pod<std::uint64_t>();
  c.optimizer_steps = r.pod<std::uint64_t>();
  c.best_dev = r.pod<double>();
  c.bad_epochs = r.pod<std::int32_t>();
  auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str();
    auto rank = r.pod<std::uint32_t>();
    if (rank != 2) throw DataError(source + ": tensor '" + name + "' has unsupported rank");
    auto rows = r.pod<std::uint64_t>();
    auto cols = r.pod<std::uint64_t>();
    if (rows > (1u << 28) || cols > (1u << 28)) throw DataError(source + ": tensor '" + name + "' is implausibly large");
    ad::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    r.raw(reinterpret_cast<char*>(m.data()), sizeof(double) * rows * cols);
    c.tensors.emplace_back(std::move(name), std::move(m));
  }
  if (!r.done()) throw DataError(source + ": trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  write_file_atomic(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path), path); }

// ---------------------------------------------------------------------------
// Trainer

namespace {

constexpr std::uint64_t kTrainerStream = 0x7261696E6572ULL;

void restore(ad::ParamSet& params, const std::map<std::string, const ad::Matrix*>& tensors, const std::string& prefix,
             std::vector<ad::Matrix>* into) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = tensors.find(prefix + params[i].name);
    if (it == tensors.end()) throw DataError("checkpoint lacks tensor '" + prefix + params[i].name + "'");
    const ad::Matrix& m = *it->second;
    if (m.rows() != params[i].value.rows() || m.cols() != params[i].value.cols())
      throw DataError("checkpoint tensor '" + prefix + params[i].name + "' has the wrong shape");
    if (into) (*into)[i] = m;
    else params[i].value = m;
  }
}

}  // namespace

Trainer::Trainer(const TrainConfig& config, int vocab_size, std::vector<std::string> roles)
    : config_(config), roles_(std::move(roles)), rng_(config.seed ^ kTrainerStream),
      best_dev_(std::numeric_limits<double>::infinity()) {
  config_.validate();
  if (roles_.empty()) throw UsageError("trainer needs the corpus role set");
  model_ = Model(config_.model_config(vocab_size, static_cast<int>(roles_.size())), config_.seed);
  optimizer_ = Optimizer(config_.optimizer, config_.learning_rate, model_.params());
}

Trainer Trainer::resume(const Checkpoint& c) {
  Trainer t(c.config, c.vocab_size, c.roles);
  std::map<std::string, const ad::Matrix*> by_name;
  for (const auto& [name, m] : c.tensors) by_name[name] = &m;
  auto& params = t.model_.params();
  restore(params, by_name, "", nullptr);
  if (t.optimizer_.kind() == OptimizerKind::kAdam) {
    restore(params, by_name, "adam.m/", &t.optimizer_.first_moments());
    restore(params, by_name, "adam.v/", &t.optimizer_.second_moments());
  }
  if (by_name.count("best/" + params[0].name)) {
    t.best_params_.resize(params.size());
    restore(params, by_name, "best/", &t.best_params_);
  }
  t.optimizer_.set_steps(c.optimizer_steps);
  t.rng_.set_state(c.rng_state);
  t.epoch_ = c.epoch;
  t.best_dev_ = c.best_dev;
  t.bad_epochs_ = c.bad_epochs;
  return t;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = config_;
  c.vocab_size = model_.config().vocab_size;
  c.roles = roles_;
  c.epoch = epoch_;
  c.rng_state = rng_.state();
  c.optimizer_steps = optimizer_.steps();
  c.best_dev = best_dev_;
  c.bad_epochs = bad_epochs_;
  const auto& params = model_.params();
  for (const auto& p : params) c.tensors.emplace_back(p.name, p.value);
  if (optimizer_.kind() == OptimizerKind::kAdam) {
    for (std::size_t i = 0; i < params.size(); ++i)
      c.tensors.emplace_back("adam.m/" + params[i].name, optimizer_.first_moments()[i]);
    for (std::size_t i = 0; i < params.size(); ++i)
      c.tensors.emplace_back("adam.v/" + params[i].name, optimizer_.second_moments()[i]);
  }
  for (std::size_t i = 0; i < best_params_.size(); ++i) c.tensors.emplace_back("best/" + params[i].name, best_params_[i]);
  return c;
}

Model Trainer::best_model() const {
  Model m = model_;
  for (std::size_t i = 0; i < best_params_.size(); ++i) m.params()[i].value = best_params_[i];
  return m;
}

Model model_from_checkpoint(const Checkpoint& c) {
  c.config.validate();
  Model m(c.config.model_config(c.vocab_size, static_cast<int>(c.roles.size())), c.config.seed);
  std::map<std::string, const ad::Matrix*> by_name;
  for (const auto& [name, t] : c.tensors) by_name[name] = &t;
  bool has_best = by_name.count("best/" + m.params()[0].name) != 0;
  restore(m.params(), by_name, has_best ? "best/" : "", nullptr);
  return m;
}

double Trainer::batch_gradients(const std::vector<const ModelInput*>& batch, ad::Gradients& grads) {
  if (batch.empty()) throw UsageError("empty batch");
  grads.zero();
  double total = 0.0;
  for (const ModelInput* in : batch) {
    Graph g(&model_.params());
    SplitMix64 drop_rng = rng_.split();
    nn::Dropout dropout(config_.keep_prob, true, &drop_rng);
    LossResult r = model_.loss(g, *in, dropout);
    double loss = r.loss.scalar();
    if (!std::isfinite(loss)) {
      std::string where = g.first_non_finite();
      throw NumericError("non-finite loss on example '" + in->id + "'; first non-finite tensor: " +
                         (where.empty() ? std::string("loss") : where));
    }
    g.backward(r.loss, grads);
    total += loss;
  }
  const double n = static_cast<double>(batch.size());
  grads.scale(1.0 / n);
  if (!grads.all_finite()) throw NumericError("non-finite gradient in batch starting at '" + batch.front()->id + "'");
  return total / n;
}

EpochLog Trainer::run_epoch(const std::vector<ModelInput>& train, const std::vector<ModelInput>& dev) {
  if (train.empty()) throw DataError("no training examples");
  auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.below(i)]);

  ad::Gradients grads(model_.params());
  double total = 0.0;
  const std::size_t bs = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    std::vector<const ModelInput*> batch;
    for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) batch.push_back(&train[order[i]]);
    total += batch_gradients(batch, grads) * static_cast<double>(batch.size());
    last_norm_ = clip_global_norm(grads, config_.clip_norm);
    optimizer_.step(model_.params(), grads);
  }

  EpochLog log;
  log.epoch = ++epoch_;
  log.train_loss = total / static_cast<double>(train.size());
  log.dev_loss = dev.empty() ? log.train_loss : evaluate_loss(model_, dev).loss;
  if (log.dev_loss < best_dev_) {
    best_dev_ = log.dev_loss;
    bad_epochs_ = 0;
    best_params_.clear();
    for (const auto& p : model_.params()) best_params_.push_back(p.value);
  } else {
    ++bad_epochs_;
  }
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return log;
}

std::vector<EpochLog> Trainer::fit(const std::vector<ModelInput>& train, const std::vector<ModelInput>& dev,
                                   const std::function<void(const EpochLog&)>& on_epoch) {
  std::vector<EpochLog> logs;
  while (epoch_ < config_.max_epochs && !stopped()) {
    logs.push_back(run_epoch(train, dev));
    if (on_epoch) on_epoch(logs.back());
  }
  return logs;
}

}  // namespace drmn
