#include "drmn/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "drmn/corpus.hpp"
#include "drmn/error.hpp"
#include "drmn/experiment.hpp"
#include "drmn/gradcheck.hpp"
#include "drmn/io.hpp"
#include "drmn/synth.hpp"

namespace drmn::cli {

namespace {

std::vector<FlagSpec> train_flags(bool with_variant_keys) {
  static const std::map<std::string, std::string> help = {
      {"word_dim", "word embedding width"},
      {"role_dim", "role embedding width"},
      {"hidden", "LSTM hidden size per direction"},
      {"layers", "encoder LSTM layers"},
      {"keep_prob", "dropout keep probability"},
      {"learning_rate", "optimizer learning rate"},
      {"batch_size", "examples per mini-batch"},
      {"top_k", "retrieved conversations used (0 only with esm_off)"},
      {"mode", "drmn | esm_off | concat_tc_sc"},
      {"optimizer", "adam | sgd"},
      {"seed", "initialization, shuffling and dropout seed"},
      {"max_epochs", "maximum training epochs"},
      {"patience", "epochs without dev improvement before stopping"},
      {"clip_norm", "global gradient-norm clip (0 disables)"},
      {"memory_keys", "memory reads word states (words) or pooled vectors (pooled)"},
      {"bank_target_only", "copy only from the target context"},
      {"target_role", "role whose turns are generated"},
      {"max_tokens_per_turn", "tokens kept per utterance"},
      {"max_context_turns", "newest context turns kept"},
  };
  std::vector<FlagSpec> flags;
  std::istringstream in(TrainConfig{}.serialize());
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    std::string key = line.substr(0, eq);
    if (!with_variant_keys && (key == "mode" || key == "top_k")) continue;
    flags.push_back({key, line.substr(eq + 1), help.at(key), false});
  }
  return flags;
}

std::vector<CommandSpec> make_registry() {
  auto with = [](std::vector<FlagSpec> a, const std::vector<FlagSpec>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  std::vector<CommandSpec> r;
  r.push_back({"synth",
               "write a synthetic court-dialogue corpus",
               {{"n", "1000", "number of conversations", false},
                {"cluster_size", "3", "near-duplicate conversations per cluster", false},
                {"seed", "7", "generator seed", false},
                {"out", "", "output corpus (JSONL)", true}}});
  r.push_back({"vocab",
               "build a vocabulary file",
               {{"corpus", "", "corpus (JSONL)", true},
                {"split", "train", "conversations counted: train | all", false},
                {"min_freq", "2", "minimum token frequency", false},
                {"max_size", "50000", "vocabulary cap including reserved tokens", false},
                {"out", "", "output vocabulary file", true}}});
  r.push_back({"index",
               "build the BM25 index over the training split",
               {{"corpus", "", "corpus (JSONL)", true},
                {"k1", "1.2", "BM25 term-frequency saturation", false},
                {"b", "0.75", "BM25 length normalization", false},
                {"out", "", "output index (JSON)", true}}});
  r.push_back({"retrieve",
               "retrieve similar training conversations for every example",
               {{"corpus", "", "corpus (JSONL)", true},
                {"index", "", "prebuilt index; built from the corpus when empty", false},
                {"pool", "50", "BM25 candidates reranked", false},
                {"k", "3", "neighbors kept per example", false},
                {"reranker", "tfidf-cosine", "tfidf-cosine | embedding-cosine", false},
                {"embeddings", "", "word2vec text file for embedding-cosine", false},
                {"embedding_dim", "64", "hashed embedding width when no file is given", false},
                {"target_role", "judge", "role whose turns are examples", false},
                {"out", "", "output retrieval cache (JSONL)", true}}});
  r.push_back({"train",
               "train a model; the checkpoint is rewritten after every epoch",
               with({{"corpus", "", "corpus (JSONL)", true},
                     {"vocab", "", "vocabulary file", true},
                     {"cache", "", "retrieval cache (required unless mode=esm_off)", false},
                     {"out", "", "output checkpoint", true},
                     {"log", "", "per-epoch CSV log", false},
                     {"resume", "", "checkpoint to continue from", false},
                     {"word_vectors", "", "word2vec text file for initial word embeddings", false}},
                    train_flags(true))});
  r.push_back({"generate",
               "generate utterances for one split",
               {{"corpus", "", "corpus (JSONL)", true},
                {"vocab", "", "vocabulary file", true},
                {"cache", "", "retrieval cache (required unless the model is esm_off)", false},
                {"checkpoint", "", "trained checkpoint", true},
                {"split", "test", "train | dev | test", false},
                {"beam", "1", "beam width (1 = greedy)", false},
                {"max_len", "40", "maximum generated tokens", false},
                {"out", "", "output generations (JSONL)", true}}});
  r.push_back({"eval",
               "score generations against corpus references",
               {{"generations", "", "generation file (JSONL)", true},
                {"corpus", "", "corpus (JSONL)", true},
                {"split", "test", "train | dev | test", false},
                {"target_role", "judge", "role whose turns are references", false},
                {"max_tokens_per_turn", "30", "reference truncation, as in training", false},
                {"variant", "drmn", "row label in the report", false},
                {"report", "", "output text table", false},
                {"csv", "", "output CSV", false}}});
  r.push_back({"ablate",
               "train and evaluate every ablation variant",
               with({{"corpus", "", "corpus (JSONL)", true},
                     {"vocab", "", "vocabulary file", true},
                     {"cache", "", "retrieval cache", true},
                     {"variants", "drmn_top1,drmn_top2,drmn_top3,esm_off,concat_tc_sc", "variants to run", false},
                     {"beam", "1", "beam width (1 = greedy)", false},
                     {"max_len", "40", "maximum generated tokens", false},
                     {"out", "", "output CSV", true},
                     {"table", "", "output text table", false}},
                    train_flags(false))});
  r.push_back({"gradcheck",
               "compare analytic and finite-difference gradients on a tiny model",
               {{"seed", "1", "model and instance seed", false},
                {"step", "1e-4", "central-difference step", false},
                {"tolerance", "1e-3", "maximum relative error", false},
                {"memory_keys", "words", "words | pooled", false},
                {"out", "", "per-parameter report", false}}});
  r.push_back({"trace-esm",
               "dump memory attention weights for one example",
               {{"corpus", "", "corpus (JSONL)", true},
                {"vocab", "", "vocabulary file", true},
                {"cache", "", "retrieval cache", true},
                {"checkpoint", "", "trained checkpoint", true},
                {"example", "", "example id, e.g. c00001-2#4", true},
                {"out", "", "output file (stdout when empty)", false}}});
  return r;
}

class Args {
 public:
  explicit Args(std::map<std::string, std::string> values) : values_(std::move(values)) {}
  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("internal: flag '" + key + "' is not registered");
    return it->second;
  }
  bool has(const std::string& key) const { return !get(key).empty(); }
  long long integer(const std::string& key) const {
    try {
      std::size_t pos = 0;
      long long v = std::stoll(get(key), &pos);
      if (pos != get(key).size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::logic_error&) {
      throw UsageError("--" + flag_name(key) + ": expected an integer, got '" + get(key) + "'");
    }
  }
  double real(const std::string& key) const {
    try {
      std::size_t pos = 0;
      double v = std::stod(get(key), &pos);
      if (pos != get(key).size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::logic_error&) {
      throw UsageError("--" + flag_name(key) + ": expected a number, got '" + get(key) + "'");
    }
  }
  std::size_t count(const std::string& key) const {
    long long v = integer(key);
    if (v < 0) throw UsageError("--" + flag_name(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Defaults, then the config file, then flags given on the command line.
Args resolve(const CommandSpec& spec, const std::string& config_path,
             const std::map<std::string, std::pair<CLI::Option*, std::string>>& given) {
  std::map<std::string, std::string> v;
  for (const auto& f : spec.flags) v[f.key] = f.default_value;
  if (!config_path.empty()) {
    std::istringstream in(read_file(config_path));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      line = trim(line);
      if (line.empty() || line[0] == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw UsageError(config_path + ":" + std::to_string(n) + ": expected key=value");
      std::string key = trim(line.substr(0, eq));
      std::replace(key.begin(), key.end(), '-', '_');
      if (!v.count(key))
        throw UsageError(config_path + ":" + std::to_string(n) + ": unknown key '" + key + "' for " + spec.name);
      v[key] = trim(line.substr(eq + 1));
    }
  }
  for (const auto& [key, opt] : given)
    if (opt.first->count() > 0) v[key] = opt.second;
  for (const auto& f : spec.flags)
    if (f.required && v[f.key].empty()) throw UsageError("missing required --" + flag_name(f.key));
  return Args(std::move(v));
}

void echo(const std::string& command, const Args& args, std::ostream& err) {
  err << "# drmn " << command << "\n";
  for (const auto& [k, v] : args.values()) err << "# " << k << "=" << v << "\n";
}

TrainConfig train_config(const Args& args) {
  TrainConfig c;
  for (const auto& f : train_flags(true))
    if (args.values().count(f.key)) c.set(f.key, args.get(f.key));
  c.validate();
  return c;
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "dev") return Split::kDev;
  if (name == "test") return Split::kTest;
  throw UsageError("unknown split '" + name + "' (expected train, dev or test)");
}

std::vector<TrainingExample> split_examples(const Corpus& corpus, const std::string& role, Split split) {
  std::vector<TrainingExample> out;
  for (auto& ex : make_examples(corpus, role))
    if (split_of(ex.conversation_id) == split) out.push_back(std::move(ex));
  return out;
}

Vocabulary load_vocab_with_roles(const std::string& path, std::vector<std::string> roles) {
  Vocabulary v = Vocabulary::load(path);
  v.set_roles(std::move(roles));
  return v;
}

// ---------------------------------------------------------------------------

void cmd_synth(const Args& a, std::ostream& out) {
  SynthOptions o;
  o.conversations = a.count("n");
  o.cluster_size = a.count("cluster_size");
  o.seed = static_cast<std::uint64_t>(a.count("seed"));
  Corpus c = synthesize_corpus(o);
  save_corpus(c, a.get("out"));
  out << "wrote " << c.size() << " conversations to " << a.get("out") << "\n";
}

void cmd_vocab(const Args& a, std::ostream& out) {
  Corpus c = load_corpus(a.get("corpus"));
  if (a.get("split") == "train") c = c.subset(split_indices(c, Split::kTrain));
  else if (a.get("split") != "all") throw UsageError("--split must be train or all");
  Vocabulary v = build_vocab(c, static_cast<int>(a.integer("min_freq")), static_cast<int>(a.integer("max_size")));
  v.save(a.get("out"));
  out << "wrote " << v.size() << " entries to " << a.get("out") << "\n";
}

void cmd_index(const Args& a, std::ostream& out) {
  Corpus c = load_corpus(a.get("corpus"));
  Corpus train = c.subset(split_indices(c, Split::kTrain));
  auto index = InvertedIndex::build(train, a.real("k1"), a.real("b"));
  write_file_atomic(a.get("out"), index.to_json());
  out << "indexed " << index.doc_count() << " training conversations into " << a.get("out") << "\n";
}

void cmd_retrieve(const Args& a, std::ostream& out) {
  Corpus c = load_corpus(a.get("corpus"));
  Corpus train = c.subset(split_indices(c, Split::kTrain));
  InvertedIndex index = a.has("index") ? InvertedIndex::from_json(read_file(a.get("index"))) : InvertedIndex::build(train);
  if (index.doc_count() != train.size()) throw DataError("index does not match the training split of the corpus");
  for (std::size_t i = 0; i < train.size(); ++i)
    if (index.doc_id(i) != train[i].id) throw DataError("index does not match the training split of the corpus");
  RetrievalOptions o;
  o.pool = a.count("pool");
  o.k = a.count("k");
  o.reranker = parse_reranker(a.get("reranker"));
  TokenEmbedder embedder(static_cast<int>(a.integer("embedding_dim")));
  if (a.has("embeddings")) embedder.load_text(a.get("embeddings"));
  auto examples = make_examples(c, a.get("target_role"));
  RetrievalCache cache = build_cache(index, train, examples, o, &embedder);
  cache.save(a.get("out"));
  out << "retrieved neighbors for " << cache.size() << " examples into " << a.get("out") << "\n";
}

void cmd_train(const Args& a, std::ostream& out, std::ostream& err) {
  Corpus corpus = load_corpus(a.get("corpus"));
  Vocabulary vocab = load_vocab_with_roles(a.get("vocab"), corpus.roles());
  TrainConfig config = train_config(a);
  std::optional<Trainer> trainer;
  if (a.has("resume")) {
    Checkpoint ck = load_checkpoint(a.get("resume"));
    if (ck.vocab_size != vocab.size()) throw DataError("checkpoint vocabulary size differs from --vocab");
    if (ck.roles != vocab.roles()) throw DataError("checkpoint roles differ from the corpus roles");
    trainer.emplace(Trainer::resume(ck));
    trainer->set_max_epochs(config.max_epochs);
    config = trainer->config();
    err << "# resumed at epoch " << trainer->epoch() << "\n";
  } else {
    trainer.emplace(config, vocab.size(), vocab.roles());
    if (a.has("word_vectors")) {
      auto n = trainer->model().load_word_vectors(a.get("word_vectors"), vocab);
      err << "# loaded " << n << " word vectors\n";
    }
  }
  std::optional<RetrievalCache> cache;
  if (a.has("cache")) cache = RetrievalCache::load(a.get("cache"));
  Dataset data = build_dataset(corpus, vocab, cache ? &*cache : nullptr, config);
  err << "# examples train=" << data.train.size() << " dev=" << data.dev.size() << " test=" << data.test.size()
      << " params=" << trainer->model().params().scalar_count() << "\n";

  std::string log = format_log_header();
  trainer->fit(data.train, data.dev, [&](const EpochLog& e) {
    log += format_log_line(e);
    err << format_log_line(e);
    save_checkpoint(trainer->checkpoint(), a.get("out"));
    if (a.has("log")) write_file_atomic(a.get("log"), log);
  });
  save_checkpoint(trainer->checkpoint(), a.get("out"));
  out << "trained " << trainer->epoch() << " epochs, best dev loss " << trainer->best_dev() << ", checkpoint "
      << a.get("out") << "\n";
}

struct LoadedModel {
  Checkpoint checkpoint;
  Model model;
  Vocabulary vocab;
};

LoadedModel load_model(const Args& a) {
  LoadedModel m{load_checkpoint(a.get("checkpoint")), {}, {}};
  m.vocab = load_vocab_with_roles(a.get("vocab"), m.checkpoint.roles);
  if (m.vocab.size() != m.checkpoint.vocab_size) throw DataError("checkpoint vocabulary size differs from --vocab");
  m.model = model_from_checkpoint(m.checkpoint);
  return m;
}

void cmd_generate(const Args& a, std::ostream& out) {
  Corpus corpus = load_corpus(a.get("corpus"));
  LoadedModel m = load_model(a);
  const TrainConfig& cfg = m.checkpoint.config;
  std::optional<RetrievalCache> cache;
  if (a.has("cache")) cache = RetrievalCache::load(a.get("cache"));
  auto examples = split_examples(corpus, cfg.target_role, parse_split(a.get("split")));
  auto inputs = build_inputs(examples, corpus, m.vocab, cache ? &*cache : nullptr, cfg.mode, cfg.top_k, cfg.limits());
  GenerateOptions o;
  o.beam_width = static_cast<int>(a.integer("beam"));
  o.max_len = static_cast<int>(a.integer("max_len"));
  auto records = generate_records(m.model, inputs, m.vocab, o);
  write_file_atomic(a.get("out"), serialize_generations(records));
  out << "generated " << records.size() << " utterances into " << a.get("out") << "\n";
}

void cmd_eval(const Args& a, std::ostream& out) {
  auto records = parse_generations(read_file(a.get("generations")), a.get("generations"));
  Corpus corpus = load_corpus(a.get("corpus"));
  std::vector<Reference> refs;
  const std::size_t cap = a.count("max_tokens_per_turn");
  for (const auto& ex : split_examples(corpus, a.get("target_role"), parse_split(a.get("split")))) {
    std::string text;
    for (std::size_t i = 0; i < ex.gold.tokens.size() && i < cap; ++i) text += (i ? " " : "") + ex.gold.tokens[i];
    refs.push_back({ex.id, text});
  }
  EvalReport report = evaluate_generations(records, refs);
  std::vector<ReportRow> rows = {{a.get("variant"), report}};
  std::string table = format_report_table(rows);
  if (report.empty_hypotheses) table += "empty hypotheses: " + std::to_string(report.empty_hypotheses) + "\n";
  out << table;
  if (a.has("report")) write_file_atomic(a.get("report"), table);
  if (a.has("csv")) write_file_atomic(a.get("csv"), format_report_csv(rows));
}

void cmd_ablate(const Args& a, std::ostream& out, std::ostream& err) {
  Corpus corpus = load_corpus(a.get("corpus"));
  Vocabulary vocab = load_vocab_with_roles(a.get("vocab"), corpus.roles());
  RetrievalCache cache = RetrievalCache::load(a.get("cache"));
  TrainConfig base = train_config(a);
  AblationOptions o;
  o.generate.beam_width = static_cast<int>(a.integer("beam"));
  o.generate.max_len = static_cast<int>(a.integer("max_len"));
  std::vector<Variant> all = standard_variants(), chosen;
  std::istringstream names(a.get("variants"));
  std::string name;
  while (std::getline(names, name, ',')) {
    name = trim(name);
    auto it = std::find_if(all.begin(), all.end(), [&](const Variant& v) { return v.name == name; });
    if (it == all.end()) throw UsageError("unknown variant '" + name + "'");
    chosen.push_back(*it);
  }
  if (chosen.empty()) throw UsageError("--variants is empty");
  o.variants = chosen;
  o.on_epoch = [&](const std::string& v, const EpochLog& e) { err << v << "," << format_log_line(e); };
  auto rows = run_ablation(base, corpus, vocab, cache, o);
  std::string table = format_ablation_table(rows);
  out << table;
  write_file_atomic(a.get("out"), format_ablation_csv(rows));
  if (a.has("table")) write_file_atomic(a.get("table"), table);
}

void cmd_gradcheck(const Args& a, std::ostream& out) {
  TinyInstance t = make_tiny_instance(static_cast<std::uint64_t>(a.count("seed")), parse_memory_keys(a.get("memory_keys")));
  nn::Dropout off;
  auto report = grad_check(
      t.model.params(), [&](Graph& g) { return t.model.loss(g, t.input, off).loss; }, a.real("step"),
      a.real("tolerance"));
  std::string text;
  char buf[256];
  for (const auto& p : report.params) {
    std::snprintf(buf, sizeof buf, "%-24s worst_rel=%.3e index=%zu analytic=%.6e numeric=%.6e\n", p.name.c_str(),
                  p.worst_relative, p.worst_index, p.analytic, p.numeric);
    text += buf;
  }
  std::snprintf(buf, sizeof buf, "checked %zu scalars, max relative error %.3e (tolerance %.1e): %s\n", report.checked,
                report.max_relative, report.tolerance, report.passed() ? "pass" : "FAIL");
  text += buf;
  out << text;
  if (a.has("out")) write_file_atomic(a.get("out"), text);
  if (!report.passed()) throw NumericError("gradient check failed: max relative error " + std::to_string(report.max_relative));
}

void cmd_trace(const Args& a, std::ostream& out) {
  Corpus corpus = load_corpus(a.get("corpus"));
  LoadedModel m = load_model(a);
  const TrainConfig& cfg = m.checkpoint.config;
  RetrievalCache cache = RetrievalCache::load(a.get("cache"));
  std::vector<TrainingExample> pick;
  for (auto& ex : make_examples(corpus, cfg.target_role))
    if (ex.id == a.get("example")) pick.push_back(std::move(ex));
  if (pick.empty()) throw DataError("no example '" + a.get("example") + "' for role " + cfg.target_role);
  Mode mode = cfg.mode == Mode::kEsmOff ? Mode::kDrmn : cfg.mode;
  int k = cfg.top_k == 0 ? 1 : cfg.top_k;
  auto inputs = build_inputs(pick, corpus, m.vocab, &cache, mode, k, cfg.limits());
  Graph g(&m.model.params(), false);
  Encoded e = m.model.encode(g, inputs[0], nn::Dropout());
  std::string text;
  for (const auto& s : e.memory.trace) {
    const SimilarConversation* sc = nullptr;
    for (const auto& c : inputs[0].similar)
      if (c.id == s.conversation_id) sc = &c;
    if (sc) {
      text += "# " + std::to_string(s.step) + " tokens:";
      for (const auto& t : sc->turns[static_cast<std::size_t>(s.utterance_index)].tokens) text += " " + t;
      text += "\n";
    }
  }
  text = text + format_trace(e.memory);
  if (a.has("out")) write_file_atomic(a.get("out"), text);
  else out << text;
}

int code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return 2;
    case ErrorKind::kData: return 3;
    case ErrorKind::kNumeric: return 4;
  }
  return 3;
}

const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kData: return "data";
    case ErrorKind::kNumeric: return "numeric";
  }
  return "data";
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

std::string flag_name(const std::string& key) {
  std::string s = key;
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

const std::vector<CommandSpec>& command_registry() {
  static const std::vector<CommandSpec> registry = make_registry();
  return registry;
}

const CommandSpec& command_spec(const std::string& name) {
  for (const auto& c : command_registry())
    if (c.name == name) return c;
  throw UsageError("unknown command '" + name + "'");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Retrieval-augmented dialogue generation with a shared reading memory"};
  app.name("drmn");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every command");

  struct Bound {
    CLI::App* app;
    std::string config;
    std::map<std::string, std::pair<CLI::Option*, std::string>> given;
  };
  std::vector<std::unique_ptr<Bound>> bound;
  for (const auto& spec : command_registry()) {
    auto b = std::make_unique<Bound>();
    b->app = app.add_subcommand(spec.name, spec.help);
    b->app->add_option("--config", b->config, "key=value file; command-line flags take precedence")
        ->default_str("none");
    for (const auto& f : spec.flags) {
      auto& slot = b->given[f.key];
      std::string help = f.help + (f.required ? " (required)" : "");
      slot.first = b->app->add_option("--" + flag_name(f.key), slot.second, help)
                       ->default_str(f.default_value.empty() ? "none" : f.default_value);
    }
    bound.push_back(std::move(b));
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    for (const auto& b : bound)
      if (b->app->parsed()) {
        out << b->app->help();
        return 0;
      }
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: kind=usage message=" << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    for (const auto& b : bound) {
      if (!b->app->parsed()) continue;
      const std::string name = b->app->get_name();
      Args a = resolve(command_spec(name), b->config, b->given);
      echo(name, a, err);
      if (name == "synth") cmd_synth(a, out);
      else if (name == "vocab") cmd_vocab(a, out);
      else if (name == "index") cmd_index(a, out);
      else if (name == "retrieve") cmd_retrieve(a, out);
      else if (name == "train") cmd_train(a, out, err);
      else if (name == "generate") cmd_generate(a, out);
      else if (name == "eval") cmd_eval(a, out);
      else if (name == "ablate") cmd_ablate(a, out, err);
      else if (name == "gradcheck") cmd_gradcheck(a, out);
      else if (name == "trace-esm") cmd_trace(a, out);
      return 0;
    }
  } catch (const Error& e) {
    err << "error: kind=" << kind_name(e.kind()) << " message=" << one_line(e.what()) << "\n";
    return code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: kind=data message=" << one_line(e.what()) << "\n";
    return 3;
  }
  return 2;
}

}  // namespace drmn::cli
