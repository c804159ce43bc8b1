#include "drmn/experiment.hpp"

#include <cstdio>
#include <map>

#include "drmn/error.hpp"

namespace drmn {

namespace {

std::string join(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) {
    if (!s.empty()) s += ' ';
    s += t;
  }
  return s;
}

}  // namespace

std::vector<GenerationRecord> generate_records(const Model& model, const std::vector<ModelInput>& inputs,
                                               const Vocabulary& vocab, const GenerateOptions& options) {
  std::vector<GenerationRecord> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    GenerationResult g = model.generate(in, vocab, options);
    GenerationRecord r;
    r.example_id = in.id;
    r.output = g.text();
    r.gold = join(in.gold_tokens);
    r.gate_mean = g.gate_mean();
    r.copied_from_similar = g.copied_from_similar;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<Reference> references(const std::vector<ModelInput>& inputs) {
  std::vector<Reference> out;
  for (const auto& in : inputs) out.push_back({in.id, join(in.gold_tokens)});
  return out;
}

std::vector<Variant> standard_variants() {
  return {{"drmn_top1", Mode::kDrmn, 1},
          {"drmn_top2", Mode::kDrmn, 2},
          {"drmn_top3", Mode::kDrmn, 3},
          {"esm_off", Mode::kEsmOff, 0},
          {"concat_tc_sc", Mode::kConcat, 1}};
}

std::vector<AblationRow> run_ablation(const TrainConfig& base, const Corpus& corpus, const Vocabulary& vocab,
                                      const RetrievalCache& cache, const AblationOptions& options) {
  // Planted tokens per test example, shared by every variant.
  std::map<std::string, Tokens> planted;
  for (const auto& ex : make_examples(corpus, base.target_role)) {
    if (split_of(ex.conversation_id) != Split::kTest) continue;
    const auto* nb = cache.find(ex.id);
    Tokens neighbor;
    if (nb && !nb->empty()) {
      auto idx = corpus.find(nb->front().id);
      if (idx) neighbor = conversation_tokens(corpus[*idx]);
    }
    Tokens found;
    for (auto& t : planted_tokens(ex.gold.tokens, query_tokens(ex), neighbor))
      if (!vocab.contains(t)) found.push_back(std::move(t));
    planted[ex.id] = std::move(found);
  }

  std::vector<AblationRow> rows;
  for (const auto& v : options.variants) {
    TrainConfig config = base;
    config.mode = v.mode;
    config.top_k = v.top_k;
    Dataset data = build_dataset(corpus, vocab, &cache, config);
    if (data.test.empty()) throw DataError("ablation: the test split is empty");
    Trainer trainer(config, vocab.size(), vocab.roles());
    trainer.fit(data.train, data.dev, [&](const EpochLog& log) {
      if (options.on_epoch) options.on_epoch(v.name, log);
    });
    Model model = trainer.best_model();
    auto records = generate_records(model, data.test, vocab, options.generate);

    AblationRow row;
    row.variant = v.name;
    row.epochs = trainer.epoch();
    row.report = evaluate_generations(records, references(data.test));
    for (const auto& r : records) {
      auto it = planted.find(r.example_id);
      if (it == planted.end()) continue;
      auto [hits, total] = planted_hits(it->second, tokenize(r.output));
      row.planted_hits += hits;
      row.planted_total += total;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::vector<ReportRow> plain;
  for (const auto& r : rows) plain.push_back({r.variant, r.report});
  std::string s = format_report_table(plain);
  s += "planted-token recall:";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, " %s=%.3f", r.variant.c_str(), r.planted_recall());
    s += buf;
  }
  return s + "\n";
}

std::string format_ablation_csv(const std::vector<AblationRow>& rows) {
  std::vector<ReportRow> plain;
  for (const auto& r : rows) plain.push_back({r.variant, r.report});
  return format_report_csv(plain);
}

}  // namespace drmn
