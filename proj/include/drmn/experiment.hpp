#pragma once

#include <functional>
#include <string>
#include <vector>

#include "drmn/metrics.hpp"
#include "drmn/training.hpp"

namespace drmn {

std::vector<GenerationRecord> generate_records(const Model& model, const std::vector<ModelInput>& inputs,
                                               const Vocabulary& vocab, const GenerateOptions& options);

/// References (gold text) for a list of inputs.
std::vector<Reference> references(const std::vector<ModelInput>& inputs);

struct Variant {
  std::string name;
  Mode mode;
  int top_k;
};

/// drmn_top1, drmn_top2, drmn_top3, esm_off, concat_tc_sc.
std::vector<Variant> standard_variants();

struct AblationRow {
  std::string variant;
  EvalReport report;
  std::size_t planted_hits = 0;
  std::size_t planted_total = 0;
  int epochs = 0;
  double planted_recall() const {
    return planted_total ? static_cast<double>(planted_hits) / static_cast<double>(planted_total) : 0.0;
  }
};

struct AblationOptions {
  GenerateOptions generate;
  std::vector<Variant> variants = standard_variants();
  /// Called after every epoch of every variant.
  std::function<void(const std::string&, const EpochLog&)> on_epoch;
};

/// Trains each variant from the same seed and evaluates it on the test split.
/// Planted tokens are out-of-vocabulary gold tokens of a test example that are
/// absent from its context but present in its top-1 retrieved conversation,
/// so only a copy from that conversation can produce them.
std::vector<AblationRow> run_ablation(const TrainConfig& base, const Corpus& corpus, const Vocabulary& vocab,
                                      const RetrievalCache& cache, const AblationOptions& options);

std::string format_ablation_table(const std::vector<AblationRow>& rows);
std::string format_ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace drmn
