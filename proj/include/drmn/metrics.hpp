#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace drmn {

using Tokens = std::vector<std::string>;

/// Corpus-level clipped n-gram precision: matched / total hypothesis n-grams.
/// Returns {matched, total}.
std::pair<std::size_t, std::size_t> ngram_matches(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs,
                                                  int n);

struct BleuResult {
  double score = 0.0;  // percent
  double precisions[4] = {0, 0, 0, 0};
  double brevity_penalty = 0.0;
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
};

/// Corpus BLEU-4, uniform weights, brevity penalty. Orders 2-4 with zero
/// matches use (0 + 1) / (total + 1); unigrams are never smoothed.
BleuResult bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Prf rouge1(const Tokens& hyp, const Tokens& ref);
Prf rougeL(const Tokens& hyp, const Tokens& ref);
std::size_t lcs_length(const Tokens& a, const Tokens& b);
/// Clipped unigram overlap count.
std::size_t unigram_overlap(const Tokens& a, const Tokens& b);

struct EvalReport {
  double rouge1 = 0.0;  // mean F1, percent
  double rougeL = 0.0;
  double bleu = 0.0;
  std::size_t count = 0;
  std::size_t empty_hypotheses = 0;
};

EvalReport evaluate_pairs(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs);

/// One line of a generation file.
struct GenerationRecord {
  std::string example_id;
  std::string output;
  std::string gold;
  double gate_mean = 0.0;
  int copied_from_similar = 0;
};

std::string serialize_generations(const std::vector<GenerationRecord>& records);
std::vector<GenerationRecord> parse_generations(const std::string& text, const std::string& source = "<memory>");

struct Reference {
  std::string example_id;
  std::string text;
};

/// Joins outputs to references on example id. Throws DataError listing
/// unmatched ids on either side.
EvalReport evaluate_generations(const std::vector<GenerationRecord>& records, const std::vector<Reference>& refs);

/// Tokens of `gold` that occur in `neighbor` but nowhere in `context`.
Tokens planted_tokens(const Tokens& gold, const Tokens& context, const Tokens& neighbor);
/// Fraction of `planted` found in `output`; {hits, total}.
std::pair<std::size_t, std::size_t> planted_hits(const Tokens& planted, const Tokens& output);

struct ReportRow {
  std::string variant;
  EvalReport report;
};

std::string format_report_table(const std::vector<ReportRow>& rows);
/// Columns `variant,R1,RL,BLEU,n`.
std::string format_report_csv(const std::vector<ReportRow>& rows);

}  // namespace drmn
