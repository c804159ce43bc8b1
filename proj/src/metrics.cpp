#include "drmn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "drmn/corpus.hpp"
#include "drmn/error.hpp"

namespace drmn {

namespace {

std::map<Tokens, std::size_t> ngram_counts(const Tokens& t, int n) {
  std::map<Tokens, std::size_t> counts;
  const std::size_t len = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + len <= t.size(); ++i) ++counts[Tokens(t.begin() + i, t.begin() + i + len)];
  return counts;
}

Prf make_prf(double matched, std::size_t hyp_len, std::size_t ref_len) {
  Prf p;
  if (hyp_len == 0 || ref_len == 0 || matched == 0.0) return p;
  p.precision = matched / static_cast<double>(hyp_len);
  p.recall = matched / static_cast<double>(ref_len);
  p.f1 = 2.0 * p.precision * p.recall / (p.precision + p.recall);
  return p;
}

}  // namespace

std::pair<std::size_t, std::size_t> ngram_matches(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs,
                                                  int n) {
  if (hyps.size() != refs.size()) throw UsageError("hypothesis and reference counts differ");
  std::size_t matched = 0, total = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    auto h = ngram_counts(hyps[i], n);
    auto r = ngram_counts(refs[i], n);
    for (const auto& [g, c] : h) {
      total += c;
      auto it = r.find(g);
      if (it != r.end()) matched += std::min(c, it->second);
    }
  }
  return {matched, total};
}

BleuResult bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  if (hyps.empty()) throw UsageError("BLEU over an empty corpus");
  if (hyps.size() != refs.size()) throw UsageError("hypothesis and reference counts differ");
  BleuResult b;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    b.hyp_length += hyps[i].size();
    b.ref_length += refs[i].size();
  }
  double log_sum = 0.0;
  bool zero = false;
  for (int n = 1; n <= 4; ++n) {
    auto [m, t] = ngram_matches(hyps, refs, n);
    double p;
    if (n == 1) p = t ? static_cast<double>(m) / static_cast<double>(t) : 0.0;
    else if (m == 0) p = 1.0 / static_cast<double>(t + 1);
    else p = static_cast<double>(m) / static_cast<double>(t);
    b.precisions[n - 1] = p;
    if (p == 0.0) zero = true;
    else log_sum += std::log(p) / 4.0;
  }
  if (b.hyp_length == 0) return b;
  b.brevity_penalty = b.hyp_length >= b.ref_length
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(b.ref_length) / static_cast<double>(b.hyp_length));
  b.score = zero ? 0.0 : 100.0 * b.brevity_penalty * std::exp(log_sum);
  return b;
}

std::size_t unigram_overlap(const Tokens& a, const Tokens& b) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& t : b) ++counts[t];
  std::size_t n = 0;
  for (const auto& t : a) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++n;
    }
  }
  return n;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

Prf rouge1(const Tokens& hyp, const Tokens& ref) {
  return make_prf(static_cast<double>(unigram_overlap(hyp, ref)), hyp.size(), ref.size());
}

Prf rougeL(const Tokens& hyp, const Tokens& ref) {
  return make_prf(static_cast<double>(lcs_length(hyp, ref)), hyp.size(), ref.size());
}

EvalReport evaluate_pairs(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  if (hyps.empty()) throw UsageError("evaluation over an empty corpus");
  if (hyps.size() != refs.size()) throw UsageError("hypothesis and reference counts differ");
  EvalReport r;
  r.count = hyps.size();
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    if (hyps[i].empty()) ++r.empty_hypotheses;
    r.rouge1 += rouge1(hyps[i], refs[i]).f1;
    r.rougeL += rougeL(hyps[i], refs[i]).f1;
  }
  r.rouge1 = 100.0 * r.rouge1 / static_cast<double>(r.count);
  r.rougeL = 100.0 * r.rougeL / static_cast<double>(r.count);
  r.bleu = bleu(hyps, refs).score;
  return r;
}

std::string serialize_generations(const std::vector<GenerationRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["example_id"] = r.example_id;
    j["output"] = r.output;
    j["gold"] = r.gold;
    j["gate_mean"] = r.gate_mean;
    j["copied_from_similar"] = r.copied_from_similar;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<GenerationRecord> parse_generations(const std::string& text, const std::string& source) {
  std::vector<GenerationRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      GenerationRecord r;
      r.example_id = j.at("example_id").get<std::string>();
      r.output = j.at("output").get<std::string>();
      r.gold = j.value("gold", std::string());
      r.gate_mean = j.value("gate_mean", 0.0);
      r.copied_from_similar = j.value("copied_from_similar", 0);
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

EvalReport evaluate_generations(const std::vector<GenerationRecord>& records, const std::vector<Reference>& refs) {
  std::map<std::string, const Reference*> by_id;
  for (const auto& r : refs) by_id[r.example_id] = &r;
  std::set<std::string> seen;
  std::vector<std::string> missing;
  std::vector<Tokens> hyps, golds;
  for (const auto& rec : records) {
    auto it = by_id.find(rec.example_id);
    if (it == by_id.end()) {
      missing.push_back(rec.example_id);
      continue;
    }
    seen.insert(rec.example_id);
    hyps.push_back(tokenize(rec.output));
    golds.push_back(tokenize(it->second->text));
  }
  for (const auto& r : refs)
    if (!seen.count(r.example_id)) missing.push_back(r.example_id);
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) list += ", ...";
    throw DataError(std::to_string(missing.size()) + " unmatched example ids: " + list);
  }
  return evaluate_pairs(hyps, golds);
}

Tokens planted_tokens(const Tokens& gold, const Tokens& context, const Tokens& neighbor) {
  std::set<std::string> ctx(context.begin(), context.end());
  std::set<std::string> nb(neighbor.begin(), neighbor.end());
  std::set<std::string> seen;
  Tokens out;
  for (const auto& t : gold)
    if (!ctx.count(t) && nb.count(t) && seen.insert(t).second) out.push_back(t);
  return out;
}

std::pair<std::size_t, std::size_t> planted_hits(const Tokens& planted, const Tokens& output) {
  std::set<std::string> out(output.begin(), output.end());
  std::size_t hits = 0;
  for (const auto& t : planted) hits += out.count(t);
  return {hits, planted.size()};
}

std::string format_report_table(const std::vector<ReportRow>& rows) {
  std::string s = "BLEU-4 (corpus, add-1 smoothing on zero higher-order counts); ROUGE F1\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s %6s\n", "variant", "R-1", "R-L", "BLEU", "n");
  s += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-16s %8.2f %8.2f %8.2f %6zu\n", r.variant.c_str(), r.report.rouge1,
                  r.report.rougeL, r.report.bleu, r.report.count);
    s += buf;
  }
  return s;
}

std::string format_report_csv(const std::vector<ReportRow>& rows) {
  std::string s = "variant,R1,RL,BLEU,n\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.4f,%zu\n", r.variant.c_str(), r.report.rouge1, r.report.rougeL,
                  r.report.bleu, r.report.count);
    s += buf;
  }
  return s;
}

}  // namespace drmn
