#include "drmn/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "drmn/error.hpp"
#include "drmn/io.hpp"
#include "drmn/random.hpp"

namespace drmn {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<std::string> conversation_tokens(const Conversation& conversation) {
  std::vector<std::string> out;
  for (const auto& t : conversation.turns) out.insert(out.end(), t.tokens.begin(), t.tokens.end());
  return out;
}

std::vector<std::string> query_tokens(const TrainingExample& example) {
  std::vector<std::string> out;
  for (const auto& t : example.context) out.insert(out.end(), t.tokens.begin(), t.tokens.end());
  return out;
}

InvertedIndex InvertedIndex::build(const Corpus& corpus, double k1, double b) {
  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> docs;
  for (const auto& c : corpus.conversations()) {
    ids.push_back(c.id);
    docs.push_back(conversation_tokens(c));
  }
  return build(ids, docs, k1, b);
}

InvertedIndex InvertedIndex::build(const std::vector<std::string>& ids,
                                   const std::vector<std::vector<std::string>>& docs, double k1, double b) {
  if (docs.empty()) throw DataError("cannot index an empty corpus");
  if (ids.size() != docs.size()) throw UsageError("index: ids and documents differ in length");
  InvertedIndex idx;
  idx.k1_ = k1;
  idx.b_ = b;
  idx.doc_ids_ = ids;
  double total = 0.0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    std::unordered_map<std::string, std::uint32_t> counts;
    for (const auto& t : docs[d]) ++counts[t];
    // Postings are appended in document order, so each list is sorted by doc.
    std::map<std::string, std::uint32_t> sorted(counts.begin(), counts.end());
    for (const auto& [tok, n] : sorted) idx.postings_[tok].push_back({static_cast<std::uint32_t>(d), n});
    idx.doc_lengths_.push_back(static_cast<std::uint32_t>(docs[d].size()));
    idx.doc_terms_.push_back(std::move(counts));
    total += static_cast<double>(docs[d].size());
  }
  idx.avgdl_ = total / static_cast<double>(docs.size());
  return idx;
}

const std::vector<Posting>& InvertedIndex::postings(const std::string& token) const {
  static const std::vector<Posting> kEmpty;
  auto it = postings_.find(token);
  return it == postings_.end() ? kEmpty : it->second;
}

std::size_t InvertedIndex::df(const std::string& token) const { return postings(token).size(); }

std::uint32_t InvertedIndex::tf(const std::string& token, std::size_t doc) const {
  const auto& terms = doc_terms_.at(doc);
  auto it = terms.find(token);
  return it == terms.end() ? 0 : it->second;
}

double InvertedIndex::idf(const std::string& token) const {
  double n = static_cast<double>(doc_count());
  double df_t = static_cast<double>(df(token));
  return std::log(1.0 + (n - df_t + 0.5) / (df_t + 0.5));
}

std::string InvertedIndex::to_json() const {
  ordered_json j;
  j["k1"] = k1_;
  j["b"] = b_;
  j["avgdl"] = avgdl_;
  j["docs"] = ordered_json::array();
  for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
    ordered_json doc;
    doc["id"] = doc_ids_[d];
    doc["length"] = doc_lengths_[d];
    std::map<std::string, std::uint32_t> sorted(doc_terms_[d].begin(), doc_terms_[d].end());
    doc["terms"] = sorted;
    j["docs"].push_back(std::move(doc));
  }
  return j.dump();
}

InvertedIndex InvertedIndex::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw DataError(std::string("malformed index file: ") + e.what());
  }
  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> docs;
  for (const auto& d : j.at("docs")) {
    ids.push_back(d.at("id").get<std::string>());
    std::vector<std::string> bag;
    for (const auto& [tok, n] : d.at("terms").items())
      for (std::uint32_t i = 0; i < n.get<std::uint32_t>(); ++i) bag.push_back(tok);
    docs.push_back(std::move(bag));
  }
  return build(ids, docs, j.at("k1").get<double>(), j.at("b").get<double>());
}

bool InvertedIndex::operator==(const InvertedIndex& o) const {
  if (doc_ids_ != o.doc_ids_ || doc_lengths_ != o.doc_lengths_ || avgdl_ != o.avgdl_ || k1_ != o.k1_ ||
      b_ != o.b_ || doc_terms_ != o.doc_terms_ || postings_.size() != o.postings_.size())
    return false;
  for (const auto& [tok, list] : postings_) {
    const auto& other = o.postings(tok);
    if (list.size() != other.size()) return false;
    for (std::size_t i = 0; i < list.size(); ++i)
      if (list[i].doc != other[i].doc || list[i].tf != other[i].tf) return false;
  }
  return true;
}

std::vector<ScoredDoc> bm25_candidates(const InvertedIndex& index, const std::vector<std::string>& query,
                                       std::size_t pool, const std::string& exclude_id) {
  std::set<std::string> terms(query.begin(), query.end());
  std::unordered_map<std::uint32_t, double> scores;
  const double k1 = index.k1(), b = index.b(), avgdl = index.avgdl();
  for (const auto& t : terms) {
    const auto& plist = index.postings(t);
    if (plist.empty()) continue;
    double idf = index.idf(t);
    for (const auto& p : plist) {
      double tf = p.tf;
      double dl = index.doc_length(p.doc);
      scores[p.doc] += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
    }
  }
  std::vector<ScoredDoc> out;
  out.reserve(scores.size());
  for (const auto& [doc, s] : scores) {
    if (s <= 0.0) continue;
    const auto& id = index.doc_id(doc);
    if (!exclude_id.empty() && id == exclude_id) continue;
    out.push_back({id, s});
  }
  std::sort(out.begin(), out.end(), [](const ScoredDoc& a, const ScoredDoc& c) {
    if (a.score != c.score) return a.score > c.score;
    return a.id < c.id;
  });
  if (out.size() > pool) out.resize(pool);
  return out;
}

Reranker parse_reranker(const std::string& name) {
  if (name == "tfidf-cosine") return Reranker::kTfidfCosine;
  if (name == "embedding-cosine") return Reranker::kEmbeddingCosine;
  throw UsageError("unknown reranker '" + name + "' (expected tfidf-cosine or embedding-cosine)");
}

std::string reranker_name(Reranker r) {
  return r == Reranker::kTfidfCosine ? "tfidf-cosine" : "embedding-cosine";
}

double tfidf_cosine(const InvertedIndex& index, const std::vector<std::string>& a,
                    const std::vector<std::string>& b) {
  std::map<std::string, double> va, vb;
  for (const auto& t : a) va[t] += 1.0;
  for (const auto& t : b) vb[t] += 1.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (auto& [t, w] : va) {
    w *= index.idf(t);
    na += w * w;
  }
  for (auto& [t, w] : vb) {
    w *= index.idf(t);
    nb += w * w;
    auto it = va.find(t);
    if (it != va.end()) dot += it->second * w;
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  double cos = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::min(cos, 1.0);
}

void TokenEmbedder::set(const std::string& token, std::vector<double> vec) {
  if (static_cast<int>(vec.size()) != dim_) throw DataError("embedding for '" + token + "' has wrong width");
  table_[token] = std::move(vec);
}

void TokenEmbedder::load_text(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    if (first && v.size() == 1) {  // "count dim" header
      first = false;
      continue;
    }
    first = false;
    if (table_.empty() && static_cast<int>(v.size()) != dim_) dim_ = static_cast<int>(v.size());
    set(tok, std::move(v));
  }
}

std::vector<double> TokenEmbedder::embed(const std::vector<std::string>& tokens) const {
  std::vector<double> mean(static_cast<std::size_t>(dim_), 0.0);
  if (tokens.empty()) return mean;
  for (const auto& t : tokens) {
    auto it = table_.find(t);
    if (it != table_.end()) {
      for (int i = 0; i < dim_; ++i) mean[static_cast<std::size_t>(i)] += it->second[static_cast<std::size_t>(i)];
      continue;
    }
    SplitMix64 rng(fnv1a64(t.data(), t.size()));
    for (int i = 0; i < dim_; ++i) mean[static_cast<std::size_t>(i)] += rng.uniform(-1.0, 1.0);
  }
  for (double& m : mean) m /= static_cast<double>(tokens.size());
  return mean;
}

double embedding_cosine(const TokenEmbedder& embedder, const std::vector<std::string>& a,
                        const std::vector<std::string>& b) {
  auto va = embedder.embed(a), vb = embedder.embed(b);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    dot += va[i] * vb[i];
    na += va[i] * va[i];
    nb += vb[i] * vb[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

SimilarSet rerank(const InvertedIndex& index, const Corpus& corpus, const std::vector<std::string>& query,
                  const std::vector<ScoredDoc>& candidates, Reranker method, std::size_t k,
                  const std::string& self_id, const TokenEmbedder* embedder) {
  TokenEmbedder fallback;
  const TokenEmbedder& emb = embedder ? *embedder : fallback;
  SimilarSet out;
  out.reranker = reranker_name(method);
  out.pool_size = candidates.size();
  std::vector<ScoredDoc> scored;
  for (const auto& c : candidates) {
    if (c.id == self_id) continue;
    auto pos = corpus.find(c.id);
    if (!pos) throw DataError("candidate '" + c.id + "' is not in the retrieval corpus");
    auto doc = conversation_tokens(corpus[*pos]);
    double s = method == Reranker::kTfidfCosine ? tfidf_cosine(index, query, doc)
                                                : embedding_cosine(emb, query, doc);
    scored.push_back({c.id, s});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredDoc& a, const ScoredDoc& b) { return a.score > b.score; });
  out.short_of_k = scored.size() < k;
  if (scored.size() > k) scored.resize(k);
  out.neighbors = std::move(scored);
  return out;
}

SimilarSet retrieve_similar(const InvertedIndex& index, const Corpus& corpus, const TrainingExample& example,
                            const RetrievalOptions& options, const TokenEmbedder* embedder) {
  auto query = query_tokens(example);
  auto cands = bm25_candidates(index, query, options.pool);
  return rerank(index, corpus, query, cands, options.reranker, options.k, example.conversation_id, embedder);
}

void RetrievalCache::put(const std::string& example_id, std::vector<ScoredDoc> neighbors) {
  if (!entries_.count(example_id)) order_.push_back(example_id);
  entries_[example_id] = std::move(neighbors);
}

const std::vector<ScoredDoc>* RetrievalCache::find(const std::string& example_id) const {
  auto it = entries_.find(example_id);
  return it == entries_.end() ? nullptr : &it->second;
}

std::string RetrievalCache::serialize() const {
  std::string out;
  for (const auto& id : order_) {
    ordered_json j;
    j["example_id"] = id;
    j["neighbors"] = ordered_json::array();
    for (const auto& n : entries_.at(id)) j["neighbors"].push_back({{"id", n.id}, {"score", n.score}});
    out += j.dump();
    out += '\n';
  }
  return out;
}

RetrievalCache RetrievalCache::parse(const std::string& text) {
  RetrievalCache cache;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      std::vector<ScoredDoc> ns;
      for (const auto& n : j.at("neighbors")) ns.push_back({n.at("id").get<std::string>(), n.at("score").get<double>()});
      cache.put(j.at("example_id").get<std::string>(), std::move(ns));
    } catch (const json::exception& e) {
      throw DataError("retrieval cache line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cache;
}

void RetrievalCache::save(const std::string& path) const { write_file_atomic(path, serialize()); }

RetrievalCache RetrievalCache::load(const std::string& path) { return parse(read_file(path)); }

RetrievalCache build_cache(const Corpus& corpus, const std::vector<TrainingExample>& examples,
                           const RetrievalOptions& options, const TokenEmbedder* embedder) {
  Corpus train = corpus.subset(split_indices(corpus, Split::kTrain));
  return build_cache(InvertedIndex::build(train), train, examples, options, embedder);
}

RetrievalCache build_cache(const InvertedIndex& index, const Corpus& train,
                           const std::vector<TrainingExample>& examples, const RetrievalOptions& options,
                           const TokenEmbedder* embedder) {
  RetrievalCache cache;
  for (const auto& ex : examples) {
    auto set = retrieve_similar(index, train, ex, options, embedder);
    cache.put(ex.id, std::move(set.neighbors));
  }
  return cache;
}

}  // namespace drmn
