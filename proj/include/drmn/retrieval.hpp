#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "drmn/corpus.hpp"

namespace drmn {

struct Posting {
  std::uint32_t doc = 0;  // document index in the indexed corpus
  std::uint32_t tf = 0;
};

/// BM25 index over whole conversations flattened to token bags.
class InvertedIndex {
 public:
  static constexpr double kDefaultK1 = 1.2;
  static constexpr double kDefaultB = 0.75;

  InvertedIndex() = default;
  /// Throws DataError on an empty corpus.
  static InvertedIndex build(const Corpus& corpus, double k1 = kDefaultK1, double b = kDefaultB);
  /// Index over explicit token bags (one per document id).
  static InvertedIndex build(const std::vector<std::string>& ids,
                             const std::vector<std::vector<std::string>>& docs, double k1 = kDefaultK1,
                             double b = kDefaultB);

  std::size_t doc_count() const { return doc_ids_.size(); }
  double avgdl() const { return avgdl_; }
  double k1() const { return k1_; }
  double b() const { return b_; }
  std::size_t df(const std::string& token) const;
  std::uint32_t tf(const std::string& token, std::size_t doc) const;
  std::uint32_t doc_length(std::size_t doc) const { return doc_lengths_.at(doc); }
  const std::string& doc_id(std::size_t doc) const { return doc_ids_.at(doc); }
  const std::vector<Posting>& postings(const std::string& token) const;
  /// ln(1 + (N - df + 0.5) / (df + 0.5)).
  double idf(const std::string& token) const;
  /// Sparse token counts of one document.
  const std::unordered_map<std::string, std::uint32_t>& doc_terms(std::size_t doc) const {
    return doc_terms_.at(doc);
  }

  /// Plain JSON object with every statistic; used by the `index` command.
  std::string to_json() const;
  static InvertedIndex from_json(const std::string& text);

  bool operator==(const InvertedIndex& other) const;

 private:
  std::vector<std::string> doc_ids_;
  std::vector<std::uint32_t> doc_lengths_;
  std::vector<std::unordered_map<std::string, std::uint32_t>> doc_terms_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  double avgdl_ = 0.0;
  double k1_ = kDefaultK1;
  double b_ = kDefaultB;
};

struct ScoredDoc {
  std::string id;
  double score = 0.0;
};

/// Top `pool` documents by BM25 over the unique query terms. Zero-score
/// documents are never returned; ties break on document id. An empty query
/// yields an empty list.
std::vector<ScoredDoc> bm25_candidates(const InvertedIndex& index, const std::vector<std::string>& query,
                                       std::size_t pool = 50, const std::string& exclude_id = "");

enum class Reranker { kTfidfCosine, kEmbeddingCosine };
Reranker parse_reranker(const std::string& name);
std::string reranker_name(Reranker r);

struct SimilarSet {
  std::vector<ScoredDoc> neighbors;  // scores non-increasing
  std::size_t pool_size = 0;
  std::string reranker;
  bool short_of_k = false;  // fewer than k candidates survived self-exclusion
};

/// Cosine similarity of tf-idf vectors (idf from the index).
double tfidf_cosine(const InvertedIndex& index, const std::vector<std::string>& a,
                    const std::vector<std::string>& b);

/// Cosine of mean token embeddings. Tokens map to fixed pseudo-random vectors
/// seeded by their hash unless an explicit table is supplied.
class TokenEmbedder {
 public:
  explicit TokenEmbedder(int dim = 64) : dim_(dim) {}
  void set(const std::string& token, std::vector<double> vec);
  /// word2vec text format: `token v1 ... vd` per line (an optional header line
  /// with two integers is skipped).
  void load_text(const std::string& path);
  std::vector<double> embed(const std::vector<std::string>& tokens) const;
  int dim() const { return dim_; }

 private:
  int dim_;
  std::unordered_map<std::string, std::vector<double>> table_;
};

double embedding_cosine(const TokenEmbedder& embedder, const std::vector<std::string>& a,
                        const std::vector<std::string>& b);

/// Reorders candidates by the reranker score and keeps the best k, dropping
/// `self_id`. Ties keep candidate order.
SimilarSet rerank(const InvertedIndex& index, const Corpus& corpus, const std::vector<std::string>& query,
                  const std::vector<ScoredDoc>& candidates, Reranker method, std::size_t k,
                  const std::string& self_id, const TokenEmbedder* embedder = nullptr);

/// Context tokens of an example flattened in turn order.
std::vector<std::string> query_tokens(const TrainingExample& example);
/// All tokens of a conversation in turn order.
std::vector<std::string> conversation_tokens(const Conversation& conversation);

struct RetrievalOptions {
  std::size_t pool = 50;
  std::size_t k = 3;
  Reranker reranker = Reranker::kTfidfCosine;
};

/// Candidate retrieval then reranking for one example. The example's own
/// conversation is excluded. `corpus` must be the corpus the index was built on.
SimilarSet retrieve_similar(const InvertedIndex& index, const Corpus& corpus, const TrainingExample& example,
                            const RetrievalOptions& options, const TokenEmbedder* embedder = nullptr);

/// example_id -> neighbors; JSONL `{example_id, neighbors: [{id, score}]}`.
class RetrievalCache {
 public:
  void put(const std::string& example_id, std::vector<ScoredDoc> neighbors);
  const std::vector<ScoredDoc>* find(const std::string& example_id) const;
  std::size_t size() const { return order_.size(); }
  const std::vector<std::string>& example_ids() const { return order_; }

  std::string serialize() const;
  static RetrievalCache parse(const std::string& text);
  void save(const std::string& path) const;
  static RetrievalCache load(const std::string& path);

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, std::vector<ScoredDoc>> entries_;
};

/// Builds the cache for every example, retrieving from the training split only.
RetrievalCache build_cache(const Corpus& corpus, const std::vector<TrainingExample>& examples,
                           const RetrievalOptions& options, const TokenEmbedder* embedder = nullptr);
/// Same, over an index already built on `train`.
RetrievalCache build_cache(const InvertedIndex& index, const Corpus& train,
                           const std::vector<TrainingExample>& examples, const RetrievalOptions& options,
                           const TokenEmbedder* embedder = nullptr);

}  // namespace drmn
