#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cpl/corpus.hpp"
#include "cpl/linalg.hpp"
#include "cpl/model.hpp"

namespace cpl {

struct ScoredPassage {
  std::string id;
  double score;
};

/// Scores non-increasing; ties broken by ascending passage id.
using RankedList = std::vector<ScoredPassage>;

/// Exact inner-product index: one embedding row per passage, optionally
/// norm-capped at clip_alpha.
struct RetrievalIndex {
  Mat rows;                         // |corpus| x d
  std::vector<double> norms;        // l2 norm per row (post-clip)
  std::vector<std::string> ids;     // row -> passage id
  std::optional<double> clip_alpha;

  std::size_t size() const { return rows.rows(); }
  std::size_t dim() const { return rows.cols(); }
};

RetrievalIndex build_index(const EncoderModel& model, const Corpus& corpus,
                           std::optional<double> clip_alpha = std::nullopt);

/// Rows re-capped at alpha. Applying the same alpha twice is a no-op.
RetrievalIndex clip_index(const RetrievalIndex& index, double alpha);

/// The k rows with largest inner product against q_emb, exact. k larger than
/// the corpus returns the full ranking.
RankedList search(const RetrievalIndex& index, const Vec& q_emb, std::size_t k);

/// Okapi BM25 statistics over tokenized passages.
struct Bm25Index {
  double k1 = 0.9;
  double b = 0.4;
  std::size_t num_docs = 0;
  double avg_doc_length = 0.0;
  std::vector<std::size_t> doc_lengths;
  std::vector<std::string> ids;
  // token -> (doc row, term frequency), rows ascending
  std::unordered_map<TokenId, std::vector<std::pair<std::size_t, std::size_t>>> postings;

  std::size_t doc_freq(TokenId t) const {
    auto it = postings.find(t);
    return it == postings.end() ? 0 : it->second.size();
  }
};

Bm25Index bm25_build(const Corpus& corpus, double k1 = 0.9, double b = 0.4);

/// idf = ln(1 + (N - df + 0.5) / (df + 0.5)); repeated query tokens contribute
/// once per occurrence. Tie-breaking matches dense search.
RankedList bm25_search(const Bm25Index& index, const TokenSeq& query, std::size_t k);

}  // namespace cpl
