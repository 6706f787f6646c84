#include "cpl/index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cpl {

namespace {

// The relative guard keeps re-capping at the same alpha bit-identical: a row
// rescaled once lands within rounding of alpha and must not rescale again.
void cap_row(double* row, std::size_t d, double alpha, double* norm_out) {
  double norm = std::sqrt(dot(row, row, d));
  if (norm > alpha * (1.0 + 1e-12)) {
    const double scale = alpha / norm;
    for (std::size_t c = 0; c < d; ++c) row[c] *= scale;
    norm = std::sqrt(dot(row, row, d));
  }
  *norm_out = norm;
}

RankedList take_top_k(std::vector<std::size_t> order, const std::vector<double>& scores,
                      const std::vector<std::string>& ids, std::size_t k) {
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  if (order.size() > k) order.resize(k);
  RankedList out;
  out.reserve(order.size());
  for (std::size_t r : order) out.push_back({ids[r], scores[r]});
  return out;
}

}  // namespace

RetrievalIndex build_index(const EncoderModel& model, const Corpus& corpus,
                           std::optional<double> clip_alpha) {
  if (corpus.passages.empty()) throw std::invalid_argument("empty corpus");
  if (clip_alpha && *clip_alpha <= 0.0) throw std::invalid_argument("clip alpha must be positive");
  RetrievalIndex index;
  index.clip_alpha = clip_alpha;
  index.rows = Mat(corpus.size(), model.dim());
  index.norms.resize(corpus.size());
  index.ids.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Passage& p = corpus.passages[i];
    const Vec emb = encode(model, p.tokens, Role::kPassage);
    std::copy(emb.begin(), emb.end(), index.rows.row(i));
    if (clip_alpha) {
      cap_row(index.rows.row(i), model.dim(), *clip_alpha, &index.norms[i]);
    } else {
      index.norms[i] = norm2(emb);
    }
    index.ids.push_back(p.id);
  }
  return index;
}

RetrievalIndex clip_index(const RetrievalIndex& index, double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("clip alpha must be positive");
  RetrievalIndex out = index;
  out.clip_alpha = alpha;
  for (std::size_t i = 0; i < out.size(); ++i) {
    cap_row(out.rows.row(i), out.dim(), alpha, &out.norms[i]);
  }
  return out;
}

RankedList search(const RetrievalIndex& index, const Vec& q_emb, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  if (q_emb.size() != index.dim()) throw std::invalid_argument("dimension mismatch");
  std::vector<double> scores(index.size());
  for (std::size_t r = 0; r < index.size(); ++r) {
    scores[r] = dot(index.rows.row(r), q_emb.data(), index.dim());
  }
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), 0);
  return take_top_k(std::move(order), scores, index.ids, k);
}

Bm25Index bm25_build(const Corpus& corpus, double k1, double b) {
  if (corpus.passages.empty()) throw std::invalid_argument("empty corpus");
  Bm25Index index;
  index.k1 = k1;
  index.b = b;
  index.num_docs = corpus.size();
  index.doc_lengths.reserve(corpus.size());
  index.ids.reserve(corpus.size());
  std::size_t total_len = 0;
  for (std::size_t row = 0; row < corpus.size(); ++row) {
    const Passage& p = corpus.passages[row];
    index.ids.push_back(p.id);
    index.doc_lengths.push_back(p.tokens.size());
    total_len += p.tokens.size();
    std::unordered_map<TokenId, std::size_t> tf;
    for (TokenId t : p.tokens) ++tf[t];
    for (const auto& [t, count] : tf) index.postings[t].push_back({row, count});
  }
  if (total_len == 0) throw std::invalid_argument("corpus has no tokens");
  index.avg_doc_length = static_cast<double>(total_len) / static_cast<double>(corpus.size());
  return index;
}

RankedList bm25_search(const Bm25Index& index, const TokenSeq& query, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  const double n = static_cast<double>(index.num_docs);
  std::vector<double> scores(index.num_docs, 0.0);
  for (TokenId t : query) {
    auto it = index.postings.find(t);
    if (it == index.postings.end()) continue;
    const double df = static_cast<double>(it->second.size());
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    for (const auto& [row, tf_raw] : it->second) {
      const double tf = static_cast<double>(tf_raw);
      const double dl = static_cast<double>(index.doc_lengths[row]);
      const double denom = tf + index.k1 * (1.0 - index.b + index.b * dl / index.avg_doc_length);
      scores[row] += idf * tf * (index.k1 + 1.0) / denom;
    }
  }
  std::vector<std::size_t> order(index.num_docs);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return index.ids[a] < index.ids[b];
  });
  if (order.size() > k) order.resize(k);
  RankedList out;
  out.reserve(order.size());
  for (std::size_t r : order) out.push_back({index.ids[r], scores[r]});
  return out;
}

}  // namespace cpl
