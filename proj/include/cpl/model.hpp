#pragma once

#include <cstdint>
#include <vector>

#include "cpl/linalg.hpp"
#include "cpl/vocab.hpp"

namespace cpl {

enum class Role { kQuery, kPassage };

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double temperature = 0.05;
  std::uint64_t seed = 0;
  // the embedding table is always shared; this additionally ties E_q and E_p
  // projections to one matrix
  bool tie_projections = false;
};

struct TrainPair {
  TokenSeq query;
  TokenSeq positive;
};

/// Dual encoder over a shared token embedding table: a text embeds as a
/// role-specific linear projection of the mean of its token embedding rows.
/// Instances are immutable once constructed; training returns a new model.
class EncoderModel {
 public:
  EncoderModel() = default;
  EncoderModel(Mat embedding, Mat query_proj, Mat passage_proj);

  /// Gaussian embedding rows (scale / sqrt(dim)), identity projections.
  static EncoderModel random_init(std::size_t vocab_size, std::size_t dim, std::uint64_t seed,
                                  double scale = 1.0);

  std::size_t vocab_size() const { return embedding_.rows(); }
  std::size_t dim() const { return embedding_.cols(); }

  const Mat& embedding() const { return embedding_; }
  const Mat& query_proj() const { return query_proj_; }
  const Mat& passage_proj() const { return passage_proj_; }
  const Mat& proj(Role role) const { return role == Role::kQuery ? query_proj_ : passage_proj_; }

  bool operator==(const EncoderModel& o) const {
    return embedding_ == o.embedding_ && query_proj_ == o.query_proj_ &&
           passage_proj_ == o.passage_proj_;
  }

 private:
  Mat embedding_;     // V x d
  Mat query_proj_;    // d x d
  Mat passage_proj_;  // d x d
};

/// proj(role) * mean of token embedding rows. Throws on an empty sequence.
Vec encode(const EncoderModel& model, const TokenSeq& seq, Role role);

/// Per-position projected token embeddings, no pooling (multi-vector mode).
std::vector<Vec> encode_multi(const EncoderModel& model, const TokenSeq& seq, Role role);

/// Inner product.
double similarity(const Vec& q_emb, const Vec& p_emb);

/// Sum over query vectors of the max inner product against any passage vector.
double summax_similarity(const std::vector<Vec>& q_set, const std::vector<Vec>& p_set);

/// Gradient of the query-averaged similarity with respect to the embedding
/// used at `pos` of the passage. For the mean-pool linear encoder this is
/// passage_proj^T * mean(query_embs) / passage_length, uniform over positions.
Vec grad_sim_token(const EncoderModel& model, const std::vector<Vec>& query_embs,
                   const TokenSeq& passage, std::size_t pos);

/// SumMax analogue: each query vector contributes through the passage position
/// it currently maxes over (ties resolved to the lowest position).
Vec grad_summax_token(const EncoderModel& model, const std::vector<std::vector<Vec>>& query_sets,
                      const TokenSeq& passage, std::size_t pos);

/// InfoNCE over in-batch negatives at the given temperature. Exposed so tests
/// and training report on fixed batches without retraining.
double contrastive_batch_loss(const EncoderModel& model, const std::vector<TrainPair>& batch,
                              double temperature);

/// SGD on the shared embedding table and both projections. Deterministic for
/// a fixed seed; batches below two pairs are skipped (no negatives).
EncoderModel train_contrastive(const EncoderModel& model, const std::vector<TrainPair>& pairs,
                               const TrainConfig& cfg);

}  // namespace cpl
