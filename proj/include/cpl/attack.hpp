#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cpl/corpus.hpp"
#include "cpl/kmeans.hpp"
#include "cpl/model.hpp"
#include "cpl/rng.hpp"

namespace cpl {

struct AttackConfig {
  enum class Init { kRandomCorpusPassage, kMaskFill };
  enum class SimMode { kSingleVector, kSumMax };

  std::size_t passage_length = 50;
  std::size_t steps = 5000;
  std::size_t query_batch = 64;
  std::size_t candidate_count = 100;
  Init init = Init::kRandomCorpusPassage;
  std::optional<TokenSeq> fixed_prefix;
  std::uint64_t seed = 0;
  SimMode similarity_mode = SimMode::kSingleVector;

  std::size_t prefix_length() const { return fixed_prefix ? fixed_prefix->size() : 0; }
  void validate(std::size_t vocab_size) const;
};

struct SwapRecord {
  std::size_t step;
  std::size_t position;
  TokenId old_token;
  TokenId new_token;
  double mean_similarity;  // batch mean after the swap
};

/// Token sequence under optimization. batch_mean_similarity always refers to
/// the most recently evaluated query batch.
struct AttackState {
  TokenSeq passage;
  double batch_mean_similarity = 0.0;
  std::size_t step = 0;
  std::vector<SwapRecord> history;
};

struct AdversarialPassage {
  std::string id;  // reserved "ADV-" prefix
  std::size_t cluster_id = 0;
  TokenSeq tokens;
  std::string text;
  double mean_similarity = 0.0;  // over the full cluster query set
  AttackConfig config;
};

struct PoisonSet {
  std::vector<AdversarialPassage> passages;
  KMeansResult clustering;
  std::string model_tag;
  std::string dataset_tag;
  std::uint64_t vocab_fingerprint = 0;
};

/// The m token ids with the largest inner product between their embedding row
/// and the gradient (one matrix-vector product); ties by ascending token id.
std::vector<TokenId> hotflip_candidates(const Vec& grad, const EncoderModel& model, std::size_t m);

/// Mean similarity of the passage to a query batch under the configured mode.
double batch_mean_similarity(const EncoderModel& model, const std::vector<TokenSeq>& queries,
                             const TokenSeq& passage, AttackConfig::SimMode mode);

/// One coordinate-ascent step: pick a random mutable position, rank candidate
/// replacements by the HotFlip approximation, exactly re-score the top
/// candidates plus the incumbent on the batch, and install the argmax
/// (incumbent kept on ties). The batch-mean similarity never decreases.
AttackState attack_step(const EncoderModel& model, const std::vector<TokenSeq>& query_batch,
                        const AttackState& state, const AttackConfig& cfg, Rng& rng);

/// Full optimization for one query cluster: initialize, then cfg.steps steps,
/// each on a fresh random batch of min(query_batch, cluster size) queries.
AdversarialPassage generate_passage(const EncoderModel& model,
                                    const std::vector<TokenSeq>& cluster_queries,
                                    const AttackConfig& cfg, const Corpus& corpus, Rng& rng);

/// Seed for the cluster's private rng: cfg.seed xor a mix of the cluster id.
std::uint64_t poison_cluster_seed(std::uint64_t seed, std::size_t cluster_id);

/// Clusters the training queries (k-means on their embeddings, k = n_passages)
/// and generates one passage per cluster. Per-cluster seeds are derived from
/// cfg.seed and the cluster id, so results do not depend on scheduling.
PoisonSet generate_poison_set(const EncoderModel& model, const std::vector<TokenSeq>& train_queries,
                              std::size_t n_passages, const AttackConfig& cfg, const Corpus& corpus);

/// JSONL persistence: one record per passage (id, cluster_id, token_ids, text,
/// mean_similarity, config snapshot). Clustering centroids and tags go to a
/// companion "<path>.meta.json" so transfer selection can reuse them.
void save_poison_jsonl(const PoisonSet& poison, const std::string& path);
PoisonSet load_poison_jsonl(const std::string& path);

}  // namespace cpl
