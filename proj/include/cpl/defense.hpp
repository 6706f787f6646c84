#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "cpl/corpus.hpp"
#include "cpl/index.hpp"
#include "cpl/linalg.hpp"

namespace cpl {

/// Add-k smoothed n-gram language model over token ids. Contexts are the
/// n-1 preceding ids, padded with a begin marker; the event space is the full
/// vocabulary, so smoothed probabilities over each context sum to one.
class NgramLm {
 public:
  NgramLm(std::size_t order, double smoothing, std::size_t vocab_size);

  void observe(const TokenSeq& seq);

  /// ln p(token | context of the n-1 ids before position pos in seq).
  double log_prob(const TokenSeq& seq, std::size_t pos) const;

  std::size_t order() const { return order_; }
  double smoothing() const { return smoothing_; }
  std::size_t vocab_size() const { return vocab_size_; }

  /// Smoothed conditional, exposed for normalization checks.
  double prob(const std::vector<TokenId>& context, TokenId token) const;

 private:
  std::string context_key(const TokenSeq& seq, std::size_t pos) const;

  std::size_t order_;
  double smoothing_;
  std::size_t vocab_size_;
  std::unordered_map<std::string, std::unordered_map<TokenId, std::uint64_t>> counts_;
  std::unordered_map<std::string, std::uint64_t> totals_;
};

NgramLm train_ngram_lm(const Corpus& corpus, std::size_t order = 3, double smoothing = 0.1);

/// Mean over positions of ln p(token | context).
double avg_log_likelihood(const NgramLm& lm, const TokenSeq& seq);

struct LikelihoodReport {
  std::vector<std::pair<std::string, double>> scores;  // passage id -> avg log likelihood
  double threshold = 0.0;
  std::set<std::string> flagged;  // score < threshold
};

LikelihoodReport likelihood_filter(const NgramLm& lm, const Corpus& passages, double threshold);

/// Norm cap: unchanged when ||emb|| <= alpha, else rescaled to norm alpha.
Vec clip_embedding(const Vec& emb, double alpha);

struct NormReport {
  std::vector<std::pair<std::string, double>> norms;  // passage id -> l2 norm
  std::vector<double> percentile_levels;
  std::vector<double> percentile_values;
  std::set<std::string> adversarial_ids;
};

NormReport norm_report(const RetrievalIndex& index, const std::set<std::string>& adversarial_ids);

/// Linear-interpolation percentile of unsorted values, p in [0, 100].
double percentile(std::vector<double> values, double p);

/// Area under the ROC of the detector "flag when score < threshold", where
/// positives are the adversarial passages. Equivalent to the rank statistic
/// P(adv score < natural score) + 0.5 P(equal).
double roc_auc(const std::vector<double>& adversarial_scores,
               const std::vector<double>& natural_scores);

/// Threshold maximizing Youden's J = TPR - FPR on a labeled calibration split,
/// scanning midpoints between adjacent distinct scores. Flag rule: score < t.
double youden_threshold(const std::vector<double>& adversarial_scores,
                        const std::vector<double>& natural_scores);

void save_likelihood_csv(const LikelihoodReport& report, const std::set<std::string>& adversarial_ids,
                         const std::string& path);
void save_norm_csv(const NormReport& report, const std::string& path);

}  // namespace cpl
