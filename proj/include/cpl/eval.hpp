#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cpl/attack.hpp"
#include "cpl/corpus.hpp"
#include "cpl/index.hpp"
#include "cpl/model.hpp"

namespace cpl {

struct EvalReport {
  std::map<std::size_t, double> success_rate;  // k -> percentage in [0, 100]
  std::optional<double> retrieval_accuracy;    // fraction in [0, 1]
  std::size_t num_queries = 0;
  std::size_t num_queries_without_qrels = 0;
  std::size_t num_adversarial = 0;
  std::size_t corpus_size = 0;
  std::string dataset_tag;
  std::string source_dataset_tag;  // transfer runs: where the poison came from
  std::string model_tag;
  std::string defense_tag;
};

/// New corpus of size |corpus| + |poison|; original passages untouched.
/// Natural ids must not use the reserved "ADV-" prefix and ids must not
/// collide.
Corpus inject(const Corpus& corpus, const PoisonSet& poison);

/// Percentage of queries for which at least one id from adversarial_ids shows
/// up in the top-k, for each k in k_list.
EvalReport attack_success_rate(const EncoderModel& model, const RetrievalIndex& poisoned_index,
                               const QuerySet& queries, const std::vector<std::size_t>& k_list,
                               const std::set<std::string>& adversarial_ids);

/// Same metric under BM25 retrieval (queries scored by their token ids).
EvalReport bm25_attack_success_rate(const Bm25Index& index, const QuerySet& queries,
                                    const std::vector<std::size_t>& k_list,
                                    const std::set<std::string>& adversarial_ids);

/// Fraction of queries with a relevant passage in the top-k. Queries without
/// qrels are excluded from the denominator (counted via num_excluded).
double retrieval_accuracy(const EncoderModel& model, const RetrievalIndex& index,
                          const QuerySet& queries, const Qrels& qrels, std::size_t k,
                          std::size_t* num_excluded = nullptr);

enum class TransferMode { kFull, kNearestTrainQuery, kClusterClassify };

/// Selects which poison passages get credited for one test query: everything,
/// the best passage for the nearest training query, or the passage of the
/// nearest k-means centroid.
std::set<std::string> select_transfer_passage(const PoisonSet& poison, const EncoderModel& model,
                                              const QuerySet& train_queries,
                                              const TokenSeq& test_query, TransferMode mode);

/// Injects the poison into a target-domain corpus, rebuilds the dense index,
/// and reports success rates tagged with source and target dataset names.
/// The poison and the target corpus must share a vocabulary.
EvalReport transfer_eval(const PoisonSet& poison, const EncoderModel& model,
                         const Corpus& target_corpus, const QuerySet& target_queries,
                         const std::vector<std::size_t>& k_list,
                         TransferMode mode = TransferMode::kFull,
                         const QuerySet* train_queries = nullptr);

struct ClipSweepRow {
  double percentile_level;
  double alpha;
  double retrieval_accuracy_without_attack;  // fraction
  double success_rate;                       // percentage at the chosen k
};

/// Norm-clipping trade-off across an alpha grid given as percentiles of the
/// natural corpus norm distribution. Accuracy is measured on the clean index,
/// success on the poisoned one, both capped at the same alpha.
std::vector<ClipSweepRow> clip_sweep(const EncoderModel& model, const Corpus& natural_corpus,
                                     const PoisonSet& poison, const QuerySet& queries,
                                     const Qrels& qrels, std::size_t k,
                                     const std::vector<double>& percentile_grid);

void save_report_json(const EvalReport& report, const std::string& path);
void save_report_csv(const EvalReport& report, const std::string& path);
EvalReport load_report_json(const std::string& path);
void save_sweep_csv(const std::vector<ClipSweepRow>& rows, const std::string& path);

}  // namespace cpl
