#include "cpl/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <unordered_set>

#include "cpl/defense.hpp"
#include "json.hpp"

namespace cpl {

using nlohmann::ordered_json;

Corpus inject(const Corpus& corpus, const PoisonSet& poison) {
  std::unordered_set<std::string> seen;
  for (const auto& p : corpus.passages) {
    if (p.id.rfind("ADV-", 0) == 0) {
      throw std::invalid_argument("natural corpus uses reserved id prefix: " + p.id);
    }
    if (!seen.insert(p.id).second) throw std::invalid_argument("duplicate passage id: " + p.id);
  }
  Corpus poisoned = corpus;
  poisoned.passages.reserve(corpus.size() + poison.passages.size());
  for (const auto& adv : poison.passages) {
    if (!seen.insert(adv.id).second) throw std::invalid_argument("duplicate passage id: " + adv.id);
    Passage p;
    p.id = adv.id;
    p.text = adv.text;
    p.tokens = adv.tokens;
    poisoned.passages.push_back(std::move(p));
  }
  return poisoned;
}

namespace {

template <typename SearchFn>
EvalReport success_rate_impl(const QuerySet& queries, const std::vector<std::size_t>& k_list,
                             const std::set<std::string>& adversarial_ids, SearchFn&& top_k) {
  if (queries.queries.empty()) throw std::invalid_argument("empty query set");
  if (k_list.empty()) throw std::invalid_argument("k_list must be non-empty");
  const std::size_t k_max = *std::max_element(k_list.begin(), k_list.end());

  std::vector<std::size_t> hits(k_list.size(), 0);
  for (const auto& q : queries.queries) {
    const RankedList ranked = top_k(q, k_max);
    std::size_t first_adv_rank = ranked.size() + 1;  // 1-based
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (adversarial_ids.count(ranked[r].id)) {
        first_adv_rank = r + 1;
        break;
      }
    }
    for (std::size_t i = 0; i < k_list.size(); ++i) {
      if (first_adv_rank <= k_list[i]) ++hits[i];
    }
  }

  EvalReport report;
  report.num_queries = queries.queries.size();
  report.num_adversarial = adversarial_ids.size();
  report.dataset_tag = queries.source;
  for (std::size_t i = 0; i < k_list.size(); ++i) {
    report.success_rate[k_list[i]] =
        100.0 * static_cast<double>(hits[i]) / static_cast<double>(queries.queries.size());
  }
  return report;
}

}  // namespace

namespace {

std::size_t natural_count(const std::vector<std::string>& ids,
                          const std::set<std::string>& adversarial_ids) {
  std::size_t adv_present = 0;
  for (const auto& id : ids) {
    if (adversarial_ids.count(id)) ++adv_present;
  }
  return ids.size() - adv_present;
}

}  // namespace

EvalReport attack_success_rate(const EncoderModel& model, const RetrievalIndex& poisoned_index,
                               const QuerySet& queries, const std::vector<std::size_t>& k_list,
                               const std::set<std::string>& adversarial_ids) {
  EvalReport report = success_rate_impl(
      queries, k_list, adversarial_ids, [&](const Query& q, std::size_t k) {
        return search(poisoned_index, encode(model, q.tokens, Role::kQuery), k);
      });
  report.corpus_size = natural_count(poisoned_index.ids, adversarial_ids);
  return report;
}

EvalReport bm25_attack_success_rate(const Bm25Index& index, const QuerySet& queries,
                                    const std::vector<std::size_t>& k_list,
                                    const std::set<std::string>& adversarial_ids) {
  EvalReport report = success_rate_impl(queries, k_list, adversarial_ids,
                                        [&](const Query& q, std::size_t k) {
                                          return bm25_search(index, q.tokens, k);
                                        });
  report.corpus_size = natural_count(index.ids, adversarial_ids);
  report.defense_tag = "bm25";
  return report;
}

double retrieval_accuracy(const EncoderModel& model, const RetrievalIndex& index,
                          const QuerySet& queries, const Qrels& qrels, std::size_t k,
                          std::size_t* num_excluded) {
  if (queries.queries.empty()) throw std::invalid_argument("empty query set");
  std::size_t evaluated = 0;
  std::size_t hits = 0;
  std::size_t excluded = 0;
  for (const auto& q : queries.queries) {
    const auto* judged = qrels.relevant(q.id);
    if (judged == nullptr || judged->empty()) {
      ++excluded;
      continue;
    }
    ++evaluated;
    const RankedList ranked = search(index, encode(model, q.tokens, Role::kQuery), k);
    for (const auto& sp : ranked) {
      if (judged->count(sp.id)) {
        ++hits;
        break;
      }
    }
  }
  if (num_excluded != nullptr) *num_excluded = excluded;
  if (evaluated == 0) return 0.0;
  return static_cast<double>(hits) / static_cast<double>(evaluated);
}

std::set<std::string> select_transfer_passage(const PoisonSet& poison, const EncoderModel& model,
                                              const QuerySet& train_queries,
                                              const TokenSeq& test_query, TransferMode mode) {
  if (poison.passages.empty()) throw std::invalid_argument("empty poison set");
  std::set<std::string> out;
  if (mode == TransferMode::kFull) {
    for (const auto& p : poison.passages) out.insert(p.id);
    return out;
  }
  const Vec test_emb = encode(model, test_query, Role::kQuery);
  if (mode == TransferMode::kNearestTrainQuery) {
    if (train_queries.queries.empty()) throw std::invalid_argument("empty train query set");
    std::size_t best_q = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < train_queries.queries.size(); ++i) {
      const double s =
          similarity(encode(model, train_queries.queries[i].tokens, Role::kQuery), test_emb);
      if (s > best_sim) {
        best_sim = s;
        best_q = i;
      }
    }
    const Vec train_emb = encode(model, train_queries.queries[best_q].tokens, Role::kQuery);
    const AdversarialPassage* best_p = nullptr;
    double best_p_sim = -std::numeric_limits<double>::infinity();
    for (const auto& p : poison.passages) {
      const double s = similarity(train_emb, encode(model, p.tokens, Role::kPassage));
      if (s > best_p_sim) {
        best_p_sim = s;
        best_p = &p;
      }
    }
    out.insert(best_p->id);
    return out;
  }
  // cluster-classify
  if (poison.clustering.centroids.empty()) {
    throw std::invalid_argument("poison set has no clustering centroids");
  }
  const std::size_t cluster = nearest_centroid(poison.clustering.centroids, test_emb);
  for (const auto& p : poison.passages) {
    if (p.cluster_id == cluster) {
      out.insert(p.id);
      return out;
    }
  }
  throw std::invalid_argument("no passage for cluster " + std::to_string(cluster));
}

EvalReport transfer_eval(const PoisonSet& poison, const EncoderModel& model,
                         const Corpus& target_corpus, const QuerySet& target_queries,
                         const std::vector<std::size_t>& k_list, TransferMode mode,
                         const QuerySet* train_queries) {
  if (poison.vocab_fingerprint != 0 && target_corpus.vocab_fingerprint() != 0 &&
      poison.vocab_fingerprint != target_corpus.vocab_fingerprint()) {
    throw std::invalid_argument("vocabulary mismatch between poison set and target corpus");
  }
  const Corpus poisoned = inject(target_corpus, poison);
  const RetrievalIndex index = build_index(model, poisoned);

  EvalReport report;
  if (mode == TransferMode::kFull) {
    std::set<std::string> ids;
    for (const auto& p : poison.passages) ids.insert(p.id);
    report = attack_success_rate(model, index, target_queries, k_list, ids);
  } else {
    // per-query credited subset
    if (mode == TransferMode::kNearestTrainQuery && train_queries == nullptr) {
      throw std::invalid_argument("nearest-train-query mode needs the training queries");
    }
    if (target_queries.queries.empty()) throw std::invalid_argument("empty query set");
    if (k_list.empty()) throw std::invalid_argument("k_list must be non-empty");
    const std::size_t k_max = *std::max_element(k_list.begin(), k_list.end());
    std::vector<std::size_t> hits(k_list.size(), 0);
    static const QuerySet kEmpty;
    const QuerySet& train = train_queries ? *train_queries : kEmpty;
    for (const auto& q : target_queries.queries) {
      const auto credited = select_transfer_passage(poison, model, train, q.tokens, mode);
      const RankedList ranked = search(index, encode(model, q.tokens, Role::kQuery), k_max);
      std::size_t first_rank = ranked.size() + 1;
      for (std::size_t r = 0; r < ranked.size(); ++r) {
        if (credited.count(ranked[r].id)) {
          first_rank = r + 1;
          break;
        }
      }
      for (std::size_t i = 0; i < k_list.size(); ++i) {
        if (first_rank <= k_list[i]) ++hits[i];
      }
    }
    report.num_queries = target_queries.queries.size();
    report.num_adversarial = poison.passages.size();
    for (std::size_t i = 0; i < k_list.size(); ++i) {
      report.success_rate[k_list[i]] = 100.0 * static_cast<double>(hits[i]) /
                                       static_cast<double>(target_queries.queries.size());
    }
  }
  report.corpus_size = target_corpus.size();
  report.num_adversarial = poison.passages.size();
  report.dataset_tag = target_queries.source;
  report.source_dataset_tag = poison.dataset_tag;
  report.model_tag = poison.model_tag;
  return report;
}

std::vector<ClipSweepRow> clip_sweep(const EncoderModel& model, const Corpus& natural_corpus,
                                     const PoisonSet& poison, const QuerySet& queries,
                                     const Qrels& qrels, std::size_t k,
                                     const std::vector<double>& percentile_grid) {
  const RetrievalIndex clean = build_index(model, natural_corpus);
  const Corpus poisoned = inject(natural_corpus, poison);
  const RetrievalIndex dirty = build_index(model, poisoned);
  std::set<std::string> adv_ids;
  for (const auto& p : poison.passages) adv_ids.insert(p.id);

  std::vector<ClipSweepRow> rows;
  rows.reserve(percentile_grid.size());
  for (double level : percentile_grid) {
    const double alpha = percentile(clean.norms, level);
    ClipSweepRow row;
    row.percentile_level = level;
    row.alpha = alpha;
    if (alpha <= 0.0) {
      throw std::invalid_argument("norm percentile produced a non-positive alpha");
    }
    const RetrievalIndex clean_clipped = clip_index(clean, alpha);
    const RetrievalIndex dirty_clipped = clip_index(dirty, alpha);
    row.retrieval_accuracy_without_attack =
        retrieval_accuracy(model, clean_clipped, queries, qrels, k);
    const EvalReport r = attack_success_rate(model, dirty_clipped, queries, {k}, adv_ids);
    row.success_rate = r.success_rate.at(k);
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

ordered_json report_to_json(const EvalReport& report) {
  ordered_json j;
  ordered_json rates = ordered_json::object();
  for (const auto& [k, rate] : report.success_rate) rates[std::to_string(k)] = rate;
  j["success_rate"] = rates;
  j["retrieval_accuracy"] =
      report.retrieval_accuracy ? ordered_json(*report.retrieval_accuracy) : ordered_json(nullptr);
  j["num_queries"] = report.num_queries;
  j["num_queries_without_qrels"] = report.num_queries_without_qrels;
  j["num_adversarial"] = report.num_adversarial;
  j["corpus_size"] = report.corpus_size;
  j["dataset"] = report.dataset_tag;
  j["source_dataset"] = report.source_dataset_tag;
  j["model"] = report.model_tag;
  j["defense"] = report.defense_tag;
  return j;
}

}  // namespace

void save_report_json(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << report_to_json(report).dump(2) << "\n";
}

EvalReport load_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  ordered_json j = ordered_json::parse(in);
  EvalReport report;
  for (const auto& [k, rate] : j.at("success_rate").items()) {
    report.success_rate[std::stoul(k)] = rate.get<double>();
  }
  if (!j.at("retrieval_accuracy").is_null()) {
    report.retrieval_accuracy = j.at("retrieval_accuracy").get<double>();
  }
  report.num_queries = j.at("num_queries").get<std::size_t>();
  report.num_queries_without_qrels = j.at("num_queries_without_qrels").get<std::size_t>();
  report.num_adversarial = j.at("num_adversarial").get<std::size_t>();
  report.corpus_size = j.at("corpus_size").get<std::size_t>();
  report.dataset_tag = j.value("dataset", "");
  report.source_dataset_tag = j.value("source_dataset", "");
  report.model_tag = j.value("model", "");
  report.defense_tag = j.value("defense", "");
  return report;
}

void save_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "metric,k,value\n";
  for (const auto& [k, rate] : report.success_rate) {
    out << "success_rate," << k << ',' << fmt_double(rate) << "\n";
  }
  if (report.retrieval_accuracy) {
    out << "retrieval_accuracy,," << fmt_double(*report.retrieval_accuracy) << "\n";
  }
  out << "num_queries,," << report.num_queries << "\n";
  out << "num_adversarial,," << report.num_adversarial << "\n";
  out << "corpus_size,," << report.corpus_size << "\n";
}

void save_sweep_csv(const std::vector<ClipSweepRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "percentile,alpha,retrieval_accuracy_without_attack,success_rate\n";
  for (const auto& row : rows) {
    out << fmt_double(row.percentile_level) << ',' << fmt_double(row.alpha) << ','
        << fmt_double(row.retrieval_accuracy_without_attack) << ',' << fmt_double(row.success_rate)
        << "\n";
  }
}

}  // namespace cpl
