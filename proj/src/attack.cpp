#include "cpl/attack.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace cpl {

using nlohmann::ordered_json;

void AttackConfig::validate(std::size_t vocab_size) const {
  if (passage_length < 1) throw std::invalid_argument("passage_length must be at least 1");
  if (candidate_count < 1) throw std::invalid_argument("candidate_count must be at least 1");
  if (candidate_count > vocab_size) {
    throw std::invalid_argument("candidate_count exceeds vocabulary size");
  }
  if (query_batch < 1) throw std::invalid_argument("query_batch must be at least 1");
  if (fixed_prefix && fixed_prefix->size() >= passage_length) {
    throw std::invalid_argument("fixed_prefix must be shorter than passage_length");
  }
}

std::vector<TokenId> hotflip_candidates(const Vec& grad, const EncoderModel& model,
                                        std::size_t m) {
  if (m == 0) throw std::invalid_argument("candidate count must be at least 1");
  if (m > model.vocab_size()) throw std::invalid_argument("candidate count exceeds vocabulary");
  if (grad.size() != model.dim()) throw std::invalid_argument("dimension mismatch");
  const std::size_t v = model.vocab_size();
  std::vector<double> scores(v);
  for (std::size_t t = 0; t < v; ++t) {
    scores[t] = dot(model.embedding().row(t), grad.data(), model.dim());
  }
  std::vector<TokenId> order(v);
  for (std::size_t t = 0; t < v; ++t) order[t] = static_cast<TokenId>(t);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(),
                    [&](TokenId a, TokenId b) {
                      if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
                        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
                      return a < b;
                    });
  order.resize(m);
  return order;
}

double batch_mean_similarity(const EncoderModel& model, const std::vector<TokenSeq>& queries,
                             const TokenSeq& passage, AttackConfig::SimMode mode) {
  if (queries.empty()) throw std::invalid_argument("query set must be non-empty");
  double total = 0.0;
  if (mode == AttackConfig::SimMode::kSingleVector) {
    const Vec p = encode(model, passage, Role::kPassage);
    for (const auto& q : queries) total += similarity(encode(model, q, Role::kQuery), p);
  } else {
    const auto p_set = encode_multi(model, passage, Role::kPassage);
    for (const auto& q : queries) {
      total += summax_similarity(encode_multi(model, q, Role::kQuery), p_set);
    }
  }
  return total / static_cast<double>(queries.size());
}

namespace {

/// Exact batch-mean similarity for every candidate substitution at one
/// position, computed incrementally. For this linear encoder the incremental
/// update is algebraically identical to a full re-encode.
class CandidateScorer {
 public:
  CandidateScorer(const EncoderModel& model, const std::vector<TokenSeq>& queries,
                  const TokenSeq& passage, std::size_t pos, AttackConfig::SimMode mode)
      : model_(model), mode_(mode), length_(passage.size()) {
    const std::size_t nq = queries.size();
    if (mode_ == AttackConfig::SimMode::kSingleVector) {
      Vec mean_q(model.dim(), 0.0);
      for (const auto& q : queries) axpy(1.0, encode(model, q, Role::kQuery), mean_q);
      for (double& x : mean_q) x /= static_cast<double>(nq);
      proj_t_mean_q_ = matvec_t(model.passage_proj(), mean_q);
      const Vec p_emb = encode(model, passage, Role::kPassage);
      base_ = dot(mean_q, p_emb);
      incumbent_term_ =
          dot(proj_t_mean_q_.data(), model.embedding().row(static_cast<std::size_t>(passage[pos])),
              model.dim()) /
          static_cast<double>(length_);
    } else {
      const auto p_vecs = encode_multi(model, passage, Role::kPassage);
      for (const auto& q : queries) {
        for (const auto& qv : encode_multi(model, q, Role::kQuery)) {
          double best = -std::numeric_limits<double>::infinity();
          double best_other = -std::numeric_limits<double>::infinity();
          for (std::size_t j = 0; j < p_vecs.size(); ++j) {
            const double s = dot(qv, p_vecs[j]);
            if (s > best) best = s;
            if (j != pos && s > best_other) best_other = s;
          }
          q_rows_.push_back(matvec_t(model.passage_proj(), qv));
          max_other_.push_back(p_vecs.size() == 1 ? -std::numeric_limits<double>::infinity()
                                                  : best_other);
        }
      }
      inv_queries_ = 1.0 / static_cast<double>(nq);
    }
  }

  double score(TokenId candidate) const {
    const double* row = model_.embedding().row(static_cast<std::size_t>(candidate));
    if (mode_ == AttackConfig::SimMode::kSingleVector) {
      const double cand_term =
          dot(proj_t_mean_q_.data(), row, model_.dim()) / static_cast<double>(length_);
      return base_ - incumbent_term_ + cand_term;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < q_rows_.size(); ++i) {
      const double at_pos = dot(q_rows_[i].data(), row, model_.dim());
      total += std::max(at_pos, max_other_[i]);
    }
    return total * inv_queries_;
  }

 private:
  const EncoderModel& model_;
  AttackConfig::SimMode mode_;
  std::size_t length_;
  // single-vector mode
  Vec proj_t_mean_q_;
  double base_ = 0.0;
  double incumbent_term_ = 0.0;
  // summax mode: one entry per query token vector, flattened over the batch
  std::vector<Vec> q_rows_;          // passage_proj^T * query vector
  std::vector<double> max_other_;    // max inner product over positions != pos
  double inv_queries_ = 0.0;
};

TokenSeq initial_passage(const AttackConfig& cfg, const Corpus& corpus, Rng& rng) {
  TokenSeq tokens;
  if (cfg.init == AttackConfig::Init::kRandomCorpusPassage) {
    if (corpus.passages.empty()) throw std::invalid_argument("empty corpus");
    const std::size_t pick = static_cast<std::size_t>(rng.uniform(corpus.size()));
    tokens = corpus.passages[pick].tokens;
    tokens.resize(cfg.passage_length, Vocabulary::kMask);
  } else {
    tokens.assign(cfg.passage_length, Vocabulary::kMask);
  }
  if (cfg.fixed_prefix) {
    std::copy(cfg.fixed_prefix->begin(), cfg.fixed_prefix->end(), tokens.begin());
  }
  return tokens;
}

}  // namespace

AttackState attack_step(const EncoderModel& model, const std::vector<TokenSeq>& query_batch,
                        const AttackState& state, const AttackConfig& cfg, Rng& rng) {
  if (state.passage.size() != cfg.passage_length) {
    throw std::invalid_argument("state passage length does not match config");
  }
  if (query_batch.empty()) throw std::invalid_argument("query set must be non-empty");
  const std::size_t prefix = cfg.prefix_length();
  if (prefix >= state.passage.size()) {
    throw std::invalid_argument("all positions fixed by prefix");
  }

  const std::size_t pos =
      prefix + static_cast<std::size_t>(rng.uniform(state.passage.size() - prefix));

  Vec grad;
  if (cfg.similarity_mode == AttackConfig::SimMode::kSingleVector) {
    std::vector<Vec> q_embs;
    q_embs.reserve(query_batch.size());
    for (const auto& q : query_batch) q_embs.push_back(encode(model, q, Role::kQuery));
    grad = grad_sim_token(model, q_embs, state.passage, pos);
  } else {
    std::vector<std::vector<Vec>> q_sets;
    q_sets.reserve(query_batch.size());
    for (const auto& q : query_batch) q_sets.push_back(encode_multi(model, q, Role::kQuery));
    grad = grad_summax_token(model, q_sets, state.passage, pos);
  }

  const std::size_t m = std::min(cfg.candidate_count, model.vocab_size());
  const std::vector<TokenId> candidates = hotflip_candidates(grad, model, m);

  const CandidateScorer scorer(model, query_batch, state.passage, pos, cfg.similarity_mode);
  const TokenId incumbent = state.passage[pos];
  const double incumbent_score = scorer.score(incumbent);

  TokenId best_token = incumbent;
  double best_score = incumbent_score;
  for (TokenId cand : candidates) {
    if (cand == incumbent) continue;
    const double s = scorer.score(cand);
    if (s > best_score || (s == best_score && best_token != incumbent && cand < best_token)) {
      best_score = s;
      best_token = cand;
    }
  }

  AttackState next = state;
  next.step = state.step + 1;
  next.batch_mean_similarity = best_score;
  if (best_token != incumbent) {
    next.passage[pos] = best_token;
    next.history.push_back({state.step, pos, incumbent, best_token, best_score});
  }
  return next;
}

AdversarialPassage generate_passage(const EncoderModel& model,
                                    const std::vector<TokenSeq>& cluster_queries,
                                    const AttackConfig& cfg, const Corpus& corpus, Rng& rng) {
  if (cluster_queries.empty()) throw std::invalid_argument("query set must be non-empty");
  cfg.validate(model.vocab_size());

  AttackState state;
  state.passage = initial_passage(cfg, corpus, rng);
  state.batch_mean_similarity =
      batch_mean_similarity(model, cluster_queries, state.passage, cfg.similarity_mode);

  const std::size_t batch_size = std::min(cfg.query_batch, cluster_queries.size());
  std::vector<TokenSeq> batch;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (batch_size == cluster_queries.size()) {
      state = attack_step(model, cluster_queries, state, cfg, rng);
    } else {
      batch.clear();
      for (std::size_t i : rng.sample_indices(cluster_queries.size(), batch_size)) {
        batch.push_back(cluster_queries[i]);
      }
      state = attack_step(model, batch, state, cfg, rng);
    }
  }

  AdversarialPassage out;
  out.id = "ADV-0000";
  out.cluster_id = 0;
  out.tokens = state.passage;
  if (corpus.vocab) out.text = detokenize(*corpus.vocab, out.tokens);
  out.mean_similarity =
      batch_mean_similarity(model, cluster_queries, state.passage, cfg.similarity_mode);
  out.config = cfg;
  return out;
}

std::uint64_t poison_cluster_seed(std::uint64_t seed, std::size_t cluster_id) {
  return seed ^ splitmix64(static_cast<std::uint64_t>(cluster_id));
}

PoisonSet generate_poison_set(const EncoderModel& model, const std::vector<TokenSeq>& train_queries,
                              std::size_t n_passages, const AttackConfig& cfg,
                              const Corpus& corpus) {
  if (n_passages < 1) throw std::invalid_argument("n_passages must be at least 1");
  cfg.validate(model.vocab_size());

  std::vector<Vec> q_embs;
  q_embs.reserve(train_queries.size());
  for (const auto& q : train_queries) q_embs.push_back(encode(model, q, Role::kQuery));

  PoisonSet poison;
  poison.clustering = kmeans(q_embs, n_passages, cfg.seed);
  poison.dataset_tag = corpus.source;
  poison.vocab_fingerprint = corpus.vocab_fingerprint();

  std::vector<std::vector<TokenSeq>> clusters(n_passages);
  for (std::size_t i = 0; i < train_queries.size(); ++i) {
    clusters[poison.clustering.assignments[i]].push_back(train_queries[i]);
  }

  poison.passages.resize(n_passages);
  std::vector<std::future<void>> jobs;
  jobs.reserve(n_passages);
  for (std::size_t c = 0; c < n_passages; ++c) {
    jobs.push_back(std::async(std::launch::async, [&, c]() {
      Rng rng(poison_cluster_seed(cfg.seed, c));
      AdversarialPassage p = generate_passage(model, clusters[c], cfg, corpus, rng);
      char buf[16];
      std::snprintf(buf, sizeof(buf), "ADV-%04zu", c);
      p.id = buf;
      p.cluster_id = c;
      poison.passages[c] = std::move(p);
    }));
  }
  for (auto& job : jobs) job.get();
  return poison;
}

namespace {

ordered_json config_to_json(const AttackConfig& cfg) {
  ordered_json j;
  j["passage_length"] = cfg.passage_length;
  j["steps"] = cfg.steps;
  j["query_batch"] = cfg.query_batch;
  j["candidate_count"] = cfg.candidate_count;
  j["init"] = cfg.init == AttackConfig::Init::kRandomCorpusPassage ? "random-corpus-passage"
                                                                   : "mask-fill";
  j["fixed_prefix"] = cfg.fixed_prefix ? ordered_json(*cfg.fixed_prefix) : ordered_json(nullptr);
  j["seed"] = cfg.seed;
  j["similarity_mode"] =
      cfg.similarity_mode == AttackConfig::SimMode::kSingleVector ? "single-vector" : "summax";
  return j;
}

AttackConfig config_from_json(const ordered_json& j) {
  AttackConfig cfg;
  cfg.passage_length = j.at("passage_length").get<std::size_t>();
  cfg.steps = j.at("steps").get<std::size_t>();
  cfg.query_batch = j.at("query_batch").get<std::size_t>();
  cfg.candidate_count = j.at("candidate_count").get<std::size_t>();
  const std::string init = j.at("init").get<std::string>();
  if (init == "random-corpus-passage") {
    cfg.init = AttackConfig::Init::kRandomCorpusPassage;
  } else if (init == "mask-fill") {
    cfg.init = AttackConfig::Init::kMaskFill;
  } else {
    throw std::invalid_argument("unknown init mode: " + init);
  }
  if (!j.at("fixed_prefix").is_null()) cfg.fixed_prefix = j.at("fixed_prefix").get<TokenSeq>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  const std::string mode = j.at("similarity_mode").get<std::string>();
  if (mode == "single-vector") {
    cfg.similarity_mode = AttackConfig::SimMode::kSingleVector;
  } else if (mode == "summax") {
    cfg.similarity_mode = AttackConfig::SimMode::kSumMax;
  } else {
    throw std::invalid_argument("unknown similarity mode: " + mode);
  }
  return cfg;
}

}  // namespace

void save_poison_jsonl(const PoisonSet& poison, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (const auto& p : poison.passages) {
    ordered_json j;
    j["id"] = p.id;
    j["cluster_id"] = p.cluster_id;
    j["token_ids"] = p.tokens;
    j["text"] = p.text;
    j["mean_similarity"] = p.mean_similarity;
    j["config"] = config_to_json(p.config);
    out << j.dump() << "\n";
  }
  out.close();

  ordered_json meta;
  meta["model_tag"] = poison.model_tag;
  meta["dataset_tag"] = poison.dataset_tag;
  meta["vocab_fingerprint"] = poison.vocab_fingerprint;
  ordered_json centroids = ordered_json::array();
  for (std::size_t r = 0; r < poison.clustering.centroids.rows(); ++r) {
    centroids.push_back(poison.clustering.centroids.row_vec(r));
  }
  meta["centroids"] = centroids;
  meta["inertia"] = poison.clustering.inertia;
  meta["iterations"] = poison.clustering.iterations;
  meta["assignments"] = poison.clustering.assignments;
  std::ofstream meta_out(path + ".meta.json", std::ios::binary);
  if (!meta_out) throw std::runtime_error("cannot write file: " + path + ".meta.json");
  meta_out << meta.dump(2) << "\n";
}

PoisonSet load_poison_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  PoisonSet poison;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line);
    AdversarialPassage p;
    p.id = j.at("id").get<std::string>();
    p.cluster_id = j.at("cluster_id").get<std::size_t>();
    p.tokens = j.at("token_ids").get<TokenSeq>();
    p.text = j.value("text", "");
    p.mean_similarity = j.at("mean_similarity").get<double>();
    p.config = config_from_json(j.at("config"));
    poison.passages.push_back(std::move(p));
  }

  std::ifstream meta_in(path + ".meta.json");
  if (meta_in) {
    ordered_json meta = ordered_json::parse(meta_in);
    poison.model_tag = meta.value("model_tag", "");
    poison.dataset_tag = meta.value("dataset_tag", "");
    poison.vocab_fingerprint = meta.value("vocab_fingerprint", std::uint64_t{0});
    const auto& centroids = meta.at("centroids");
    if (!centroids.empty()) {
      const std::size_t k = centroids.size();
      const std::size_t d = centroids[0].size();
      poison.clustering.centroids = Mat(k, d);
      for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
          poison.clustering.centroids.at(r, c) = centroids[r][c].get<double>();
        }
      }
    }
    poison.clustering.inertia = meta.value("inertia", 0.0);
    poison.clustering.iterations = meta.value("iterations", std::size_t{0});
    if (meta.contains("assignments")) {
      poison.clustering.assignments = meta.at("assignments").get<std::vector<std::size_t>>();
    }
  }
  return poison;
}

}  // namespace cpl
