#include "cpl/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cpl/rng.hpp"

namespace cpl {

EncoderModel::EncoderModel(Mat embedding, Mat query_proj, Mat passage_proj)
    : embedding_(std::move(embedding)),
      query_proj_(std::move(query_proj)),
      passage_proj_(std::move(passage_proj)) {
  const std::size_t d = embedding_.cols();
  if (query_proj_.rows() != d || query_proj_.cols() != d || passage_proj_.rows() != d ||
      passage_proj_.cols() != d) {
    throw std::invalid_argument("projection shape must be d x d");
  }
  for (double x : embedding_.data()) {
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite embedding entry");
  }
}

EncoderModel EncoderModel::random_init(std::size_t vocab_size, std::size_t dim,
                                       std::uint64_t seed, double scale) {
  Rng rng(seed);
  Mat emb(vocab_size, dim);
  const double s = scale / std::sqrt(static_cast<double>(dim));
  for (double& x : emb.data()) x = s * rng.normal();
  return EncoderModel(std::move(emb), Mat::identity(dim), Mat::identity(dim));
}

namespace {

void check_seq(const EncoderModel& model, const TokenSeq& seq) {
  if (seq.empty()) throw std::invalid_argument("cannot encode empty sequence");
  for (TokenId t : seq) {
    if (t < 0 || static_cast<std::size_t>(t) >= model.vocab_size()) {
      throw std::out_of_range("token id out of vocabulary range");
    }
  }
}

Vec mean_rows(const EncoderModel& model, const TokenSeq& seq) {
  Vec mean(model.dim(), 0.0);
  for (TokenId t : seq) {
    const double* row = model.embedding().row(static_cast<std::size_t>(t));
    for (std::size_t c = 0; c < model.dim(); ++c) mean[c] += row[c];
  }
  const double inv = 1.0 / static_cast<double>(seq.size());
  for (double& x : mean) x *= inv;
  return mean;
}

}  // namespace

Vec encode(const EncoderModel& model, const TokenSeq& seq, Role role) {
  check_seq(model, seq);
  return matvec(model.proj(role), mean_rows(model, seq));
}

std::vector<Vec> encode_multi(const EncoderModel& model, const TokenSeq& seq, Role role) {
  check_seq(model, seq);
  const Mat& proj = model.proj(role);
  std::vector<Vec> out;
  out.reserve(seq.size());
  for (TokenId t : seq) {
    out.push_back(matvec(proj, model.embedding().row_vec(static_cast<std::size_t>(t))));
  }
  return out;
}

double similarity(const Vec& q_emb, const Vec& p_emb) { return dot(q_emb, p_emb); }

double summax_similarity(const std::vector<Vec>& q_set, const std::vector<Vec>& p_set) {
  if (q_set.empty() || p_set.empty()) throw std::invalid_argument("empty embedding set");
  double total = 0.0;
  for (const Vec& q : q_set) {
    double best = dot(q, p_set[0]);
    for (std::size_t j = 1; j < p_set.size(); ++j) best = std::max(best, dot(q, p_set[j]));
    total += best;
  }
  return total;
}

Vec grad_sim_token(const EncoderModel& model, const std::vector<Vec>& query_embs,
                   const TokenSeq& passage, std::size_t pos) {
  check_seq(model, passage);
  if (pos >= passage.size()) throw std::out_of_range("position out of passage range");
  if (query_embs.empty()) throw std::invalid_argument("query set must be non-empty");
  Vec mean_q(model.dim(), 0.0);
  for (const Vec& q : query_embs) {
    if (q.size() != model.dim()) throw std::invalid_argument("dimension mismatch");
    axpy(1.0, q, mean_q);
  }
  const double inv = 1.0 / static_cast<double>(query_embs.size());
  for (double& x : mean_q) x *= inv;
  Vec grad = matvec_t(model.passage_proj(), mean_q);
  const double inv_len = 1.0 / static_cast<double>(passage.size());
  for (double& x : grad) x *= inv_len;
  return grad;
}

Vec grad_summax_token(const EncoderModel& model, const std::vector<std::vector<Vec>>& query_sets,
                      const TokenSeq& passage, std::size_t pos) {
  check_seq(model, passage);
  if (pos >= passage.size()) throw std::out_of_range("position out of passage range");
  if (query_sets.empty()) throw std::invalid_argument("query set must be non-empty");
  const std::vector<Vec> p_vecs = encode_multi(model, passage, Role::kPassage);
  Vec acc(model.dim(), 0.0);
  for (const auto& q_set : query_sets) {
    for (const Vec& q : q_set) {
      std::size_t best_j = 0;
      double best = dot(q, p_vecs[0]);
      for (std::size_t j = 1; j < p_vecs.size(); ++j) {
        const double s = dot(q, p_vecs[j]);
        if (s > best) {
          best = s;
          best_j = j;
        }
      }
      if (best_j == pos) axpy(1.0, q, acc);
    }
  }
  const double inv = 1.0 / static_cast<double>(query_sets.size());
  for (double& x : acc) x *= inv;
  return matvec_t(model.passage_proj(), acc);
}

namespace {

struct BatchForward {
  std::vector<Vec> q_pooled;  // pre-projection means
  std::vector<Vec> p_pooled;
  std::vector<Vec> q_emb;
  std::vector<Vec> p_emb;
  Mat softmax;  // row i: softmax over scores s_ij
  double loss = 0.0;
};

BatchForward forward_batch(const EncoderModel& model, const std::vector<TrainPair>& batch,
                           double temperature) {
  const std::size_t n = batch.size();
  BatchForward fwd;
  fwd.q_pooled.reserve(n);
  fwd.p_pooled.reserve(n);
  for (const auto& pair : batch) {
    check_seq(model, pair.query);
    check_seq(model, pair.positive);
    fwd.q_pooled.push_back(mean_rows(model, pair.query));
    fwd.p_pooled.push_back(mean_rows(model, pair.positive));
  }
  for (std::size_t i = 0; i < n; ++i) {
    fwd.q_emb.push_back(matvec(model.query_proj(), fwd.q_pooled[i]));
    fwd.p_emb.push_back(matvec(model.passage_proj(), fwd.p_pooled[i]));
  }
  fwd.softmax = Mat(n, n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_max = -1e300;
    for (std::size_t j = 0; j < n; ++j) {
      const double s = dot(fwd.q_emb[i], fwd.p_emb[j]) / temperature;
      fwd.softmax.at(i, j) = s;
      row_max = std::max(row_max, s);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(fwd.softmax.at(i, j) - row_max);
      fwd.softmax.at(i, j) = e;
      denom += e;
    }
    for (std::size_t j = 0; j < n; ++j) fwd.softmax.at(i, j) /= denom;
    loss -= std::log(fwd.softmax.at(i, i));
  }
  fwd.loss = loss / static_cast<double>(n);
  return fwd;
}

}  // namespace

double contrastive_batch_loss(const EncoderModel& model, const std::vector<TrainPair>& batch,
                              double temperature) {
  if (batch.size() < 2) throw std::invalid_argument("contrastive batch needs at least 2 pairs");
  if (temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  return forward_batch(model, batch, temperature).loss;
}

EncoderModel train_contrastive(const EncoderModel& model, const std::vector<TrainPair>& pairs,
                               const TrainConfig& cfg) {
  if (cfg.batch_size < 2) throw std::invalid_argument("batch_size must be at least 2 (no negatives)");
  if (pairs.size() < 2) throw std::invalid_argument("need at least 2 training pairs");
  if (cfg.learning_rate < 0.0) throw std::invalid_argument("learning_rate must be non-negative");
  if (cfg.temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  if (cfg.tie_projections && !(model.query_proj() == model.passage_proj())) {
    throw std::invalid_argument("tie_projections needs identical initial projections");
  }

  Mat emb = model.embedding();
  Mat pq = model.query_proj();
  Mat pp = model.passage_proj();
  const std::size_t d = model.dim();
  Rng rng(cfg.seed);

  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < 2) continue;
      std::vector<TrainPair> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(pairs[order[i]]);

      const EncoderModel current(emb, pq, pp);
      const BatchForward fwd = forward_batch(current, batch, cfg.temperature);
      const std::size_t n = batch.size();
      const double inv_nt = 1.0 / (static_cast<double>(n) * cfg.temperature);

      // dL/ds_ij = (softmax_ij - delta_ij) / n
      std::vector<Vec> d_qemb(n, Vec(d, 0.0));
      std::vector<Vec> d_pemb(n, Vec(d, 0.0));
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double g = (fwd.softmax.at(i, j) - (i == j ? 1.0 : 0.0)) * inv_nt;
          axpy(g, fwd.p_emb[j], d_qemb[i]);
          axpy(g, fwd.q_emb[i], d_pemb[j]);
        }
      }

      Mat d_pq(d, d);
      Mat d_pp(d, d);
      Mat d_emb(emb.rows(), d);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < d; ++r) {
          const double gq = d_qemb[i][r];
          const double gp = d_pemb[i][r];
          for (std::size_t c = 0; c < d; ++c) {
            d_pq.at(r, c) += gq * fwd.q_pooled[i][c];
            d_pp.at(r, c) += gp * fwd.p_pooled[i][c];
          }
        }
        const Vec d_qpool = matvec_t(pq, d_qemb[i]);
        const Vec d_ppool = matvec_t(pp, d_pemb[i]);
        const double qs = 1.0 / static_cast<double>(batch[i].query.size());
        for (TokenId t : batch[i].query) {
          double* row = d_emb.row(static_cast<std::size_t>(t));
          for (std::size_t c = 0; c < d; ++c) row[c] += qs * d_qpool[c];
        }
        const double ps = 1.0 / static_cast<double>(batch[i].positive.size());
        for (TokenId t : batch[i].positive) {
          double* row = d_emb.row(static_cast<std::size_t>(t));
          for (std::size_t c = 0; c < d; ++c) row[c] += ps * d_ppool[c];
        }
      }

      const double lr = cfg.learning_rate;
      for (std::size_t i = 0; i < emb.data().size(); ++i) emb.data()[i] -= lr * d_emb.data()[i];
      if (cfg.tie_projections) {
        for (std::size_t i = 0; i < pq.data().size(); ++i) {
          pq.data()[i] -= lr * (d_pq.data()[i] + d_pp.data()[i]);
        }
        pp = pq;
      } else {
        for (std::size_t i = 0; i < pq.data().size(); ++i) pq.data()[i] -= lr * d_pq.data()[i];
        for (std::size_t i = 0; i < pp.data().size(); ++i) pp.data()[i] -= lr * d_pp.data()[i];
      }
    }
  }
  return EncoderModel(std::move(emb), std::move(pq), std::move(pp));
}

}  // namespace cpl
