#include <algorithm>
#include <cmath>
#include <vector>

#include "cpl/model.hpp"
#include "cpl/rng.hpp"
#include "doctest.h"

using namespace cpl;

namespace {

Mat random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (double& x : m.data()) x = scale * rng.normal();
  return m;
}

EncoderModel random_model(std::size_t v, std::size_t d, Rng& rng, bool random_proj = true) {
  Mat emb = random_matrix(v, d, rng);
  Mat pq = random_proj ? random_matrix(d, d, rng, 0.5) : Mat::identity(d);
  Mat pp = random_proj ? random_matrix(d, d, rng, 0.5) : Mat::identity(d);
  return EncoderModel(std::move(emb), std::move(pq), std::move(pp));
}

TokenSeq distinct_tokens(std::size_t v, std::size_t n, Rng& rng) {
  TokenSeq seq;
  for (std::size_t i : rng.sample_indices(v, n)) seq.push_back(static_cast<TokenId>(i));
  return seq;
}

// oracle arithmetic, written against the definitions
Vec oracle_encode(const EncoderModel& m, const TokenSeq& seq, Role role) {
  const std::size_t d = m.dim();
  Vec mean(d, 0.0);
  for (TokenId t : seq) {
    for (std::size_t c = 0; c < d; ++c) mean[c] += m.embedding().at(static_cast<std::size_t>(t), c);
  }
  for (double& x : mean) x /= static_cast<double>(seq.size());
  const Mat& proj = role == Role::kQuery ? m.query_proj() : m.passage_proj();
  Vec out(d, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) out[r] += proj.at(r, c) * mean[c];
  }
  return out;
}

double rel_err(const Vec& got, const Vec& want) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num += (got[i] - want[i]) * (got[i] - want[i]);
    den += want[i] * want[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

// central finite differences on the embedding row used at `pos`; the passage
// uses distinct tokens so the row perturbation is exactly the per-position one
Vec fd_grad(const EncoderModel& model, const std::vector<Vec>& q_embs, const TokenSeq& passage,
            std::size_t pos, double h = 1e-5) {
  const std::size_t d = model.dim();
  const TokenId tok = passage[pos];
  Vec grad(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    auto eval = [&](double delta) {
      Mat emb = model.embedding();
      emb.at(static_cast<std::size_t>(tok), c) += delta;
      const EncoderModel perturbed(std::move(emb), model.query_proj(), model.passage_proj());
      const Vec p = encode(perturbed, passage, Role::kPassage);
      double total = 0.0;
      for (const auto& q : q_embs) total += similarity(q, p);
      return total / static_cast<double>(q_embs.size());
    };
    grad[c] = (eval(h) - eval(-h)) / (2.0 * h);
  }
  return grad;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("encode of a single token with identity projection is its row") {
  Rng rng(1);
  const EncoderModel m = random_model(6, 4, rng, false);
  const Vec got = encode(m, {3}, Role::kQuery);
  for (std::size_t c = 0; c < 4; ++c) CHECK(got[c] == doctest::Approx(m.embedding().at(3, c)));
}

TEST_CASE("mean pooling is invariant to token repetition") {
  Rng rng(2);
  const EncoderModel m = random_model(6, 4, rng);
  CHECK(encode(m, {2, 2}, Role::kPassage) == encode(m, {2}, Role::kPassage));
}

TEST_CASE("mean pooling is order free") {
  Rng rng(3);
  const EncoderModel m = random_model(10, 5, rng);
  TokenSeq seq = {1, 4, 7, 2, 4};
  const Vec base = encode(m, seq, Role::kQuery);
  for (int trial = 0; trial < 5; ++trial) {
    rng.shuffle(seq);
    const Vec permuted = encode(m, seq, Role::kQuery);
    for (std::size_t c = 0; c < base.size(); ++c) {
      CHECK(permuted[c] == doctest::Approx(base[c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("encode matches the matrix arithmetic oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const EncoderModel m = random_model(12, 6, rng);
    const TokenSeq seq = distinct_tokens(12, 5, rng);
    for (Role role : {Role::kQuery, Role::kPassage}) {
      const Vec got = encode(m, seq, role);
      const Vec want = oracle_encode(m, seq, role);
      CHECK(rel_err(got, want) < 1e-12);
    }
  }
}

TEST_CASE("encode rejects an empty sequence") {
  Rng rng(5);
  const EncoderModel m = random_model(4, 3, rng);
  CHECK_THROWS_WITH_AS(encode(m, {}, Role::kQuery), "cannot encode empty sequence",
                       std::invalid_argument);
  CHECK_THROWS_AS(encode_multi(m, {}, Role::kQuery), std::invalid_argument);
}

TEST_CASE("encode_multi keeps one vector per position in order") {
  Rng rng(6);
  const EncoderModel m = random_model(8, 4, rng);
  const TokenSeq seq = {5, 1, 5};
  const auto vecs = encode_multi(m, seq, Role::kPassage);
  REQUIRE(vecs.size() == 3);
  CHECK(vecs[0] == vecs[2]);  // same token, same projected row
  // per-row oracle
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const Vec want = oracle_encode(m, {seq[i]}, Role::kPassage);
    CHECK(rel_err(vecs[i], want) < 1e-12);
  }
  // single position equals pooled encode
  const auto single = encode_multi(m, {5}, Role::kPassage);
  CHECK(single[0] == encode(m, {5}, Role::kPassage));
}

TEST_CASE("similarity is the inner product") {
  CHECK(similarity({1, 0, 2}, {3, 1, 0}) == 3.0);
  CHECK(similarity({1, 2, 3}, {0, 0, 0}) == 0.0);
  CHECK_THROWS_AS(similarity({1, 2}, {1, 2, 3}), std::invalid_argument);

  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.uniform(16);
    Vec a(d), b(d);
    for (double& x : a) x = rng.normal();
    for (double& x : b) x = rng.normal();
    double want = 0.0;
    for (std::size_t i = 0; i < d; ++i) want += a[i] * b[i];
    CHECK(similarity(a, b) == doctest::Approx(want).epsilon(1e-12));
    CHECK(similarity(a, b) == similarity(b, a));
  }
}

TEST_CASE("similarity is linear in each argument") {
  Rng rng(8);
  Vec u(5), v(5);
  for (double& x : u) x = rng.normal();
  for (double& x : v) x = rng.normal();
  for (double a : {-2.0, 0.0, 0.5, 3.0}) {
    CHECK(similarity(scaled(u, a), v) == doctest::Approx(a * similarity(u, v)).epsilon(1e-12));
  }
}

TEST_CASE("summax_similarity hand cases") {
  CHECK(summax_similarity({{1, 0}}, {{0, 1}, {1, 0}}) == 1.0);
  // duplicated query vector doubles the score
  const std::vector<Vec> p = {{0.3, -1.0}, {2.0, 0.1}};
  const Vec q = {0.7, 0.4};
  CHECK(summax_similarity({q, q}, p) == doctest::Approx(2.0 * summax_similarity({q}, p)));
  CHECK_THROWS_AS(summax_similarity({}, p), std::invalid_argument);
}

TEST_CASE("summax_similarity matches the double-loop oracle") {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Vec> qs(4, Vec(3)), ps(3, Vec(3));
    for (auto& q : qs) {
      for (double& x : q) x = rng.normal();
    }
    for (auto& p : ps) {
      for (double& x : p) x = rng.normal();
    }
    double want = 0.0;
    for (const auto& q : qs) {
      double best = -1e300;
      for (const auto& p : ps) {
        double s = 0.0;
        for (std::size_t c = 0; c < 3; ++c) s += q[c] * p[c];
        best = std::max(best, s);
      }
      want += best;
    }
    CHECK(summax_similarity(qs, ps) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("summax degenerates to similarity for single vectors") {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    Vec q(4), p(4);
    for (double& x : q) x = rng.normal();
    for (double& x : p) x = rng.normal();
    CHECK(summax_similarity({q}, {p}) == doctest::Approx(similarity(q, p)).epsilon(1e-12));
  }
}

TEST_CASE("grad_sim_token analytic value for the identity case") {
  // identity projection, one query [2,4], passage length 2 -> q / L = [1,2]
  const EncoderModel m(Mat(5, 2), Mat::identity(2), Mat::identity(2));
  const Vec grad = grad_sim_token(m, {{2, 4}}, {0, 1}, 0);
  CHECK(grad[0] == doctest::Approx(1.0));
  CHECK(grad[1] == doctest::Approx(2.0));
  // positionally uniform
  CHECK(grad == grad_sim_token(m, {{2, 4}}, {0, 1}, 1));
}

TEST_CASE("grad_sim_token averages per-query gradients") {
  Rng rng(11);
  const EncoderModel m = random_model(6, 3, rng);
  const TokenSeq passage = {1, 2, 3};
  Vec q1(3), q2(3);
  for (double& x : q1) x = rng.normal();
  for (double& x : q2) x = rng.normal();
  const Vec g1 = grad_sim_token(m, {q1}, passage, 1);
  const Vec g2 = grad_sim_token(m, {q2}, passage, 1);
  const Vec both = grad_sim_token(m, {q1, q2}, passage, 1);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(both[c] == doctest::Approx(0.5 * (g1[c] + g2[c])).epsilon(1e-12));
  }
}

TEST_CASE("grad_sim_token matches central finite differences") {
  Rng rng(12);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t v = 10 + rng.uniform(10);
    const std::size_t d = 3 + rng.uniform(6);
    const EncoderModel m = random_model(v, d, rng);
    const std::size_t len = 2 + rng.uniform(5);
    const TokenSeq passage = distinct_tokens(v, len, rng);
    const std::size_t pos = rng.uniform(len);
    std::vector<Vec> q_embs(1 + rng.uniform(4), Vec(d));
    for (auto& q : q_embs) {
      for (double& x : q) x = rng.normal();
    }
    const Vec analytic = grad_sim_token(m, q_embs, passage, pos);
    const Vec fd = fd_grad(m, q_embs, passage, pos);
    CHECK(rel_err(analytic, fd) < 1e-6);
  }
}

TEST_CASE("grad_sim_token rejects an out-of-range position") {
  Rng rng(13);
  const EncoderModel m = random_model(4, 2, rng);
  CHECK_THROWS_AS(grad_sim_token(m, {{1, 1}}, {0, 1}, 2), std::out_of_range);
}

TEST_CASE("grad_summax_token matches finite differences through the max") {
  Rng rng(14);
  int accepted = 0;
  while (accepted < 15) {
    const std::size_t v = 12;
    const std::size_t d = 4;
    const EncoderModel m = random_model(v, d, rng);
    const TokenSeq passage = distinct_tokens(v, 3, rng);
    const std::size_t pos = rng.uniform(3);
    std::vector<std::vector<Vec>> q_sets(2);
    for (auto& set : q_sets) {
      set.assign(2, Vec(d));
      for (auto& q : set) {
        for (double& x : q) x = rng.normal();
      }
    }
    // skip draws where an argmax is within fd reach of a tie
    const auto p_vecs = encode_multi(m, passage, Role::kPassage);
    bool stable = true;
    for (const auto& set : q_sets) {
      for (const auto& q : set) {
        std::vector<double> scores;
        for (const auto& p : p_vecs) scores.push_back(dot(q, p));
        std::sort(scores.begin(), scores.end());
        if (scores.back() - scores[scores.size() - 2] < 1e-3) stable = false;
      }
    }
    if (!stable) continue;
    ++accepted;

    const Vec analytic = grad_summax_token(m, q_sets, passage, pos);
    const std::size_t tok = static_cast<std::size_t>(passage[pos]);
    Vec fd(d, 0.0);
    const double h = 1e-5;
    for (std::size_t c = 0; c < d; ++c) {
      auto eval = [&](double delta) {
        Mat emb = m.embedding();
        emb.at(tok, c) += delta;
        const EncoderModel pm(std::move(emb), m.query_proj(), m.passage_proj());
        const auto pv = encode_multi(pm, passage, Role::kPassage);
        double total = 0.0;
        for (const auto& set : q_sets) total += summax_similarity(set, pv);
        return total / static_cast<double>(q_sets.size());
      };
      fd[c] = (eval(h) - eval(-h)) / (2.0 * h);
    }
    const double denom = std::max(norm2(fd), 1e-12);
    Vec diff(d);
    for (std::size_t c = 0; c < d; ++c) diff[c] = analytic[c] - fd[c];
    CHECK(norm2(diff) / denom < 1e-6);
  }
}

TEST_CASE("train_contrastive with zero learning rate is the identity") {
  Rng rng(15);
  const EncoderModel m = random_model(10, 4, rng);
  std::vector<TrainPair> pairs = {{{3, 4}, {5}}, {{6}, {7, 8}}, {{4}, {9}}};
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.seed = 1;
  const EncoderModel trained = train_contrastive(m, pairs, cfg);
  CHECK(trained == m);
}

TEST_CASE("one small step strictly decreases the batch loss") {
  Rng rng(16);
  const EncoderModel m = random_model(12, 4, rng);
  const std::vector<TrainPair> batch = {{{3, 4}, {5, 6}}, {{7}, {8}}, {{9, 10}, {11}}};

  // independent loss oracle: softmax cross-entropy over inner products
  auto oracle_loss = [&](const EncoderModel& model) {
    const std::size_t n = batch.size();
    const double tau = 0.1;
    std::vector<Vec> qs, ps;
    for (const auto& pair : batch) {
      qs.push_back(oracle_encode(model, pair.query, Role::kQuery));
      ps.push_back(oracle_encode(model, pair.positive, Role::kPassage));
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double denom = 0.0;
      for (std::size_t j = 0; j < n; ++j) denom += std::exp(similarity(qs[i], ps[j]) / tau);
      loss -= std::log(std::exp(similarity(qs[i], ps[i]) / tau) / denom);
    }
    return loss / static_cast<double>(n);
  };

  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 1;
  cfg.batch_size = batch.size();
  cfg.temperature = 0.1;
  cfg.seed = 2;
  const EncoderModel stepped = train_contrastive(m, batch, cfg);
  CHECK(oracle_loss(stepped) < oracle_loss(m));
  CHECK(std::isfinite(contrastive_batch_loss(stepped, batch, 0.1)));
}

TEST_CASE("training separable toy data reaches high top-1 accuracy") {
  // disjoint token groups: queries of group g use tokens {2g}, passages {2g+1}
  const std::size_t groups = 8;
  std::vector<TrainPair> pairs;
  for (std::size_t g = 0; g < groups; ++g) {
    const TokenId q = static_cast<TokenId>(3 + 2 * g);
    const TokenId p = static_cast<TokenId>(3 + 2 * g + 1);
    pairs.push_back({{q}, {p}});
    pairs.push_back({{q, q}, {p, p}});  // duplicates pool to the same means
  }
  const std::size_t v = 3 + 2 * groups;
  EncoderModel m = EncoderModel::random_init(v, 16, 99, 0.5);
  TrainConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.epochs = 20;
  cfg.batch_size = 8;
  cfg.temperature = 0.1;
  cfg.seed = 3;
  m = train_contrastive(m, pairs, cfg);

  std::size_t correct = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    const Vec q = encode(m, {static_cast<TokenId>(3 + 2 * g)}, Role::kQuery);
    double best = -1e300;
    std::size_t best_g = 0;
    for (std::size_t other = 0; other < groups; ++other) {
      const Vec p = encode(m, {static_cast<TokenId>(3 + 2 * other + 1)}, Role::kPassage);
      const double s = similarity(q, p);
      if (s > best) {
        best = s;
        best_g = other;
      }
    }
    if (best_g == g) ++correct;
  }
  CHECK(static_cast<double>(correct) / groups >= 0.9);
}

TEST_CASE("training is deterministic for a fixed seed") {
  Rng rng(17);
  const EncoderModel m = random_model(10, 4, rng);
  const std::vector<TrainPair> pairs = {{{3}, {4}}, {{5}, {6}}, {{7}, {8}}, {{9}, {3}}};
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.epochs = 5;
  cfg.batch_size = 2;
  cfg.seed = 42;
  const EncoderModel a = train_contrastive(m, pairs, cfg);
  const EncoderModel b = train_contrastive(m, pairs, cfg);
  CHECK(a == b);
}

TEST_CASE("tied projections stay identical through training") {
  const EncoderModel m = EncoderModel::random_init(10, 6, 4);
  const std::vector<TrainPair> pairs = {{{3}, {4}}, {{5}, {6}}, {{7}, {8}}};
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.epochs = 4;
  cfg.batch_size = 3;
  cfg.seed = 8;
  cfg.tie_projections = true;
  const EncoderModel tied = train_contrastive(m, pairs, cfg);
  CHECK(tied.query_proj() == tied.passage_proj());
  cfg.tie_projections = false;
  const EncoderModel split = train_contrastive(m, pairs, cfg);
  CHECK(!(split.query_proj() == split.passage_proj()));

  // tying demands identical starting projections
  Rng rng(19);
  Mat pq = Mat::identity(4);
  Mat pp = Mat::identity(4);
  pp.at(0, 1) = 0.5;
  const EncoderModel uneven(Mat(6, 4), std::move(pq), std::move(pp));
  cfg.tie_projections = true;
  CHECK_THROWS_AS(train_contrastive(uneven, {{{3}, {4}}, {{4}, {5}}}, cfg),
                  std::invalid_argument);
}

TEST_CASE("train_contrastive rejects batch_size below 2") {
  Rng rng(18);
  const EncoderModel m = random_model(6, 3, rng);
  TrainConfig cfg;
  cfg.batch_size = 1;
  CHECK_THROWS_AS(train_contrastive(m, {{{3}, {4}}, {{4}, {5}}}, cfg), std::invalid_argument);
}

TEST_SUITE_END();
