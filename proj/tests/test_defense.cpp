#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "cpl/defense.hpp"
#include "cpl/rng.hpp"
#include "doctest.h"

using namespace cpl;

namespace {

Corpus corpus_from_tokens(const std::vector<TokenSeq>& docs) {
  Corpus corpus;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    Passage p;
    p.id = "P" + std::to_string(i);
    p.tokens = docs[i];
    corpus.passages.push_back(std::move(p));
  }
  return corpus;
}

}  // namespace

TEST_SUITE_BEGIN("defense");

TEST_CASE("unigram probabilities follow the add-k formula") {
  // corpus "a a b" with a=3, b=4; event space is the full vocabulary
  Corpus corpus = corpus_from_tokens({{3, 3, 4}});
  const std::size_t v = 6;
  NgramLm lm(1, 0.1, v);
  for (const auto& p : corpus.passages) lm.observe(p.tokens);
  const double k = 0.1;
  CHECK(lm.prob({}, 3) == doctest::Approx((2.0 + k) / (3.0 + k * v)));
  CHECK(lm.prob({}, 4) == doctest::Approx((1.0 + k) / (3.0 + k * v)));
  CHECK(lm.prob({}, 5) == doctest::Approx(k / (3.0 + k * v)));
}

TEST_CASE("unseen contexts fall back to the uniform smoothed distribution") {
  Corpus corpus = corpus_from_tokens({{3, 4, 5}});
  NgramLm lm(2, 0.1, 8);
  for (const auto& p : corpus.passages) lm.observe(p.tokens);
  // context "7" was never observed
  for (TokenId t = 0; t < 8; ++t) {
    CHECK(lm.prob({7}, t) == doctest::Approx(1.0 / 8.0));
  }
}

TEST_CASE("train_ngram_lm rejects order zero and empty corpora") {
  const Corpus corpus = corpus_from_tokens({{3}});
  CHECK_THROWS_AS(train_ngram_lm(corpus, 0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(train_ngram_lm(Corpus{}, 2, 0.1), std::invalid_argument);
}

TEST_CASE("bigram conditionals match a counting oracle") {
  Rng rng(1);
  std::vector<TokenSeq> docs;
  for (int i = 0; i < 10; ++i) {
    TokenSeq doc;
    const std::size_t len = 4 + rng.uniform(6);
    for (std::size_t w = 0; w < len; ++w) doc.push_back(static_cast<TokenId>(3 + rng.uniform(5)));
    docs.push_back(doc);
  }
  const std::size_t v = 8;
  const double k = 0.1;
  Corpus corpus = corpus_from_tokens(docs);
  corpus.vocab = std::make_shared<Vocabulary>(
      std::vector<std::string>{"[PAD]", "[UNK]", "[MASK]", "a", "b", "c", "d", "e"});
  const NgramLm lm = train_ngram_lm(corpus, 2, k);

  // oracle counts: context is the single previous token, begin marker = -1
  std::map<TokenId, std::map<TokenId, int>> counts;
  std::map<TokenId, int> totals;
  for (const auto& doc : docs) {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const TokenId ctx = i == 0 ? -1 : doc[i - 1];
      ++counts[ctx][doc[i]];
      ++totals[ctx];
    }
  }
  for (const auto& [ctx, row] : counts) {
    for (TokenId t = 0; t < static_cast<TokenId>(v); ++t) {
      const int c = row.count(t) ? row.at(t) : 0;
      const double want = (c + k) / (totals[ctx] + k * v);
      CHECK(lm.prob({ctx}, t) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("smoothed probabilities sum to one over every context") {
  Rng rng(2);
  std::vector<TokenSeq> docs;
  for (int i = 0; i < 5; ++i) {
    TokenSeq doc;
    for (int w = 0; w < 8; ++w) doc.push_back(static_cast<TokenId>(3 + rng.uniform(4)));
    docs.push_back(doc);
  }
  const Corpus corpus = corpus_from_tokens(docs);
  const NgramLm lm = train_ngram_lm(corpus, 3, 0.1);
  const std::size_t v = lm.vocab_size();
  // seen and unseen contexts alike
  const std::vector<std::vector<TokenId>> contexts = {
      {-1, -1}, {-1, docs[0][0]}, {docs[0][0], docs[0][1]}, {5, 6}, {6, 6}};
  for (const auto& ctx : contexts) {
    double total = 0.0;
    for (std::size_t t = 0; t < v; ++t) total += lm.prob(ctx, static_cast<TokenId>(t));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("uniform unigram scores every passage at ln(1/V)") {
  // every one of the 10 ids observed once: smoothing keeps the distribution uniform
  std::vector<TokenSeq> docs = {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}};
  Corpus corpus = corpus_from_tokens(docs);
  NgramLm lm(1, 0.1, 10);
  lm.observe(docs[0]);
  CHECK(avg_log_likelihood(lm, {0, 5, 9}) == doctest::Approx(std::log(0.1)).epsilon(1e-12));
}

TEST_CASE("a near-certain event scores just below zero") {
  TokenSeq repeated(200, 3);
  Corpus corpus = corpus_from_tokens({repeated});
  const NgramLm lm = train_ngram_lm(corpus, 3, 0.01);
  const double score = avg_log_likelihood(lm, TokenSeq(50, 3));
  CHECK(score < 0.0);
  CHECK(score > std::log(0.9));
}

TEST_CASE("avg_log_likelihood matches a per-position hand scorer") {
  Rng rng(3);
  std::vector<TokenSeq> docs;
  for (int i = 0; i < 6; ++i) {
    TokenSeq doc;
    for (int w = 0; w < 10; ++w) doc.push_back(static_cast<TokenId>(rng.uniform(7)));
    docs.push_back(doc);
  }
  const Corpus corpus = corpus_from_tokens(docs);
  const NgramLm lm = train_ngram_lm(corpus, 2, 0.1);

  TokenSeq target;
  for (int w = 0; w < 12; ++w) target.push_back(static_cast<TokenId>(rng.uniform(7)));
  double want = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const std::vector<TokenId> ctx = {i == 0 ? TokenId{-1} : target[i - 1]};
    want += std::log(lm.prob(ctx, target[i]));
  }
  want /= static_cast<double>(target.size());
  CHECK(avg_log_likelihood(lm, target) == doctest::Approx(want).epsilon(1e-12));
  CHECK_THROWS_AS(avg_log_likelihood(lm, {}), std::invalid_argument);
}

TEST_CASE("likelihood_filter thresholds behave at the boundaries") {
  const Corpus corpus = corpus_from_tokens({{3, 4}, {4, 5}, {5, 3}});
  const NgramLm lm = train_ngram_lm(corpus, 2, 0.1);
  const auto none = likelihood_filter(lm, corpus, -1e300);
  CHECK(none.flagged.empty());
  const auto all = likelihood_filter(lm, corpus, 1e300);
  CHECK(all.flagged.size() == corpus.size());
}

TEST_CASE("roc_auc matches a sort-and-sweep oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> adv(20), nat(30);
    for (double& x : adv) x = rng.normal() - 1.5;
    for (double& x : nat) x = rng.normal();
    adv[0] = nat[0];  // force a tie

    // oracle: sweep every distinct threshold, trapezoidal ROC integration
    std::vector<double> cuts;
    cuts.insert(cuts.end(), adv.begin(), adv.end());
    cuts.insert(cuts.end(), nat.begin(), nat.end());
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    std::vector<std::pair<double, double>> points = {{0.0, 0.0}};
    for (double cut : cuts) {
      double tpr = 0.0, fpr = 0.0;
      for (double a : adv) {
        if (a <= cut) tpr += 1.0;
      }
      for (double n : nat) {
        if (n <= cut) fpr += 1.0;
      }
      points.emplace_back(fpr / nat.size(), tpr / adv.size());
    }
    double want = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
      want += (points[i].first - points[i - 1].first) * 0.5 *
              (points[i].second + points[i - 1].second);
    }
    CHECK(roc_auc(adv, nat) == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("youden threshold separates disjoint score ranges") {
  const std::vector<double> adv = {-9.0, -8.5, -8.0};
  const std::vector<double> nat = {-3.0, -2.0, -2.5};
  const double cut = youden_threshold(adv, nat);
  for (double a : adv) CHECK(a < cut);
  for (double n : nat) CHECK(n >= cut);
}

TEST_CASE("clip_embedding trivial cases") {
  const Vec unchanged = clip_embedding({3.0, 4.0}, 5.0);
  CHECK(unchanged == Vec{3.0, 4.0});
  const Vec halved = clip_embedding({3.0, 4.0}, 2.5);
  CHECK(halved[0] == doctest::Approx(1.5));
  CHECK(halved[1] == doctest::Approx(2.0));
  CHECK_THROWS_AS(clip_embedding({1.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(clip_embedding({1.0}, -2.0), std::invalid_argument);
}

TEST_CASE("clipping is idempotent, contractive, and direction preserving") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + rng.uniform(6);
    Vec v(d);
    for (double& x : v) x = 3.0 * rng.normal();
    const double alpha = 0.1 + 2.0 * rng.uniform_real();
    const Vec once = clip_embedding(v, alpha);
    const Vec twice = clip_embedding(once, alpha);
    CHECK(once == twice);
    CHECK(norm2(once) <= std::min(norm2(v), alpha) + 1e-12);
    // non-negative scalar multiple
    const double scale = norm2(v) > 0 ? norm2(once) / norm2(v) : 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      CHECK(once[c] == doctest::Approx(scale * v[c]).epsilon(1e-9));
    }
  }
}

TEST_CASE("norm_report single row and degenerate distribution") {
  RetrievalIndex index;
  index.rows = Mat(1, 2);
  index.rows.at(0, 0) = 2.0;
  index.norms = {2.0};
  index.ids = {"solo"};
  const NormReport report = norm_report(index, {});
  for (double value : report.percentile_values) CHECK(value == doctest::Approx(2.0));

  RetrievalIndex equal;
  equal.rows = Mat(4, 2);
  equal.norms = {1.5, 1.5, 1.5, 1.5};
  equal.ids = {"a", "b", "c", "d"};
  const NormReport flat = norm_report(equal, {"b"});
  for (double value : flat.percentile_values) CHECK(value == doctest::Approx(1.5));
  CHECK(flat.adversarial_ids.count("b") == 1);
}

TEST_CASE("percentiles match a sorted-array oracle") {
  Rng rng(6);
  std::vector<double> values(37);
  for (double& x : values) x = rng.normal();
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  for (double level : {0.0, 10.0, 25.0, 50.0, 77.5, 99.0, 100.0}) {
    const double rank = level / 100.0 * (sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(rank));
    const double want = sorted[lo] + (rank - lo) * (sorted[hi] - sorted[lo]);
    CHECK(percentile(values, level) == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK(percentile(values, 0.0) == doctest::Approx(sorted.front()));
  CHECK(percentile(values, 100.0) == doctest::Approx(sorted.back()));
}

TEST_SUITE_END();
