#include "cpl/defense.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cpl {

namespace {

constexpr TokenId kBeginMarker = -1;

std::string encode_context(const TokenId* ids, std::size_t n) {
  std::string key(n * sizeof(TokenId), '\0');
  std::memcpy(key.data(), ids, n * sizeof(TokenId));
  return key;
}

}  // namespace

NgramLm::NgramLm(std::size_t order, double smoothing, std::size_t vocab_size)
    : order_(order), smoothing_(smoothing), vocab_size_(vocab_size) {
  if (order < 1) throw std::invalid_argument("order must be at least 1");
  if (smoothing <= 0.0) throw std::invalid_argument("smoothing must be positive");
  if (vocab_size == 0) throw std::invalid_argument("vocab size must be positive");
}

std::string NgramLm::context_key(const TokenSeq& seq, std::size_t pos) const {
  std::vector<TokenId> ctx(order_ - 1, kBeginMarker);
  for (std::size_t i = 0; i + 1 < order_; ++i) {
    const std::size_t back = order_ - 1 - i;
    if (pos >= back) ctx[i] = seq[pos - back];
  }
  return encode_context(ctx.data(), ctx.size());
}

void NgramLm::observe(const TokenSeq& seq) {
  for (std::size_t pos = 0; pos < seq.size(); ++pos) {
    const std::string key = context_key(seq, pos);
    ++counts_[key][seq[pos]];
    ++totals_[key];
  }
}

double NgramLm::prob(const std::vector<TokenId>& context, TokenId token) const {
  if (context.size() + 1 != order_) throw std::invalid_argument("context length must be order-1");
  const std::string key = encode_context(context.data(), context.size());
  double count = 0.0;
  double total = 0.0;
  auto tot_it = totals_.find(key);
  if (tot_it != totals_.end()) {
    total = static_cast<double>(tot_it->second);
    const auto& row = counts_.at(key);
    auto it = row.find(token);
    if (it != row.end()) count = static_cast<double>(it->second);
  }
  return (count + smoothing_) / (total + smoothing_ * static_cast<double>(vocab_size_));
}

double NgramLm::log_prob(const TokenSeq& seq, std::size_t pos) const {
  if (pos >= seq.size()) throw std::out_of_range("position out of range");
  const std::string key = context_key(seq, pos);
  double count = 0.0;
  double total = 0.0;
  auto tot_it = totals_.find(key);
  if (tot_it != totals_.end()) {
    total = static_cast<double>(tot_it->second);
    const auto& row = counts_.at(key);
    auto it = row.find(seq[pos]);
    if (it != row.end()) count = static_cast<double>(it->second);
  }
  return std::log((count + smoothing_) / (total + smoothing_ * static_cast<double>(vocab_size_)));
}

NgramLm train_ngram_lm(const Corpus& corpus, std::size_t order, double smoothing) {
  if (corpus.passages.empty()) throw std::invalid_argument("empty corpus");
  const std::size_t vocab_size =
      corpus.vocab ? corpus.vocab->size() : [&] {
        TokenId max_id = 0;
        for (const auto& p : corpus.passages) {
          for (TokenId t : p.tokens) max_id = std::max(max_id, t);
        }
        return static_cast<std::size_t>(max_id) + 1;
      }();
  NgramLm lm(order, smoothing, vocab_size);
  for (const auto& p : corpus.passages) lm.observe(p.tokens);
  return lm;
}

double avg_log_likelihood(const NgramLm& lm, const TokenSeq& seq) {
  if (seq.empty()) throw std::invalid_argument("cannot score empty sequence");
  double total = 0.0;
  for (std::size_t pos = 0; pos < seq.size(); ++pos) total += lm.log_prob(seq, pos);
  return total / static_cast<double>(seq.size());
}

LikelihoodReport likelihood_filter(const NgramLm& lm, const Corpus& passages, double threshold) {
  LikelihoodReport report;
  report.threshold = threshold;
  report.scores.reserve(passages.size());
  for (const auto& p : passages.passages) {
    const double score = avg_log_likelihood(lm, p.tokens);
    report.scores.emplace_back(p.id, score);
    if (score < threshold) report.flagged.insert(p.id);
  }
  return report;
}

Vec clip_embedding(const Vec& emb, double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("alpha must be positive");
  const double norm = norm2(emb);
  // same relative guard as the index: clip(clip(v)) stays bit-identical
  if (norm <= alpha * (1.0 + 1e-12)) return emb;
  return scaled(emb, alpha / norm);
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of empty set");
  if (p < 0.0 || p > 100.0) throw std::invalid_argument("percentile level out of range");
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(rank));
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

NormReport norm_report(const RetrievalIndex& index, const std::set<std::string>& adversarial_ids) {
  NormReport report;
  report.adversarial_ids = adversarial_ids;
  report.norms.reserve(index.size());
  for (std::size_t r = 0; r < index.size(); ++r) {
    report.norms.emplace_back(index.ids[r], index.norms[r]);
  }
  report.percentile_levels = {0, 1, 5, 10, 25, 50, 75, 90, 95, 99, 100};
  for (double level : report.percentile_levels) {
    report.percentile_values.push_back(percentile(index.norms, level));
  }
  return report;
}

double roc_auc(const std::vector<double>& adversarial_scores,
               const std::vector<double>& natural_scores) {
  if (adversarial_scores.empty() || natural_scores.empty()) {
    throw std::invalid_argument("roc_auc needs both classes");
  }
  double wins = 0.0;
  for (double a : adversarial_scores) {
    for (double n : natural_scores) {
      if (a < n) {
        wins += 1.0;
      } else if (a == n) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(adversarial_scores.size()) *
                 static_cast<double>(natural_scores.size()));
}

double youden_threshold(const std::vector<double>& adversarial_scores,
                        const std::vector<double>& natural_scores) {
  if (adversarial_scores.empty() || natural_scores.empty()) {
    throw std::invalid_argument("youden_threshold needs both classes");
  }
  std::vector<double> all(adversarial_scores);
  all.insert(all.end(), natural_scores.begin(), natural_scores.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  std::vector<double> cuts;
  cuts.push_back(all.front() - 1.0);
  for (std::size_t i = 0; i + 1 < all.size(); ++i) cuts.push_back(0.5 * (all[i] + all[i + 1]));
  cuts.push_back(all.back() + 1.0);

  double best_j = -2.0;
  double best_cut = cuts.front();
  for (double cut : cuts) {
    double tp = 0.0;
    for (double a : adversarial_scores) {
      if (a < cut) tp += 1.0;
    }
    double fp = 0.0;
    for (double n : natural_scores) {
      if (n < cut) fp += 1.0;
    }
    const double j = tp / static_cast<double>(adversarial_scores.size()) -
                     fp / static_cast<double>(natural_scores.size());
    if (j > best_j) {
      best_j = j;
      best_cut = cut;
    }
  }
  return best_cut;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

void save_likelihood_csv(const LikelihoodReport& report,
                         const std::set<std::string>& adversarial_ids, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "passage_id,score,is_adversarial,flagged\n";
  for (const auto& [id, score] : report.scores) {
    out << id << ',' << fmt_double(score) << ',' << (adversarial_ids.count(id) ? 1 : 0) << ','
        << (report.flagged.count(id) ? 1 : 0) << "\n";
  }
}

void save_norm_csv(const NormReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "passage_id,norm,is_adversarial,flagged\n";
  for (const auto& [id, norm] : report.norms) {
    out << id << ',' << fmt_double(norm) << ',' << (report.adversarial_ids.count(id) ? 1 : 0)
        << ",0\n";
  }
}

}  // namespace cpl
