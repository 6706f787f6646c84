#include "cpl/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "cpl/rng.hpp"

namespace cpl {

namespace {

// ordered roughly by corpus frequency; weights decay harmonically
const std::vector<std::string>& function_words() {
  static const std::vector<std::string> words = {
      "the", "of",    "is",  "in",   "and", "a",    "to",   "was",  "what", "for",
      "on",  "are",   "as",  "with", "how", "who",  "by",   "that", "it",   "from",
      "at",  "when",  "its", "does", "an",  "this", "were", "which", "where", "did",
      "be",  "or",    "has", "have", "had", "not",  "but",  "do",   "they", "why"};
  return words;
}

const std::vector<std::string>& interrogatives() {
  static const std::vector<std::string> words = {"what", "how", "who", "when",
                                                 "where", "which", "why"};
  return words;
}

const std::vector<std::string>& query_verbs() {
  static const std::vector<std::string> words = {"is", "was", "are", "does", "did", "do"};
  return words;
}

/// Weighted picker with harmonic weights 1/(rank+1).
class ZipfPicker {
 public:
  explicit ZipfPicker(std::size_t n) : cumulative_(n) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += 1.0 / static_cast<double>(i + 1);
      cumulative_[i] = total;
    }
  }
  std::size_t pick(Rng& rng) const {
    const double target = rng.uniform_real() * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                                 cumulative_.size() - 1);
  }

 private:
  std::vector<double> cumulative_;
};

std::string make_word(Rng& rng) {
  static const char* consonants = "bcdfghjklmnprstvz";
  static const char* vowels = "aeiou";
  const std::size_t syllables = 2 + rng.uniform(2);
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w.push_back(consonants[rng.uniform(17)]);
    w.push_back(vowels[rng.uniform(5)]);
    if (rng.uniform(4) == 0) w.push_back(consonants[rng.uniform(17)]);
  }
  return w;
}

std::vector<std::vector<std::string>> make_topic_pools(const SynthConfig& cfg) {
  Rng rng(splitmix64(cfg.vocab_seed ^ 0x746f706963ULL));
  std::unordered_set<std::string> used(function_words().begin(), function_words().end());
  std::vector<std::vector<std::string>> pools(cfg.n_topics);
  for (auto& pool : pools) {
    pool.reserve(cfg.topic_words);
    while (pool.size() < cfg.topic_words) {
      std::string w = make_word(rng);
      if (used.insert(w).second) pool.push_back(std::move(w));
    }
  }
  return pools;
}

}  // namespace

SynthDataset generate_synth(const SynthConfig& cfg) {
  if (cfg.n_topics == 0 || cfg.topic_words == 0) {
    throw std::invalid_argument("topics and topic_words must be positive");
  }
  if (cfg.passage_len_min == 0 || cfg.passage_len_max < cfg.passage_len_min) {
    throw std::invalid_argument("bad passage length range");
  }
  const auto pools = make_topic_pools(cfg);
  const auto& common = function_words();
  const ZipfPicker common_picker(common.size());
  const ZipfPicker interrogative_picker(interrogatives().size());
  const ZipfPicker verb_picker(query_verbs().size());

  SynthDataset data;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "synth-%llu", static_cast<unsigned long long>(cfg.seed));
  data.name = buf;

  Rng rng(splitmix64(cfg.seed ^ 0x636f72707573ULL));
  data.passages.reserve(cfg.n_passages);
  data.passage_topic.reserve(cfg.n_passages);
  std::vector<std::vector<std::size_t>> topic_rows(cfg.n_topics);
  for (std::size_t i = 0; i < cfg.n_passages; ++i) {
    const std::size_t topic = i % cfg.n_topics;
    const std::size_t len =
        cfg.passage_len_min + rng.uniform(cfg.passage_len_max - cfg.passage_len_min + 1);
    std::string text;
    for (std::size_t w = 0; w < len; ++w) {
      if (!text.empty()) text.push_back(' ');
      if (rng.uniform_real() < cfg.topic_fraction) {
        text += pools[topic][rng.uniform(pools[topic].size())];
      } else {
        text += common[common_picker.pick(rng)];
      }
    }
    Passage p;
    std::snprintf(buf, sizeof(buf), "P%06zu", i);
    p.id = buf;
    p.text = std::move(text);
    data.passages.push_back(std::move(p));
    data.passage_topic.push_back(topic);
    topic_rows[topic].push_back(i);
  }

  auto make_query = [&](std::size_t topic, const std::string& id, Rng& qrng) {
    Query q;
    q.id = id;
    std::string text = interrogatives()[interrogative_picker.pick(qrng)];
    text.push_back(' ');
    text += query_verbs()[verb_picker.pick(qrng)];
    text += " the";
    for (std::size_t w = 0; w < cfg.query_topic_tokens; ++w) {
      text.push_back(' ');
      text += pools[topic][qrng.uniform(pools[topic].size())];
    }
    q.text = std::move(text);
    return q;
  };

  Rng qrng(splitmix64(cfg.seed ^ 0x717565726965ULL));
  for (std::size_t i = 0; i < cfg.n_train_queries; ++i) {
    const std::size_t topic = i % cfg.n_topics;
    std::snprintf(buf, sizeof(buf), "QTR-%05zu", i);
    data.train_queries.push_back(make_query(topic, buf, qrng));
    data.train_topic.push_back(topic);
  }
  for (std::size_t i = 0; i < cfg.n_test_queries; ++i) {
    const std::size_t topic = static_cast<std::size_t>(qrng.uniform(cfg.n_topics));
    std::snprintf(buf, sizeof(buf), "QTE-%05zu", i);
    data.test_queries.push_back(make_query(topic, buf, qrng));
    data.test_topic.push_back(topic);
  }

  Rng rrng(splitmix64(cfg.seed ^ 0x7172656c73ULL));
  auto add_qrels = [&](const Query& q, std::size_t topic) {
    const auto& rows = topic_rows[topic];
    if (rows.empty()) return;
    if (cfg.relevant_per_query == 0 || cfg.relevant_per_query >= rows.size()) {
      for (std::size_t row : rows) data.qrels.add(q.id, data.passages[row].id, 1);
    } else {
      for (std::size_t pick : rrng.sample_indices(rows.size(), cfg.relevant_per_query)) {
        data.qrels.add(q.id, data.passages[rows[pick]].id, 1);
      }
    }
  };
  for (std::size_t i = 0; i < data.train_queries.size(); ++i) {
    add_qrels(data.train_queries[i], data.train_topic[i]);
  }
  for (std::size_t i = 0; i < data.test_queries.size(); ++i) {
    add_qrels(data.test_queries[i], data.test_topic[i]);
  }
  return data;
}

SynthWorld materialize(const SynthDataset& data, std::size_t min_freq) {
  std::vector<std::string> texts;
  texts.reserve(data.passages.size());
  for (const auto& p : data.passages) texts.push_back(p.text);
  auto vocab = std::make_shared<Vocabulary>(build_vocab(texts, min_freq));
  return materialize_with_vocab(data, vocab);
}

SynthWorld materialize_with_vocab(const SynthDataset& data,
                                  std::shared_ptr<const Vocabulary> vocab) {
  SynthWorld world;
  world.vocab = vocab;
  world.corpus.source = data.name;
  world.corpus.vocab = vocab;
  world.corpus.passages = data.passages;
  for (auto& p : world.corpus.passages) p.tokens = tokenize(*vocab, p.text);
  world.train.split = "train";
  world.train.source = data.name;
  world.train.vocab = vocab;
  world.train.queries = data.train_queries;
  for (auto& q : world.train.queries) q.tokens = tokenize(*vocab, q.text);
  world.test.split = "test";
  world.test.source = data.name;
  world.test.vocab = vocab;
  world.test.queries = data.test_queries;
  for (auto& q : world.test.queries) q.tokens = tokenize(*vocab, q.text);
  world.qrels = data.qrels;
  return world;
}

std::vector<TrainPair> make_train_pairs(const SynthWorld& world, std::uint64_t seed) {
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < world.corpus.size(); ++i) row_of[world.corpus.passages[i].id] = i;
  Rng rng(seed);
  std::vector<TrainPair> pairs;
  pairs.reserve(world.train.size());
  for (const auto& q : world.train.queries) {
    const auto* judged = world.qrels.relevant(q.id);
    if (judged == nullptr || judged->empty()) continue;
    const std::size_t pick = static_cast<std::size_t>(rng.uniform(judged->size()));
    auto it = judged->begin();
    std::advance(it, static_cast<std::ptrdiff_t>(pick));
    pairs.push_back({q.tokens, world.corpus.passages[row_of.at(it->first)].tokens});
  }
  return pairs;
}

void save_synth(const SynthDataset& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  Corpus corpus;
  corpus.passages = data.passages;
  save_corpus_jsonl(corpus, dir + "/corpus.jsonl");
  QuerySet train;
  train.queries = data.train_queries;
  save_queries_jsonl(train, dir + "/queries-train.jsonl");
  QuerySet test;
  test.queries = data.test_queries;
  save_queries_jsonl(test, dir + "/queries-test.jsonl");
  save_qrels_tsv(data.qrels, dir + "/qrels.tsv");
}

}  // namespace cpl
