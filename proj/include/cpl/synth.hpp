#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cpl/corpus.hpp"
#include "cpl/model.hpp"

namespace cpl {

/// Topic-structured synthetic retrieval data: passages mix tokens from one
/// topic pool with common function words; queries carry an interrogative head
/// plus a few tokens from their topic; every same-topic passage is relevant.
struct SynthConfig {
  std::size_t n_topics = 100;
  std::size_t topic_words = 30;  // vocabulary size per topic
  std::size_t n_passages = 10000;
  std::size_t passage_len_min = 40;
  std::size_t passage_len_max = 80;
  double topic_fraction = 0.5;  // per-token probability of drawing from the topic pool
  std::size_t n_train_queries = 2000;
  std::size_t n_test_queries = 500;
  std::size_t query_topic_tokens = 3;
  std::size_t relevant_per_query = 0;  // 0 = all same-topic passages
  std::uint64_t vocab_seed = 0;        // topic word generation; shared pools = same value
  std::uint64_t seed = 0;              // passage/query sampling
};

struct SynthDataset {
  std::vector<Passage> passages;  // text only; tokens filled by materialize()
  std::vector<Query> train_queries;
  std::vector<Query> test_queries;
  Qrels qrels;  // covers both query splits
  std::vector<std::size_t> passage_topic;
  std::vector<std::size_t> train_topic;
  std::vector<std::size_t> test_topic;
  std::string name;
};

SynthDataset generate_synth(const SynthConfig& cfg);

/// Vocabulary built from the corpus texts, everything tokenized.
struct SynthWorld {
  std::shared_ptr<const Vocabulary> vocab;
  Corpus corpus;
  QuerySet train;
  QuerySet test;
  Qrels qrels;
};

SynthWorld materialize(const SynthDataset& data, std::size_t min_freq = 1);

/// Same, but tokenized under a caller-supplied vocabulary (transfer setups).
SynthWorld materialize_with_vocab(const SynthDataset& data,
                                  std::shared_ptr<const Vocabulary> vocab);

/// One (query, sampled positive) pair per training query.
std::vector<TrainPair> make_train_pairs(const SynthWorld& world, std::uint64_t seed);

/// corpus.jsonl, queries-train.jsonl, queries-test.jsonl, qrels.tsv under dir.
void save_synth(const SynthDataset& data, const std::string& dir);

}  // namespace cpl
