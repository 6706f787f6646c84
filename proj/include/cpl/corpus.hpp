#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cpl/vocab.hpp"

namespace cpl {

struct Passage {
  std::string id;
  std::string title;
  std::string text;
  TokenSeq tokens;
};

/// A passage collection tied to the vocabulary its tokens were produced with.
struct Corpus {
  std::vector<Passage> passages;
  std::string source;
  std::shared_ptr<const Vocabulary> vocab;

  std::size_t size() const { return passages.size(); }
  std::uint64_t vocab_fingerprint() const { return vocab ? vocab->fingerprint() : 0; }
};

struct Query {
  std::string id;
  std::string text;
  TokenSeq tokens;
};

struct QuerySet {
  std::vector<Query> queries;
  std::string split;
  std::string source;
  std::shared_ptr<const Vocabulary> vocab;

  std::size_t size() const { return queries.size(); }
  std::uint64_t vocab_fingerprint() const { return vocab ? vocab->fingerprint() : 0; }
};

/// Relevance judgments, (query_id, passage_id) -> grade >= 1.
class Qrels {
 public:
  void add(const std::string& query_id, const std::string& passage_id, int grade);
  /// nullptr when the query has no judged passages.
  const std::map<std::string, int>* relevant(const std::string& query_id) const;
  std::size_t num_queries() const { return by_query_.size(); }
  std::size_t num_entries() const { return entries_; }
  const std::unordered_map<std::string, std::map<std::string, int>>& by_query() const {
    return by_query_;
  }

 private:
  std::unordered_map<std::string, std::map<std::string, int>> by_query_;
  std::size_t entries_ = 0;
};

/// BEIR-style JSONL: one object per line with "_id", "title", "text".
Corpus load_corpus_jsonl(const std::string& path, std::shared_ptr<const Vocabulary> vocab,
                         const std::string& source_tag);
void save_corpus_jsonl(const Corpus& corpus, const std::string& path);

/// JSONL with "_id", "text".
QuerySet load_queries_jsonl(const std::string& path, std::shared_ptr<const Vocabulary> vocab,
                            const std::string& split, const std::string& source_tag);
void save_queries_jsonl(const QuerySet& queries, const std::string& path);

/// Tab-separated "query-id<TAB>corpus-id<TAB>score".
Qrels load_qrels_tsv(const std::string& path);
void save_qrels_tsv(const Qrels& qrels, const std::string& path);

std::vector<std::string> corpus_texts(const Corpus& corpus);

}  // namespace cpl
