#include "cpl/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"

namespace cpl {

using nlohmann::ordered_json;

void Qrels::add(const std::string& query_id, const std::string& passage_id, int grade) {
  if (grade < 1) throw std::invalid_argument("qrels grade must be >= 1");
  auto& row = by_query_[query_id];
  if (row.emplace(passage_id, grade).second) ++entries_;
}

const std::map<std::string, int>* Qrels::relevant(const std::string& query_id) const {
  auto it = by_query_.find(query_id);
  return it == by_query_.end() ? nullptr : &it->second;
}

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  return out;
}

}  // namespace

Corpus load_corpus_jsonl(const std::string& path, std::shared_ptr<const Vocabulary> vocab,
                         const std::string& source_tag) {
  auto in = open_in(path);
  Corpus corpus;
  corpus.source = source_tag;
  corpus.vocab = vocab;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line, nullptr, true);
    Passage p;
    p.id = j.at("_id").get<std::string>();
    p.title = j.value("title", "");
    p.text = j.at("text").get<std::string>();
    if (!seen.insert(p.id).second) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": duplicate passage id " + p.id);
    }
    if (vocab) p.tokens = tokenize(*vocab, p.title.empty() ? p.text : p.title + " " + p.text);
    corpus.passages.push_back(std::move(p));
  }
  return corpus;
}

void save_corpus_jsonl(const Corpus& corpus, const std::string& path) {
  auto out = open_out(path);
  for (const auto& p : corpus.passages) {
    ordered_json j;
    j["_id"] = p.id;
    j["title"] = p.title;
    j["text"] = p.text;
    out << j.dump() << "\n";
  }
}

QuerySet load_queries_jsonl(const std::string& path, std::shared_ptr<const Vocabulary> vocab,
                            const std::string& split, const std::string& source_tag) {
  auto in = open_in(path);
  QuerySet qs;
  qs.split = split;
  qs.source = source_tag;
  qs.vocab = vocab;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line, nullptr, true);
    Query q;
    q.id = j.at("_id").get<std::string>();
    q.text = j.at("text").get<std::string>();
    if (!seen.insert(q.id).second) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": duplicate query id " + q.id);
    }
    if (vocab) q.tokens = tokenize(*vocab, q.text);
    qs.queries.push_back(std::move(q));
  }
  return qs;
}

void save_queries_jsonl(const QuerySet& queries, const std::string& path) {
  auto out = open_out(path);
  for (const auto& q : queries.queries) {
    ordered_json j;
    j["_id"] = q.id;
    j["text"] = q.text;
    out << j.dump() << "\n";
  }
}

Qrels load_qrels_tsv(const std::string& path) {
  auto in = open_in(path);
  Qrels qrels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string qid, pid, grade;
    if (!std::getline(ss, qid, '\t') || !std::getline(ss, pid, '\t') || !std::getline(ss, grade)) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed qrels line");
    }
    qrels.add(qid, pid, std::stoi(grade));
  }
  return qrels;
}

void save_qrels_tsv(const Qrels& qrels, const std::string& path) {
  auto out = open_out(path);
  std::vector<std::string> qids;
  qids.reserve(qrels.by_query().size());
  for (const auto& [qid, row] : qrels.by_query()) qids.push_back(qid);
  std::sort(qids.begin(), qids.end());
  for (const auto& qid : qids) {
    for (const auto& [pid, grade] : *qrels.relevant(qid)) {
      out << qid << '\t' << pid << '\t' << grade << "\n";
    }
  }
}

std::vector<std::string> corpus_texts(const Corpus& corpus) {
  std::vector<std::string> texts;
  texts.reserve(corpus.size());
  for (const auto& p : corpus.passages) {
    texts.push_back(p.title.empty() ? p.text : p.title + " " + p.text);
  }
  return texts;
}

}  // namespace cpl
