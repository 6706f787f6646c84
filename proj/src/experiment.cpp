#include "cpl/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "cpl/defense.hpp"
#include "cpl/index.hpp"
#include "cpl/serialize.hpp"
#include "json.hpp"

namespace cpl {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string sim_mode_name(AttackConfig::SimMode mode) {
  return mode == AttackConfig::SimMode::kSingleVector ? "single-vector" : "summax";
}

std::string init_name(AttackConfig::Init init) {
  return init == AttackConfig::Init::kRandomCorpusPassage ? "random-corpus-passage" : "mask-fill";
}

std::string transfer_mode_name(TransferMode mode) {
  switch (mode) {
    case TransferMode::kFull:
      return "full";
    case TransferMode::kNearestTrainQuery:
      return "nearest-train-query";
    case TransferMode::kClusterClassify:
      return "cluster-classify";
  }
  return "full";
}

TransferMode transfer_mode_from(const std::string& name) {
  if (name == "full") return TransferMode::kFull;
  if (name == "nearest-train-query") return TransferMode::kNearestTrainQuery;
  if (name == "cluster-classify") return TransferMode::kClusterClassify;
  throw std::invalid_argument("unknown transfer mode: " + name);
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  ordered_json j = ordered_json::parse(json_text);
  ExperimentConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    cfg.corpus_path = p.value("corpus", "");
    cfg.queries_train_path = p.value("queries_train", "");
    cfg.queries_test_path = p.value("queries_test", "");
    cfg.qrels_path = p.value("qrels", "");
    cfg.model_path = p.value("model", "");
    cfg.output_dir = p.value("output_dir", cfg.output_dir);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    cfg.train_enabled = t.value("enabled", cfg.train_enabled);
    cfg.min_freq = t.value("min_freq", cfg.min_freq);
    cfg.dim = t.value("dim", cfg.dim);
    cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.temperature = t.value("temperature", cfg.train.temperature);
    cfg.train.tie_projections = t.value("tie_projections", cfg.train.tie_projections);
  }
  if (j.contains("attack")) {
    const auto& a = j.at("attack");
    cfg.attack_enabled = a.value("enabled", cfg.attack_enabled);
    cfg.n_passages = a.value("n_passages", cfg.n_passages);
    cfg.attack.passage_length = a.value("passage_length", cfg.attack.passage_length);
    cfg.attack.steps = a.value("steps", cfg.attack.steps);
    cfg.attack.query_batch = a.value("query_batch", cfg.attack.query_batch);
    cfg.attack.candidate_count = a.value("candidate_count", cfg.attack.candidate_count);
    if (a.contains("init")) {
      const std::string init = a.at("init").get<std::string>();
      if (init == "random-corpus-passage") {
        cfg.attack.init = AttackConfig::Init::kRandomCorpusPassage;
      } else if (init == "mask-fill") {
        cfg.attack.init = AttackConfig::Init::kMaskFill;
      } else {
        throw std::invalid_argument("unknown attack init: " + init);
      }
    }
    cfg.fixed_prefix_text = a.value("fixed_prefix", "");
    if (a.contains("similarity_mode")) {
      const std::string mode = a.at("similarity_mode").get<std::string>();
      if (mode == "single-vector") {
        cfg.attack.similarity_mode = AttackConfig::SimMode::kSingleVector;
      } else if (mode == "summax") {
        cfg.attack.similarity_mode = AttackConfig::SimMode::kSumMax;
      } else {
        throw std::invalid_argument("unknown similarity mode: " + mode);
      }
    }
  }
  if (j.contains("defense")) {
    const auto& d = j.at("defense");
    cfg.defense_enabled = d.value("enabled", cfg.defense_enabled);
    cfg.lm_order = d.value("lm_order", cfg.lm_order);
    cfg.lm_smoothing = d.value("lm_smoothing", cfg.lm_smoothing);
    if (d.contains("clip_percentiles")) {
      cfg.clip_percentiles = d.at("clip_percentiles").get<std::vector<double>>();
    }
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    if (e.contains("k_list")) cfg.k_list = e.at("k_list").get<std::vector<std::size_t>>();
    if (e.contains("transfer")) {
      for (const auto& t : e.at("transfer")) {
        cfg.transfer.push_back({t.at("name").get<std::string>(),
                                t.at("corpus").get<std::string>(),
                                t.at("queries").get<std::string>()});
      }
    }
    if (e.contains("transfer_mode")) {
      cfg.transfer_mode = transfer_mode_from(e.at("transfer_mode").get<std::string>());
    }
  }
  if (j.contains("manifest")) {
    cfg.record_timestamps = j.at("manifest").value("record_timestamps", false);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["paths"] = {{"corpus", cfg.corpus_path},
                {"queries_train", cfg.queries_train_path},
                {"queries_test", cfg.queries_test_path},
                {"qrels", cfg.qrels_path},
                {"model", cfg.model_path},
                {"output_dir", cfg.output_dir}};
  j["train"] = {{"enabled", cfg.train_enabled},
                {"min_freq", cfg.min_freq},
                {"dim", cfg.dim},
                {"learning_rate", cfg.train.learning_rate},
                {"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"temperature", cfg.train.temperature},
                {"tie_projections", cfg.train.tie_projections}};
  j["attack"] = {{"enabled", cfg.attack_enabled},
                 {"n_passages", cfg.n_passages},
                 {"passage_length", cfg.attack.passage_length},
                 {"steps", cfg.attack.steps},
                 {"query_batch", cfg.attack.query_batch},
                 {"candidate_count", cfg.attack.candidate_count},
                 {"init", init_name(cfg.attack.init)},
                 {"fixed_prefix", cfg.fixed_prefix_text},
                 {"similarity_mode", sim_mode_name(cfg.attack.similarity_mode)}};
  j["defense"] = {{"enabled", cfg.defense_enabled},
                  {"lm_order", cfg.lm_order},
                  {"lm_smoothing", cfg.lm_smoothing},
                  {"clip_percentiles", cfg.clip_percentiles}};
  ordered_json transfer = ordered_json::array();
  for (const auto& t : cfg.transfer) {
    transfer.push_back({{"name", t.name}, {"corpus", t.corpus_path}, {"queries", t.queries_path}});
  }
  j["eval"] = {{"k_list", cfg.k_list},
               {"transfer", transfer},
               {"transfer_mode", transfer_mode_name(cfg.transfer_mode)}};
  j["manifest"] = {{"record_timestamps", cfg.record_timestamps}};
  return j.dump(2);
}

void apply_override(ExperimentConfig& cfg, const std::string& dotted_key,
                    const std::string& value) {
  auto as_u64 = [&]() { return std::stoull(value); };
  auto as_double = [&]() { return std::stod(value); };
  auto as_bool = [&]() {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw std::invalid_argument("expected boolean for " + dotted_key + ": " + value);
  };
  auto as_size_list = [&]() {
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start <= value.size()) {
      const std::size_t comma = value.find(',', start);
      const std::string item = value.substr(start, comma - start);
      if (!item.empty()) out.push_back(std::stoull(item));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  };
  auto as_double_list = [&]() {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= value.size()) {
      const std::size_t comma = value.find(',', start);
      const std::string item = value.substr(start, comma - start);
      if (!item.empty()) out.push_back(std::stod(item));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  };

  if (dotted_key == "seed") {
    cfg.seed = as_u64();
  } else if (dotted_key == "paths.corpus") {
    cfg.corpus_path = value;
  } else if (dotted_key == "paths.queries_train") {
    cfg.queries_train_path = value;
  } else if (dotted_key == "paths.queries_test") {
    cfg.queries_test_path = value;
  } else if (dotted_key == "paths.qrels") {
    cfg.qrels_path = value;
  } else if (dotted_key == "paths.model") {
    cfg.model_path = value;
  } else if (dotted_key == "paths.output_dir") {
    cfg.output_dir = value;
  } else if (dotted_key == "train.enabled") {
    cfg.train_enabled = as_bool();
  } else if (dotted_key == "train.min_freq") {
    cfg.min_freq = as_u64();
  } else if (dotted_key == "train.dim") {
    cfg.dim = as_u64();
  } else if (dotted_key == "train.learning_rate") {
    cfg.train.learning_rate = as_double();
  } else if (dotted_key == "train.epochs") {
    cfg.train.epochs = as_u64();
  } else if (dotted_key == "train.batch_size") {
    cfg.train.batch_size = as_u64();
  } else if (dotted_key == "train.temperature") {
    cfg.train.temperature = as_double();
  } else if (dotted_key == "train.tie_projections") {
    cfg.train.tie_projections = as_bool();
  } else if (dotted_key == "attack.enabled") {
    cfg.attack_enabled = as_bool();
  } else if (dotted_key == "attack.n_passages") {
    cfg.n_passages = as_u64();
  } else if (dotted_key == "attack.passage_length") {
    cfg.attack.passage_length = as_u64();
  } else if (dotted_key == "attack.steps") {
    cfg.attack.steps = as_u64();
  } else if (dotted_key == "attack.query_batch") {
    cfg.attack.query_batch = as_u64();
  } else if (dotted_key == "attack.candidate_count") {
    cfg.attack.candidate_count = as_u64();
  } else if (dotted_key == "attack.init") {
    if (value == "random-corpus-passage") {
      cfg.attack.init = AttackConfig::Init::kRandomCorpusPassage;
    } else if (value == "mask-fill") {
      cfg.attack.init = AttackConfig::Init::kMaskFill;
    } else {
      throw std::invalid_argument("unknown attack init: " + value);
    }
  } else if (dotted_key == "attack.fixed_prefix") {
    cfg.fixed_prefix_text = value;
  } else if (dotted_key == "attack.similarity_mode") {
    if (value == "single-vector") {
      cfg.attack.similarity_mode = AttackConfig::SimMode::kSingleVector;
    } else if (value == "summax") {
      cfg.attack.similarity_mode = AttackConfig::SimMode::kSumMax;
    } else {
      throw std::invalid_argument("unknown similarity mode: " + value);
    }
  } else if (dotted_key == "defense.enabled") {
    cfg.defense_enabled = as_bool();
  } else if (dotted_key == "defense.lm_order") {
    cfg.lm_order = as_u64();
  } else if (dotted_key == "defense.lm_smoothing") {
    cfg.lm_smoothing = as_double();
  } else if (dotted_key == "defense.clip_percentiles") {
    cfg.clip_percentiles = as_double_list();
  } else if (dotted_key == "eval.k_list") {
    cfg.k_list = as_size_list();
  } else if (dotted_key == "eval.transfer_mode") {
    cfg.transfer_mode = transfer_mode_from(value);
  } else if (dotted_key == "manifest.record_timestamps") {
    cfg.record_timestamps = as_bool();
  } else {
    throw std::invalid_argument("unknown config key: " + dotted_key);
  }
}

void apply_env_overrides(ExperimentConfig& cfg) {
  static const std::vector<std::pair<const char*, const char*>> kEnvKeys = {
      {"SEED", "seed"},
      {"PATHS_CORPUS", "paths.corpus"},
      {"PATHS_QUERIES_TRAIN", "paths.queries_train"},
      {"PATHS_QUERIES_TEST", "paths.queries_test"},
      {"PATHS_QRELS", "paths.qrels"},
      {"PATHS_MODEL", "paths.model"},
      {"PATHS_OUTPUT_DIR", "paths.output_dir"},
      {"TRAIN_ENABLED", "train.enabled"},
      {"TRAIN_MIN_FREQ", "train.min_freq"},
      {"TRAIN_DIM", "train.dim"},
      {"TRAIN_LEARNING_RATE", "train.learning_rate"},
      {"TRAIN_EPOCHS", "train.epochs"},
      {"TRAIN_BATCH_SIZE", "train.batch_size"},
      {"TRAIN_TEMPERATURE", "train.temperature"},
      {"TRAIN_TIE_PROJECTIONS", "train.tie_projections"},
      {"ATTACK_ENABLED", "attack.enabled"},
      {"ATTACK_N_PASSAGES", "attack.n_passages"},
      {"ATTACK_PASSAGE_LENGTH", "attack.passage_length"},
      {"ATTACK_STEPS", "attack.steps"},
      {"ATTACK_QUERY_BATCH", "attack.query_batch"},
      {"ATTACK_CANDIDATE_COUNT", "attack.candidate_count"},
      {"ATTACK_INIT", "attack.init"},
      {"ATTACK_FIXED_PREFIX", "attack.fixed_prefix"},
      {"ATTACK_SIMILARITY_MODE", "attack.similarity_mode"},
      {"DEFENSE_ENABLED", "defense.enabled"},
      {"DEFENSE_LM_ORDER", "defense.lm_order"},
      {"DEFENSE_LM_SMOOTHING", "defense.lm_smoothing"},
      {"DEFENSE_CLIP_PERCENTILES", "defense.clip_percentiles"},
      {"EVAL_K_LIST", "eval.k_list"},
      {"EVAL_TRANSFER_MODE", "eval.transfer_mode"},
      {"MANIFEST_RECORD_TIMESTAMPS", "manifest.record_timestamps"},
  };
  for (const auto& [env, key] : kEnvKeys) {
    const char* value = std::getenv(env);
    if (value != nullptr) apply_override(cfg, key, value);
  }
}

namespace {

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc;
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

class OutputTracker {
 public:
  explicit OutputTracker(std::string dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
  }
  std::string path(const std::string& rel) {
    written_.push_back(rel);
    return dir_ + "/" + rel;
  }
  std::vector<ManifestFile> inventory() const {
    std::vector<ManifestFile> files;
    for (const auto& rel : written_) {
      const std::string full = dir_ + "/" + rel;
      if (!fs::exists(full)) continue;
      ManifestFile f;
      f.path = rel;
      f.bytes = static_cast<std::uint64_t>(fs::file_size(full));
      f.digest = digest_hex(file_digest(full));
      files.push_back(std::move(f));
    }
    return files;
  }

 private:
  std::string dir_;
  std::vector<std::string> written_;
};

}  // namespace

void save_manifest(const RunManifest& manifest, const std::string& path) {
  ordered_json j;
  j["config_hash"] = manifest.config_hash;
  j["code_version"] = manifest.code_version;
  j["status"] = manifest.status;
  j["failed_stage"] = manifest.failed_stage;
  if (manifest.started) {
    j["timestamps"] = {{"started", *manifest.started}, {"finished", *manifest.finished}};
  } else {
    j["timestamps"] = nullptr;
  }
  ordered_json files = ordered_json::array();
  for (const auto& f : manifest.files) {
    files.push_back({{"path", f.path}, {"bytes", f.bytes}, {"fnv1a64", f.digest}});
  }
  j["files"] = files;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << j.dump(2) << "\n";
}

RunManifest run_experiment(const ExperimentConfig& cfg) {
  if (cfg.corpus_path.empty()) throw std::invalid_argument("paths.corpus is required");
  if (cfg.queries_train_path.empty()) {
    throw std::invalid_argument("paths.queries_train is required");
  }
  if (!cfg.train_enabled && cfg.model_path.empty()) {
    throw std::invalid_argument("paths.model is required when training is disabled");
  }

  const std::string canonical = config_to_json_text(cfg);
  RunManifest manifest;
  manifest.config_hash = digest_hex(fnv1a64(canonical.data(), canonical.size()));
  manifest.code_version = kCodeVersion;
  manifest.status = "ok";
  if (cfg.record_timestamps) manifest.started = iso_now();

  OutputTracker outputs(cfg.output_dir);
  {
    std::ofstream cfg_out(outputs.path("config.json"), std::ios::binary);
    cfg_out << canonical << "\n";
  }

  std::string stage = "ingest";
  try {
    // ingest (+ optional train)
    std::fprintf(stderr, "[run] stage: ingest\n");
    EncoderModel model;
    std::shared_ptr<const Vocabulary> vocab;
    if (cfg.train_enabled) {
      Corpus raw = load_corpus_jsonl(cfg.corpus_path, nullptr, "corpus");
      vocab = std::make_shared<Vocabulary>(build_vocab(corpus_texts(raw), cfg.min_freq));
      model = EncoderModel::random_init(vocab->size(), cfg.dim, cfg.seed);
    } else {
      ModelBundle bundle = load_model(cfg.model_path);
      model = std::move(bundle.model);
      vocab = bundle.vocab;
    }
    Corpus corpus = load_corpus_jsonl(cfg.corpus_path, vocab, "corpus");
    QuerySet train_queries = load_queries_jsonl(cfg.queries_train_path, vocab, "train", "train");
    QuerySet test_queries;
    if (!cfg.queries_test_path.empty()) {
      test_queries = load_queries_jsonl(cfg.queries_test_path, vocab, "test", "test");
    }
    Qrels qrels;
    if (!cfg.qrels_path.empty()) qrels = load_qrels_tsv(cfg.qrels_path);

    if (cfg.train_enabled) {
      stage = "train";
      std::fprintf(stderr, "[run] stage: train\n");
      std::unordered_map<std::string, std::size_t> row_of;
      for (std::size_t i = 0; i < corpus.size(); ++i) row_of[corpus.passages[i].id] = i;
      Rng pair_rng(splitmix64(cfg.seed ^ 0x747261696eULL));
      std::vector<TrainPair> pairs;
      for (const auto& q : train_queries.queries) {
        const auto* judged = qrels.relevant(q.id);
        if (judged == nullptr || judged->empty()) continue;
        const std::size_t pick = static_cast<std::size_t>(pair_rng.uniform(judged->size()));
        auto it = judged->begin();
        std::advance(it, static_cast<std::ptrdiff_t>(pick));
        auto row = row_of.find(it->first);
        if (row == row_of.end()) continue;
        pairs.push_back({q.tokens, corpus.passages[row->second].tokens});
      }
      TrainConfig tc = cfg.train;
      tc.seed = cfg.seed;
      model = train_contrastive(model, pairs, tc);
      save_model(model, *vocab, outputs.path("model.bin"));
    }

    stage = "index";
    std::fprintf(stderr, "[run] stage: index\n");
    const RetrievalIndex clean_index = build_index(model, corpus);
    save_index(clean_index, outputs.path("index.bin"));

    PoisonSet poison;
    std::set<std::string> adv_ids;
    if (cfg.attack_enabled) {
      stage = "attack";
      std::fprintf(stderr, "[run] stage: attack\n");
      AttackConfig ac = cfg.attack;
      ac.seed = cfg.seed;
      if (!cfg.fixed_prefix_text.empty()) {
        ac.fixed_prefix = tokenize(*vocab, cfg.fixed_prefix_text);
      }
      std::vector<TokenSeq> train_tokens;
      train_tokens.reserve(train_queries.size());
      for (const auto& q : train_queries.queries) train_tokens.push_back(q.tokens);
      poison = generate_poison_set(model, train_tokens, cfg.n_passages, ac, corpus);
      poison.model_tag = cfg.train_enabled ? "trained" : cfg.model_path;
      save_poison_jsonl(poison, outputs.path("poison.jsonl"));
      outputs.path("poison.jsonl.meta.json");  // written by save_poison_jsonl
      for (const auto& p : poison.passages) adv_ids.insert(p.id);
    }

    stage = "inject";
    std::fprintf(stderr, "[run] stage: inject\n");
    const Corpus poisoned = inject(corpus, poison);
    save_corpus_jsonl(poisoned, outputs.path("corpus-poisoned.jsonl"));

    stage = "evaluate";
    std::fprintf(stderr, "[run] stage: evaluate\n");
    const RetrievalIndex poisoned_index = build_index(model, poisoned);
    const QuerySet& eval_queries = test_queries.size() > 0 ? test_queries : train_queries;
    EvalReport report = attack_success_rate(model, poisoned_index, eval_queries, cfg.k_list, adv_ids);
    if (qrels.num_entries() > 0) {
      std::size_t excluded = 0;
      const std::size_t k_acc = cfg.k_list.back();
      report.retrieval_accuracy =
          retrieval_accuracy(model, clean_index, eval_queries, qrels, k_acc, &excluded);
      report.num_queries_without_qrels = excluded;
    }
    report.model_tag = cfg.train_enabled ? "trained" : cfg.model_path;
    save_report_json(report, outputs.path("eval.json"));
    save_report_csv(report, outputs.path("eval.csv"));

    const Bm25Index bm25 = bm25_build(poisoned);
    EvalReport bm25_report = bm25_attack_success_rate(bm25, eval_queries, cfg.k_list, adv_ids);
    save_report_json(bm25_report, outputs.path("eval-bm25.json"));

    for (const auto& target : cfg.transfer) {
      Corpus target_corpus = load_corpus_jsonl(target.corpus_path, vocab, target.name);
      QuerySet target_queries = load_queries_jsonl(target.queries_path, vocab, "test", target.name);
      EvalReport transfer_report = transfer_eval(poison, model, target_corpus, target_queries,
                                                 cfg.k_list, cfg.transfer_mode, &train_queries);
      save_report_json(transfer_report, outputs.path("transfer-" + target.name + ".json"));
    }

    if (cfg.defense_enabled) {
      stage = "defend";
      std::fprintf(stderr, "[run] stage: defend\n");
      const NgramLm lm = train_ngram_lm(corpus, cfg.lm_order, cfg.lm_smoothing);
      std::vector<double> adv_scores;
      std::vector<double> nat_scores;
      for (const auto& p : poisoned.passages) {
        const double score = avg_log_likelihood(lm, p.tokens);
        (adv_ids.count(p.id) ? adv_scores : nat_scores).push_back(score);
      }
      double threshold = 0.0;
      if (!adv_scores.empty() && !nat_scores.empty()) {
        threshold = youden_threshold(adv_scores, nat_scores);
      }
      const LikelihoodReport lr = likelihood_filter(lm, poisoned, threshold);
      save_likelihood_csv(lr, adv_ids, outputs.path("defense-likelihood.csv"));

      const RetrievalIndex dirty = build_index(model, poisoned);
      save_norm_csv(norm_report(dirty, adv_ids), outputs.path("defense-norms.csv"));

      if (qrels.num_entries() > 0 && !poison.passages.empty()) {
        const auto rows = clip_sweep(model, corpus, poison, eval_queries, qrels,
                                     cfg.k_list.back(), cfg.clip_percentiles);
        save_sweep_csv(rows, outputs.path("defense-clip-sweep.csv"));
      }
    }
  } catch (const std::exception& e) {
    manifest.status = "failed";
    manifest.failed_stage = stage;
    std::fprintf(stderr, "[run] stage %s failed: %s\n", stage.c_str(), e.what());
    if (cfg.record_timestamps) manifest.finished = iso_now();
    manifest.files = outputs.inventory();
    save_manifest(manifest, cfg.output_dir + "/manifest.json");
    return manifest;
  }

  if (cfg.record_timestamps) manifest.finished = iso_now();
  manifest.files = outputs.inventory();
  save_manifest(manifest, cfg.output_dir + "/manifest.json");
  return manifest;
}

}  // namespace cpl
