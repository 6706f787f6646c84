// Command-line front end for the corpus-poisoning lab: dataset synthesis,
// encoder training, indexing, adversarial passage generation, injection,
// evaluation, defenses, and the full pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include "CLI11.hpp"
#include "cpl/attack.hpp"
#include "cpl/defense.hpp"
#include "cpl/eval.hpp"
#include "cpl/experiment.hpp"
#include "cpl/index.hpp"
#include "cpl/serialize.hpp"
#include "cpl/synth.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitStageFailure = 2;

using namespace cpl;

std::vector<TokenSeq> query_tokens(const QuerySet& queries) {
  std::vector<TokenSeq> out;
  out.reserve(queries.size());
  for (const auto& q : queries.queries) out.push_back(q.tokens);
  return out;
}

std::set<std::string> poison_ids(const PoisonSet& poison) {
  std::set<std::string> ids;
  for (const auto& p : poison.passages) ids.insert(p.id);
  return ids;
}

int cmd_synth(const SynthConfig& cfg, const std::string& out_dir) {
  const SynthDataset data = generate_synth(cfg);
  save_synth(data, out_dir);
  std::printf("wrote %zu passages, %zu train / %zu test queries to %s\n", data.passages.size(),
              data.train_queries.size(), data.test_queries.size(), out_dir.c_str());
  return kExitOk;
}

int cmd_vocab(const std::string& corpus_path, std::size_t min_freq, const std::string& out_path) {
  const Corpus raw = load_corpus_jsonl(corpus_path, nullptr, "corpus");
  const Vocabulary vocab = build_vocab(corpus_texts(raw), min_freq);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + out_path);
  for (const auto& token : vocab.tokens()) out << token << "\n";
  std::printf("vocabulary size %zu written to %s\n", vocab.size(), out_path.c_str());
  return kExitOk;
}

int cmd_train(const std::string& corpus_path, const std::string& queries_path,
              const std::string& qrels_path, const std::string& out_path, std::size_t min_freq,
              std::size_t dim, TrainConfig tc) {
  Corpus raw = load_corpus_jsonl(corpus_path, nullptr, "corpus");
  auto vocab = std::make_shared<Vocabulary>(build_vocab(corpus_texts(raw), min_freq));
  Corpus corpus = load_corpus_jsonl(corpus_path, vocab, "corpus");
  QuerySet queries = load_queries_jsonl(queries_path, vocab, "train", "train");
  Qrels qrels = load_qrels_tsv(qrels_path);

  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < corpus.size(); ++i) row_of[corpus.passages[i].id] = i;
  Rng rng(splitmix64(tc.seed ^ 0x747261696eULL));
  std::vector<TrainPair> pairs;
  for (const auto& q : queries.queries) {
    const auto* judged = qrels.relevant(q.id);
    if (judged == nullptr || judged->empty()) continue;
    auto it = judged->begin();
    std::advance(it, static_cast<std::ptrdiff_t>(rng.uniform(judged->size())));
    auto row = row_of.find(it->first);
    if (row == row_of.end()) continue;
    pairs.push_back({q.tokens, corpus.passages[row->second].tokens});
  }

  EncoderModel model = EncoderModel::random_init(vocab->size(), dim, tc.seed);
  model = train_contrastive(model, pairs, tc);
  save_model(model, *vocab, out_path);
  std::printf("trained on %zu pairs, model written to %s\n", pairs.size(), out_path.c_str());
  return kExitOk;
}

int cmd_index(const std::string& model_path, const std::string& corpus_path,
              const std::string& out_path, double clip_alpha) {
  const ModelBundle bundle = load_model(model_path);
  const Corpus corpus = load_corpus_jsonl(corpus_path, bundle.vocab, "corpus");
  std::optional<double> alpha;
  if (clip_alpha > 0.0) alpha = clip_alpha;
  const RetrievalIndex index = build_index(bundle.model, corpus, alpha);
  save_index(index, out_path);
  std::printf("indexed %zu passages to %s\n", index.size(), out_path.c_str());
  return kExitOk;
}

int cmd_attack(const std::string& model_path, const std::string& corpus_path,
               const std::string& queries_path, std::size_t n_passages, AttackConfig ac,
               const std::string& prefix_text, const std::string& out_path) {
  const ModelBundle bundle = load_model(model_path);
  const Corpus corpus = load_corpus_jsonl(corpus_path, bundle.vocab, "corpus");
  const QuerySet queries = load_queries_jsonl(queries_path, bundle.vocab, "train", "train");
  if (!prefix_text.empty()) ac.fixed_prefix = tokenize(*bundle.vocab, prefix_text);
  PoisonSet poison =
      generate_poison_set(bundle.model, query_tokens(queries), n_passages, ac, corpus);
  poison.model_tag = model_path;
  save_poison_jsonl(poison, out_path);
  std::printf("generated %zu adversarial passages to %s\n", poison.passages.size(),
              out_path.c_str());
  return kExitOk;
}

int cmd_inject(const std::string& corpus_path, const std::string& poison_path,
               const std::string& out_path) {
  const Corpus corpus = load_corpus_jsonl(corpus_path, nullptr, "corpus");
  const PoisonSet poison = load_poison_jsonl(poison_path);
  const Corpus poisoned = inject(corpus, poison);
  save_corpus_jsonl(poisoned, out_path);
  std::printf("poisoned corpus (%zu passages) written to %s\n", poisoned.size(), out_path.c_str());
  return kExitOk;
}

int cmd_eval(const std::string& model_path, const std::string& corpus_path,
             const std::string& queries_path, const std::string& qrels_path,
             const std::string& poison_path, const std::vector<std::size_t>& k_list,
             bool use_bm25, const std::string& out_json, const std::string& out_csv) {
  const ModelBundle bundle = load_model(model_path);
  const Corpus natural = load_corpus_jsonl(corpus_path, bundle.vocab, "corpus");
  const QuerySet queries = load_queries_jsonl(queries_path, bundle.vocab, "test", "test");

  Corpus corpus = natural;
  PoisonSet poison;
  std::set<std::string> adv_ids;
  if (!poison_path.empty()) {
    poison = load_poison_jsonl(poison_path);
    if (poison.vocab_fingerprint != 0 &&
        poison.vocab_fingerprint != bundle.vocab->fingerprint()) {
      throw std::invalid_argument("vocabulary mismatch between poison set and model");
    }
    corpus = inject(natural, poison);
    adv_ids = poison_ids(poison);
  }

  EvalReport report;
  if (use_bm25) {
    report = bm25_attack_success_rate(bm25_build(corpus), queries, k_list, adv_ids);
  } else {
    const RetrievalIndex index = build_index(bundle.model, corpus);
    report = attack_success_rate(bundle.model, index, queries, k_list, adv_ids);
    if (!qrels_path.empty()) {
      // accuracy is reported without the attack, on the natural corpus only
      const RetrievalIndex clean =
          poison_path.empty() ? index : build_index(bundle.model, natural);
      const Qrels qrels = load_qrels_tsv(qrels_path);
      std::size_t excluded = 0;
      report.retrieval_accuracy = retrieval_accuracy(bundle.model, clean, queries, qrels,
                                                     k_list.back(), &excluded);
      report.num_queries_without_qrels = excluded;
    }
  }
  report.model_tag = model_path;
  save_report_json(report, out_json);
  if (!out_csv.empty()) save_report_csv(report, out_csv);
  for (const auto& [k, rate] : report.success_rate) {
    std::printf("success@%zu = %.2f%%\n", k, rate);
  }
  if (report.retrieval_accuracy) {
    std::printf("retrieval accuracy = %.4f\n", *report.retrieval_accuracy);
  }
  return kExitOk;
}

int cmd_defend(const std::string& model_path, const std::string& corpus_path,
               const std::string& poison_path, const std::string& queries_path,
               const std::string& qrels_path, std::size_t lm_order, double lm_smoothing,
               const std::vector<double>& percentiles, std::size_t k,
               const std::string& out_dir) {
  const ModelBundle bundle = load_model(model_path);
  const Corpus corpus = load_corpus_jsonl(corpus_path, bundle.vocab, "corpus");
  const PoisonSet poison = load_poison_jsonl(poison_path);
  const Corpus poisoned = inject(corpus, poison);
  const auto adv_ids = poison_ids(poison);
  std::filesystem::create_directories(out_dir);

  const NgramLm lm = train_ngram_lm(corpus, lm_order, lm_smoothing);
  std::vector<double> adv_scores;
  std::vector<double> nat_scores;
  for (const auto& p : poisoned.passages) {
    (adv_ids.count(p.id) ? adv_scores : nat_scores).push_back(avg_log_likelihood(lm, p.tokens));
  }
  const double threshold = youden_threshold(adv_scores, nat_scores);
  const LikelihoodReport lr = likelihood_filter(lm, poisoned, threshold);
  save_likelihood_csv(lr, adv_ids, out_dir + "/likelihood.csv");
  std::printf("likelihood AUC = %.4f, threshold = %.4f\n", roc_auc(adv_scores, nat_scores),
              threshold);

  const RetrievalIndex dirty = build_index(bundle.model, poisoned);
  save_norm_csv(norm_report(dirty, adv_ids), out_dir + "/norms.csv");

  if (!queries_path.empty() && !qrels_path.empty()) {
    const QuerySet queries = load_queries_jsonl(queries_path, bundle.vocab, "test", "test");
    const Qrels qrels = load_qrels_tsv(qrels_path);
    const auto rows = clip_sweep(bundle.model, corpus, poison, queries, qrels, k, percentiles);
    save_sweep_csv(rows, out_dir + "/clip-sweep.csv");
    for (const auto& row : rows) {
      std::printf("alpha@p%-5.1f = %-10.4f acc = %.4f  success@%zu = %.2f%%\n",
                  row.percentile_level, row.alpha, row.retrieval_accuracy_without_attack, k,
                  row.success_rate);
    }
  }
  return kExitOk;
}

int cmd_report(const std::string& in_json, const std::string& out_csv) {
  const EvalReport report = load_report_json(in_json);
  save_report_csv(report, out_csv);
  std::printf("rendered %s\n", out_csv.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"corpus poisoning laboratory for dense retrievers"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic topic-structured dataset");
  SynthConfig synth_cfg;
  std::string synth_out = "data";
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--topics", synth_cfg.n_topics, "number of topics");
  synth->add_option("--topic-words", synth_cfg.topic_words, "vocabulary per topic");
  synth->add_option("--passages", synth_cfg.n_passages, "corpus size");
  synth->add_option("--passage-len-min", synth_cfg.passage_len_min, "min passage length");
  synth->add_option("--passage-len-max", synth_cfg.passage_len_max, "max passage length");
  synth->add_option("--topic-fraction", synth_cfg.topic_fraction, "topic token fraction");
  synth->add_option("--train-queries", synth_cfg.n_train_queries, "training queries");
  synth->add_option("--test-queries", synth_cfg.n_test_queries, "test queries");
  synth->add_option("--query-topic-tokens", synth_cfg.query_topic_tokens, "topic tokens per query");
  synth->add_option("--relevant-per-query", synth_cfg.relevant_per_query,
                    "judged passages per query (0 = whole topic)");
  synth->add_option("--vocab-seed", synth_cfg.vocab_seed, "topic vocabulary seed");
  synth->add_option("--seed", synth_cfg.seed, "sampling seed")->required();

  // vocab
  auto* vocab = app.add_subcommand("vocab", "build a vocabulary from a corpus");
  std::string vocab_corpus, vocab_out = "vocab.txt";
  std::size_t vocab_min_freq = 1;
  vocab->add_option("--corpus", vocab_corpus, "corpus jsonl")->required();
  vocab->add_option("--min-freq", vocab_min_freq, "minimum token frequency");
  vocab->add_option("--out", vocab_out, "output path");

  // train
  auto* train = app.add_subcommand("train", "train the dual encoder");
  std::string train_corpus, train_queries, train_qrels, train_out = "model.bin";
  std::size_t train_min_freq = 1, train_dim = 64;
  TrainConfig train_tc;
  train->add_option("--corpus", train_corpus, "corpus jsonl")->required();
  train->add_option("--queries", train_queries, "training queries jsonl")->required();
  train->add_option("--qrels", train_qrels, "qrels tsv")->required();
  train->add_option("--out", train_out, "model output path");
  train->add_option("--min-freq", train_min_freq, "minimum token frequency");
  train->add_option("--dim", train_dim, "embedding dimension");
  train->add_option("--learning-rate", train_tc.learning_rate, "SGD learning rate");
  train->add_option("--epochs", train_tc.epochs, "epochs");
  train->add_option("--batch-size", train_tc.batch_size, "batch size");
  train->add_option("--temperature", train_tc.temperature, "softmax temperature");
  train->add_flag("--tie-projections", train_tc.tie_projections,
                  "share one projection between query and passage encoders");
  train->add_option("--seed", train_tc.seed, "training seed")->required();

  // index
  auto* index = app.add_subcommand("index", "embed and index a corpus");
  std::string index_model, index_corpus, index_out = "index.bin";
  double index_clip = 0.0;
  index->add_option("--model", index_model, "model file")->required();
  index->add_option("--corpus", index_corpus, "corpus jsonl")->required();
  index->add_option("--out", index_out, "index output path");
  index->add_option("--clip-alpha", index_clip, "norm cap (0 = unclipped)");

  // attack
  auto* attack = app.add_subcommand("attack", "generate adversarial passages");
  std::string attack_model, attack_corpus, attack_queries, attack_out = "poison.jsonl";
  std::string attack_prefix;
  std::string attack_init = "random-corpus-passage", attack_mode = "single-vector";
  std::size_t attack_n = 10;
  AttackConfig attack_cfg;
  attack->add_option("--model", attack_model, "model file")->required();
  attack->add_option("--corpus", attack_corpus, "corpus jsonl")->required();
  attack->add_option("--queries", attack_queries, "training queries jsonl")->required();
  attack->add_option("--out", attack_out, "poison output path");
  attack->add_option("--n-passages", attack_n, "number of adversarial passages (k-means k)");
  attack->add_option("--passage-length", attack_cfg.passage_length, "tokens per passage");
  attack->add_option("--steps", attack_cfg.steps, "optimization steps");
  attack->add_option("--query-batch", attack_cfg.query_batch, "query batch per step");
  attack->add_option("--candidates", attack_cfg.candidate_count, "HotFlip candidates per step");
  attack->add_option("--init", attack_init, "random-corpus-passage | mask-fill");
  attack->add_option("--prefix", attack_prefix, "fixed prefix text");
  attack->add_option("--similarity-mode", attack_mode, "single-vector | summax");
  attack->add_option("--seed", attack_cfg.seed, "attack seed")->required();

  // inject
  auto* inject_cmd = app.add_subcommand("inject", "insert poison passages into a corpus");
  std::string inject_corpus, inject_poison, inject_out = "corpus-poisoned.jsonl";
  inject_cmd->add_option("--corpus", inject_corpus, "corpus jsonl")->required();
  inject_cmd->add_option("--poison", inject_poison, "poison jsonl")->required();
  inject_cmd->add_option("--out", inject_out, "output corpus path");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "attack success rate and retrieval accuracy");
  std::string eval_model, eval_corpus, eval_queries, eval_qrels, eval_poison;
  std::string eval_json = "eval.json", eval_csv;
  std::vector<std::size_t> eval_k = {1, 5, 10, 20};
  bool eval_bm25 = false;
  eval_cmd->add_option("--model", eval_model, "model file")->required();
  eval_cmd->add_option("--corpus", eval_corpus, "corpus jsonl (natural)")->required();
  eval_cmd->add_option("--queries", eval_queries, "evaluation queries jsonl")->required();
  eval_cmd->add_option("--qrels", eval_qrels, "qrels tsv (for accuracy)");
  eval_cmd->add_option("--poison", eval_poison, "poison jsonl to inject");
  eval_cmd->add_option("--k", eval_k, "k values");
  eval_cmd->add_flag("--bm25", eval_bm25, "use BM25 retrieval instead of the dense index");
  eval_cmd->add_option("--out", eval_json, "report json path");
  eval_cmd->add_option("--out-csv", eval_csv, "report csv path");

  // defend
  auto* defend = app.add_subcommand("defend", "likelihood filtering and norm clipping reports");
  std::string defend_model, defend_corpus, defend_poison, defend_queries, defend_qrels;
  std::string defend_out = "defense";
  std::size_t defend_order = 3, defend_k = 20;
  double defend_smoothing = 0.1;
  std::vector<double> defend_percentiles = {50, 75, 90, 95, 99, 100};
  defend->add_option("--model", defend_model, "model file")->required();
  defend->add_option("--corpus", defend_corpus, "natural corpus jsonl")->required();
  defend->add_option("--poison", defend_poison, "poison jsonl")->required();
  defend->add_option("--queries", defend_queries, "queries jsonl (for clip sweep)");
  defend->add_option("--qrels", defend_qrels, "qrels tsv (for clip sweep)");
  defend->add_option("--lm-order", defend_order, "n-gram order");
  defend->add_option("--lm-smoothing", defend_smoothing, "add-k smoothing constant");
  defend->add_option("--percentiles", defend_percentiles, "alpha grid as norm percentiles");
  defend->add_option("--k", defend_k, "success rate k");
  defend->add_option("--out", defend_out, "output directory");

  // run
  auto* run = app.add_subcommand("run", "full pipeline from a config file");
  std::string run_config;
  run->add_option("--config", run_config, "experiment config json")->required();
  std::map<std::string, std::string> run_overrides;
  static const std::vector<std::string> kConfigKeys = {
      "seed",
      "paths.corpus", "paths.queries_train", "paths.queries_test", "paths.qrels", "paths.model",
      "paths.output_dir",
      "train.enabled", "train.min_freq", "train.dim", "train.learning_rate", "train.epochs",
      "train.batch_size", "train.temperature", "train.tie_projections",
      "attack.enabled", "attack.n_passages", "attack.passage_length", "attack.steps",
      "attack.query_batch", "attack.candidate_count", "attack.init", "attack.fixed_prefix",
      "attack.similarity_mode",
      "defense.enabled", "defense.lm_order", "defense.lm_smoothing", "defense.clip_percentiles",
      "eval.k_list", "eval.transfer_mode",
      "manifest.record_timestamps"};
  for (const auto& key : kConfigKeys) {
    run->add_option_function<std::string>(
        "--" + key, [&run_overrides, key](const std::string& v) { run_overrides[key] = v; },
        "override config key " + key);
  }

  // report
  auto* report = app.add_subcommand("report", "re-render a json report as csv");
  std::string report_in, report_out = "report.csv";
  report->add_option("--in", report_in, "report json")->required();
  report->add_option("--out", report_out, "csv output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_cfg, synth_out);
    if (*vocab) return cmd_vocab(vocab_corpus, vocab_min_freq, vocab_out);
    if (*train) {
      return cmd_train(train_corpus, train_queries, train_qrels, train_out, train_min_freq,
                       train_dim, train_tc);
    }
    if (*index) return cmd_index(index_model, index_corpus, index_out, index_clip);
    if (*attack) {
      if (attack_init == "mask-fill") {
        attack_cfg.init = AttackConfig::Init::kMaskFill;
      } else if (attack_init != "random-corpus-passage") {
        throw std::invalid_argument("unknown init mode: " + attack_init);
      }
      if (attack_mode == "summax") {
        attack_cfg.similarity_mode = AttackConfig::SimMode::kSumMax;
      } else if (attack_mode != "single-vector") {
        throw std::invalid_argument("unknown similarity mode: " + attack_mode);
      }
      return cmd_attack(attack_model, attack_corpus, attack_queries, attack_n, attack_cfg,
                        attack_prefix, attack_out);
    }
    if (*inject_cmd) return cmd_inject(inject_corpus, inject_poison, inject_out);
    if (*eval_cmd) {
      return cmd_eval(eval_model, eval_corpus, eval_queries, eval_qrels, eval_poison, eval_k,
                      eval_bm25, eval_json, eval_csv);
    }
    if (*defend) {
      return cmd_defend(defend_model, defend_corpus, defend_poison, defend_queries, defend_qrels,
                        defend_order, defend_smoothing, defend_percentiles, defend_k, defend_out);
    }
    if (*run) {
      ExperimentConfig cfg = load_config(run_config);
      apply_env_overrides(cfg);
      for (const auto& [key, value] : run_overrides) apply_override(cfg, key, value);
      const RunManifest manifest = run_experiment(cfg);
      if (manifest.status != "ok") {
        std::fprintf(stderr, "run failed at stage: %s\n", manifest.failed_stage.c_str());
        return kExitStageFailure;
      }
      std::printf("run complete, manifest at %s/manifest.json\n", cfg.output_dir.c_str());
      return kExitOk;
    }
    if (*report) return cmd_report(report_in, report_out);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitStageFailure;
  }
  return kExitUsage;
}
