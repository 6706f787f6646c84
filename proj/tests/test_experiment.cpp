#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "cpl/defense.hpp"
#include "cpl/experiment.hpp"
#include "cpl/serialize.hpp"
#include "cpl/synth.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace cpl;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
  const std::string dir = (fs::temp_directory_path() / name).string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_small_dataset(const std::string& dir) {
  SynthConfig cfg;
  cfg.n_topics = 5;
  cfg.topic_words = 8;
  cfg.n_passages = 80;
  cfg.passage_len_min = 10;
  cfg.passage_len_max = 18;
  cfg.n_train_queries = 30;
  cfg.n_test_queries = 10;
  cfg.seed = 11;
  save_synth(generate_synth(cfg), dir);
  return dir;
}

ExperimentConfig small_experiment(const std::string& data_dir, const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.seed = 9;
  cfg.corpus_path = data_dir + "/corpus.jsonl";
  cfg.queries_train_path = data_dir + "/queries-train.jsonl";
  cfg.queries_test_path = data_dir + "/queries-test.jsonl";
  cfg.qrels_path = data_dir + "/qrels.tsv";
  cfg.output_dir = out_dir;
  cfg.train_enabled = true;
  cfg.dim = 12;
  cfg.train.epochs = 3;
  cfg.train.batch_size = 8;
  cfg.train.learning_rate = 0.2;
  cfg.n_passages = 2;
  cfg.attack.steps = 20;
  cfg.attack.passage_length = 8;
  cfg.attack.candidate_count = 20;
  cfg.k_list = {1, 5};
  cfg.defense_enabled = true;
  cfg.clip_percentiles = {50, 100};
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE_BEGIN("experiment");

TEST_CASE("config round trip preserves every effective value") {
  const std::string text = R"({
    "seed": 7,
    "paths": {"corpus": "c.jsonl", "queries_train": "qt.jsonl", "output_dir": "x"},
    "train": {"enabled": true, "epochs": 4, "learning_rate": 0.25},
    "attack": {"steps": 123, "n_passages": 3, "init": "mask-fill"},
    "eval": {"k_list": [2, 4], "transfer_mode": "cluster-classify"},
    "defense": {"enabled": true, "clip_percentiles": [10, 90]}
  })";
  const ExperimentConfig cfg = parse_config(text);
  CHECK(cfg.seed == 7);
  CHECK(cfg.attack.steps == 123);
  CHECK(cfg.attack.init == AttackConfig::Init::kMaskFill);
  CHECK(cfg.transfer_mode == TransferMode::kClusterClassify);
  const std::string canonical = config_to_json_text(cfg);
  const ExperimentConfig again = parse_config(canonical);
  CHECK(config_to_json_text(again) == canonical);
}

TEST_CASE("overrides apply by dotted key and via the environment") {
  ExperimentConfig cfg;
  apply_override(cfg, "attack.steps", "77");
  CHECK(cfg.attack.steps == 77);
  apply_override(cfg, "eval.k_list", "3,9,27");
  CHECK(cfg.k_list == std::vector<std::size_t>{3, 9, 27});
  apply_override(cfg, "train.enabled", "true");
  CHECK(cfg.train_enabled);
  CHECK_THROWS_AS(apply_override(cfg, "no.such.key", "1"), std::invalid_argument);

  setenv("ATTACK_STEPS", "55", 1);
  setenv("SEED", "1234", 1);
  apply_env_overrides(cfg);
  unsetenv("ATTACK_STEPS");
  unsetenv("SEED");
  CHECK(cfg.attack.steps == 55);
  CHECK(cfg.seed == 1234);
}

TEST_CASE("run_experiment produces a complete manifest") {
  const std::string data_dir = write_small_dataset(fresh_dir("cpl_exp_data"));
  const std::string out_dir = fresh_dir("cpl_exp_out");
  const ExperimentConfig cfg = small_experiment(data_dir, out_dir);
  const RunManifest manifest = run_experiment(cfg);
  CHECK(manifest.status == "ok");
  CHECK(manifest.code_version == kCodeVersion);
  CHECK(!manifest.config_hash.empty());

  std::set<std::string> listed;
  for (const auto& f : manifest.files) {
    listed.insert(f.path);
    CHECK(fs::exists(out_dir + "/" + f.path));
    CHECK(f.bytes > 0);
    CHECK(f.digest == digest_hex(file_digest(out_dir + "/" + f.path)));
  }
  // every file written by the run appears in its manifest
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    const std::string name = entry.path().filename().string();
    if (name == "manifest.json") continue;
    CHECK(listed.count(name) == 1);
  }
  CHECK(listed.count("model.bin") == 1);
  CHECK(listed.count("poison.jsonl") == 1);
  CHECK(listed.count("eval.json") == 1);
  CHECK(listed.count("defense-clip-sweep.csv") == 1);
  fs::remove_all(data_dir);
  fs::remove_all(out_dir);
}

TEST_CASE("identical configs reproduce byte-identical outputs") {
  const std::string data_dir = write_small_dataset(fresh_dir("cpl_exp_data2"));
  const std::string out_a = fresh_dir("cpl_exp_out_a");
  const std::string out_b = fresh_dir("cpl_exp_out_b");
  ExperimentConfig cfg_a = small_experiment(data_dir, out_a);
  ExperimentConfig cfg_b = small_experiment(data_dir, out_b);
  const RunManifest ma = run_experiment(cfg_a);
  const RunManifest mb = run_experiment(cfg_b);
  REQUIRE(ma.status == "ok");
  REQUIRE(mb.status == "ok");
  REQUIRE(ma.files.size() == mb.files.size());
  for (std::size_t i = 0; i < ma.files.size(); ++i) {
    CHECK(ma.files[i].path == mb.files[i].path);
    // config.json embeds output_dir, which differs between these two runs
    if (ma.files[i].path == "config.json") continue;
    CHECK(ma.files[i].digest == mb.files[i].digest);
  }
  // manifests differ only in output paths, which live outside the file list;
  // config hashes differ because output_dir differs, so compare reports
  CHECK(slurp(out_a + "/eval.json") == slurp(out_b + "/eval.json"));
  CHECK(slurp(out_a + "/poison.jsonl") == slurp(out_b + "/poison.jsonl"));

  // and a rerun into the same directory gives a byte-identical manifest
  const std::string manifest_before = slurp(out_a + "/manifest.json");
  run_experiment(cfg_a);
  CHECK(slurp(out_a + "/manifest.json") == manifest_before);

  fs::remove_all(data_dir);
  fs::remove_all(out_a);
  fs::remove_all(out_b);
}

TEST_CASE("steps=0 yields an initialization-only poison set plus reports") {
  const std::string data_dir = write_small_dataset(fresh_dir("cpl_exp_data3"));
  const std::string out_dir = fresh_dir("cpl_exp_out3");
  ExperimentConfig cfg = small_experiment(data_dir, out_dir);
  cfg.attack.steps = 0;
  cfg.attack.init = AttackConfig::Init::kMaskFill;
  const RunManifest manifest = run_experiment(cfg);
  REQUIRE(manifest.status == "ok");

  const PoisonSet poison = load_poison_jsonl(out_dir + "/poison.jsonl");
  REQUIRE(poison.passages.size() == 2);
  for (const auto& p : poison.passages) {
    CHECK(p.tokens == TokenSeq(cfg.attack.passage_length, Vocabulary::kMask));
  }
  CHECK(fs::exists(out_dir + "/eval.json"));
  fs::remove_all(data_dir);
  fs::remove_all(out_dir);
}

TEST_CASE("a failing stage is named and partial outputs are kept") {
  const std::string data_dir = write_small_dataset(fresh_dir("cpl_exp_data4"));
  const std::string out_dir = fresh_dir("cpl_exp_out4");
  ExperimentConfig cfg = small_experiment(data_dir, out_dir);
  cfg.qrels_path = data_dir + "/does-not-exist.tsv";
  const RunManifest manifest = run_experiment(cfg);
  CHECK(manifest.status == "failed");
  CHECK(manifest.failed_stage == "ingest");
  CHECK(fs::exists(out_dir + "/manifest.json"));
  CHECK(fs::exists(out_dir + "/config.json"));

  // usage errors surface before any stage runs
  ExperimentConfig invalid;
  CHECK_THROWS_AS(run_experiment(invalid), std::invalid_argument);
  fs::remove_all(data_dir);
  fs::remove_all(out_dir);
}

TEST_CASE("clip sweep rows match individual single-alpha evaluations") {
  const SynthWorld world = materialize(generate_synth([] {
    SynthConfig cfg;
    cfg.n_topics = 4;
    cfg.topic_words = 6;
    cfg.n_passages = 60;
    cfg.passage_len_min = 8;
    cfg.passage_len_max = 14;
    cfg.n_train_queries = 20;
    cfg.n_test_queries = 10;
    cfg.seed = 21;
    return cfg;
  }()));
  EncoderModel model = EncoderModel::random_init(world.vocab->size(), 12, 3);
  model = train_contrastive(model, make_train_pairs(world, 5), [] {
    TrainConfig tc;
    tc.epochs = 4;
    tc.batch_size = 8;
    tc.learning_rate = 0.2;
    tc.seed = 6;
    return tc;
  }());
  std::vector<TokenSeq> train_tokens;
  for (const auto& q : world.train.queries) train_tokens.push_back(q.tokens);
  AttackConfig ac;
  ac.passage_length = 8;
  ac.steps = 30;
  ac.candidate_count = 20;
  ac.seed = 4;
  const PoisonSet poison = generate_poison_set(model, train_tokens, 2, ac, world.corpus);

  const std::vector<double> grid = {25, 75};
  const auto rows = clip_sweep(model, world.corpus, poison, world.test, world.qrels, 5, grid);
  REQUIRE(rows.size() == grid.size());

  // per-point oracle: independent single-alpha evaluation
  const RetrievalIndex clean = build_index(model, world.corpus);
  const Corpus poisoned = inject(world.corpus, poison);
  std::set<std::string> adv_ids;
  for (const auto& p : poison.passages) adv_ids.insert(p.id);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double alpha = percentile(clean.norms, grid[i]);
    CHECK(rows[i].alpha == doctest::Approx(alpha));
    const RetrievalIndex clean_alpha = build_index(model, world.corpus, alpha);
    const RetrievalIndex dirty_alpha = build_index(model, poisoned, alpha);
    const double acc = retrieval_accuracy(model, clean_alpha, world.test, world.qrels, 5);
    const EvalReport er = attack_success_rate(model, dirty_alpha, world.test, {5}, adv_ids);
    CHECK(rows[i].retrieval_accuracy_without_attack == doctest::Approx(acc).epsilon(1e-12));
    CHECK(rows[i].success_rate == doctest::Approx(er.success_rate.at(5)).epsilon(1e-12));
  }
}

TEST_SUITE_END();
