#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cpl/attack.hpp"
#include "cpl/eval.hpp"
#include "cpl/model.hpp"

namespace cpl {

inline constexpr const char* kCodeVersion = "0.1.0";

struct TransferTarget {
  std::string name;
  std::string corpus_path;
  std::string queries_path;
};

/// Full pipeline configuration. One JSON document; flat environment variables
/// of the form SECTION_KEY (ATTACK_STEPS, TRAIN_EPOCHS, PATHS_CORPUS, SEED)
/// override individual values.
struct ExperimentConfig {
  std::uint64_t seed = 42;

  // paths
  std::string corpus_path;
  std::string queries_train_path;
  std::string queries_test_path;
  std::string qrels_path;
  std::string model_path;  // load when train disabled, save when enabled
  std::string output_dir = "out";

  // train
  bool train_enabled = false;
  std::size_t min_freq = 1;
  std::size_t dim = 64;
  TrainConfig train;

  // attack
  bool attack_enabled = true;
  std::size_t n_passages = 10;
  AttackConfig attack;
  std::string fixed_prefix_text;

  // defense
  bool defense_enabled = false;
  std::size_t lm_order = 3;
  double lm_smoothing = 0.1;
  std::vector<double> clip_percentiles = {50, 75, 90, 95, 99, 100};

  // eval
  std::vector<std::size_t> k_list = {1, 5, 10, 20};
  std::vector<TransferTarget> transfer;
  TransferMode transfer_mode = TransferMode::kFull;

  bool record_timestamps = false;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

/// Canonical serialization with every effective value materialized; equal
/// effective configs serialize identically (this is what gets hashed).
std::string config_to_json_text(const ExperimentConfig& cfg);

/// Apply one "section.key=value" override (the CLI's dotted flags).
void apply_override(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value);

/// Read SECTION_KEY environment variables.
void apply_env_overrides(ExperimentConfig& cfg);

struct ManifestFile {
  std::string path;  // relative to output_dir
  std::uint64_t bytes = 0;
  std::string digest;
};

struct RunManifest {
  std::string config_hash;
  std::string code_version;
  std::string status;  // "ok" or "failed"
  std::string failed_stage;
  std::optional<std::string> started;
  std::optional<std::string> finished;
  std::vector<ManifestFile> files;
};

/// ingest -> (train) -> index -> attack -> inject -> evaluate ->
/// (defend + re-evaluate). Writes all artifacts plus manifest.json under
/// cfg.output_dir. A stage failure yields status "failed" with the stage
/// named; earlier outputs stay on disk and are listed.
RunManifest run_experiment(const ExperimentConfig& cfg);

void save_manifest(const RunManifest& manifest, const std::string& path);

}  // namespace cpl
