// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eegfmri/hpo.hpp"
#include "eegfmri/metrics.hpp"
#include "eegfmri/models.hpp"
#include "eegfmri/pairing.hpp"
#include "eegfmri/signal.hpp"
#include "eegfmri/synthetic.hpp"

namespace eegfmri {

inline constexpr const char* kToolVersion = "0.1.0";

struct HpoConfig {
  bool enabled = false;
  /// BO iterations per depth.
  std::size_t budget = 100;
  std::size_t max_depth = 8;
  std::size_t max_width = 8;
  /// Training epochs per trial (train.epochs when 0).
  std::size_t trial_epochs = 0;
  /// best_params.json of an earlier LCOMB search whose architecture the
  /// other variants reuse; when empty they run that search first.
  std::string architecture_from;
};

struct ExperimentConfig {
  /// Dataset directory; when empty the synthetic spec is generated in memory.
  std::string dataset_path;
  SyntheticSpec synthetic;
  std::size_t n_train = 0;  // 0: every individual not held out
  std::size_t n_val = 1;
  std::size_t n_test = 1;
  PreprocessConfig preprocess;
  TrainConfig train;
  HpoConfig hpo;
  std::string output_dir = "run";
  std::uint64_t rng_seed = 0;
  /// Axial slice rendered per timestep; mid-plane when unset.
  std::optional<std::size_t> slice_z;
  /// Test windows rendered as slice series.
  std::size_t render_windows = 1;

  /// Variant name as used in the metrics table header.
  std::string variant() const;
  /// Throws InvalidArgument / ShiftNotMultiple and friends.
  void validate() const;
};

nlohmann::json to_json_value(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// FNV-1a of the canonical (sorted-key, compact) config serialization.
std::string config_hash(const ExperimentConfig& cfg);

/// Sets a dotted-path field ("train.loss.theta") in a config JSON. The value
/// is parsed as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& cfg, const std::string& path, const std::string& value);

struct PreparedData {
  SessionSplit split;
  std::string dataset_checksum;
};

/// Loads (or generates) every individual, preprocesses it and splits by
/// individual with the config seed.
PreparedData prepare_data(const ExperimentConfig& cfg);

struct ExperimentResult {
  std::filesystem::path output_dir;
  bool diverged = false;
  std::optional<TrainingDiagnostics> diagnostics;
  std::optional<MetricsReport> report;
};

/// preprocess -> pair -> optional HPO -> train; writes config.json,
/// checkpoint.efck, history.csv, trials.jsonl and manifest.json. On a
/// non-finite loss writes diagnostics.json instead of a checkpoint.
ExperimentResult run_train(const ExperimentConfig& cfg);
/// Scores the run's checkpoint on the test individuals; writes metrics.csv,
/// instances.csv and the slice images, then refreshes the manifest.
ExperimentResult run_evaluate(const std::filesystem::path& run_dir);
/// run_train followed by run_evaluate.
ExperimentResult run_experiment(const ExperimentConfig& cfg);
/// Re-executes the config recorded in a manifest into `output_dir`.
ExperimentResult rerun_from_manifest(const std::filesystem::path& manifest, const std::filesystem::path& output_dir);

/// Result of a standalone hyperparameter search.
struct HpoOutcome {
  /// Depth-wise LCOMB search (absent when the architecture was supplied).
  std::optional<NasResult> nas;
  /// Fixed-depth search of the variant's own hyperparameters (non-LCOMB).
  std::optional<BoResult> bo;
  std::size_t depth = 0;
  TrialResult best;
  TrainConfig best_config;
};

/// LCOMB: depth-wise search over default_space(). Other variants take the
/// architecture found for LCOMB and tune learning rate, L1 weights, batch
/// size (and theta for TOPK) by BO at that depth. Every trial trains on the
/// train split and scores validation L_EPV (training L_EPV without a
/// validation split). Trials are appended to `trial_log` when non-empty;
/// records already there are replayed.
HpoOutcome run_hpo(const ExperimentConfig& cfg, const PreparedData& data, const std::string& trial_log);

/// TrainConfig with a search point applied; width groups (when present)
/// replace the hidden widths for the given depth.
TrainConfig apply_point(const TrainConfig& base, std::size_t depth, const ParamPoint& p);

}  // namespace eegfmri
