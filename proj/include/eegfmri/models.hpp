// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eegfmri/architecture.hpp"
#include "eegfmri/error.hpp"
#include "eegfmri/losses.hpp"
#include "eegfmri/network.hpp"
#include "eegfmri/pairing.hpp"

namespace eegfmri {

enum class Procedure { AE, LCOMB, GAN, WGAN, TOPK };
enum class OptimizerKind { SGD, Adam };

std::string_view to_string(Procedure p);
Procedure procedure_from_string(std::string_view name);
std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view name);

struct TrainConfig {
  Procedure procedure = Procedure::AE;
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  double l1_eeg = 1e-5;
  double l1_fmri = 1e-5;
  double l1_dec = 1e-5;
  /// Positive pairs per batch; contrastive procedures add as many negatives.
  std::size_t batch_size = 8;
  LossConfig loss;
  std::size_t k = 5;
  bool temporal_encoding = false;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::SGD;
  /// Global gradient norm cap per update; 0 disables clipping.
  double clip_norm = 0.0;
  /// Critic weight clip in EarthMover mode.
  double wgan_clip = 0.01;
  /// Weight of the adversarial term in the generator objective (added to L_r).
  double adversarial_weight = 1.0;
  std::size_t topk_pretrain_epochs = 10;
  /// Scales the initial weight ranges.
  double init_gain = 1.0;
  ArchitectureConfig architecture;
  /// Keep every combined per-step gradient in the Trainer.
  bool record_gradients = false;

  void validate() const;
};

enum Component : std::size_t { kEEGEncoder, kFMRIEncoder, kDecoder, kDiscriminator, kEEGTemporal, kFMRITemporal };
inline constexpr std::size_t kComponentCount = 6;
std::string_view to_string(Component c);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_epv;
};

struct TrainedModel {
  Procedure procedure = Procedure::AE;
  ArchitectureConfig architecture;
  DataShapes shapes;
  std::array<Network, kComponentCount> nets;
  bool trained = false;
  std::vector<EpochRecord> history;

  Network& net(Component c) { return nets[c]; }
  const Network& net(Component c) const { return nets[c]; }
  std::vector<Tensor> parameters() const;
};

/// Networks for a procedure, initialized from cfg.seed (each component gets
/// its own derived stream, so the two temporal heads never share weights).
TrainedModel init_model(const DataShapes& shapes, const TrainConfig& cfg);

/// EEG window [C, F, T] -> encoding [T, latent].
Tensor encode_eeg(const TrainedModel& m, const Tensor& eeg, const ForwardContext& ctx = {});
Tensor encode_fmri(const TrainedModel& m, const Tensor& fmri, const ForwardContext& ctx = {});

/// Runs a temporal head over an encoding [T, latent] -> [T, hidden].
Tensor temporal_encode(const Tensor& activation, const Network& head, const ForwardContext& ctx = {});

/// decoder(eeg_encoder(eeg)) with dropout inactive.
Tensor synthesize(const TrainedModel& m, const Tensor& eeg);

struct TopkResult {
  Tensor combined;
  std::vector<std::size_t> indices;
  std::vector<double> weights;
  std::vector<double> correlations;
  std::size_t excluded = 0;
};

/// Correlation-weighted sum of the k training encodings most correlated with
/// the query. `skip` removes one candidate (the query itself during training).
TopkResult topk_combination(const Tensor& query, const std::vector<Tensor>& candidates, std::size_t k,
                            std::optional<std::size_t> skip = std::nullopt);

double pearson(const Vector& a, const Vector& b);

struct Batch {
  std::vector<PairedInstance> positives;
  std::vector<PairedInstance> negatives;
};

struct LossBreakdown {
  double reconstruction = 0.0;
  double contrastive = 0.0;
  double l1 = 0.0;
  double adversarial_value = 0.0;
  double generator = 0.0;
  double total = 0.0;
};

using ComponentGradients = std::array<std::vector<Vector>, kComponentCount>;

struct TrainingDiagnostics {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  std::string phase;
  std::string detail;
  double last_finite_loss = 0.0;
};

class TrainingError : public Error {
 public:
  TrainingError(const TrainingDiagnostics& d, const std::string& msg)
      : Error(ErrorKind::NonFiniteLoss, msg), diagnostics_(d) {}
  const TrainingDiagnostics& diagnostics() const { return diagnostics_; }

 private:
  TrainingDiagnostics diagnostics_;
};

/// Optimizer updates for one model. Every loss term is differentiated in its
/// own backward pass and the per-component gradients are combined in a fixed
/// order, which makes endpoint configurations reproduce simpler procedures
/// exactly.
class Trainer {
 public:
  Trainer(TrainedModel& model, const TrainConfig& cfg);
  ~Trainer();
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  /// One training step of the configured procedure (both phases for
  /// adversarial procedures; the encoder phase for TOPK).
  LossBreakdown step(const Batch& batch, std::uint64_t step_seed);

  /// Loss terms without any update.
  LossBreakdown losses(const Batch& batch, std::uint64_t step_seed);

  /// Discriminator update only; returns the adversarial value before it.
  double discriminator_phase(const Batch& batch, std::uint64_t step_seed);
  /// Encoder + decoder update against the current discriminator.
  LossBreakdown generator_phase(const Batch& batch, std::uint64_t step_seed);
  /// Decoder update from fixed codes (TOPK second stage).
  LossBreakdown decoder_step(const std::vector<Tensor>& codes, const std::vector<Tensor>& targets,
                             std::uint64_t step_seed);

  const ComponentGradients& last_gradients() const { return last_; }
  const std::vector<ComponentGradients>& gradient_history() const { return history_; }

  void set_position(std::size_t epoch, std::size_t batch) {
    epoch_ = epoch;
    batch_ = batch;
  }

 private:
  struct State;
  TrainedModel& model_;
  TrainConfig cfg_;
  ComponentGradients last_;
  std::vector<ComponentGradients> history_;
  std::size_t epoch_ = 0, batch_ = 0;
  double last_finite_ = 0.0;
  std::unique_ptr<State> state_;

  LossBreakdown encoder_objective(const Batch& batch, std::uint64_t seed, bool contrastive, bool apply);
  void apply(const std::vector<Component>& comps, const ComponentGradients& g, const char* phase);
  [[noreturn]] void diverged(const char* phase, const std::string& detail);
};

/// Trains the configured procedure on the windows of `train_sessions`;
/// validation L_EPV is recorded per epoch when `val_sessions` is non-empty.
TrainedModel train(const std::vector<RecordingSession>& train_sessions, const TrainConfig& cfg,
                   const std::vector<RecordingSession>& val_sessions = {});

/// Mean L_EPV of synthesized windows over the given positive pairs.
double validation_epv(const TrainedModel& m, const std::vector<PairedInstance>& pairs);

}  // namespace eegfmri
