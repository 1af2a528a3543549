// Pretrain-then-train schedule over chronological snapshots.
//
// Epoch 0 pretrains with a soft control gate and the gate 0-1 constraint;
// afterwards the gate is rounded and frozen. Every step predicts one target
// snapshot from the snapshots before it, backpropagates, clips and applies
// Adam. Validation MRR drives early stopping and the best parameters are
// restored at the end.

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mtdm/evaluation.hpp"
#include "mtdm/losses.hpp"
#include "mtdm/model.hpp"
#include "mtdm/optim.hpp"

namespace mtdm {

struct TrainConfig {
  ModelConfig model;
  LossWeights weights;
  AdamConfig adam;
  std::size_t epochs = 30;  // training epochs after the pretraining epoch
  std::uint64_t seed = 42;
  double grad_clip = 1.0;
  std::size_t patience = 5;
  bool dissolution = false;      // adds lambda4 * L_adv
  bool train_on_valid = false;   // validation snapshots become training targets too
  bool entity_loss_only = false; // L_e only; no auxiliary terms are built
  double stop_at_valid_mrr = 0;  // stop once validation MRR reaches this (0 = never)
  Regime valid_regime = Regime::kDefault;  // history regime of the per-epoch validation

  /// Throws std::invalid_argument for inconsistent settings.
  void validate() const;
  /// Loss weights with lambda4 defaulted to 0.01 when dissolution is on and lambda4 is 0.
  LossWeights effective_weights() const;
};

struct StepLoss {
  double entity = 0;
  double deep = 0;
  double gate = 0;
  double dissolution = 0;
  double total = 0;
  std::size_t dissolved = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  bool pretraining = false;
  double wall_clock_s = 0;
  std::size_t steps = 0;
  // Means over the epoch's steps.
  double loss_entity = 0;
  double loss_deep = 0;
  double loss_gate = 0;
  double loss_dissolution = 0;
  double loss_total = 0;
  MetricsReport valid;

  /// {epoch, wall_clock_s, L_e, L_d, L_g, L_adv, valid_mrr, valid_hits1/3/10, ...} as one JSON line.
  std::string to_json() const;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_valid_mrr = 0;
  bool early_stopped = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Chronological training targets: train snapshots (plus validation ones with
/// train_on_valid). Each target is predicted from every earlier target.
std::vector<const Snapshot*> training_sequence(const PreparedData& data, bool train_on_valid);

/// Loss terms for predicting `target` from `history`, recorded on `fw`'s tape.
struct StepGraph {
  HiddenStates hs;
  LossTerms terms;
  Var total;
  std::size_t dissolved = 0;
};
StepGraph build_step(Forward& fw, std::span<const Snapshot* const> history, const Snapshot& target,
                     const TrainConfig& cfg, bool pretraining);

/// One optimisation step. Throws NumericError naming the epoch, timestamp and
/// loss terms when the loss is not finite.
StepLoss train_step(Model& model, Adam& adam, std::span<const Snapshot* const> history, const Snapshot& target,
                    const TrainConfig& cfg, bool pretraining, std::mt19937_64& rng, std::size_t epoch = 0);

/// Runs the full schedule on `model` in place.
TrainResult train(Model& model, const PreparedData& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace mtdm
