// Full forward pass: deep memory -> TREN -> TLN/control gate -> ConvTransE heads.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mtdm/encoders.hpp"
#include "mtdm/graph_data.hpp"
#include "mtdm/optim.hpp"

namespace mtdm {

enum class TrenMode { kStandard, kRecurrent };

struct ModelConfig {
  std::size_t dim = 200;
  std::size_t layers = 2;        // Res-GCN hops w
  std::size_t rgcn_layers = 2;   // deep-memory RGCN depth
  std::size_t rgcn_bases = 100;  // capped at the relation count
  std::size_t history_len = 10;  // TREN window n
  std::size_t tln_window = 1;    // snapshots merged for TLN
  std::size_t channels = 50;
  std::size_t kernel_width = 3;
  double dropout = 0.2;
  Activation activation = Activation::kLeakyRelu;

  // Ablations.
  bool no_dm = false;
  bool no_tren = false;
  bool no_tln = false;
  bool no_reset_gate = false;
  TrenMode tren_mode = TrenMode::kStandard;

  /// Throws std::invalid_argument for inconsistent settings.
  void validate() const;
};

/// Learnable state plus the structural configuration it was built for.
class Model {
 public:
  Model(const ModelConfig& cfg, std::size_t num_entities, std::size_t relation_space, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& mutable_config() { return cfg_; }
  std::size_t num_entities() const { return num_entities_; }
  std::size_t relation_space() const { return relation_space_; }
  std::size_t num_bases() const;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  /// True once the control gate has been rounded to {0,1} and frozen.
  bool gate_hard() const;
  /// Switches the control gate to hard mode and freezes W_U, b_U.
  void harden_gate();

 private:
  ModelConfig cfg_;
  std::size_t num_entities_;
  std::size_t relation_space_;
  ParameterStore params_;
};

/// Per-forward context: tape, parameter binding and (training only) dropout RNG.
struct Forward {
  Forward(const Model& model, Tape& tape, bool track_grads, std::mt19937_64* dropout_rng = nullptr)
      : model(model), bind(tape, model.params(), track_grads), rng(dropout_rng) {}

  const Model& model;
  ParamBinding bind;
  std::mt19937_64* rng;  // nullptr => evaluation (no dropout)

  Tape& tape() { return bind.tape(); }
  double dropout() const { return rng ? model.config().dropout : 0.0; }
};

struct HiddenStates {
  Var h_init;
  Var relations;
  Var h_deep;
  std::vector<Var> tren_steps;     // H_TREN_t for each window snapshot, after gating
  std::vector<Var> resgcn_inputs;  // initial state fed to each step's Res-GCN
  Var tren_final;
  Var tln_struct;  // Res-GCN(H_init, F_tn); invalid without TLN
  GateResult control;
  Var tln_fused;   // H_TLN fed to the decoder

  std::size_t deep_fact_count = 0;
  std::size_t window_size = 0;

  // Adjacencies referenced by tape closures.
  std::shared_ptr<SparseAdjacency> deep_adjacency;
  std::shared_ptr<SparseAdjacency> tln_adjacency;
};

/// Deep-memory representation H_deep from facts before the window.
Var deep_memory(Forward& fw, const SparseAdjacency& deep);

/// Runs the TREN unit over `window` starting from H_deep.
void tren_forward(Forward& fw, std::span<const Snapshot* const> window, HiddenStates& hs);

/// Transient encoder over `transient` and the control gate against H_TREN_final.
void tln_forward(Forward& fw, const SparseAdjacency& transient, HiddenStates& hs);

/// Full encoder for a prediction whose available history is `history`
/// (snapshots ordered by t, all strictly before the prediction time).
HiddenStates encode_history(Forward& fw, std::span<const Snapshot* const> history);

struct EntityQuery {
  std::int64_t s = 0;
  std::int64_t r = 0;
};

struct PairQuery {
  std::int64_t s = 0;
  std::int64_t o = 0;
};

/// Pre-sigmoid entity scores, [queries, |E|].
Var entity_logits(Forward& fw, const HiddenStates& hs, std::span<const EntityQuery> queries);
/// sigmoid(entity_logits).
Var decode_entities(Forward& fw, const HiddenStates& hs, std::span<const EntityQuery> queries);

/// Pre-sigmoid relation scores, [pairs, |R'|].
Var relation_logits(Forward& fw, const HiddenStates& hs, std::span<const PairQuery> pairs);
Var decode_relations(Forward& fw, const HiddenStates& hs, std::span<const PairQuery> pairs);

// Checkpoints: "MTDMCKPT", u32 version, u32 d, u32 |E|, u32 |R'|, u32 count,
// then per parameter: u32 name length, name, u32 rank, u64 dims, f64 LE data
// (lossless for either Real precision).

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::filesystem::path& path);
/// Overwrites the parameters of `model`; names, shapes and sizes must match.
void load_checkpoint(Model& model, const std::filesystem::path& path);

}  // namespace mtdm
