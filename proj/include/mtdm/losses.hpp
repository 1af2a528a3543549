// Training objective terms.

#pragma once

#include <cstdint>
#include <span>

#include "mtdm/ops.hpp"

namespace mtdm {

struct LossWeights {
  double lambda1 = 0.3;  // relation-prediction share of the entity loss
  double lambda2 = 1.0;  // deep-memory angle constraint
  double lambda3 = 1.0;  // control-gate 0-1 constraint (pretraining only)
  double lambda4 = 0.0;  // dissolution term; 0.01 when dissolution learning is on
  double initial_angle_deg = 10.0;
  double angle_stride_deg = 10.0;
};

inline constexpr double kDissolutionLambda = 0.01;
inline constexpr Real kProbabilityFloor = Real(1e-12);

/// -sum[(1 - lambda1) * log p(o_gold) + lambda1 * log p(r_gold)] with p the
/// softmax over each logit row.
Var loss_entity(Var entity_logits, Var relation_logits, std::span<const std::int64_t> gold_objects,
                std::span<const std::int64_t> gold_relations, double lambda1);

/// Angle threshold (degrees) for the k-th window step, k = 0 at t1:
/// initial + stride * k, clamped to 180.
double angle_threshold_deg(std::size_t step, double initial_deg, double stride_deg);

/// sum_t sum_s max{cos(theta_t) - cos(H_deep[s], H_t[s]), 0}.
Var loss_deep_memory(Var h_deep, std::span<const Var> tren_steps, double initial_deg, double stride_deg);

/// u(1 - u) for u the mean of all gate entries.
Var loss_gate(Var gate_soft);

/// sum over dissolved facts of log clamp(p(o_dissolved)).
/// Returns a constant zero when there are no dissolved facts.
Var loss_dissolution(Tape& tape, Var entity_logits_or_invalid, std::span<const std::int64_t> dissolved_objects);

struct LossTerms {
  Var entity;
  Var deep;         // may be invalid
  Var gate;         // may be invalid
  Var dissolution;  // may be invalid
};

/// L_e + lambda2 L_d + [pretraining] lambda3 L_g + [dissolution] lambda4 L_adv.
Var total_loss(const LossTerms& terms, const LossWeights& w, bool pretraining, bool dissolution);

}  // namespace mtdm
