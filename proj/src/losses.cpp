#include "mtdm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace mtdm {

Var loss_entity(Var entity_logits, Var relation_logits, std::span<const std::int64_t> gold_objects,
                std::span<const std::int64_t> gold_relations, double lambda1) {
  if (lambda1 < 0 || lambda1 > 1) throw std::invalid_argument("lambda1 must lie in [0, 1]");
  const Var ent = softmax_cross_entropy(entity_logits, gold_objects);
  const Var rel = softmax_cross_entropy(relation_logits, gold_relations);
  return add(scale(ent, Real(1.0 - lambda1)), scale(rel, Real(lambda1)));
}

double angle_threshold_deg(std::size_t step, double initial_deg, double stride_deg) {
  return std::min(180.0, initial_deg + stride_deg * double(step));
}

Var loss_deep_memory(Var h_deep, std::span<const Var> tren_steps, double initial_deg, double stride_deg) {
  Var total = h_deep.tape->constant(Tensor::scalar(0));
  for (std::size_t k = 0; k < tren_steps.size(); ++k) {
    const double theta = angle_threshold_deg(k, initial_deg, stride_deg) * std::numbers::pi / 180.0;
    const Var gap = affine(cosine_rows(h_deep, tren_steps[k]), Real(-1), Real(std::cos(theta)));
    total = add(total, sum(leaky_relu(gap, Real(0))));
  }
  return total;
}

Var loss_gate(Var gate_soft) {
  const Var u = mean(gate_soft);
  return mul(u, one_minus(u));
}

Var loss_dissolution(Tape& tape, Var entity_logits, std::span<const std::int64_t> dissolved_objects) {
  if (dissolved_objects.empty() || !entity_logits.valid()) return tape.constant(Tensor::scalar(0));
  return sum(clamped_log_prob(entity_logits, dissolved_objects, kProbabilityFloor));
}

Var total_loss(const LossTerms& terms, const LossWeights& w, bool pretraining, bool dissolution) {
  Var total = terms.entity;
  if (terms.deep.valid()) total = add(total, scale(terms.deep, Real(w.lambda2)));
  if (pretraining && terms.gate.valid()) total = add(total, scale(terms.gate, Real(w.lambda3)));
  if (dissolution && terms.dissolution.valid()) total = add(total, scale(terms.dissolution, Real(w.lambda4)));
  return total;
}

}  // namespace mtdm
