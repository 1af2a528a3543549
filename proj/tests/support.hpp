// Shared helpers for the test binaries: seeded random tensors, random graphs
// and a central finite-difference gradient checker.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mtdm/ops.hpp"
#include "mtdm/sparse.hpp"
#include "mtdm/tape.hpp"

namespace mtdm::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (Real& v : t.values()) v = Real(u(rng));
  return t;
}

/// Random edges over `entities` x `relations`, ids always in range.
inline std::vector<Edge> random_edges(std::size_t entities, std::size_t relations, std::size_t count,
                                      std::mt19937_64& rng) {
  std::uniform_int_distribution<std::int64_t> e(0, std::int64_t(entities) - 1);
  std::uniform_int_distribution<std::int64_t> r(0, std::int64_t(relations) - 1);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < count; ++i) edges.push_back({e(rng), r(rng), e(rng)});
  return edges;
}

/// sum(v ∘ W) for a fixed random W: a scalar whose gradient w.r.t. v is W.
inline Var project(Var v, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  return sum(mul(v, v.tape->constant(random_tensor(v.shape(), rng))));
}

struct GradCheckResult {
  double max_rel_err = 0;
  std::size_t input = 0;
  std::size_t entry = 0;
  double analytic = 0;
  double numeric = 0;
  std::size_t checked = 0;
};

/// Builds a scalar from leaves placed on a fresh tape.
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Compares reverse-mode gradients against central differences with step h.
/// The relative error of one entry is |a - n| / max(|a|, |n|, floor).
/// At most `max_entries` evenly spaced entries per input are probed.
inline GradCheckResult grad_check(const LossBuilder& build, const std::vector<Tensor>& inputs, double h = 1e-5,
                                  std::size_t max_entries = 64, double floor = 1e-6) {
  auto evaluate = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& x : xs) leaves.push_back(tape.variable(x));
    return double(build(tape, leaves).value().item());
  };

  Tape tape;
  std::vector<Var> leaves;
  for (const Tensor& x : inputs) leaves.push_back(tape.variable(x));
  const Var loss = build(tape, leaves);
  tape.backward(loss);

  GradCheckResult worst;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = tape.grad(leaves[i]);
    const std::size_t n = inputs[i].size();
    const std::size_t stride = std::max<std::size_t>(1, n / max_entries);
    for (std::size_t j = 0; j < n; j += stride) {
      std::vector<Tensor> plus = inputs;
      std::vector<Tensor> minus = inputs;
      plus[i][j] += Real(h);
      minus[i][j] -= Real(h);
      const double numeric = (evaluate(plus) - evaluate(minus)) / (2 * h);
      const double a = double(analytic[j]);
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++worst.checked;
      if (err >= worst.max_rel_err) {
        worst.max_rel_err = err;
        worst.input = i;
        worst.entry = j;
        worst.analytic = a;
        worst.numeric = numeric;
      }
    }
  }
  return worst;
}

inline std::string describe(const GradCheckResult& r) {
  return "max rel err " + std::to_string(r.max_rel_err) + " at input " + std::to_string(r.input) + " entry " +
         std::to_string(r.entry) + " (analytic " + std::to_string(r.analytic) + ", numeric " +
         std::to_string(r.numeric) + ", " + std::to_string(r.checked) + " probes)";
}

}  // namespace mtdm::testing
