// Named parameter storage, tape binding and the Adam optimizer.

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mtdm/tape.hpp"

namespace mtdm {

struct Parameter {
  std::string name;
  std::shared_ptr<Tensor> value;
  bool trainable = true;
};

/// Ordered collection of named parameters. Order is insertion order and is
/// the order used by checkpoints and optimizer state.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor init);
  bool contains(std::string_view name) const;
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  /// Deep copy (values are not shared with the source).
  ParameterStore clone() const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Binds parameters onto one tape on first use.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ParameterStore& store, bool track_grads = true)
      : tape_(tape), store_(store), track_grads_(track_grads), vars_(store.size()) {}

  Var operator()(std::string_view name);
  Tape& tape() { return tape_; }

  /// One gradient per store entry (zeros for unbound or frozen parameters).
  std::vector<Tensor> gradients() const;

 private:
  Tape& tape_;
  const ParameterStore& store_;
  bool track_grads_;
  std::vector<Var> vars_;
};

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::vector<Tensor>& grads, double max_norm);

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Tensor m;
  Tensor v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update of `param` in place.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg);

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Updates every trainable parameter with its gradient (same order as the store).
  void step(ParameterStore& store, const std::vector<Tensor>& grads);
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<AdamState> state_;
};

}  // namespace mtdm
