#include "mtdm/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace mtdm {

Parameter& ParameterStore::add(std::string name, Tensor init) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), std::make_shared<Tensor>(std::move(init)), true});
  return params_.back();
}

bool ParameterStore::contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

std::size_t ParameterStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

Parameter& ParameterStore::get(std::string_view name) { return params_[index_of(name)]; }
const Parameter& ParameterStore::get(std::string_view name) const { return params_[index_of(name)]; }

ParameterStore ParameterStore::clone() const {
  ParameterStore out;
  for (const Parameter& p : params_) {
    Parameter& q = out.add(p.name, *p.value);
    q.trainable = p.trainable;
  }
  return out;
}

Var ParamBinding::operator()(std::string_view name) {
  const std::size_t i = store_.index_of(name);
  if (!vars_[i].valid()) {
    const Parameter& p = store_.all()[i];
    vars_[i] = tape_.leaf(p.value, track_grads_ && p.trainable);
  }
  return vars_[i];
}

std::vector<Tensor> ParamBinding::gradients() const {
  std::vector<Tensor> out;
  out.reserve(vars_.size());
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (vars_[i].valid()) {
      out.push_back(tape_.grad(vars_[i]));
    } else {
      out.emplace_back(store_.all()[i].value->shape());
    }
  }
  return out;
}

double clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0;
  for (const Tensor& g : grads) {
    for (Real v : g.values()) sq += double(v) * double(v);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const Real s = Real(max_norm / norm);
    for (Tensor& g : grads) {
      for (Real& v : g.values()) v *= s;
    }
  }
  return norm;
}

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg) {
  if (param.shape() != grad.shape()) {
    throw ShapeError("adam_step: parameter " + shape_str(param.shape()) + " vs gradient " + shape_str(grad.shape()));
  }
  if (state.m.shape() != param.shape()) state.m = Tensor(param.shape());
  if (state.v.shape() != param.shape()) state.v = Tensor(param.shape());
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = cfg.beta1 * double(state.m[i]) + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * double(state.v[i]) + (1.0 - cfg.beta2) * g * g;
    state.m[i] = Real(m);
    state.v[i] = Real(v);
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    param[i] = Real(double(param[i]) - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

void Adam::step(ParameterStore& store, const std::vector<Tensor>& grads) {
  if (grads.size() != store.size()) throw std::invalid_argument("Adam::step: gradient count mismatch");
  if (state_.size() != store.size()) state_.resize(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store.all()[i];
    if (!p.trainable) continue;
    adam_step(*p.value, grads[i], state_[i], cfg_);
  }
}

}  // namespace mtdm
