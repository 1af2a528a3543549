#include "mtdm/training.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mtdm {

void TrainConfig::validate() const {
  model.validate();
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  for (double l : {weights.lambda1, weights.lambda2, weights.lambda3, weights.lambda4}) {
    if (!(l >= 0) || !std::isfinite(l)) fail("loss weights must be finite and >= 0");
  }
  if (weights.lambda1 > 1) fail("lambda1 must lie in [0, 1]");
  if (!(weights.initial_angle_deg >= 0 && weights.initial_angle_deg <= 180)) fail("angle must lie in [0, 180] degrees");
  if (!(weights.angle_stride_deg >= 0 && std::isfinite(weights.angle_stride_deg))) fail("angle stride must be >= 0");
  if (!(adam.lr > 0) || !std::isfinite(adam.lr)) fail("learning rate must be positive");
  if (!(grad_clip > 0)) fail("gradient clip must be positive");
  if (patience == 0) fail("patience must be >= 1");
  if (stop_at_valid_mrr < 0 || stop_at_valid_mrr > 1) fail("stop_at_valid_mrr must lie in [0, 1]");
  if (valid_regime == Regime::kWithEval) fail("validation cannot use the w_eval regime");
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  if (dissolution && w.lambda4 == 0) w.lambda4 = kDissolutionLambda;
  return w;
}

std::string EpochRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["phase"] = pretraining ? "pretrain" : "train";
  j["wall_clock_s"] = wall_clock_s;
  j["steps"] = steps;
  j["L_e"] = loss_entity;
  j["L_d"] = loss_deep;
  j["L_g"] = loss_gate;
  j["L_adv"] = loss_dissolution;
  j["loss"] = loss_total;
  j["valid_mrr"] = valid.mrr;
  j["valid_hits1"] = valid.hits1;
  j["valid_hits3"] = valid.hits3;
  j["valid_hits10"] = valid.hits10;
  return j.dump();
}

std::vector<const Snapshot*> training_sequence(const PreparedData& data, bool train_on_valid) {
  std::vector<const Snapshot*> seq;
  for (const Snapshot& s : data.train.snapshots()) seq.push_back(&s);
  if (train_on_valid) {
    for (const Snapshot& s : data.valid.snapshots()) {
      if (!seq.empty() && s.t <= seq.back()->t) throw DataError("validation snapshots must follow training ones");
      seq.push_back(&s);
    }
  }
  return seq;
}

StepGraph build_step(Forward& fw, std::span<const Snapshot* const> history, const Snapshot& target,
                     const TrainConfig& cfg, bool pretraining) {
  const ModelConfig& mc = fw.model.config();
  const LossWeights w = cfg.effective_weights();
  StepGraph g;
  g.hs = encode_history(fw, history);

  std::vector<EntityQuery> queries;
  std::vector<PairQuery> pairs;
  std::vector<std::int64_t> objects;
  std::vector<std::int64_t> relations;
  for (const Fact& f : target.facts) {
    queries.push_back({f.s, f.r});
    pairs.push_back({f.s, f.o});
    objects.push_back(f.o);
    relations.push_back(f.r);
  }
  const Var ent = entity_logits(fw, g.hs, queries);
  if (cfg.entity_loss_only) {
    g.terms.entity = softmax_cross_entropy(ent, objects);
    g.total = g.terms.entity;
    return g;
  }
  const Var rel = relation_logits(fw, g.hs, pairs);
  g.terms.entity = loss_entity(ent, rel, objects, relations, w.lambda1);

  if (!mc.no_dm && !g.hs.tren_steps.empty()) {
    g.terms.deep = loss_deep_memory(g.hs.h_deep, g.hs.tren_steps, w.initial_angle_deg, w.angle_stride_deg);
  }
  if (pretraining && g.hs.control.soft.valid()) g.terms.gate = loss_gate(g.hs.control.soft);

  if (cfg.dissolution) {
    const std::size_t n = std::min(mc.history_len, history.size());
    const auto window = history.subspan(history.size() - n);
    const DissolutionSet neg = build_dissolution_negatives(window, target);
    g.dissolved = neg.facts.size();
    if (!neg.facts.empty()) {
      std::vector<EntityQuery> dq;
      std::vector<std::int64_t> dobj;
      for (const Fact& f : neg.facts) {
        dq.push_back({f.s, f.r});
        dobj.push_back(f.o);
      }
      g.terms.dissolution = loss_dissolution(fw.tape(), entity_logits(fw, g.hs, dq), dobj);
    }
  }
  g.total = total_loss(g.terms, w, pretraining, cfg.dissolution);
  return g;
}

namespace {

double value_of(const Var& v) { return v.valid() ? double(v.value().item()) : 0.0; }

std::string describe(const StepLoss& l) {
  std::ostringstream os;
  os << "L_e=" << l.entity << " L_d=" << l.deep << " L_g=" << l.gate << " L_adv=" << l.dissolution
     << " total=" << l.total;
  return os.str();
}

}  // namespace

StepLoss train_step(Model& model, Adam& adam, std::span<const Snapshot* const> history, const Snapshot& target,
                    const TrainConfig& cfg, bool pretraining, std::mt19937_64& rng, std::size_t epoch) {
  const std::string where = "epoch " + std::to_string(epoch) + ", timestamp " + std::to_string(target.t);
  Tape tape;
  Forward fw(model, tape, true, &rng);
  StepGraph g;
  try {
    g = build_step(fw, history, target, cfg, pretraining);
  } catch (const NumericError& e) {
    throw NumericError(where + ": " + e.what());
  }
  StepLoss out;
  out.entity = value_of(g.terms.entity);
  out.deep = value_of(g.terms.deep);
  out.gate = value_of(g.terms.gate);
  out.dissolution = value_of(g.terms.dissolution);
  out.total = value_of(g.total);
  out.dissolved = g.dissolved;
  if (!std::isfinite(out.total)) throw NumericError(where + ": non-finite loss (" + describe(out) + ")");

  try {
    tape.backward(g.total);
  } catch (const NumericError& e) {
    throw NumericError(where + ": " + e.what() + " (" + describe(out) + ")");
  }
  std::vector<Tensor> grads = fw.bind.gradients();
  const double norm = clip_grad_norm(grads, cfg.grad_clip);
  if (!std::isfinite(norm)) throw NumericError(where + ": non-finite gradient norm (" + describe(out) + ")");
  adam.step(model.params(), grads);
  return out;
}

TrainResult train(Model& model, const PreparedData& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (model.num_entities() != data.num_entities || model.relation_space() != data.train.relation_space()) {
    throw std::invalid_argument("model dimensions do not match the dataset");
  }
  const std::vector<const Snapshot*> seq = training_sequence(data, cfg.train_on_valid);
  if (seq.size() < 2) throw DataError("training needs at least two timestamps");

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Adam adam(cfg.adam);
  TrainResult result;
  ParameterStore best = model.params().clone();
  result.best_valid_mrr = -1;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch <= cfg.epochs; ++epoch) {
    const bool pretraining = epoch == 0;
    const auto started = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.pretraining = pretraining;
    for (std::size_t i = 1; i < seq.size(); ++i) {
      const std::span<const Snapshot* const> history(seq.data(), i);
      const StepLoss l = train_step(model, adam, history, *seq[i], cfg, pretraining, rng, epoch);
      rec.loss_entity += l.entity;
      rec.loss_deep += l.deep;
      rec.loss_gate += l.gate;
      rec.loss_dissolution += l.dissolution;
      rec.loss_total += l.total;
      ++rec.steps;
    }
    const double n = double(rec.steps);
    rec.loss_entity /= n;
    rec.loss_deep /= n;
    rec.loss_gate /= n;
    rec.loss_dissolution /= n;
    rec.loss_total /= n;
    if (pretraining) model.harden_gate();

    if (!data.valid.empty()) rec.valid = evaluate(model, data, cfg.valid_regime, EvalSplit::kValid).report;
    rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.valid.mrr > result.best_valid_mrr) {
      result.best_valid_mrr = rec.valid.mrr;
      result.best_epoch = epoch;
      best = model.params().clone();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
    if (cfg.stop_at_valid_mrr > 0 && rec.valid.mrr >= cfg.stop_at_valid_mrr) {
      result.early_stopped = true;
      break;
    }
  }
  model.params() = std::move(best);
  return result;
}

}  // namespace mtdm
