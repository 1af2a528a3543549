// Acceptance harness: one PASS/FAIL/SKIP line per criterion.
//
//   mtdm_acceptance            run every criterion
//   mtdm_acceptance --only N   run criterion N alone (exit 77 when it is skipped)
//
// The ICEWS14 desk-scale check reads the dataset directory (stat.txt,
// train.txt, valid.txt, test.txt) from MTDM_ICEWS14_DIR and is skipped when
// the variable is unset.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>

#include "mtdm/evaluation.hpp"
#include "mtdm/training.hpp"
#include "model_grad.hpp"
#include "oracles.hpp"

using namespace mtdm;
using namespace mtdm::testing;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status = Status::kFail;
  std::string detail;
};

Outcome pass_if(bool ok, std::string detail) { return {ok ? Status::kPass : Status::kFail, std::move(detail)}; }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

/// Collects named sub-checks and reports the first failures.
class Checklist {
 public:
  void check(bool ok, const std::string& what) {
    ++total_;
    if (!ok) failed_.push_back(what);
  }
  bool ok() const { return failed_.empty(); }
  std::string summary() const {
    if (ok()) return std::to_string(total_) + " checks";
    std::string s = std::to_string(failed_.size()) + "/" + std::to_string(total_) + " checks failed:";
    for (std::size_t i = 0; i < failed_.size() && i < 5; ++i) s += " [" + failed_[i] + "]";
    return s;
  }

 private:
  std::size_t total_ = 0;
  std::vector<std::string> failed_;
};

const DatasetSplit& synthetic_raw() {
  static const DatasetSplit raw = make_synthetic_dataset();
  return raw;
}

const PreparedData& synthetic() {
  static const PreparedData data = prepare(synthetic_raw());
  return data;
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.dim = 6;
  cfg.channels = 3;
  cfg.rgcn_bases = 3;
  cfg.history_len = 3;
  return cfg;
}

Model make_model(const ModelConfig& cfg, std::uint64_t seed = 5) {
  return Model(cfg, synthetic().num_entities, synthetic().train.relation_space(), seed);
}

std::vector<const Snapshot*> train_history(std::size_t count) {
  std::vector<const Snapshot*> h;
  for (std::size_t i = 0; i < count; ++i) h.push_back(&synthetic().train[i]);
  return h;
}

struct Encoded {
  Tape tape;
  std::unique_ptr<Forward> fw;
  HiddenStates hs;
  Encoded(const Model& m, std::span<const Snapshot* const> history)
      : fw(std::make_unique<Forward>(m, tape, false)), hs(encode_history(*fw, history)) {}
};

// ---------------------------------------------------------------------------

Outcome gradient_integrity() {
  double worst = 0;
  std::string worst_name;
  const auto cases = gradient_cases();
  for (const GradCase& c : cases) {
    const GradCheckResult r = grad_check(c.build, c.inputs, 1e-5, 64, kGradFloor);
    if (r.max_rel_err > worst || r.checked == 0) {
      worst = r.checked == 0 ? 1.0 : r.max_rel_err;
      worst_name = c.name;
    }
  }
  const ObjectiveGradCheck full = check_full_objective();
  if (full.max_rel_err > worst) {
    worst = full.max_rel_err;
    worst_name = "full objective " + full.worst;
  }
  return pass_if(worst < kGradTolerance, std::to_string(cases.size()) + " op/loss cases + full objective (" +
                                             std::to_string(full.checked) + " probes), max rel err " + fmt(worst) +
                                             (worst_name.empty() ? "" : " at " + worst_name));
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(2024);
  double agg_err = 0, rgcn_err = 0;
  for (int g = 0; g < 30; ++g) {
    const std::size_t n = 2 + rng() % 49;
    const std::size_t rels = 1 + rng() % 6;
    const std::size_t d = 1 + rng() % 8;
    const auto edges = random_edges(n, rels, rng() % (3 * n), rng);
    const SparseAdjacency adj(n, rels, edges);
    Tape tape;
    const Tensor x = random_tensor({n, d}, rng), rel = random_tensor({rels, d}, rng);
    const Tensor we = random_tensor({d, d}, rng), wr = random_tensor({d, d}, rng);
    const Tensor agg =
        sparse_relational_aggregate(tape.constant(x), tape.constant(rel), adj, tape.constant(we), tape.constant(wr))
            .value();
    agg_err = std::max(agg_err, max_diff(agg, oracle_aggregate(edges, to_dense(x), to_dense(rel), to_dense(we),
                                                               to_dense(wr))));

    const Tensor w_rel = random_tensor({rels, d * d}, rng), w_loop = random_tensor({d, d}, rng);
    std::vector<Dense> per_rel;
    for (std::size_t r = 0; r < rels; ++r) {
      per_rel.push_back(to_dense(Tensor({d, d}, std::vector<Real>(w_rel.row(r).begin(), w_rel.row(r).end()))));
    }
    const std::vector<RgcnLayerWeights> layers{{tape.constant(w_rel), tape.constant(w_loop)}};
    const Tensor out = rgcn_encode(tape.constant(x), adj, layers, Activation::kLeakyRelu).value();
    rgcn_err = std::max(rgcn_err, max_diff(out, oracle_rgcn_layer(edges, to_dense(x), per_rel, to_dense(w_loop),
                                                                  double(kLeakySlope))));
  }

  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    std::vector<Real> scores(n);
    for (Real& s : scores) s = Real(std::int64_t(rng() % 7) - 3);
    const auto gold = std::int64_t(rng() % n);
    std::vector<std::int64_t> known;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::int64_t(i) != gold && rng() % 3 == 0) known.push_back(std::int64_t(i));
    }
    const std::vector<double> as_double(scores.begin(), scores.end());
    if (time_aware_filtered_rank(scores, gold, known) != oracle_rank(as_double, gold, known)) ++mismatches;
  }
  return pass_if(agg_err <= 1e-10 && rgcn_err <= 1e-10 && mismatches == 0,
                 "30 graphs <= 50 nodes: aggregation err " + fmt(agg_err) + ", RGCN err " + fmt(rgcn_err) +
                     "; rank mismatches " + std::to_string(mismatches) + "/1000");
}

Outcome gate_semantics() {
  Checklist c;
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    const Tensor tln = random_tensor({7, 5}, rng), tren = random_tensor({7, 5}, rng);
    const GateWeights w{tape.constant(random_tensor({5, 5}, rng, -3, 3)), tape.constant(random_tensor({5}, rng))};
    const GateResult g = control_gate(tape.constant(tln), tape.constant(tren), w, true);
    const Tensor& u = g.applied.value();
    bool rows_ok = true, binary = true, mixed_one = false, mixed_zero = false;
    for (std::size_t i = 0; i < u.size(); ++i) {
      binary &= u[i] == Real(0) || u[i] == Real(1);
      mixed_one |= u[i] == Real(1);
      mixed_zero |= u[i] == Real(0);
      rows_ok &= g.out.value()[i] == (u[i] == Real(1) ? tln[i] : tren[i]);
      rows_ok &= (g.soft.value()[i] >= Real(0.5)) == (u[i] == Real(1));
    }
    c.check(binary, "hard U is binary");
    c.check(mixed_one && mixed_zero, "random gate selects from both inputs");
    c.check(rows_ok, "hard control gate picks TLN where U=1 and TREN where U=0");
    c.check(hard_round(g.applied).value() == u, "hard gate idempotent");

    for (Real bias : {Real(800), Real(-800)}) {
      const GateWeights sat{tape.constant(Tensor({5, 5})), tape.constant(Tensor({5}, bias))};
      const GateResult r = reset_gate(tape.constant(tln), tape.constant(tren), sat);
      c.check(r.out.value() == (bias > 0 ? tln : tren), "reset gate endpoint V=" + std::string(bias > 0 ? "1" : "0"));
    }
  }
  return pass_if(c.ok(), c.summary());
}

Outcome loss_invariants() {
  Checklist c;
  std::mt19937_64 rng(4);
  double lg_min = 1, lg_max = 0;
  for (int trial = 0; trial < 500; ++trial) {
    Tape tape;
    const double l = double(loss_gate(tape.constant(random_tensor({4, 6}, rng, 0.0, 1.0))).value().item());
    lg_min = std::min(lg_min, l);
    lg_max = std::max(lg_max, l);
  }
  c.check(lg_min >= 0 && lg_max <= 0.25, "L_g in [0, 0.25]");
  c.check(lg_min > 0, "L_g > 0 away from the endpoints");
  {
    Tape tape;
    c.check(loss_gate(tape.constant(Tensor({3, 3}, Real(0)))).value().item() == Real(0), "L_g(0) = 0");
    c.check(loss_gate(tape.constant(Tensor({3, 3}, Real(1)))).value().item() == Real(0), "L_g(1) = 0");
    c.check(loss_gate(tape.constant(Tensor({3, 3}, Real(0.5)))).value().item() == Real(0.25), "L_g(0.5) = 0.25");
  }
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    const Tensor h = random_tensor({6, 4}, rng);
    const std::vector<Var> steps(5, tape.constant(h));
    c.check(loss_deep_memory(tape.constant(h), steps, 10, 10).value().item() == Real(0), "L_d = 0 when equal");
  }
  {
    Tape tape;
    c.check(loss_dissolution(tape, tape.constant(random_tensor({2, 5}, rng)), {}).value().item() == Real(0),
            "L_adv = 0 on empty set");
  }
  const LossWeights defaults;
  const double theta1 = angle_threshold_deg(0, defaults.initial_angle_deg, defaults.angle_stride_deg);
  c.check(theta1 == 10.0, "theta_t1 = 10 degrees");
  return pass_if(c.ok(), c.summary() + "; L_g range [" + fmt(lg_min) + ", " + fmt(lg_max) + "], theta_t1 = " +
                             fmt(theta1) + " deg");
}

Outcome synthetic_overfit() {
  const auto started = std::chrono::steady_clock::now();
  TrainConfig cfg;
  cfg.model.dim = 32;
  cfg.epochs = 200;
  cfg.patience = 200;
  cfg.valid_regime = Regime::kGroundTruth;
  cfg.stop_at_valid_mrr = 0.99;
  const PreparedData& data = synthetic();
  Model model(cfg.model, data.num_entities, data.train.relation_space(), cfg.seed);
  const TrainResult r = train(model, data, cfg);
  const MetricsReport gt = evaluate(model, data, Regime::kGroundTruth, EvalSplit::kTest).report;
  const MetricsReport def = evaluate(model, data, Regime::kDefault, EvalSplit::kTest).report;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const std::size_t epochs = r.log.size() - 1;  // epoch 0 is pretraining
  return pass_if(gt.mrr >= 0.95 && epochs <= 200 && secs < 300,
                 "GT test MRR " + fmt(gt.mrr) + " after " + std::to_string(epochs) + " training epochs in " +
                     fmt(secs, 3) + " s (default-regime test MRR " + fmt(def.mrr) + ", capped by the period-3 design)");
}

Outcome icews14_reduced() {
  const char* dir = std::getenv("MTDM_ICEWS14_DIR");
  if (!dir || !*dir) return {Status::kSkip, "MTDM_ICEWS14_DIR is not set"};
  DatasetSplit split = parse_dataset(dir);
  std::set<std::int64_t> stamps;
  for (const Fact& f : split.train) stamps.insert(f.t);
  if (stamps.size() < 50) return {Status::kFail, "training split has fewer than 50 timestamps"};
  const std::int64_t cutoff = *std::next(stamps.begin(), 50);
  std::erase_if(split.train, [&](const Fact& f) { return f.t >= cutoff; });
  const PreparedData data = prepare(split);

  TrainConfig cfg;
  cfg.model.dim = 100;
  cfg.epochs = 10;
  Model model(cfg.model, data.num_entities, data.train.relation_space(), cfg.seed);
  const auto started = std::chrono::steady_clock::now();
  const TrainResult r = train(model, data, cfg, [](const EpochRecord& rec) {
    std::cerr << "  icews14 " << rec.to_json() << '\n';
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return pass_if(r.best_valid_mrr >= 0.15, "first 50 train timestamps, d=100, 10 epochs: best valid MRR " +
                                               fmt(r.best_valid_mrr) + " at epoch " + std::to_string(r.best_epoch) +
                                               " (" + fmt(secs, 4) + " s)");
}

Outcome ablation_wiring() {
  Checklist c;
  const auto history = train_history(6);
  const Model base = make_model(tiny_model());
  Encoded b(base, history);
  {
    ModelConfig cfg = tiny_model();
    cfg.no_tln = true;
    const Model m = make_model(cfg);
    Encoded e(m, history);
    c.check(!e.hs.tln_struct.valid() && e.hs.tln_fused.value() == e.hs.tren_final.value(),
            "--no-tln feeds H_TREN into both decoder slots");
  }
  {
    ModelConfig cfg = tiny_model();
    cfg.no_tren = true;
    Model m = make_model(cfg);
    m.params().get("control_gate.w").value->fill(0);
    m.params().get("control_gate.b").value->fill(-800);
    m.harden_gate();
    Encoded e(m, history);
    c.check(e.hs.tren_steps.empty() && e.hs.tren_final.value() == e.hs.h_deep.value() &&
                e.hs.tln_fused.value() == e.hs.h_deep.value(),
            "--no-tren makes H_deep the control gate's second operand");
  }
  {
    ModelConfig cfg = tiny_model();
    cfg.no_dm = true;
    const Model m = make_model(cfg);
    Encoded e(m, history);
    c.check(b.hs.deep_fact_count > 0 && e.hs.deep_fact_count == 0 && e.hs.deep_adjacency->num_edges() == 0,
            "--no-dm empties the deep-memory graph");
  }
  {
    ModelConfig cfg = tiny_model();
    cfg.history_len = 1;
    cfg.no_reset_gate = true;
    const Model m = make_model(cfg);
    cfg.no_reset_gate = false;
    const Model gated = make_model(cfg);
    Encoded e(m, history), g(gated, history);
    Forward& fw = *e.fw;
    const Var structural =
        res_gcn(e.hs.h_deep, e.hs.relations, history.back()->adjacency,
                ResGcnWeights{fw.bind("resgcn.w_loop"), fw.bind("resgcn.w_entity"), fw.bind("resgcn.w_relation")},
                cfg.layers, cfg.activation);
    const Var gru = gru_cell(structural, e.hs.h_deep,
                             GruWeights{fw.bind("gru.w_z"), fw.bind("gru.u_z"), fw.bind("gru.b_z"), fw.bind("gru.w_r"),
                                        fw.bind("gru.u_r"), fw.bind("gru.b_r"), fw.bind("gru.w_h"),
                                        fw.bind("gru.u_h"), fw.bind("gru.b_h")});
    const Var reset = reset_gate(gru, e.hs.h_deep, GateWeights{fw.bind("reset_gate.w"), fw.bind("reset_gate.b")}).out;
    c.check(e.hs.tren_final.value() == gru.value(), "--no-reset-gate passes the GRU state through");
    c.check(g.hs.tren_final.value() == reset.value(), "default applies the reset gate");
  }
  {
    ModelConfig cfg = tiny_model();
    cfg.history_len = 2;
    const Model standard = make_model(cfg);
    cfg.tren_mode = TrenMode::kRecurrent;
    const Model recurrent = make_model(cfg);
    Encoded s(standard, history), r(recurrent, history);
    c.check(s.hs.resgcn_inputs.at(0).value() == r.hs.resgcn_inputs.at(0).value(), "step 1 inputs agree");
    c.check(s.hs.resgcn_inputs.at(1).value() == s.hs.h_deep.value(), "standard step 2 starts from H_deep");
    c.check(r.hs.resgcn_inputs.at(1).value() == r.hs.tren_steps.at(0).value(),
            "--recurrent-mode step 2 starts from step 1's output");
    c.check(s.hs.resgcn_inputs.at(1).value() != r.hs.resgcn_inputs.at(1).value(), "modes differ at step 2");
  }
  for (bool on : {false, true}) {
    TrainConfig cfg;
    cfg.model = tiny_model();
    cfg.dissolution = on;
    Tape tape;
    Forward fw(base, tape, false);
    const StepGraph g = build_step(fw, history, synthetic().train[6], cfg, false);
    c.check(g.terms.dissolution.valid() == on && (g.dissolved > 0) == on,
            on ? "--dissolution adds L_adv over dissolved facts" : "L_adv absent by default");
  }
  return pass_if(c.ok(), c.summary() + " across no-tln, no-tren, no-dm, no-reset-gate, recurrent-mode, dissolution");
}

Outcome causality() {
  const DatasetSplit& raw = synthetic_raw();
  const Model m = make_model(tiny_model());
  std::mt19937_64 rng(100);
  const std::int64_t last_t = std::int64_t(raw.raw_timestamps.size()) - 1;
  std::size_t changed = 0;
  for (int probe = 0; probe < 100; ++probe) {
    const std::int64_t t_p = 1 + std::int64_t(rng() % std::uint64_t(last_t));
    const EntityQuery q{std::int64_t(rng() % raw.num_entities), std::int64_t(rng() % (2 * raw.num_relations))};
    DatasetSplit perturbed = raw;
    std::vector<Fact*> future;
    for (auto* part : {&perturbed.train, &perturbed.valid, &perturbed.test}) {
      for (Fact& f : *part) {
        if (f.t >= t_p) future.push_back(&f);
      }
    }
    Fact& victim = *future[rng() % future.size()];
    victim.o = (victim.o + 1 + std::int64_t(rng() % (raw.num_entities - 1))) % std::int64_t(raw.num_entities);
    victim.r = (victim.r + 1) % std::int64_t(raw.num_relations);
    const PreparedData a = prepare(raw), b = prepare(perturbed);
    if (score_query(m, history_for(a, Regime::kGroundTruth, EvalSplit::kTest, t_p), q) !=
        score_query(m, history_for(b, Regime::kGroundTruth, EvalSplit::kTest, t_p), q)) {
      ++changed;
    }
  }
  return pass_if(changed == 0, std::to_string(changed) + "/100 randomized future perturbations changed a score");
}

Outcome determinism_and_persistence() {
  Checklist c;
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.epochs = 0;
  auto epoch0 = [&](Model& m) { return train(m, synthetic(), cfg).log.at(0).loss_total; };
  Model a = make_model(cfg.model, cfg.seed), b = make_model(cfg.model, cfg.seed);
  const double la = epoch0(a), lb = epoch0(b);
  c.check(la == lb, "epoch-0 loss bit-identical");

  const auto dir = std::filesystem::temp_directory_path() / ("mtdm_accept_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const auto path = dir / "checkpoint.mtdm";
  save_checkpoint(a, path);
  Model restored = make_model(cfg.model, 999);
  load_checkpoint(restored, path);
  bool params_equal = restored.gate_hard() == a.gate_hard();
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    params_equal &= *a.params().all()[i].value == *restored.params().all()[i].value;
  }
  c.check(params_equal, "checkpoint parameters bit-exact");
  save_checkpoint(restored, dir / "again.mtdm");
  std::ifstream f1(path, std::ios::binary), f2(dir / "again.mtdm", std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
  c.check(s1 == s2, "re-saved checkpoint byte-identical");
  std::filesystem::remove_all(dir);
  for (Regime regime : {Regime::kDefault, Regime::kGroundTruth}) {
    const MetricsReport ra = evaluate(a, synthetic(), regime, EvalSplit::kTest).report;
    const MetricsReport rb = evaluate(restored, synthetic(), regime, EvalSplit::kTest).report;
    c.check(ra.mrr == rb.mrr && ra.hits1 == rb.hits1 && ra.hits3 == rb.hits3 && ra.hits10 == rb.hits10,
            "restored model reproduces " + to_string(regime) + " metrics");
  }
  return pass_if(c.ok(), c.summary() + "; epoch-0 loss " + fmt(la, 17));
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::optional<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::cerr << "usage: " << argv[0] << " [--only N]\n";
      return 2;
    }
  }

  const std::vector<Criterion> criteria{
      {1, "gradient integrity", gradient_integrity},
      {2, "oracle equivalence", oracle_equivalence},
      {3, "gate semantics", gate_semantics},
      {4, "loss-term invariants", loss_invariants},
      {5, "synthetic overfit", synthetic_overfit},
      {6, "ICEWS14 reduced run", icews14_reduced},
      {7, "ablation wiring", ablation_wiring},
      {8, "causality", causality},
      {9, "determinism & persistence", determinism_and_persistence},
  };

  bool any_fail = false, any_run = false, all_skipped = true;
  for (const Criterion& c : criteria) {
    if (only && *only != c.id) continue;
    any_run = true;
    const auto started = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kSkip ? "SKIP" : "FAIL";
    std::cout << tag << "  criterion " << c.id << " (" << c.name << "): " << o.detail << " [" << fmt(secs, 3)
              << " s]" << std::endl;
    any_fail |= o.status == Status::kFail;
    all_skipped &= o.status == Status::kSkip;
  }
  if (!any_run) {
    std::cerr << "no criterion " << *only << '\n';
    return 2;
  }
  if (any_fail) return 1;
  return only && all_skipped ? 77 : 0;
}
