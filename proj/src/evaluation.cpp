#include "mtdm/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace mtdm {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::kDefault:
      return "default";
    case Regime::kWithEval:
      return "w_eval";
    case Regime::kGroundTruth:
      return "GT";
  }
  return "?";
}

std::string to_string(EvalSplit s) { return s == EvalSplit::kValid ? "valid" : "test"; }

Regime parse_regime(const std::string& s) {
  if (s == "default") return Regime::kDefault;
  if (s == "w_eval" || s == "w.eval") return Regime::kWithEval;
  if (s == "GT" || s == "gt") return Regime::kGroundTruth;
  throw std::invalid_argument("unknown regime '" + s + "' (expected default, w_eval or GT)");
}

EvalSplit parse_split(const std::string& s) {
  if (s == "valid") return EvalSplit::kValid;
  if (s == "test") return EvalSplit::kTest;
  throw std::invalid_argument("unknown split '" + s + "' (expected valid or test)");
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["regime"] = regime;
  j["split"] = split;
  j["mrr"] = mrr;
  j["hits1"] = hits1;
  j["hits3"] = hits3;
  j["hits10"] = hits10;
  j["n_queries"] = n_queries;
  j["wall_clock_s"] = wall_clock_s;
  return j.dump();
}

std::size_t time_aware_filtered_rank(std::span<const Real> scores, std::int64_t gold,
                                     std::span<const std::int64_t> known_at_tp) {
  if (gold < 0 || std::size_t(gold) >= scores.size()) throw std::out_of_range("gold entity outside the score vector");
  std::vector<char> masked(scores.size(), 0);
  for (std::int64_t k : known_at_tp) {
    if (k == gold) throw std::logic_error("time-aware filter would remove the gold entity");
    if (k >= 0 && std::size_t(k) < scores.size()) masked[std::size_t(k)] = 1;
  }
  const Real g = scores[std::size_t(gold)];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!masked[i] && scores[i] > g) ++rank;
  }
  return rank;
}

MetricsReport mrr_hits(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw std::invalid_argument("mrr_hits: no ranks");
  MetricsReport m;
  for (std::size_t r : ranks) {
    if (r == 0) throw std::invalid_argument("mrr_hits: ranks start at 1");
    m.mrr += 1.0 / double(r);
    m.hits1 += r <= 1;
    m.hits3 += r <= 3;
    m.hits10 += r <= 10;
  }
  const double n = double(ranks.size());
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  m.n_queries = ranks.size();
  return m;
}

std::vector<const Snapshot*> history_for(const PreparedData& data, Regime regime, EvalSplit split, std::int64_t t_p,
                                         const EvalOptions& opts) {
  std::vector<const TemporalGraph*> sources{&data.train};
  if (regime == Regime::kGroundTruth) {
    sources = {&data.train, &data.valid, &data.test};
  } else if (split == EvalSplit::kTest && (opts.include_valid_history || regime == Regime::kWithEval)) {
    sources.push_back(&data.valid);
  }
  std::map<std::int64_t, const Snapshot*> ordered;
  for (const TemporalGraph* g : sources) {
    for (const Snapshot& s : g->snapshots()) {
      if (s.t >= t_p) continue;
      if (ordered.count(s.t)) {
        throw std::logic_error("timestamp " + std::to_string(s.t) + " appears in more than one split");
      }
      ordered.emplace(s.t, &s);
    }
  }
  std::vector<const Snapshot*> out;
  out.reserve(ordered.size());
  for (const auto& [t, s] : ordered) out.push_back(s);
  return out;
}

std::vector<Real> score_query(const Model& model, std::span<const Snapshot* const> history, EntityQuery q) {
  Tape tape;
  Forward fw(model, tape, false);
  const HiddenStates hs = encode_history(fw, history);
  const Var logits = entity_logits(fw, hs, std::span<const EntityQuery>(&q, 1));
  const auto row = logits.value().row(0);
  return std::vector<Real>(row.begin(), row.end());
}

EvalResult evaluate(const Model& model, const PreparedData& data, Regime regime, EvalSplit split,
                    const EvalOptions& opts) {
  if (regime == Regime::kWithEval && split == EvalSplit::kValid) {
    throw std::invalid_argument("regime w_eval trains on validation data; evaluate it on the test split");
  }
  const auto started = std::chrono::steady_clock::now();
  const TemporalGraph& target = split == EvalSplit::kValid ? data.valid : data.test;

  EvalResult result;
  std::vector<std::size_t> ranks;

  // Encoder states depend only on the history; reuse them while it is unchanged.
  std::vector<const Snapshot*> cached_history;
  std::unique_ptr<Tape> tape;
  std::unique_ptr<Forward> fw;
  HiddenStates hs;

  for (const Snapshot& snap : target.snapshots()) {
    const auto history = history_for(data, regime, split, snap.t, opts);
    std::size_t fact_count = 0;
    for (const Snapshot* h : history) fact_count += h->facts.size();
    result.history.push_back(HistoryUsage{snap.t, history.size(), fact_count});

    if (!fw || history != cached_history) {
      fw.reset();
      tape = std::make_unique<Tape>();
      fw = std::make_unique<Forward>(model, *tape, false);
      hs = encode_history(*fw, history);
      cached_history = history;
    }

    // Alternative true objects at t_p per (s, r), across all splits.
    std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::int64_t>> truth;
    for (const TemporalGraph* g : {&data.train, &data.valid, &data.test}) {
      if (const Snapshot* at = g->find(snap.t)) {
        for (const Fact& f : at->facts) truth[{f.s, f.r}].push_back(f.o);
      }
    }

    std::vector<EntityQuery> queries;
    queries.reserve(snap.facts.size());
    for (const Fact& f : snap.facts) queries.push_back({f.s, f.r});
    const Var logits = entity_logits(*fw, hs, queries);
    const Tensor& scores = logits.value();

    for (std::size_t i = 0; i < snap.facts.size(); ++i) {
      const Fact& f = snap.facts[i];
      std::vector<std::int64_t> known;
      for (std::int64_t o : truth[{f.s, f.r}]) {
        if (o != f.o) known.push_back(o);
      }
      const std::size_t rank = time_aware_filtered_rank(scores.row(i), f.o, known);
      ranks.push_back(rank);
      RankResult rr{f.s, f.r, snap.t, f.o, rank};
      result.ranks.push_back(rr);

      if (opts.explain_top_k > 0) {
        const auto row = scores.row(i);
        std::vector<std::int64_t> order(row.size());
        std::iota(order.begin(), order.end(), 0);
        const std::size_t k = std::min(opts.explain_top_k, order.size());
        std::partial_sort(order.begin(), order.begin() + std::ptrdiff_t(k), order.end(),
                          [&](std::int64_t a, std::int64_t b) {
                            return row[std::size_t(a)] > row[std::size_t(b)] ||
                                   (row[std::size_t(a)] == row[std::size_t(b)] && a < b);
                          });
        Explanation ex{rr, {}};
        for (std::size_t j = 0; j < k; ++j) {
          const double z = double(row[std::size_t(order[j])]);
          ex.top.push_back(Candidate{order[j], 1.0 / (1.0 + std::exp(-z))});
        }
        result.explanations.push_back(std::move(ex));
      }
    }
  }

  if (ranks.empty()) throw std::invalid_argument("evaluation split '" + to_string(split) + "' has no facts");
  result.report = mrr_hits(ranks);
  result.report.regime = to_string(regime);
  result.report.split = to_string(split);
  result.report.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace mtdm
