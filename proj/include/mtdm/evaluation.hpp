// Time-aware filtered ranking and MRR / Hits@k.
//
// Only alternative true objects at the query timestamp are filtered; a fact
// true at another timestamp stays in the candidate list.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtdm/model.hpp"

namespace mtdm {

enum class Regime { kDefault, kWithEval, kGroundTruth };
enum class EvalSplit { kValid, kTest };

std::string to_string(Regime r);
std::string to_string(EvalSplit s);
Regime parse_regime(const std::string& s);
EvalSplit parse_split(const std::string& s);

struct MetricsReport {
  std::string regime = "default";
  std::string split = "test";
  double mrr = 0;
  double hits1 = 0;
  double hits3 = 0;
  double hits10 = 0;
  std::size_t n_queries = 0;
  double wall_clock_s = 0;

  /// {regime, split, mrr, hits1, hits3, hits10, n_queries, wall_clock_s} as one JSON line.
  std::string to_json() const;
};

struct RankResult {
  std::int64_t s = 0;
  std::int64_t r = 0;
  std::int64_t t_p = 0;
  std::int64_t gold = 0;
  std::size_t rank = 0;
};

/// Rank of `gold` among the scores after masking `known_at_tp` (other true
/// objects at t_p): 1 + number of unmasked candidates scoring strictly higher.
/// Throws std::logic_error if gold is in known_at_tp.
std::size_t time_aware_filtered_rank(std::span<const Real> scores, std::int64_t gold,
                                     std::span<const std::int64_t> known_at_tp);

/// Throws std::invalid_argument on an empty list.
MetricsReport mrr_hits(std::span<const std::size_t> ranks);

struct EvalOptions {
  /// Default regime on the test split: use validation facts as history too.
  bool include_valid_history = true;
  /// When > 0, collect the top-k candidates of every query.
  std::size_t explain_top_k = 0;
};

struct Candidate {
  std::int64_t entity = 0;
  double probability = 0;
};

struct Explanation {
  RankResult query;
  std::vector<Candidate> top;
};

struct HistoryUsage {
  std::int64_t t_p = 0;
  std::size_t snapshots = 0;
  std::size_t facts = 0;
};

struct EvalResult {
  MetricsReport report;
  std::vector<RankResult> ranks;
  std::vector<Explanation> explanations;
  std::vector<HistoryUsage> history;
};

/// History available when predicting t_p under `regime` for `split`.
std::vector<const Snapshot*> history_for(const PreparedData& data, Regime regime, EvalSplit split, std::int64_t t_p,
                                         const EvalOptions& opts = {});

/// Ranks every fact of the split (both directions via inverse relations).
EvalResult evaluate(const Model& model, const PreparedData& data, Regime regime, EvalSplit split,
                    const EvalOptions& opts = {});

/// Object scores (pre-sigmoid) for one query under the given history.
std::vector<Real> score_query(const Model& model, std::span<const Snapshot* const> history, EntityQuery q);

}  // namespace mtdm
