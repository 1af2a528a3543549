// Quadruple datasets, snapshot sequences, deep-memory graphs and dissolution negatives.

#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtdm/sparse.hpp"

namespace mtdm {

/// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Fact {
  std::int64_t s = 0;
  std::int64_t r = 0;
  std::int64_t o = 0;
  std::int64_t t = 0;

  auto operator<=>(const Fact&) const = default;
};

struct Triple {
  std::int64_t s = 0;
  std::int64_t r = 0;
  std::int64_t o = 0;

  auto operator<=>(const Triple&) const = default;
};

inline Triple triple_of(const Fact& f) { return {f.s, f.r, f.o}; }

struct Snapshot {
  std::int64_t t = 0;
  std::vector<Fact> facts;
  SparseAdjacency adjacency;
};

/// Snapshots in strictly increasing timestamp order.
class TemporalGraph {
 public:
  TemporalGraph() = default;
  TemporalGraph(std::size_t num_entities, std::size_t num_relations, bool inverse_augmented,
                std::vector<Snapshot> snapshots);

  std::size_t num_entities() const { return num_entities_; }
  /// |R| before inverse augmentation.
  std::size_t num_relations() const { return num_relations_; }
  bool inverse_augmented() const { return inverse_augmented_; }
  /// Relation ids in use: 2|R| when augmented, |R| otherwise.
  std::size_t relation_space() const { return inverse_augmented_ ? 2 * num_relations_ : num_relations_; }

  const std::vector<Snapshot>& snapshots() const { return snapshots_; }
  std::size_t size() const { return snapshots_.size(); }
  bool empty() const { return snapshots_.empty(); }
  const Snapshot& operator[](std::size_t i) const { return snapshots_[i]; }
  /// Snapshot with timestamp t, or nullptr.
  const Snapshot* find(std::int64_t t) const;
  std::vector<Fact> all_facts() const;

 private:
  std::size_t num_entities_ = 0;
  std::size_t num_relations_ = 0;
  bool inverse_augmented_ = false;
  std::vector<Snapshot> snapshots_;
};

struct DatasetSplit {
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  std::vector<Fact> train;
  std::vector<Fact> valid;
  std::vector<Fact> test;
  /// raw_timestamps[i] is the original timestamp re-indexed to i.
  std::vector<std::int64_t> raw_timestamps;
};

/// The splits after inverse augmentation, grouped into snapshots.
struct PreparedData {
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  TemporalGraph train;
  TemporalGraph valid;
  TemporalGraph test;
};

/// Constructed negatives for one prediction timestamp.
struct DissolutionSet {
  std::int64_t t_p = 0;
  std::vector<Fact> facts;
};

/// Reads `s r o t` lines; trailing columns are ignored. Ids are checked
/// against the bounds. Errors name the file and line.
std::vector<Fact> parse_quadruple_file(const std::filesystem::path& path, std::size_t num_entities,
                                       std::size_t num_relations);

/// Reads stat.txt: the first two integers are numEntities numRelations.
std::pair<std::size_t, std::size_t> parse_stat_file(const std::filesystem::path& path);

/// Loads train/valid/test/stat.txt from `dir` and re-indexes timestamps to 0..T-1.
DatasetSplit parse_dataset(const std::filesystem::path& dir);

/// Writes the split in the same text layout parse_dataset reads.
void write_dataset(const DatasetSplit& split, const std::filesystem::path& dir);

/// Appends (o, r + num_relations, s, t) for every fact. Rejects relation ids
/// >= num_relations, which also rejects a second application.
std::vector<Fact> add_inverse(std::span<const Fact> facts, std::size_t num_relations);

TemporalGraph build_snapshots(std::span<const Fact> facts, std::size_t num_entities, std::size_t num_relations,
                              bool inverse_augmented);

PreparedData prepare(const DatasetSplit& split);

/// All facts strictly before t1, deduplicated on (s, r, o) keeping the earliest.
std::vector<Fact> deep_memory_facts(std::span<const Snapshot* const> history, std::int64_t t1);
std::vector<Fact> deep_memory_facts(const TemporalGraph& graph, std::int64_t t1);

/// Triples present anywhere in the window [t1, tn] and absent at t_p, stamped with t_p.
/// Requires t_p > tn.
DissolutionSet build_dissolution_negatives(std::span<const Snapshot* const> window, const Snapshot& target);
DissolutionSet build_dissolution_negatives(const TemporalGraph& graph, std::int64_t t1, std::int64_t tn,
                                           std::int64_t t_p);

SparseAdjacency make_adjacency(std::span<const Fact> facts, std::size_t num_entities, std::size_t num_relations);

/// Deterministic periodic dataset: 20 entities, 4 relations, 30 timestamps.
/// At timestamp t with phase p = t mod 3 every entity s emits
/// (s, (s + p) mod 4, (7s + 2p + 3) mod 20). Every (s, r) and (o, r) query has
/// a unique answer. Split 24/3/3 timestamps.
DatasetSplit make_synthetic_dataset();

}  // namespace mtdm
