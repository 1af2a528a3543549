#include "mtdm/graph_data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <climits>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace mtdm {
namespace {

bool parse_int(std::string_view tok, std::int64_t& out) {
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> toks;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) toks.push_back(line.substr(i, j - i));
    i = j;
  }
  return toks;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

}  // namespace

TemporalGraph::TemporalGraph(std::size_t num_entities, std::size_t num_relations, bool inverse_augmented,
                             std::vector<Snapshot> snapshots)
    : num_entities_(num_entities),
      num_relations_(num_relations),
      inverse_augmented_(inverse_augmented),
      snapshots_(std::move(snapshots)) {
  for (std::size_t i = 1; i < snapshots_.size(); ++i) {
    if (snapshots_[i].t <= snapshots_[i - 1].t) throw DataError("snapshot timestamps are not strictly increasing");
  }
}

const Snapshot* TemporalGraph::find(std::int64_t t) const {
  auto it = std::lower_bound(snapshots_.begin(), snapshots_.end(), t,
                             [](const Snapshot& s, std::int64_t v) { return s.t < v; });
  return (it != snapshots_.end() && it->t == t) ? &*it : nullptr;
}

std::vector<Fact> TemporalGraph::all_facts() const {
  std::vector<Fact> out;
  for (const Snapshot& s : snapshots_) out.insert(out.end(), s.facts.begin(), s.facts.end());
  return out;
}

std::pair<std::size_t, std::size_t> parse_stat_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stat file " + path.string());
  std::string line;
  std::vector<std::int64_t> nums;
  std::size_t lineno = 0;
  while (nums.size() < 2 && std::getline(in, line)) {
    ++lineno;
    for (auto tok : split_ws(line)) {
      if (nums.size() == 2) break;
      std::int64_t v = 0;
      if (!parse_int(tok, v) || v <= 0) throw DataError(where(path, lineno) + ": expected positive integers");
      nums.push_back(v);
    }
  }
  if (nums.size() < 2) throw DataError(path.string() + ": expected 'numEntities numRelations'");
  return {std::size_t(nums[0]), std::size_t(nums[1])};
}

std::vector<Fact> parse_quadruple_file(const std::filesystem::path& path, std::size_t num_entities,
                                       std::size_t num_relations) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open quadruple file " + path.string());
  std::vector<Fact> facts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() < 4) throw DataError(where(path, lineno) + ": expected 's r o t', got '" + line + "'");
    std::int64_t v[4];
    for (int k = 0; k < 4; ++k) {
      if (!parse_int(toks[std::size_t(k)], v[k])) {
        throw DataError(where(path, lineno) + ": '" + std::string(toks[std::size_t(k)]) + "' is not an integer");
      }
    }
    Fact f{v[0], v[1], v[2], v[3]};
    if (f.s < 0 || std::size_t(f.s) >= num_entities || f.o < 0 || std::size_t(f.o) >= num_entities) {
      throw DataError(where(path, lineno) + ": entity id out of range [0, " + std::to_string(num_entities) + ")");
    }
    if (f.r < 0 || std::size_t(f.r) >= num_relations) {
      throw DataError(where(path, lineno) + ": relation id " + std::to_string(f.r) + " out of range [0, " +
                      std::to_string(num_relations) + ")");
    }
    if (f.t < 0) throw DataError(where(path, lineno) + ": negative timestamp");
    facts.push_back(f);
  }
  return facts;
}

DatasetSplit parse_dataset(const std::filesystem::path& dir) {
  const auto stat = dir / "stat.txt";
  if (!std::filesystem::exists(stat)) {
    throw DataError("missing " + stat.string() + " (expected a line 'numEntities numRelations')");
  }
  DatasetSplit split;
  std::tie(split.num_entities, split.num_relations) = parse_stat_file(stat);
  split.train = parse_quadruple_file(dir / "train.txt", split.num_entities, split.num_relations);
  split.valid = parse_quadruple_file(dir / "valid.txt", split.num_entities, split.num_relations);
  split.test = parse_quadruple_file(dir / "test.txt", split.num_entities, split.num_relations);

  std::vector<std::int64_t> ts;
  for (const auto* part : {&split.train, &split.valid, &split.test}) {
    for (const Fact& f : *part) ts.push_back(f.t);
  }
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  std::unordered_map<std::int64_t, std::int64_t> index;
  for (std::size_t i = 0; i < ts.size(); ++i) index[ts[i]] = std::int64_t(i);
  for (auto* part : {&split.train, &split.valid, &split.test}) {
    for (Fact& f : *part) f.t = index.at(f.t);
  }
  split.raw_timestamps = std::move(ts);

  auto max_t = [](const std::vector<Fact>& v) {
    std::int64_t m = -1;
    for (const Fact& f : v) m = std::max(m, f.t);
    return m;
  };
  auto min_t = [](const std::vector<Fact>& v) {
    std::int64_t m = INT64_MAX;
    for (const Fact& f : v) m = std::min(m, f.t);
    return m;
  };
  if (!split.valid.empty() && max_t(split.train) > min_t(split.valid)) {
    throw DataError(dir.string() + ": validation facts precede training facts (split is not chronological)");
  }
  if (!split.test.empty() && !split.valid.empty() && min_t(split.valid) > min_t(split.test)) {
    throw DataError(dir.string() + ": test facts precede validation facts (split is not chronological)");
  }
  return split;
}

void write_dataset(const DatasetSplit& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "stat.txt");
    out << split.num_entities << '\t' << split.num_relations << '\n';
  }
  auto write = [&](const std::vector<Fact>& facts, const char* name) {
    std::ofstream out(dir / name);
    for (const Fact& f : facts) out << f.s << '\t' << f.r << '\t' << f.o << '\t' << f.t << '\n';
    if (!out) throw DataError("failed writing " + (dir / name).string());
  };
  write(split.train, "train.txt");
  write(split.valid, "valid.txt");
  write(split.test, "test.txt");
}

std::vector<Fact> add_inverse(std::span<const Fact> facts, std::size_t num_relations) {
  std::vector<Fact> out(facts.begin(), facts.end());
  out.reserve(2 * facts.size());
  for (const Fact& f : facts) {
    if (f.r < 0 || std::size_t(f.r) >= num_relations) {
      throw DataError("add_inverse: relation " + std::to_string(f.r) + " is not a base relation (< " +
                      std::to_string(num_relations) + "); already augmented?");
    }
    out.push_back(Fact{f.o, f.r + std::int64_t(num_relations), f.s, f.t});
  }
  return out;
}

SparseAdjacency make_adjacency(std::span<const Fact> facts, std::size_t num_entities, std::size_t num_relations) {
  std::vector<Edge> edges;
  edges.reserve(facts.size());
  for (const Fact& f : facts) edges.push_back(Edge{f.s, f.r, f.o});
  return SparseAdjacency(num_entities, num_relations, std::move(edges));
}

TemporalGraph build_snapshots(std::span<const Fact> facts, std::size_t num_entities, std::size_t num_relations,
                              bool inverse_augmented) {
  const std::size_t rel_space = inverse_augmented ? 2 * num_relations : num_relations;
  std::map<std::int64_t, std::vector<Fact>> by_t;
  for (const Fact& f : facts) by_t[f.t].push_back(f);
  std::vector<Snapshot> snaps;
  snaps.reserve(by_t.size());
  for (auto& [t, fs] : by_t) {
    Snapshot s;
    s.t = t;
    s.adjacency = make_adjacency(fs, num_entities, rel_space);
    s.facts = std::move(fs);
    snaps.push_back(std::move(s));
  }
  return TemporalGraph(num_entities, num_relations, inverse_augmented, std::move(snaps));
}

PreparedData prepare(const DatasetSplit& split) {
  PreparedData out;
  out.num_entities = split.num_entities;
  out.num_relations = split.num_relations;
  auto graph = [&](const std::vector<Fact>& facts) {
    return build_snapshots(add_inverse(facts, split.num_relations), split.num_entities, split.num_relations, true);
  };
  out.train = graph(split.train);
  out.valid = graph(split.valid);
  out.test = graph(split.test);
  return out;
}

std::vector<Fact> deep_memory_facts(std::span<const Snapshot* const> history, std::int64_t t1) {
  std::set<Triple> seen;
  std::vector<Fact> out;
  for (const Snapshot* snap : history) {
    if (snap->t >= t1) continue;
    for (const Fact& f : snap->facts) {
      if (seen.insert(triple_of(f)).second) out.push_back(f);
    }
  }
  return out;
}

std::vector<Fact> deep_memory_facts(const TemporalGraph& graph, std::int64_t t1) {
  std::vector<const Snapshot*> snaps;
  for (const Snapshot& s : graph.snapshots()) snaps.push_back(&s);
  return deep_memory_facts(snaps, t1);
}

DissolutionSet build_dissolution_negatives(std::span<const Snapshot* const> window, const Snapshot& target) {
  DissolutionSet out;
  out.t_p = target.t;
  std::set<Triple> present;
  for (const Fact& f : target.facts) present.insert(triple_of(f));
  std::set<Triple> emitted;
  for (const Snapshot* snap : window) {
    if (snap->t >= target.t) {
      throw std::invalid_argument("dissolution window snapshot t=" + std::to_string(snap->t) +
                                  " is not before t_p=" + std::to_string(target.t));
    }
    for (const Fact& f : snap->facts) {
      const Triple tr = triple_of(f);
      if (present.count(tr) || !emitted.insert(tr).second) continue;
      out.facts.push_back(Fact{f.s, f.r, f.o, target.t});
    }
  }
  return out;
}

DissolutionSet build_dissolution_negatives(const TemporalGraph& graph, std::int64_t t1, std::int64_t tn,
                                           std::int64_t t_p) {
  if (t_p <= tn) throw std::invalid_argument("dissolution target t_p must follow the window end");
  std::vector<const Snapshot*> window;
  for (const Snapshot& s : graph.snapshots()) {
    if (s.t >= t1 && s.t <= tn) window.push_back(&s);
  }
  const Snapshot* target = graph.find(t_p);
  if (!target) {
    Snapshot empty;
    empty.t = t_p;
    return build_dissolution_negatives(window, empty);
  }
  return build_dissolution_negatives(window, *target);
}

DatasetSplit make_synthetic_dataset() {
  constexpr std::int64_t kEntities = 20;
  constexpr std::int64_t kRelations = 4;
  constexpr std::int64_t kTimestamps = 30;
  DatasetSplit split;
  split.num_entities = kEntities;
  split.num_relations = kRelations;
  for (std::int64_t t = 0; t < kTimestamps; ++t) {
    const std::int64_t phase = t % 3;
    auto& part = t < 24 ? split.train : (t < 27 ? split.valid : split.test);
    for (std::int64_t s = 0; s < kEntities; ++s) {
      part.push_back(Fact{s, (s + phase) % kRelations, (7 * s + 2 * phase + 3) % kEntities, t});
    }
    split.raw_timestamps.push_back(t);
  }
  return split;
}

}  // namespace mtdm
