#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include <unistd.h>

#include "mtdm/cache.hpp"
#include "mtdm/graph_data.hpp"

using namespace mtdm;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("mtdm_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

void write_split(const fs::path& dir, const std::string& stat, const std::string& train, const std::string& valid,
                 const std::string& test) {
  write_file(dir / "stat.txt", stat);
  write_file(dir / "train.txt", train);
  write_file(dir / "valid.txt", valid);
  write_file(dir / "test.txt", test);
}

std::set<Triple> triples(const std::vector<Fact>& facts) {
  std::set<Triple> out;
  for (const Fact& f : facts) out.insert(triple_of(f));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

class ParseTest : public ::testing::Test {
 protected:
  TempDir dir;
};

TEST_F(ParseTest, ParsesOneQuadruple) {
  write_file(dir.path() / "q.txt", "3 1 7 24\n");
  const auto facts = parse_quadruple_file(dir.path() / "q.txt", 10, 5);
  ASSERT_EQ(facts.size(), 1u);
  EXPECT_EQ(facts[0], (Fact{3, 1, 7, 24}));
}

TEST_F(ParseTest, TrailingColumnsIgnored) {
  write_file(dir.path() / "q.txt", "3\t1\t7\t24\t0\n\n");
  EXPECT_EQ(parse_quadruple_file(dir.path() / "q.txt", 10, 5), (std::vector<Fact>{{3, 1, 7, 24}}));
}

TEST_F(ParseTest, RelationAtStatBoundIsOutOfRange) {
  write_file(dir.path() / "q.txt", "0 229 1 0\n0 230 1 0\n");
  try {
    parse_quadruple_file(dir.path() / "q.txt", 7128, 230);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("q.txt:2"), std::string::npos) << e.what();
  }
}

TEST_F(ParseTest, MalformedLineNamesFileAndLine) {
  write_file(dir.path() / "q.txt", "1 2 3 4\n1 x 3 4\n");
  try {
    parse_quadruple_file(dir.path() / "q.txt", 10, 5);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("q.txt:2"), std::string::npos) << e.what();
  }
  write_file(dir.path() / "short.txt", "1 2 3\n");
  EXPECT_THROW(parse_quadruple_file(dir.path() / "short.txt", 10, 5), DataError);
}

TEST_F(ParseTest, StatFileReadsFirstTwoIntegers) {
  write_file(dir.path() / "stat.txt", "7128 230 0\n");
  EXPECT_EQ(parse_stat_file(dir.path() / "stat.txt"), (std::pair<std::size_t, std::size_t>{7128, 230}));
}

TEST_F(ParseTest, MissingStatFileIsActionable) {
  write_file(dir.path() / "train.txt", "0 0 1 0\n");
  try {
    parse_dataset(dir.path());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("stat.txt"), std::string::npos) << e.what();
  }
}

TEST_F(ParseTest, TimestampsReindexedBySortUnique) {
  write_split(dir.path(), "4 2\n", "0 0 1 48\n1 1 2 0\n", "2 0 3 72\n", "3 1 0 96\n1 0 2 24\n");
  // 24 appears only in test and precedes valid's 72: the split check must fire.
  EXPECT_THROW(parse_dataset(dir.path()), DataError);

  write_split(dir.path(), "4 2\n", "0 0 1 48\n1 1 2 0\n2 1 3 24\n", "2 0 3 72\n", "3 1 0 96\n");
  const DatasetSplit split = parse_dataset(dir.path());
  EXPECT_EQ(split.raw_timestamps, (std::vector<std::int64_t>{0, 24, 48, 72, 96}));
  EXPECT_EQ(split.train[0].t, 2);
  EXPECT_EQ(split.train[1].t, 0);
  EXPECT_EQ(split.train[2].t, 1);
  EXPECT_EQ(split.valid[0].t, 3);
  EXPECT_EQ(split.test[0].t, 4);
}

TEST_F(ParseTest, RawStrideOracle) {
  write_split(dir.path(), "3 1\n", "0 0 1 0\n1 0 2 24\n2 0 0 48\n", "", "");
  const DatasetSplit split = parse_dataset(dir.path());
  std::vector<std::int64_t> ts;
  for (const Fact& f : split.train) ts.push_back(f.t);
  EXPECT_EQ(ts, (std::vector<std::int64_t>{0, 1, 2}));
}

TEST_F(ParseTest, WriteThenParseRoundTrips) {
  const DatasetSplit split = make_synthetic_dataset();
  write_dataset(split, dir.path());
  const DatasetSplit again = parse_dataset(dir.path());
  EXPECT_EQ(again.num_entities, split.num_entities);
  EXPECT_EQ(again.num_relations, split.num_relations);
  EXPECT_EQ(again.train, split.train);
  EXPECT_EQ(again.valid, split.valid);
  EXPECT_EQ(again.test, split.test);
}

// ---------------------------------------------------------------------------
// Inverse augmentation and snapshots
// ---------------------------------------------------------------------------

TEST(AugmentTest, AddsInverseRelation) {
  const std::vector<Fact> in{{3, 1, 7, 5}};
  const auto out = add_inverse(in, 230);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], (Fact{3, 1, 7, 5}));
  EXPECT_EQ(out[1], (Fact{7, 231, 3, 5}));
}

TEST(AugmentTest, EmptyInput) { EXPECT_TRUE(add_inverse({}, 4).empty()); }

TEST(AugmentTest, SecondApplicationRejected) {
  const std::vector<Fact> in{{3, 1, 7, 5}};
  const auto once = add_inverse(in, 230);
  EXPECT_THROW(add_inverse(once, 230), DataError);
}

TEST(SnapshotTest, GroupsByTimestamp) {
  const std::vector<Fact> facts{{0, 0, 1, 2}, {1, 0, 2, 0}, {2, 0, 0, 0}};
  const TemporalGraph g = build_snapshots(facts, 3, 1, false);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].t, 0);
  EXPECT_EQ(g[0].facts.size(), 2u);
  EXPECT_EQ(g[1].t, 2);
  EXPECT_EQ(g[1].facts.size(), 1u);
  EXPECT_EQ(g.find(1), nullptr);
  for (const Snapshot& s : g.snapshots()) {
    for (const Fact& f : s.facts) EXPECT_EQ(f.t, s.t);
  }
}

TEST(SnapshotTest, UnionOfSnapshotsEqualsInput) {
  const DatasetSplit split = make_synthetic_dataset();
  const TemporalGraph g = build_snapshots(split.train, split.num_entities, split.num_relations, false);
  auto all = g.all_facts();
  auto expected = split.train;
  std::sort(all.begin(), all.end());
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(all, expected);
}

TEST(SnapshotTest, DegreeCountsAggregationTargets) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::int64_t> e(0, 11), r(0, 2);
  std::vector<Fact> facts;
  for (int i = 0; i < 40; ++i) facts.push_back({e(rng), r(rng), e(rng), 0});
  const auto augmented = add_inverse(facts, 3);
  const TemporalGraph g = build_snapshots(augmented, 12, 3, true);
  const SparseAdjacency& adj = g[0].adjacency;
  // Messages flow into the subject; |N_s| counts facts whose subject is s.
  std::map<std::int64_t, std::size_t> count;
  for (const Fact& f : augmented) ++count[f.s];
  std::size_t total = 0;
  for (std::size_t s = 0; s < 12; ++s) {
    EXPECT_EQ(adj.degree(s), count[std::int64_t(s)]) << "entity " << s;
    total += adj.degree(s);
  }
  EXPECT_EQ(total, augmented.size());
  // With inverses, |N_x| = (facts with subject x) + (facts with object x).
  for (std::size_t x = 0; x < 12; ++x) {
    std::size_t expected = 0;
    for (const Fact& f : facts) expected += (f.s == std::int64_t(x)) + (f.o == std::int64_t(x));
    EXPECT_EQ(adj.degree(x), expected);
  }
}

TEST(SnapshotTest, OutOfRangeEdgeRejected) {
  EXPECT_THROW(SparseAdjacency(3, 2, {{0, 2, 1}}), std::out_of_range);
  EXPECT_THROW(SparseAdjacency(3, 2, {{0, 1, 3}}), std::out_of_range);
}

// ---------------------------------------------------------------------------
// Deep memory and dissolution negatives
// ---------------------------------------------------------------------------

TEST(DeepMemoryTest, NothingBeforeFirstTimestamp) {
  const std::vector<Fact> facts{{0, 0, 1, 0}, {1, 0, 2, 1}};
  const TemporalGraph g = build_snapshots(facts, 3, 1, false);
  EXPECT_TRUE(deep_memory_facts(g, 0).empty());
}

TEST(DeepMemoryTest, FactsBeforeWindow) {
  const std::vector<Fact> facts{{0, 0, 1, 0}, {1, 0, 2, 1}, {2, 0, 0, 2}};
  const TemporalGraph g = build_snapshots(facts, 3, 1, false);
  EXPECT_EQ(deep_memory_facts(g, 2), (std::vector<Fact>{{0, 0, 1, 0}, {1, 0, 2, 1}}));
}

TEST(DeepMemoryTest, DeduplicatesOnTriple) {
  const std::vector<Fact> facts{{0, 0, 1, 0}, {0, 0, 1, 1}, {1, 0, 2, 1}};
  const TemporalGraph g = build_snapshots(facts, 3, 1, false);
  const auto deep = deep_memory_facts(g, 2);
  EXPECT_EQ(deep.size(), 2u);
  EXPECT_EQ(triples(deep), triples(facts));
}

TEST(DissolutionTest, StillHoldingFactIsNotDissolved) {
  const std::vector<Fact> facts{{0, 0, 1, 0}, {0, 0, 1, 1}};
  const TemporalGraph g = build_snapshots(facts, 3, 1, false);
  EXPECT_TRUE(build_dissolution_negatives(g, 0, 0, 1).facts.empty());
}

TEST(DissolutionTest, SetDifference) {
  const std::vector<Fact> facts{{0, 0, 1, 0}, {0, 0, 2, 0}, {0, 0, 2, 1}};
  const TemporalGraph g = build_snapshots(facts, 3, 1, false);
  const DissolutionSet d = build_dissolution_negatives(g, 0, 0, 1);
  EXPECT_EQ(d.t_p, 1);
  EXPECT_EQ(d.facts, (std::vector<Fact>{{0, 0, 1, 1}}));
}

TEST(DissolutionTest, DisjointWindowReturnsAll) {
  const std::vector<Fact> facts{{0, 0, 1, 0}, {1, 0, 2, 1}, {2, 0, 0, 3}};
  const TemporalGraph g = build_snapshots(facts, 3, 1, false);
  const DissolutionSet d = build_dissolution_negatives(g, 0, 1, 3);
  EXPECT_EQ(triples(d.facts), (std::set<Triple>{{0, 0, 1}, {1, 0, 2}}));
  for (const Fact& f : d.facts) EXPECT_EQ(f.t, 3);
}

TEST(DissolutionTest, TargetMustFollowWindow) {
  const std::vector<Fact> facts{{0, 0, 1, 0}, {1, 0, 2, 1}};
  const TemporalGraph g = build_snapshots(facts, 3, 1, false);
  EXPECT_THROW(build_dissolution_negatives(g, 0, 1, 1), std::invalid_argument);
}

TEST(DissolutionTest, NeverIntersectsTarget) {
  const PreparedData data = prepare(make_synthetic_dataset());
  const auto& snaps = data.train.snapshots();
  for (std::size_t p = 3; p < snaps.size(); ++p) {
    std::vector<const Snapshot*> window;
    for (std::size_t i = p - 3; i < p; ++i) window.push_back(&snaps[i]);
    const DissolutionSet d = build_dissolution_negatives(window, snaps[p]);
    const auto target = triples(snaps[p].facts);
    EXPECT_FALSE(d.facts.empty());
    for (const Fact& f : d.facts) {
      EXPECT_EQ(target.count(triple_of(f)), 0u);
      EXPECT_EQ(f.t, snaps[p].t);
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic dataset
// ---------------------------------------------------------------------------

TEST(SyntheticTest, ShapeAndSplit) {
  const DatasetSplit s = make_synthetic_dataset();
  EXPECT_EQ(s.num_entities, 20u);
  EXPECT_EQ(s.num_relations, 4u);
  EXPECT_EQ(s.train.size() + s.valid.size() + s.test.size(), 20u * 30u);
  std::set<std::int64_t> ts;
  for (const auto* part : {&s.train, &s.valid, &s.test}) {
    for (const Fact& f : *part) ts.insert(f.t);
  }
  EXPECT_EQ(ts.size(), 30u);
}

TEST(SyntheticTest, QueriesHaveUniqueAnswersPerTimestamp) {
  const PreparedData data = prepare(make_synthetic_dataset());
  for (const TemporalGraph* g : {&data.train, &data.valid, &data.test}) {
    for (const Snapshot& s : g->snapshots()) {
      std::map<std::pair<std::int64_t, std::int64_t>, std::set<std::int64_t>> answers;
      for (const Fact& f : s.facts) answers[{f.s, f.r}].insert(f.o);
      for (const auto& [q, objs] : answers) EXPECT_EQ(objs.size(), 1u);
    }
  }
}

// ---------------------------------------------------------------------------
// Preprocessed cache
// ---------------------------------------------------------------------------

class CacheTest : public ::testing::Test {
 protected:
  TempDir dir;
  PreparedData data = prepare(make_synthetic_dataset());
};

TEST_F(CacheTest, RoundTripEqualsInMemoryGraph) {
  const fs::path p = dir.path() / kCacheFileName;
  const std::string written = write_cache(data, p);
  std::string read_hash;
  const PreparedData back = read_cache(p, &read_hash);
  EXPECT_TRUE(back == data);
  EXPECT_EQ(read_hash, written);
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    EXPECT_EQ(back.train[i].adjacency.edges().size(), data.train[i].adjacency.edges().size());
    for (std::size_t s = 0; s < data.num_entities; ++s) {
      EXPECT_EQ(back.train[i].adjacency.degree(s), data.train[i].adjacency.degree(s));
    }
  }
}

TEST_F(CacheTest, HashIsDeterministic) {
  const std::string a = write_cache(data, dir.path() / "a.mtdmc");
  const std::string b = write_cache(prepare(make_synthetic_dataset()), dir.path() / "b.mtdmc");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 64u);
  EXPECT_EQ(a, content_hash(data));
}

TEST_F(CacheTest, CorruptionDetected) {
  const fs::path p = dir.path() / "c.mtdmc";
  write_cache(data, p);
  {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x7f');
  }
  EXPECT_THROW(read_cache(p), DataError);
}

TEST_F(CacheTest, WrongMagicRejected) {
  write_file(dir.path() / "bad.mtdmc", std::string(80, 'x'));
  EXPECT_THROW(read_cache(dir.path() / "bad.mtdmc"), DataError);
}

TEST_F(CacheTest, LoadPreparedAcceptsRawAndCachedDirectories) {
  write_dataset(make_synthetic_dataset(), dir.path() / "raw");
  EXPECT_TRUE(load_prepared(dir.path() / "raw") == data);
  write_cache(data, dir.path() / "raw" / kCacheFileName);
  EXPECT_TRUE(load_prepared(dir.path() / "raw") == data);
  EXPECT_THROW(load_prepared(dir.path() / "nope"), DataError);
}
