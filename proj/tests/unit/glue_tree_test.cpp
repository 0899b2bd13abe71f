#include <map>
#include <memory>

#include "gtest/gtest.h"

#include "../common/exhaustive.hpp"
#include "glue/error.hpp"
#include "glue/glue_tree.hpp"
#include "glue/inference.hpp"
#include "glue/oracle.hpp"

namespace glue {

namespace {

constexpr const char* kChainABC = R"({
  "tables": [
    {"name": "A", "columns": [{"name": "id", "kind": "integer", "min": 0, "max": 9}]},
    {"name": "B", "columns": [{"name": "a", "kind": "integer", "min": 0, "max": 9},
                              {"name": "id", "kind": "integer", "min": 0, "max": 9}]},
    {"name": "C", "columns": [{"name": "b", "kind": "integer", "min": 0, "max": 9}]}
  ],
  "joins": [{"left": "A.id", "right": "B.a"}, {"left": "B.id", "right": "C.b"}]
})";

// Set score = max over adjacent table pairs across the cut.
ScoreFn pair_scores(std::map<std::pair<uint32_t, uint32_t>, double> pairs) {
  return [pairs](TableMask a, TableMask b) {
    double best = 0.0;
    for (const auto& [p, s] : pairs) {
      const bool ab = (a >> p.first & 1) && (b >> p.second & 1);
      const bool ba = (b >> p.first & 1) && (a >> p.second & 1);
      if (ab || ba) best = std::max(best, s);
    }
    return best;
  };
}

TreeConfig singleton_exact(EstimationMode mode = EstimationMode::kContext) {
  TreeConfig config;
  config.mode = mode;
  config.partitions = PartitionMode::kSingleton;
  config.default_leaf = LeafKind::kExact;
  return config;
}

size_t part_of(const Partition& p, std::function<double(AttrRef)> value_of) { return p.locate(value_of).value(); }

}  // namespace

class ShapeTest : public ::testing::Test {
 protected:
  void SetUp() override { _catalog = load_schema(kChainABC); }

  TreeShape shape(double s_bc) const {
    CostParams cost{0.0, 1.0, 1.0};
    const auto leaf = [](uint32_t) { return leaf_cost(LeafKind::kHistogram, 1); };
    return optimal_shape(_catalog, 0b111, cost, leaf, pair_scores({{{0, 1}, 0.9}, {{1, 2}, s_bc}}));
  }

  Catalog _catalog;
};

TEST_F(ShapeTest, TwoTablesHaveOneTree) {
  CostParams cost;
  const auto leaf = [](uint32_t) { return 2.0; };
  const auto s = shape(0.1);
  const auto two = optimal_shape(_catalog, 0b011, cost, leaf, pair_scores({{{0, 1}, 0.5}}));
  EXPECT_DOUBLE_EQ(two.cost(), 1.0 + 0.5 + 0.5 + 2.0 + 2.0);
  EXPECT_EQ(two.nodes.size(), 3u);
  EXPECT_EQ(s.nodes.size(), 5u);
}

TEST_F(ShapeTest, EqualCostTreesPickSmallestLeftMask) {
  // Both trees cost 1.91 + leaves: {A}|{B,C} pays 0.9 + 0.81 at the root and
  // 0.1 + 0.1 below; {A,B}|{C} pays 0.1 + 0.01 and 0.9 + 0.9.
  const auto s = shape(0.1);
  const auto& root = s.nodes[s.root];
  EXPECT_NEAR(s.cost(), 1.91 + 3.0, 1e-12);
  EXPECT_EQ(s.nodes[root.left].tables, 0b001u);
  EXPECT_EQ(s.nodes[root.right].tables, 0b110u);
}

TEST_F(ShapeTest, CheaperTopScoreIsolatesC) {
  const auto s = shape(0.2);
  const auto& root = s.nodes[s.root];
  EXPECT_EQ(s.nodes[root.left].tables, 0b011u);
  EXPECT_EQ(s.nodes[root.right].tables, 0b100u);
  EXPECT_NEAR(s.cost(), 0.2 + 0.04 + 1.8 + 3.0, 1e-12);
}

TEST_F(ShapeTest, DisconnectedJoinSetThrows) {
  const auto leaf = [](uint32_t) { return 1.0; };
  EXPECT_THROW(optimal_shape(_catalog, 0b101, {}, leaf, pair_scores({})), Error);
  CostParams zero{0.0, 0.0, 0.0};
  EXPECT_THROW(zero.check(), Error);
}

TEST(ShapeOptimalityTest, MatchesExhaustiveOnRandomTrees) {
  for (uint64_t seed = 0; seed < 6; ++seed) {
    SyntheticSpec spec;
    spec.kind = GeneratorKind::kRandomTree;
    spec.tables = 5;
    spec.t_rows = 200;
    spec.attributes = 2;
    auto db = std::make_shared<const Database>(gen_synthetic(spec, seed));
    TreeConfig config;
    const auto score = make_data_score_fn(db, config);
    const auto leaf = [&](uint32_t t) { return leaf_cost(LeafKind::kSpn, db->catalog.tables[t].attributes.size()); };
    const auto all = db->catalog.all_tables();
    const auto dp = optimal_shape(db->catalog, all, config.cost, leaf, score);
    EXPECT_EQ(dp.cost(), testing::exhaustive_min_cost(db->catalog, all, config.cost, leaf, score)) << seed;
  }
}

class FixtureATreeTest : public ::testing::Test {
 protected:
  void SetUp() override {
    _db = std::make_shared<const Database>(fixture_a());
    _tree = build_tree(_db, 0b11, singleton_exact());
  }

  std::shared_ptr<const Database> _db;
  DecompositionTree _tree;
};

TEST_F(FixtureATreeTest, RootStatistics) {
  const auto& root = _tree.node(_tree.root);
  ASSERT_FALSE(root.is_leaf());
  EXPECT_EQ(_tree.node(root.left).table, 0);
  EXPECT_EQ(_tree.node(root.right).table, 1);
  EXPECT_EQ(root.w_rows, 6.0);
  EXPECT_EQ(root.t_rows, 4.0);
  EXPECT_EQ(root.s_rows, 4.0);
  EXPECT_EQ(root.t_dangling, 2.0);
  EXPECT_EQ(root.s_dangling, 1.0);
  EXPECT_EQ(root.t_part.size(), 4u);
  EXPECT_EQ(root.s_part.size(), 3u);
  for (double e : root.e_t) EXPECT_GE(e, 1.0);
  for (double e : root.e_s) EXPECT_EQ(e, 1.0);
  EXPECT_NO_THROW(_tree.check());
}

TEST_F(FixtureATreeTest, RestrictedMatrix) {
  const auto& root = _tree.node(_tree.root);
  const auto t_row = [](double pk, double a) {
    return [=](AttrRef ref) { return ref.attr == 0 ? pk : a; };
  };
  const auto k1 = part_of(root.t_part, t_row(1, 10));
  const auto k3 = part_of(root.t_part, t_row(3, 20));
  const auto context = part_of(root.contexts, [](AttrRef ref) { return ref.attr == 0 ? 1.0 : 100.0; });
  double m = 0.0;
  for (const auto& [i, v] : root.m[k1]) {
    if (i == context) m = v;
  }
  EXPECT_EQ(m, 2.0);
  EXPECT_EQ(root.e_t[k1], 2.0);
  EXPECT_TRUE(root.m[k3].empty());
  EXPECT_EQ(root.t_null[k3], 1.0);
}

TEST_F(FixtureATreeTest, SerializationRoundTrip) {
  const auto bytes = serialize_tree(_tree);
  EXPECT_EQ(bytes, serialize_tree(build_tree(_db, 0b11, singleton_exact())));
  const auto copy = deserialize_tree(bytes);
  EXPECT_EQ(serialize_tree(copy), bytes);
  for (const auto& q : gen_workload(*_db, 100, 3)) {
    const auto a = estimate(_tree, q, EstimationMode::kContext);
    const auto b = estimate(copy, q, EstimationMode::kContext);
    EXPECT_EQ(std::bit_cast<uint64_t>(a.cardinality), std::bit_cast<uint64_t>(b.cardinality));
  }
}

TEST_F(FixtureATreeTest, SerializationErrors) {
  auto bytes = serialize_tree(_tree);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 10);
  EXPECT_THROW(
      {
        try {
          deserialize_tree(truncated);
        } catch (const Error& e) {
          EXPECT_STREQ(e.what(), "checksum failure");
          throw;
        }
      },
      Error);
  auto flipped = bytes;
  flipped.back() ^= 0x5a;
  EXPECT_THROW(deserialize_tree(flipped), Error);
  auto versioned = bytes;
  versioned[8] += 1;
  try {
    deserialize_tree(versioned);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("version mismatch", 0), 0u);
  }
  EXPECT_THROW(deserialize_tree(std::vector<uint8_t>{'n', 'o', 'p', 'e'}), Error);
}

TEST_F(FixtureATreeTest, CoverPicksLowestNode) {
  const auto& root = _tree.node(_tree.root);
  EXPECT_EQ(_tree.cover(0b01), static_cast<uint32_t>(root.left));
  EXPECT_EQ(_tree.cover(0b11), _tree.root);
}

TEST(ConfigTest, JsonRoundTripAndChecks) {
  TreeConfig config;
  config.mode = EstimationMode::kIndependent;
  config.leaf_overrides["T"] = LeafKind::kSample;
  config.tau = 0.4;
  const auto copy = config_from_json(config_to_json(config));
  EXPECT_EQ(config_to_json(copy), config_to_json(config));
  EXPECT_EQ(copy.leaf_kind_for("T"), LeafKind::kSample);
  EXPECT_EQ(copy.leaf_kind_for("S"), LeafKind::kSpn);
  config.tau = 0.0;
  EXPECT_THROW(config.check(), Error);
  EXPECT_THROW(estimation_mode_from_string("both"), Error);
}

class WidthTest : public ::testing::TestWithParam<PartitionMode> {};

TEST_P(WidthTest, StoredJoinSizesMatchOracle) {
  SyntheticSpec spec;
  spec.kind = GeneratorKind::kChain;
  spec.tables = 4;
  spec.t_rows = 120;
  auto db = std::make_shared<const Database>(gen_synthetic(spec, 4));
  TreeConfig config;
  config.partitions = GetParam();
  config.default_leaf = LeafKind::kHistogram;
  const auto tree = build_tree(db, db->catalog.all_tables(), config);
  for (const auto& node : tree.nodes) {
    Query all{node.tables, {}, false};
    EXPECT_EQ(node.rows(), static_cast<double>(exec_exact(*db, all)));
  }
}

INSTANTIATE_TEST_SUITE_P(Partitions, WidthTest, ::testing::Values(PartitionMode::kAdaptive, PartitionMode::kSingleton),
                         [](const auto& info) { return std::string(to_string(info.param)); });

class UpdateTest : public ::testing::Test {
 protected:
  void SetUp() override {
    SyntheticSpec spec;
    spec.kind = GeneratorKind::kIndependent;
    spec.t_rows = 500;
    spec.s_rows = 1000;
    spec.attributes = 2;
    _db = std::make_shared<const Database>(gen_synthetic(spec, 1));
    TreeConfig config;
    config.default_leaf = LeafKind::kHistogram;
    _tree = build_tree(_db, _db->catalog.all_tables(), config);
  }

  // S.b0 copies the partner's T.a0.
  std::shared_ptr<const Database> correlated_copy() const {
    auto fresh = std::make_shared<Database>(*_db);
    auto& s = fresh->tables[1];
    for (size_t r = 0; r < s.row_count(); ++r) {
      s.columns[1][r] = fresh->tables[0].columns[1][static_cast<size_t>(s.columns[0][r]) - 1];
    }
    return fresh;
  }

  std::shared_ptr<const Database> _db;
  DecompositionTree _tree;
};

TEST_F(UpdateTest, UnchangedDataIsFresh) {
  EXPECT_TRUE(check_update(_tree, *_db, 0.3).empty());
}

TEST_F(UpdateTest, CorrelatedReplacementMarksContextsStale) {
  const auto fresh = correlated_copy();
  const auto stale = check_update(_tree, *fresh, 0.3);
  const auto& root = _tree.node(_tree.root);
  size_t contexts = 0;
  for (const auto& s : stale) {
    if (s.partition == "contexts") {
      ++contexts;
      EXPECT_GT(s.fresh_score, 0.3);
    }
  }
  EXPECT_EQ(contexts, root.contexts.size());
  EXPECT_TRUE(check_update(_tree, *fresh, 1.0).empty());
  EXPECT_FALSE(stale_to_json(stale).empty());
}

TEST_F(UpdateTest, ApplyRefreshesStatistics) {
  const auto fresh = correlated_copy();
  const auto updated = apply_update(_tree, fresh, 0.3);
  EXPECT_NO_THROW(updated.check());
  EXPECT_GT(updated.node(updated.root).contexts.size(), _tree.node(_tree.root).contexts.size());
  EXPECT_EQ(updated.node(updated.root).w_rows,
            static_cast<double>(exec_exact(*fresh, Query{fresh->catalog.all_tables(), {}, false})));
}

}  // namespace glue
