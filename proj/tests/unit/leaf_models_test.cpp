#include <memory>
#include <random>
#include <set>

#include "gtest/gtest.h"

#include "glue/error.hpp"
#include "glue/leaf_models.hpp"
#include "glue/oracle.hpp"

namespace glue {

namespace {

constexpr auto kNum = ConstraintKind::kNumeric;

// Single integer-attribute table with the given columns.
std::shared_ptr<TableData> make_table(std::vector<std::vector<double>> columns) {
  auto data = std::make_shared<TableData>();
  data->meta.name = "R";
  for (size_t a = 0; a < columns.size(); ++a) {
    AttributeMeta attr;
    attr.name = "c" + std::to_string(a);
    attr.kind = AttributeKind::kInteger;
    attr.min = 0;
    attr.max = 1e6;
    data->meta.attributes.push_back(attr);
  }
  data->columns = std::move(columns);
  data->meta.row_count = data->row_count();
  return data;
}

RegularRegion range(uint32_t attr, double lo, double hi) {
  RegularRegion r;
  r.constrain({0, attr}, AttrConstraint::range(kNum, lo, hi));
  return r;
}

double exact_distinct(const TableData& data, const RegularRegion& r, uint32_t attr) {
  std::set<double> seen;
  for (size_t i = 0; i < data.row_count(); ++i) {
    if (r.contains([&](AttrRef ref) { return data.columns[ref.attr][i]; })) seen.insert(data.columns[attr][i]);
  }
  return static_cast<double>(seen.size());
}

}  // namespace

class FixtureALeafTest : public ::testing::Test {
 protected:
  void SetUp() override {
    _db = std::make_shared<Database>(fixture_a());
    _t = std::shared_ptr<const TableData>(_db, &_db->tables[0]);
    _s = std::shared_ptr<const TableData>(_db, &_db->tables[1]);
  }

  std::shared_ptr<Database> _db;
  std::shared_ptr<const TableData> _t, _s;
};

TEST_F(FixtureALeafTest, ExactModelCounts) {
  const auto model = build_leaf(_t, LeafKind::kExact, {}, 1);
  EXPECT_EQ(model->kind(), LeafKind::kExact);
  EXPECT_EQ(model->row_count(), 4u);
  RegularRegion a10;
  a10.constrain({0, 1}, AttrConstraint::points(kNum, {10}));
  EXPECT_DOUBLE_EQ(model->prob(a10), 0.5);
  EXPECT_DOUBLE_EQ(model->prob(RegularRegion::full()), 1.0);
}

TEST_F(FixtureALeafTest, ExactModelDistinct) {
  const auto model = build_leaf(_s, LeafKind::kExact, {}, 1);
  RegularRegion b100;
  b100.constrain({1, 1}, AttrConstraint::points(kNum, {100}));
  EXPECT_DOUBLE_EQ(model->distinct(b100), 1.0);
  EXPECT_THROW(model->distinct(RegularRegion::full()), Error);
}

TEST_F(FixtureALeafTest, ScopeViolation) {
  const auto model = build_leaf(_t, LeafKind::kHistogram, {}, 1);
  RegularRegion other;
  other.constrain({1, 1}, AttrConstraint::points(kNum, {100}));
  EXPECT_THROW(model->prob(other), Error);
}

TEST_F(FixtureALeafTest, EveryKindIsNormalizedAndRoundTrips) {
  for (auto kind : {LeafKind::kExact, LeafKind::kHistogram, LeafKind::kSample, LeafKind::kSpn}) {
    const auto model = build_leaf(_t, kind, {}, 3);
    EXPECT_DOUBLE_EQ(model->prob(RegularRegion::full()), 1.0) << to_string(kind);
    RegularRegion empty;
    empty.constrain({0, 1}, AttrConstraint::empty(kNum));
    EXPECT_EQ(model->prob(empty), 0.0);

    const auto copy = leaf_from_json(model->to_json(), _db);
    EXPECT_EQ(copy->kind(), kind);
    const auto r = range(1, 5, 15);
    EXPECT_EQ(copy->prob(r), model->prob(r)) << to_string(kind);
    EXPECT_EQ(copy->to_json(), model->to_json());
  }
}

TEST(LeafParamsTest, Validation) {
  LeafParams p;
  EXPECT_NO_THROW(p.check());
  p.histogram_buckets = 0;
  EXPECT_THROW(p.check(), Error);
  p = {};
  p.tau_ind = 1.5;
  EXPECT_THROW(p.check(), Error);
  p = {};
  p.sample_size = 0;
  EXPECT_THROW(p.check(), Error);
  EXPECT_THROW(leaf_kind_from_string("bayes"), Error);
}

TEST(HistogramTest, EquiDepthFractionsSumToOne) {
  std::vector<double> values;
  for (int i = 0; i < 1000; ++i) values.push_back(i % 250);
  const auto h = Histogram1D::build(values, AttributeKind::kInteger, 10);
  double total = 0.0;
  for (const auto& b : h.buckets()) {
    total += b.fraction;
    if (b.fraction > 0) EXPECT_GE(b.distinct, 1.0);
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_LE(h.buckets().size(), 10u);
  EXPECT_NEAR(h.coverage(AttrConstraint::range(kNum, 0, 124)), 0.5, 0.02);
  EXPECT_DOUBLE_EQ(h.coverage(AttrConstraint::full(kNum)), 1.0);
  EXPECT_EQ(h.total_distinct(), 250.0);
}

TEST(HistogramTest, FewValuesAreExact) {
  const auto h = Histogram1D::build({1, 1, 2, 3, 3, 3}, AttributeKind::kInteger, 32);
  EXPECT_EQ(h.buckets().size(), 3u);
  EXPECT_DOUBLE_EQ(h.coverage(AttrConstraint::points(kNum, {3})), 0.5);
  EXPECT_DOUBLE_EQ(h.distinct(AttrConstraint::range(kNum, 2, 3)), 2.0);
  EXPECT_EQ(Histogram1D::from_json(h.to_json()).buckets(), h.buckets());
}

TEST(HistogramModelTest, AttributeValueIndependence) {
  const auto data = make_table({{0, 0, 1, 1}, {0, 1, 0, 1}});
  const auto model = HistogramModel::build(*data, 8);
  auto r = range(0, 0, 0);
  r.constrain({0, 1}, AttrConstraint::points(kNum, {1}));
  EXPECT_DOUBLE_EQ(model->prob(r), 0.25);
  EXPECT_DOUBLE_EQ(model->distinct(r), 1.0);
}

TEST(SampleModelTest, SampleRowsComeFromTable) {
  std::vector<double> c;
  for (int i = 0; i < 500; ++i) c.push_back(i);
  const auto data = make_table({c});
  const auto model = SampleModel::build(*data, 50, 9);
  EXPECT_EQ(model->sample_size(), 50u);
  for (double v : model->columns()[0]) EXPECT_TRUE(v >= 0 && v < 500 && v == std::floor(v));
  EXPECT_NEAR(model->prob(range(0, 0, 249)), 0.5, 0.2);
  const auto full = SampleModel::build(*data, 1000, 9);
  EXPECT_DOUBLE_EQ(full->prob(range(0, 0, 249)), 0.5);
  EXPECT_DOUBLE_EQ(full->distinct(range(0, 0, 249)), 250.0);
}

class SpnTest : public ::testing::Test {
 protected:
  static std::shared_ptr<TableData> independent_table(size_t n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> x(0, 2), y(0, 3);
    std::vector<double> a, b;
    for (size_t i = 0; i < n; ++i) {
      a.push_back(x(rng));
      b.push_back(y(rng));
    }
    return make_table({a, b});
  }

  static std::shared_ptr<TableData> diagonal_table() {
    std::vector<double> x;
    for (int i = 0; i < 1000; ++i) x.push_back(i % 50);
    return make_table({x, x});
  }
};

TEST_F(SpnTest, IndependentColumnsGiveProductRoot) {
  const auto model = SpnModel::build(*independent_table(1000, 1), {}, 1);
  EXPECT_EQ(model->root().type, SpnNode::Type::kProduct);
}

TEST_F(SpnTest, DiagonalGivesSumRoot) {
  const auto model = SpnModel::build(*diagonal_table(), {}, 1);
  EXPECT_EQ(model->root().type, SpnNode::Type::kSum);
  for (const auto& node : model->nodes()) {
    if (node.type != SpnNode::Type::kSum) continue;
    double total = 0.0;
    for (double w : node.weights) {
      EXPECT_GT(w, 0.0);
      total += w;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
    EXPECT_TRUE(node.split[0].intersect(node.split[1]).is_empty());
    EXPECT_TRUE(node.split[0].complement() == node.split[1]);
  }
}

TEST_F(SpnTest, ProductDistinctMultiplies) {
  const auto model = SpnModel::build(*independent_table(1000, 2), {}, 1);
  const std::vector<AttrRef> both{{0, 0}, {0, 1}};
  EXPECT_DOUBLE_EQ(model->distinct(RegularRegion::full(), both), 12.0);
}

TEST_F(SpnTest, SumDistinctAdds) {
  SpnNode low, high, sum;
  low.attrs = high.attrs = sum.attrs = {0};
  low.histogram = Histogram1D::build({0, 1, 1}, AttributeKind::kInteger, 32);
  high.histogram = Histogram1D::build({10, 11, 12, 13, 14}, AttributeKind::kInteger, 32);
  sum.type = SpnNode::Type::kSum;
  sum.children = {0, 1};
  sum.weights = {0.375, 0.625};
  sum.split = {AttrConstraint::below(kNum, 5), AttrConstraint::at_least(kNum, 5)};
  const SpnModel model(0, 8, {AttributeKind::kInteger}, {low, high, sum}, 2);
  const std::vector<AttrRef> x{{0, 0}};
  EXPECT_DOUBLE_EQ(model.distinct(RegularRegion::full(), x), 7.0);
  EXPECT_DOUBLE_EQ(model.prob(range(0, 0, 1)), 0.375);

  sum.weights = {0.5, 0.6};
  EXPECT_THROW(SpnModel(0, 8, {AttributeKind::kInteger}, {low, high, sum}, 2), Error);
}

TEST_F(SpnTest, SingleAttributeDistinctIsExact) {
  const auto data = diagonal_table();
  const auto model = SpnModel::build(*data, {}, 5);
  for (auto [lo, hi] : std::vector<std::pair<double, double>>{{0, 49}, {10, 30}, {7, 7}, {45, 60}}) {
    const auto r = range(0, lo, hi);
    EXPECT_DOUBLE_EQ(model->distinct(r), exact_distinct(*data, r, 0)) << lo << ".." << hi;
  }
}

TEST_F(SpnTest, CloseToExactOnIndependentBlocks) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> v(0, 39), noise(0, 3);
  std::vector<double> x, y, z;
  for (int i = 0; i < 10000; ++i) {
    x.push_back(v(rng));
    y.push_back(x.back() + noise(rng));
    z.push_back(v(rng));
  }
  const auto data = make_table({x, y, z});
  const auto spn = SpnModel::build(*data, {}, 1);
  const ExactModel exact(data);
  std::uniform_int_distribution<int> bound(0, 43);
  for (int q = 0; q < 50; ++q) {
    RegularRegion r;
    for (uint32_t a = 0; a < 3; ++a) {
      int lo = bound(rng), hi = bound(rng);
      if (lo > hi) std::swap(lo, hi);
      r.constrain({0, a}, AttrConstraint::range(kNum, lo, hi));
    }
    EXPECT_NEAR(spn->prob(r), exact.prob(r), 0.05);
  }
}

TEST_F(SpnTest, ProbIsAdditiveAcrossPartitions) {
  const auto data = diagonal_table();
  const auto spn = SpnModel::build(*data, {}, 2);
  const ExactModel exact(data);
  const auto q = range(1, 5, 40);
  for (const LeafEstimator* model : {static_cast<const LeafEstimator*>(spn.get()), static_cast<const LeafEstimator*>(&exact)}) {
    double total = 0.0;
    for (double cut : {-1e9, 13.0, 27.0}) {
      RegularRegion part;
      part.constrain({0, 0}, cut < 0 ? AttrConstraint::below(kNum, 13) : AttrConstraint::at_least(kNum, cut));
      if (cut == 13.0) part.constrain({0, 0}, AttrConstraint::below(kNum, 27));
      total += model->prob(q.intersect(part));
    }
    EXPECT_NEAR(total, model->prob(q), 1e-9);
  }
}

TEST_F(SpnTest, EmptyTableIsZeroModel) {
  const auto data = make_table({{}, {}});
  for (auto kind : {LeafKind::kSample, LeafKind::kSpn}) {
    const auto model = build_leaf(data, kind, {}, 1);
    EXPECT_EQ(model->prob(range(0, 0, 10)), 0.0);
    EXPECT_EQ(model->prob(RegularRegion::full()), 1.0);
  }
}

}  // namespace glue
