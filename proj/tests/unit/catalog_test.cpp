#include <sstream>

#include "gtest/gtest.h"

#include "glue/catalog.hpp"
#include "glue/error.hpp"
#include "glue/oracle.hpp"

namespace glue {

namespace {

constexpr const char* kTwoTables = R"({
  "tables": [
    {"name": "T", "columns": [{"name": "pk", "kind": "integer", "min": 1, "max": 10},
                              {"name": "a", "kind": "integer", "min": 0, "max": 100}]},
    {"name": "S", "columns": [{"name": "fk", "kind": "integer", "min": 1, "max": 10},
                              {"name": "b", "kind": "categorical"}]}
  ],
  "joins": [{"left": "T.pk", "right": "S.fk", "kind": "pk_fk"}]
})";

std::string replace(std::string text, const std::string& from, const std::string& to) {
  text.replace(text.find(from), from.size(), to);
  return text;
}

}  // namespace

class CatalogTest : public ::testing::Test {
 protected:
  void SetUp() override { _catalog = load_schema(kTwoTables); }

  Catalog _catalog;
};

TEST_F(CatalogTest, LoadsMinimalSchema) {
  EXPECT_EQ(_catalog.table_count(), 2u);
  EXPECT_EQ(_catalog.edges.size(), 1u);
  EXPECT_EQ(_catalog.resolve("S.b"), (AttrRef{1, 1}));
  EXPECT_EQ(_catalog.qualified_name({0, 1}), "T.a");
  EXPECT_TRUE(_catalog.is_join_key({0, 0}));
  EXPECT_FALSE(_catalog.is_join_key({0, 1}));
  EXPECT_TRUE(_catalog.is_connected(0b11));
}

TEST_F(CatalogTest, RejectsDanglingEdge) {
  const auto doc = replace(kTwoTables, R"("left": "T.pk")", R"("left": "T.zz")");
  EXPECT_THROW(
      {
        try {
          load_schema(doc);
        } catch (const Error& e) {
          EXPECT_STREQ(e.what(), "dangling edge reference");
          throw;
        }
      },
      Error);
}

TEST_F(CatalogTest, RejectsBadDocuments) {
  EXPECT_THROW(load_schema("{"), Error);
  EXPECT_THROW(load_schema(R"({"tables": 3})"), Error);
  EXPECT_THROW(load_schema(replace(kTwoTables, R"("kind": "categorical")", R"("kind": "blob")")), Error);
  // Drop the only edge: two isolated tables.
  EXPECT_THROW(load_schema(replace(kTwoTables, R"({"left": "T.pk", "right": "S.fk", "kind": "pk_fk"})", "")), Error);
}

TEST_F(CatalogTest, AcceptsChainRejectsCycle) {
  const std::string chain = R"({
    "tables": [
      {"name": "T", "columns": [{"name": "x", "kind": "integer", "min": 0, "max": 9}]},
      {"name": "S", "columns": [{"name": "x", "kind": "integer", "min": 0, "max": 9},
                                {"name": "y", "kind": "integer", "min": 0, "max": 9}]},
      {"name": "U", "columns": [{"name": "y", "kind": "integer", "min": 0, "max": 9}]}
    ],
    "joins": [{"left": "T.x", "right": "S.x", "kind": "fk_fk"}, {"left": "S.y", "right": "U.y"}]
  })";
  const auto cat = load_schema(chain);
  EXPECT_EQ(cat.table_count(), 3u);
  EXPECT_FALSE(cat.is_connected(0b101));
  EXPECT_EQ(cat.neighbours(0b001), 0b010u);

  const auto cyclic = replace(chain, R"({"left": "S.y", "right": "U.y"})",
                              R"({"left": "S.y", "right": "U.y"}, {"left": "T.x", "right": "U.y"})");
  EXPECT_THROW(load_schema(cyclic), Error);
}

TEST_F(CatalogTest, IngestsCsvWithDictionary) {
  std::istringstream t("pk,a\n1,10\n2,10\n");
  std::istringstream s("fk,b\n1,red\n2,blue\n2,red\n");
  const auto t_data = ingest_table(_catalog, "T", t);
  const auto s_data = ingest_table(_catalog, "S", s);
  EXPECT_EQ(t_data.row_count(), 2u);
  EXPECT_EQ(_catalog.tables[1].row_count, 3u);
  EXPECT_EQ(_catalog.tables[1].attributes[1].dictionary, (std::vector<std::string>{"red", "blue"}));
  EXPECT_EQ(s_data.columns[1], (std::vector<double>{0, 1, 0}));
}

TEST_F(CatalogTest, IngestErrors) {
  std::istringstream text("pk,a\n1,abc\n");
  EXPECT_THROW(ingest_table(_catalog, "T", text), Error);
  std::istringstream header("pk,zz\n1,1\n");
  EXPECT_THROW(ingest_table(_catalog, "T", header), Error);
  std::istringstream width("pk,a\n1,1,1\n");
  EXPECT_THROW(ingest_table(_catalog, "T", width), Error);
  std::istringstream domain("pk,a\n1,500\n");
  EXPECT_THROW(ingest_table(_catalog, "T", domain), Error);
}

TEST_F(CatalogTest, EmptyBodyGivesZeroRows) {
  std::istringstream csv("pk,a\n");
  EXPECT_EQ(ingest_table(_catalog, "T", csv).row_count(), 0u);
}

TEST_F(CatalogTest, CsvRoundTrip) {
  std::istringstream s("fk,b\n1,red\n2,blue\n2,red\n");
  const auto data = ingest_table(_catalog, "S", s);
  std::ostringstream out;
  write_csv(_catalog, data, out);
  std::istringstream again(out.str());
  auto copy = _catalog;
  EXPECT_EQ(ingest_table(copy, "S", again).columns, data.columns);
}

TEST(ValidateTest, FixtureADanglingForeignKey) {
  const auto db = fixture_a();
  const auto report = validate(db);
  ASSERT_EQ(report.edges.size(), 1u);
  EXPECT_EQ(report.edges[0].dangling_right, 1u);  // fk = 5
  EXPECT_EQ(report.edges[0].dangling_left, 2u);   // pk = 3, 4
  EXPECT_EQ(report.edges[0].duplicate_pk, 0u);
  EXPECT_TRUE(validate(db, 0b01).edges.empty());
}

TEST(ValidateTest, IdenticalKeysHaveNoDangling) {
  auto db = fixture_a();
  db.tables[1].columns[0] = {1, 2, 3, 4};
  const auto report = validate(db);
  EXPECT_EQ(report.edges[0].dangling_left, 0u);
  EXPECT_EQ(report.edges[0].dangling_right, 0u);
}

TEST(DatabaseTest, JsonRoundTrip) {
  const auto db = fixture_a();
  const auto copy = database_from_json(database_to_json(db));
  ASSERT_EQ(copy.tables.size(), 2u);
  EXPECT_EQ(copy.tables[1].columns, db.tables[1].columns);
  EXPECT_EQ(schema_to_json(copy.catalog), schema_to_json(db.catalog));
}

}  // namespace glue
