#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace glue {

using TableMask = uint64_t;

// Null-extended cells produced by outer joins. Query predicates never contain
// it; partition regions may (their outermost interval is open to -inf).
inline constexpr double kNull = -std::numeric_limits<double>::infinity();

inline bool is_null(double v) { return v == kNull; }

enum class AttributeKind { kInteger, kReal, kCategorical };

std::string_view to_string(AttributeKind kind);
AttributeKind attribute_kind_from_string(std::string_view text);

struct AttributeMeta {
  std::string name;
  AttributeKind kind = AttributeKind::kInteger;
  double min = 0.0;
  double max = 0.0;
  // Ordered value dictionary; a value's code is its position.
  std::vector<std::string> dictionary;

  bool is_numeric() const { return kind != AttributeKind::kCategorical; }
  std::optional<double> code_of(std::string_view value) const;
};

struct TableMeta {
  std::string name;
  std::vector<AttributeMeta> attributes;
  uint64_t row_count = 0;

  std::optional<uint32_t> attribute_index(std::string_view name) const;
};

// (table, attribute) by catalog position.
struct AttrRef {
  uint32_t table = 0;
  uint32_t attr = 0;

  friend bool operator==(const AttrRef&, const AttrRef&) = default;
  friend auto operator<=>(const AttrRef&, const AttrRef&) = default;
};

enum class JoinKind { kPkFk, kFkFk };

struct JoinEdge {
  AttrRef left;
  AttrRef right;
  JoinKind kind = JoinKind::kPkFk;

  // The endpoint on `table`, or the other one when `table` is not an endpoint.
  AttrRef side(uint32_t table) const { return left.table == table ? left : right; }
  AttrRef other_side(uint32_t table) const { return left.table == table ? right : left; }
};

class Catalog {
 public:
  std::vector<TableMeta> tables;
  std::vector<JoinEdge> edges;

  uint32_t table_count() const { return static_cast<uint32_t>(tables.size()); }
  TableMask all_tables() const;

  std::optional<uint32_t> table_index(std::string_view name) const;
  uint32_t require_table(std::string_view name) const;
  // Resolves "Table.attr".
  AttrRef resolve(std::string_view qualified) const;
  const AttributeMeta& attribute(AttrRef ref) const { return tables[ref.table].attributes[ref.attr]; }
  std::string qualified_name(AttrRef ref) const;

  std::vector<AttrRef> attributes_of(TableMask mask) const;
  TableMask neighbours(TableMask mask) const;
  bool is_connected(TableMask mask) const;
  // Edges with one endpoint in `a` and the other in `b`.
  std::vector<uint32_t> edges_between(TableMask a, TableMask b) const;
  bool is_join_key(AttrRef ref) const;

  // Throws on dangling references, kind mismatches, cycles or a disconnected graph.
  void check() const;
};

struct TableData {
  TableMeta meta;
  uint32_t table = 0;
  // Column-major; numeric values or dictionary codes.
  std::vector<std::vector<double>> columns;

  uint64_t row_count() const { return columns.empty() ? 0 : columns.front().size(); }
};

struct Database {
  Catalog catalog;
  std::vector<TableData> tables;  // indexed like catalog.tables

  const TableData& table(uint32_t index) const { return tables.at(index); }
  double value(AttrRef ref, uint64_t row) const { return tables[ref.table].columns[ref.attr][row]; }
};

Catalog load_schema(std::string_view schema_doc);
Catalog load_schema(const nlohmann::json& doc);
inline Catalog load_schema(const std::string& schema_doc) { return load_schema(std::string_view(schema_doc)); }
inline Catalog load_schema(const char* schema_doc) { return load_schema(std::string_view(schema_doc)); }
nlohmann::json schema_to_json(const Catalog& catalog);

// Records the row count in `catalog` and appends unseen categorical values to
// the attribute dictionaries in first-seen order.
TableData ingest_table(Catalog& catalog, std::string_view table, std::istream& csv);
void write_csv(const Catalog& catalog, const TableData& data, std::ostream& out);

struct EdgeMatchReport {
  uint32_t edge = 0;
  uint64_t dangling_left = 0;
  uint64_t dangling_right = 0;
  uint64_t duplicate_pk = 0;  // pk_fk only: left rows sharing a key value
};

struct ValidationReport {
  std::vector<EdgeMatchReport> edges;
};

// Per-edge match statistics for every edge whose endpoints lie in `subset`.
ValidationReport validate(const Database& db, TableMask subset);
ValidationReport validate(const Database& db);
nlohmann::json report_to_json(const Catalog& catalog, const ValidationReport& report);

// Whole-database persistence (schema with dictionaries plus columns).
nlohmann::json database_to_json(const Database& db);
Database database_from_json(const nlohmann::json& doc);
Database load_database_dir(const std::string& schema_path, const std::string& data_dir);

}  // namespace glue
