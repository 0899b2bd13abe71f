#include "glue/catalog.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "glue/error.hpp"

namespace glue {

using nlohmann::json;

std::string_view to_string(AttributeKind kind) {
  switch (kind) {
    case AttributeKind::kInteger:
      return "integer";
    case AttributeKind::kReal:
      return "real";
    case AttributeKind::kCategorical:
      return "categorical";
  }
  return "?";
}

AttributeKind attribute_kind_from_string(std::string_view text) {
  if (text == "integer") return AttributeKind::kInteger;
  if (text == "real") return AttributeKind::kReal;
  if (text == "categorical") return AttributeKind::kCategorical;
  throw Error("unknown attribute kind '" + std::string(text) + "'");
}

std::optional<double> AttributeMeta::code_of(std::string_view value) const {
  for (size_t i = 0; i < dictionary.size(); ++i) {
    if (dictionary[i] == value) return static_cast<double>(i);
  }
  return std::nullopt;
}

std::optional<uint32_t> TableMeta::attribute_index(std::string_view attr_name) const {
  for (uint32_t i = 0; i < attributes.size(); ++i) {
    if (attributes[i].name == attr_name) return i;
  }
  return std::nullopt;
}

TableMask Catalog::all_tables() const {
  return tables.size() >= 64 ? ~TableMask{0} : ((TableMask{1} << tables.size()) - 1);
}

std::optional<uint32_t> Catalog::table_index(std::string_view name) const {
  for (uint32_t i = 0; i < tables.size(); ++i) {
    if (tables[i].name == name) return i;
  }
  return std::nullopt;
}

uint32_t Catalog::require_table(std::string_view name) const {
  auto index = table_index(name);
  if (!index) throw Error("unknown table '" + std::string(name) + "'");
  return *index;
}

AttrRef Catalog::resolve(std::string_view qualified) const {
  const auto dot = qualified.find('.');
  if (dot == std::string_view::npos) throw Error("expected Table.attribute, got '" + std::string(qualified) + "'");
  const auto table = table_index(qualified.substr(0, dot));
  if (!table) throw Error("unknown table in '" + std::string(qualified) + "'");
  const auto attr = tables[*table].attribute_index(qualified.substr(dot + 1));
  if (!attr) throw Error("unknown attribute '" + std::string(qualified) + "'");
  return {*table, *attr};
}

std::string Catalog::qualified_name(AttrRef ref) const {
  return tables[ref.table].name + "." + tables[ref.table].attributes[ref.attr].name;
}

std::vector<AttrRef> Catalog::attributes_of(TableMask mask) const {
  std::vector<AttrRef> out;
  for (uint32_t t = 0; t < tables.size(); ++t) {
    if (!(mask >> t & 1)) continue;
    for (uint32_t a = 0; a < tables[t].attributes.size(); ++a) out.push_back({t, a});
  }
  return out;
}

TableMask Catalog::neighbours(TableMask mask) const {
  TableMask out = 0;
  for (const auto& edge : edges) {
    const bool l = mask >> edge.left.table & 1;
    const bool r = mask >> edge.right.table & 1;
    if (l && !r) out |= TableMask{1} << edge.right.table;
    if (r && !l) out |= TableMask{1} << edge.left.table;
  }
  return out;
}

bool Catalog::is_connected(TableMask mask) const {
  if (mask == 0) return false;
  TableMask reached = mask & (~mask + 1);
  while (true) {
    const TableMask next = (reached | neighbours(reached)) & mask;
    if (next == reached) break;
    reached = next;
  }
  return reached == mask;
}

std::vector<uint32_t> Catalog::edges_between(TableMask a, TableMask b) const {
  std::vector<uint32_t> out;
  for (uint32_t e = 0; e < edges.size(); ++e) {
    const auto& edge = edges[e];
    const bool la = a >> edge.left.table & 1, lb = b >> edge.left.table & 1;
    const bool ra = a >> edge.right.table & 1, rb = b >> edge.right.table & 1;
    if ((la && rb) || (lb && ra)) out.push_back(e);
  }
  return out;
}

bool Catalog::is_join_key(AttrRef ref) const {
  return std::any_of(edges.begin(), edges.end(),
                     [&](const JoinEdge& e) { return e.left == ref || e.right == ref; });
}

void Catalog::check() const {
  if (tables.empty()) throw Error("schema declares no tables");
  if (tables.size() > 63) throw Error("at most 63 tables are supported");
  std::set<std::string> table_names;
  for (const auto& table : tables) {
    if (!table_names.insert(table.name).second) throw Error("duplicate table '" + table.name + "'");
    std::set<std::string> names;
    for (const auto& attr : table.attributes) {
      if (!names.insert(attr.name).second) {
        throw Error("duplicate attribute '" + attr.name + "' in table '" + table.name + "'");
      }
      if (attr.is_numeric() && !(attr.min <= attr.max)) {
        throw Error("attribute '" + table.name + "." + attr.name + "' has min > max");
      }
      std::set<std::string> values(attr.dictionary.begin(), attr.dictionary.end());
      if (values.size() != attr.dictionary.size()) {
        throw Error("duplicate dictionary value in '" + table.name + "." + attr.name + "'");
      }
    }
  }
  // Union-find over tables: a repeated component merge means a cycle.
  std::vector<uint32_t> parent(tables.size());
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& edge : edges) {
    if (edge.left.table >= tables.size() || edge.right.table >= tables.size() ||
        edge.left.attr >= tables[edge.left.table].attributes.size() ||
        edge.right.attr >= tables[edge.right.table].attributes.size()) {
      throw Error("dangling edge reference");
    }
    if (attribute(edge.left).kind != attribute(edge.right).kind) {
      throw Error("join attributes " + qualified_name(edge.left) + " and " + qualified_name(edge.right) +
                  " have different kinds");
    }
    const auto a = find(edge.left.table), b = find(edge.right.table);
    if (a == b) throw Error("cyclic join graph (or self-join) is not supported");
    parent[a] = b;
  }
  if (!is_connected(all_tables())) throw Error("disconnected join graph");
}

namespace {

AttributeMeta attribute_from_json(const json& col) {
  if (!col.is_object() || !col.contains("name") || !col.contains("kind")) {
    throw Error("malformed document: column needs 'name' and 'kind'");
  }
  AttributeMeta meta;
  meta.name = col.at("name").get<std::string>();
  meta.kind = attribute_kind_from_string(col.at("kind").get<std::string>());
  if (meta.is_numeric()) {
    if (!col.contains("min") || !col.contains("max") || !col["min"].is_number() || !col["max"].is_number()) {
      throw Error("malformed document: numeric column '" + meta.name + "' needs numeric 'min' and 'max'");
    }
    meta.min = col["min"].get<double>();
    meta.max = col["max"].get<double>();
  } else if (col.contains("values")) {
    meta.dictionary = col["values"].get<std::vector<std::string>>();
  }
  return meta;
}

}  // namespace

Catalog load_schema(const json& doc) {
  Catalog catalog;
  try {
    if (!doc.is_object() || !doc.contains("tables") || !doc["tables"].is_array()) {
      throw Error("malformed document: expected an object with a 'tables' array");
    }
    for (const auto& t : doc["tables"]) {
      TableMeta table;
      table.name = t.at("name").get<std::string>();
      for (const auto& col : t.at("columns")) table.attributes.push_back(attribute_from_json(col));
      if (t.contains("row_count")) table.row_count = t["row_count"].get<uint64_t>();
      catalog.tables.push_back(std::move(table));
    }
    if (doc.contains("joins")) {
      for (const auto& j : doc["joins"]) {
        JoinEdge edge;
        try {
          edge.left = catalog.resolve(j.at("left").get<std::string>());
          edge.right = catalog.resolve(j.at("right").get<std::string>());
        } catch (const Error&) {
          throw Error("dangling edge reference");
        }
        const auto kind = j.value("kind", std::string("pk_fk"));
        if (kind == "pk_fk") {
          edge.kind = JoinKind::kPkFk;
        } else if (kind == "fk_fk") {
          edge.kind = JoinKind::kFkFk;
        } else {
          throw Error("unknown join kind '" + kind + "'");
        }
        catalog.edges.push_back(edge);
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed document: ") + e.what());
  }
  catalog.check();
  return catalog;
}

Catalog load_schema(std::string_view schema_doc) {
  json doc;
  try {
    doc = json::parse(schema_doc);
  } catch (const json::exception& e) {
    throw Error(std::string("malformed document: ") + e.what());
  }
  return load_schema(doc);
}

json schema_to_json(const Catalog& catalog) {
  json tables = json::array();
  for (const auto& table : catalog.tables) {
    json cols = json::array();
    for (const auto& attr : table.attributes) {
      json col = {{"name", attr.name}, {"kind", to_string(attr.kind)}};
      if (attr.is_numeric()) {
        col["min"] = attr.min;
        col["max"] = attr.max;
      } else {
        col["values"] = attr.dictionary;
      }
      cols.push_back(std::move(col));
    }
    tables.push_back({{"name", table.name}, {"columns", std::move(cols)}, {"row_count", table.row_count}});
  }
  json joins = json::array();
  for (const auto& edge : catalog.edges) {
    joins.push_back({{"left", catalog.qualified_name(edge.left)},
                     {"right", catalog.qualified_name(edge.right)},
                     {"kind", edge.kind == JoinKind::kPkFk ? "pk_fk" : "fk_fk"}});
  }
  return {{"tables", std::move(tables)}, {"joins", std::move(joins)}};
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

double parse_numeric(std::string_view cell, AttributeKind kind) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (kind == AttributeKind::kInteger) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || cell.empty()) throw Error("unparsable numeric cell '" + std::string(cell) + "'");
    return static_cast<double>(v);
  }
  double v = 0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || cell.empty() || !std::isfinite(v)) {
    throw Error("unparsable numeric cell '" + std::string(cell) + "'");
  }
  return v;
}

}  // namespace

TableData ingest_table(Catalog& catalog, std::string_view table_name, std::istream& csv) {
  const uint32_t t = catalog.require_table(table_name);
  TableMeta& meta = catalog.tables[t];
  std::string line;
  if (!std::getline(csv, line)) throw Error("header mismatch: empty CSV for table '" + meta.name + "'");
  const auto header = split_csv_line(line);
  bool header_ok = header.size() == meta.attributes.size();
  for (size_t i = 0; header_ok && i < header.size(); ++i) header_ok = header[i] == meta.attributes[i].name;
  if (!header_ok) throw Error("header mismatch for table '" + meta.name + "'");

  TableData data;
  data.table = t;
  data.columns.resize(meta.attributes.size());
  uint64_t line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != meta.attributes.size()) {
      throw Error("row width mismatch at line " + std::to_string(line_no) + " of table '" + meta.name + "'");
    }
    for (size_t i = 0; i < cells.size(); ++i) {
      auto& attr = meta.attributes[i];
      if (attr.is_numeric()) {
        const double v = parse_numeric(cells[i], attr.kind);
        if (v < attr.min || v > attr.max) {
          throw Error("value " + std::string(cells[i]) + " outside the declared domain of " + meta.name + "." +
                      attr.name);
        }
        data.columns[i].push_back(v);
      } else {
        auto code = attr.code_of(cells[i]);
        if (!code) {
          attr.dictionary.emplace_back(cells[i]);
          code = static_cast<double>(attr.dictionary.size() - 1);
        }
        data.columns[i].push_back(*code);
      }
    }
  }
  meta.row_count = data.columns.empty() ? 0 : data.columns.front().size();
  data.meta = meta;
  return data;
}

void write_csv(const Catalog& catalog, const TableData& data, std::ostream& out) {
  const auto& meta = catalog.tables[data.table];
  for (size_t i = 0; i < meta.attributes.size(); ++i) out << (i ? "," : "") << meta.attributes[i].name;
  out << "\n";
  char buffer[64];
  for (uint64_t r = 0; r < data.row_count(); ++r) {
    for (size_t i = 0; i < meta.attributes.size(); ++i) {
      if (i) out << ",";
      const auto& attr = meta.attributes[i];
      const double v = data.columns[i][r];
      if (attr.kind == AttributeKind::kCategorical) {
        out << attr.dictionary.at(static_cast<size_t>(v));
      } else if (attr.kind == AttributeKind::kInteger) {
        out << static_cast<long long>(v);
      } else {
        auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), v);
        out << std::string_view(buffer, ptr - buffer);
      }
    }
    out << "\n";
  }
}

ValidationReport validate(const Database& db, TableMask subset) {
  const auto& catalog = db.catalog;
  for (uint32_t t = 0; t < catalog.table_count(); ++t) {
    if ((subset >> t & 1) && (t >= db.tables.size() || db.tables[t].columns.size() != catalog.tables[t].attributes.size())) {
      throw Error("missing table data for '" + catalog.tables[t].name + "'");
    }
  }
  ValidationReport report;
  for (uint32_t e = 0; e < catalog.edges.size(); ++e) {
    const auto& edge = catalog.edges[e];
    if (!(subset >> edge.left.table & 1) || !(subset >> edge.right.table & 1)) continue;
    const auto& left = db.tables[edge.left.table].columns[edge.left.attr];
    const auto& right = db.tables[edge.right.table].columns[edge.right.attr];
    std::unordered_map<double, uint64_t> left_counts, right_counts;
    for (double v : left) ++left_counts[v];
    for (double v : right) ++right_counts[v];
    EdgeMatchReport entry;
    entry.edge = e;
    for (double v : left) entry.dangling_left += right_counts.count(v) ? 0 : 1;
    for (double v : right) entry.dangling_right += left_counts.count(v) ? 0 : 1;
    if (edge.kind == JoinKind::kPkFk) {
      for (const auto& [v, c] : left_counts) entry.duplicate_pk += c > 1 ? c : 0;
    }
    report.edges.push_back(entry);
  }
  return report;
}

ValidationReport validate(const Database& db) { return validate(db, db.catalog.all_tables()); }

json report_to_json(const Catalog& catalog, const ValidationReport& report) {
  json edges = json::array();
  for (const auto& entry : report.edges) {
    const auto& edge = catalog.edges[entry.edge];
    edges.push_back({{"left", catalog.qualified_name(edge.left)},
                     {"right", catalog.qualified_name(edge.right)},
                     {"dangling_left", entry.dangling_left},
                     {"dangling_right", entry.dangling_right},
                     {"duplicate_pk", entry.duplicate_pk}});
  }
  return {{"edges", std::move(edges)}};
}

json database_to_json(const Database& db) {
  json data = json::object();
  for (const auto& table : db.tables) {
    json cols = json::object();
    const auto& meta = db.catalog.tables[table.table];
    for (size_t i = 0; i < meta.attributes.size(); ++i) cols[meta.attributes[i].name] = table.columns[i];
    data[meta.name] = std::move(cols);
  }
  return {{"schema", schema_to_json(db.catalog)}, {"data", std::move(data)}};
}

Database database_from_json(const json& doc) {
  Database db;
  try {
    db.catalog = load_schema(doc.at("schema"));
    const auto& data = doc.at("data");
    for (uint32_t t = 0; t < db.catalog.table_count(); ++t) {
      auto& meta = db.catalog.tables[t];
      TableData table;
      table.table = t;
      const auto& cols = data.at(meta.name);
      for (const auto& attr : meta.attributes) table.columns.push_back(cols.at(attr.name).get<std::vector<double>>());
      for (const auto& col : table.columns) {
        if (col.size() != table.columns.front().size()) throw Error("columns of '" + meta.name + "' differ in length");
      }
      meta.row_count = table.row_count();
      table.meta = meta;
      db.tables.push_back(std::move(table));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed database document: ") + e.what());
  }
  return db;
}

Database load_database_dir(const std::string& schema_path, const std::string& data_dir) {
  std::ifstream schema_in(schema_path);
  if (!schema_in) throw Error("cannot open schema '" + schema_path + "'");
  std::stringstream buffer;
  buffer << schema_in.rdbuf();
  Database db;
  db.catalog = load_schema(buffer.str());
  for (uint32_t t = 0; t < db.catalog.table_count(); ++t) {
    const std::string path = data_dir + "/" + db.catalog.tables[t].name + ".csv";
    std::ifstream csv(path);
    if (!csv) throw Error("missing table data: cannot open '" + path + "'");
    db.tables.push_back(ingest_table(db.catalog, db.catalog.tables[t].name, csv));
  }
  for (auto& table : db.tables) table.meta = db.catalog.tables[table.table];
  return db;
}

}  // namespace glue
