#include "glue/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "glue/error.hpp"

namespace glue {

using nlohmann::json;

namespace {

// Row ids of the join matching `query`, plus the join itself.
std::pair<JoinedRows, std::vector<size_t>> matching(const Database& db, const Query& query, TableMask join_set,
                                                    uint64_t row_limit) {
  const TableMask tables = query.tables | join_set;
  if (tables == 0) throw Error("query names no tables");
  if (!db.catalog.is_connected(tables)) throw Error("disconnected touched set");
  if ((query.region.tables() & ~tables) != 0) throw Error("predicate on a table outside the join set");
  auto joined = materialize_outer_join(db, tables, row_limit);
  std::vector<size_t> rows;
  for (size_t r = 0; r < joined.size(); ++r) {
    bool match = true;
    for (const auto& [ref, c] : query.region.items()) {
      const int64_t row = joined.row_of(r, ref.table);
      if (row < 0 || !c.contains(db.value(ref, static_cast<uint64_t>(row)))) {
        match = false;
        break;
      }
    }
    if (match) rows.push_back(r);
  }
  return {std::move(joined), std::move(rows)};
}

}  // namespace

uint64_t exec_exact(const Database& db, const Query& query, TableMask join_set, uint64_t row_limit) {
  return matching(db, query, join_set, row_limit).second.size();
}

uint64_t exec_distinct(const Database& db, const Query& query, TableMask join_set, uint64_t row_limit) {
  const auto attrs = query.constrained_attributes();
  if (attrs.empty()) throw Error("distinct requires at least one constrained attribute");
  const auto [joined, rows] = matching(db, query, join_set, row_limit);
  std::set<std::vector<double>> tuples;
  std::vector<double> tuple(attrs.size());
  for (size_t r : rows) {
    for (size_t i = 0; i < attrs.size(); ++i) tuple[i] = joined.value(db, r, attrs[i]);
    tuples.insert(tuple);
  }
  return tuples.size();
}

double qerror(double estimate, double truth) {
  const double e = std::max(estimate, 1.0);
  const double t = std::max(truth, 1.0);
  return std::max(e / t, t / e);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

QErrorSummary QErrorSummary::summarize(std::vector<double> qerrors) {
  QErrorSummary s;
  s.qerrors = std::move(qerrors);
  if (s.qerrors.empty()) return s;
  s.median = quantile(s.qerrors, 0.5);
  s.p90 = quantile(s.qerrors, 0.9);
  s.p99 = quantile(s.qerrors, 0.99);
  s.max = *std::max_element(s.qerrors.begin(), s.qerrors.end());
  return s;
}

json summary_to_json(const QErrorSummary& s) {
  return {{"queries", s.qerrors.size()}, {"median", s.median}, {"p90", s.p90},
          {"p99", s.p99},                {"max", s.max},        {"qerrors", s.qerrors}};
}

const std::string_view kFixtureASchema = R"({
  "tables": [
    {"name": "T", "columns": [{"name": "pk", "kind": "integer", "min": 1, "max": 4},
                              {"name": "a", "kind": "integer", "min": 0, "max": 100}]},
    {"name": "S", "columns": [{"name": "fk", "kind": "integer", "min": 1, "max": 10},
                              {"name": "b", "kind": "integer", "min": 0, "max": 1000}]}
  ],
  "joins": [{"left": "T.pk", "right": "S.fk", "kind": "pk_fk"}]
}
)";

const std::string_view kFixtureAT = "pk,a\n1,10\n2,10\n3,20\n4,20\n";
const std::string_view kFixtureAS = "fk,b\n1,100\n1,100\n2,200\n5,300\n";

Database fixture_a() {
  Database db;
  db.catalog = load_schema(kFixtureASchema);
  std::istringstream t{std::string(kFixtureAT)};
  std::istringstream s{std::string(kFixtureAS)};
  db.tables.push_back(ingest_table(db.catalog, "T", t));
  db.tables.push_back(ingest_table(db.catalog, "S", s));
  return db;
}

namespace {

constexpr std::array<std::pair<GeneratorKind, std::string_view>, 6> kGeneratorNames{{
    {GeneratorKind::kIndependent, "independent"},
    {GeneratorKind::kCorrelated, "correlated"},
    {GeneratorKind::kFanoutSkew, "fanout_skew"},
    {GeneratorKind::kRandomPair, "random_pair"},
    {GeneratorKind::kChain, "chain"},
    {GeneratorKind::kRandomTree, "random_tree"},
}};

using Rng = std::mt19937_64;

uint64_t uniform(Rng& rng, uint64_t lo, uint64_t hi) { return std::uniform_int_distribution<uint64_t>(lo, hi)(rng); }

json int_column(const std::string& name, double min, double max) {
  return {{"name", name}, {"kind", "integer"}, {"min", min}, {"max", max}};
}

json cat_column(const std::string& name, const std::vector<std::string>& values) {
  return {{"name", name}, {"kind", "categorical"}, {"values", values}};
}

// Schema plus column-major data for every table.
Database assemble(const json& schema, std::vector<std::vector<std::vector<double>>> columns) {
  Database db;
  db.catalog = load_schema(schema);
  for (uint32_t t = 0; t < db.catalog.table_count(); ++t) {
    TableData data;
    data.table = t;
    data.columns = std::move(columns[t]);
    db.catalog.tables[t].row_count = data.row_count();
    data.meta = db.catalog.tables[t];
    db.tables.push_back(std::move(data));
  }
  return db;
}

std::vector<std::string> attr_names(const char* prefix, uint32_t n) {
  std::vector<std::string> out;
  for (uint32_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// Two-table schema T(pk, a*) and S(fk, b*) with integer attributes.
json pair_schema(uint64_t t_rows, uint64_t fk_max, uint32_t attributes, double domain) {
  json t_cols = json::array({int_column("pk", 1, static_cast<double>(t_rows))});
  json s_cols = json::array({int_column("fk", 1, static_cast<double>(fk_max))});
  for (const auto& n : attr_names("a", attributes)) t_cols.push_back(int_column(n, 0, domain - 1));
  for (const auto& n : attr_names("b", attributes)) s_cols.push_back(int_column(n, 0, domain - 1));
  return {{"tables", {{{"name", "T"}, {"columns", t_cols}}, {{"name", "S"}, {"columns", s_cols}}}},
          {"joins", {{{"left", "T.pk"}, {"right", "S.fk"}, {"kind", "pk_fk"}}}}};
}

std::vector<std::vector<double>> pk_table(uint64_t rows, uint32_t attributes, uint32_t domain, Rng& rng) {
  std::vector<std::vector<double>> cols(1 + attributes);
  for (uint64_t r = 0; r < rows; ++r) {
    cols[0].push_back(static_cast<double>(r + 1));
    for (uint32_t a = 0; a < attributes; ++a) cols[1 + a].push_back(static_cast<double>(uniform(rng, 0, domain - 1)));
  }
  return cols;
}

// Every T row receives the same multiset of S tuples, so S attributes are
// exactly independent of T attributes in the join.
Database gen_independent(const SyntheticSpec& spec, Rng& rng) {
  if (spec.s_rows % spec.t_rows != 0) throw Error("invalid spec: independent needs s_rows divisible by t_rows");
  const uint64_t f = spec.s_rows / spec.t_rows;
  auto t = pk_table(spec.t_rows, spec.attributes, spec.domain, rng);
  std::vector<std::vector<double>> tuples(f, std::vector<double>(spec.attributes));
  for (auto& tuple : tuples) {
    for (auto& v : tuple) v = static_cast<double>(uniform(rng, 0, spec.domain - 1));
  }
  std::vector<std::vector<double>> s(1 + spec.attributes);
  for (uint64_t r = 0; r < spec.t_rows; ++r) {
    for (const auto& tuple : tuples) {
      s[0].push_back(static_cast<double>(r + 1));
      for (uint32_t a = 0; a < spec.attributes; ++a) s[1 + a].push_back(tuple[a]);
    }
  }
  return assemble(pair_schema(spec.t_rows, spec.t_rows, spec.attributes, spec.domain), {t, s});
}

// S.b0 is a fixed bijection of the partner's T.a0; further attributes are noise.
Database gen_correlated(const SyntheticSpec& spec, Rng& rng) {
  auto t = pk_table(spec.t_rows, spec.attributes, spec.domain, rng);
  std::vector<std::vector<double>> s(1 + spec.attributes);
  for (uint64_t r = 0; r < spec.s_rows; ++r) {
    const uint64_t partner = uniform(rng, 0, spec.t_rows - 1);
    s[0].push_back(static_cast<double>(partner + 1));
    s[1].push_back(t[1][partner]);
    for (uint32_t a = 1; a < spec.attributes; ++a) s[1 + a].push_back(static_cast<double>(uniform(rng, 0, spec.domain - 1)));
  }
  return assemble(pair_schema(spec.t_rows, spec.t_rows, spec.attributes, spec.domain), {t, s});
}

// A T row with a0 = v has exactly v partners; s_rows is derived from the data.
Database gen_fanout_skew(const SyntheticSpec& spec, Rng& rng) {
  auto t = pk_table(spec.t_rows, spec.attributes, spec.domain, rng);
  std::vector<std::vector<double>> s(1 + spec.attributes);
  for (uint64_t r = 0; r < spec.t_rows; ++r) {
    const auto fanout = static_cast<uint64_t>(t[1][r]);
    for (uint64_t i = 0; i < fanout; ++i) {
      s[0].push_back(static_cast<double>(r + 1));
      for (uint32_t a = 0; a < spec.attributes; ++a) s[1 + a].push_back(static_cast<double>(uniform(rng, 0, spec.domain - 1)));
    }
  }
  return assemble(pair_schema(spec.t_rows, spec.t_rows, spec.attributes, spec.domain), {t, s});
}

// Small two-table dataset with skewed partners, dangling rows on both sides
// and one categorical attribute per table.
Database gen_random_pair(const SyntheticSpec& spec, Rng& rng) {
  const uint64_t t_rows = std::max<uint64_t>(1, spec.t_rows);
  const uint64_t fk_max = t_rows + std::max<uint64_t>(1, t_rows / 5);
  const std::vector<std::string> labels{"x", "y", "z"};
  std::vector<std::vector<double>> t(3), s(3);
  for (uint64_t r = 0; r < t_rows; ++r) {
    t[0].push_back(static_cast<double>(r + 1));
    t[1].push_back(static_cast<double>(uniform(rng, 0, spec.domain - 1)));
    t[2].push_back(static_cast<double>(uniform(rng, 0, labels.size() - 1)));
  }
  std::geometric_distribution<uint64_t> skew(0.15);
  for (uint64_t r = 0; r < spec.s_rows; ++r) {
    const uint64_t fk = std::min(fk_max, 1 + skew(rng) % fk_max);
    const uint64_t partner = uniform(rng, 0, 3) == 0 ? uniform(rng, 1, fk_max) : fk;
    s[0].push_back(static_cast<double>(partner));
    const double a = partner <= t_rows ? t[1][partner - 1] : 0.0;
    // Half of the rows copy the partner's attribute to induce dependence.
    s[1].push_back(uniform(rng, 0, 1) == 0 ? a : static_cast<double>(uniform(rng, 0, spec.domain - 1)));
    s[2].push_back(static_cast<double>(uniform(rng, 0, labels.size() - 1)));
  }
  json schema = {
      {"tables",
       {{{"name", "T"},
         {"columns", {int_column("pk", 1, static_cast<double>(t_rows)), int_column("a", 0, spec.domain - 1),
                      cat_column("c", labels)}}},
        {{"name", "S"},
         {"columns", {int_column("fk", 1, static_cast<double>(fk_max)), int_column("b", 0, spec.domain - 1),
                      cat_column("d", labels)}}}}},
      {"joins", {{{"left", "T.pk"}, {"right", "S.fk"}, {"kind", "pk_fk"}}}}};
  return assemble(schema, {t, s});
}

// Tables R0..R{n-1}; table i > 0 references the id of `parents[i-1]`. The
// first attribute of a child copies its parent's first attribute half of the time.
Database gen_tree(const SyntheticSpec& spec, const std::vector<uint32_t>& parents, Rng& rng) {
  const uint32_t n = spec.tables;
  json tables = json::array();
  json joins = json::array();
  std::vector<std::vector<std::vector<double>>> data(n);
  for (uint32_t i = 0; i < n; ++i) {
    const std::string name = "R" + std::to_string(i);
    json cols = json::array({int_column("id", 1, static_cast<double>(spec.t_rows))});
    if (i > 0) {
      cols.push_back(int_column("p", 1, static_cast<double>(spec.t_rows)));
      joins.push_back({{"left", "R" + std::to_string(parents[i - 1]) + ".id"}, {"right", name + ".p"}, {"kind", "pk_fk"}});
    }
    for (const auto& a : attr_names("x", spec.attributes)) cols.push_back(int_column(a, 0, spec.domain - 1));
    tables.push_back({{"name", name}, {"columns", cols}});

    auto& cols_data = data[i];
    cols_data.resize((i > 0 ? 2 : 1) + spec.attributes);
    const size_t first_attr = i > 0 ? 2 : 1;
    // Correlation strength varies per table so that cross scores differ.
    const uint64_t copy_odds = uniform(rng, 0, 3);
    for (uint64_t r = 0; r < spec.t_rows; ++r) {
      cols_data[0].push_back(static_cast<double>(r + 1));
      uint64_t partner = 0;
      if (i > 0) {
        partner = uniform(rng, 0, spec.t_rows - 1);
        cols_data[1].push_back(static_cast<double>(partner + 1));
      }
      for (uint32_t a = 0; a < spec.attributes; ++a) {
        double v = static_cast<double>(uniform(rng, 0, spec.domain - 1));
        if (i > 0 && a == 0 && uniform(rng, 0, 3) < copy_odds) v = data[parents[i - 1]][1 + (parents[i - 1] > 0)][partner];
        cols_data[first_attr + a].push_back(v);
      }
    }
  }
  return assemble({{"tables", tables}, {"joins", joins}}, std::move(data));
}

}  // namespace

std::string_view to_string(GeneratorKind kind) {
  for (const auto& [k, name] : kGeneratorNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

GeneratorKind generator_kind_from_string(std::string_view text) {
  for (const auto& [k, name] : kGeneratorNames) {
    if (name == text) return k;
  }
  throw Error("invalid spec: unknown generator '" + std::string(text) + "'");
}

void SyntheticSpec::check() const {
  if (t_rows < 1) throw Error("invalid spec: t_rows must be >= 1");
  if (attributes < 1) throw Error("invalid spec: attributes must be >= 1");
  if (domain < 2) throw Error("invalid spec: domain must be >= 2");
  const bool multi = kind == GeneratorKind::kChain || kind == GeneratorKind::kRandomTree;
  if (multi && (tables < 2 || tables > 63)) throw Error("invalid spec: tables must lie in [2, 63]");
  if (!multi && kind != GeneratorKind::kFanoutSkew && s_rows < 1) throw Error("invalid spec: s_rows must be >= 1");
}

json synthetic_spec_to_json(const SyntheticSpec& spec) {
  return {{"generator", to_string(spec.kind)}, {"t_rows", spec.t_rows},     {"s_rows", spec.s_rows},
          {"attributes", spec.attributes},     {"domain", spec.domain},     {"tables", spec.tables}};
}

SyntheticSpec synthetic_spec_from_json(const json& doc) {
  SyntheticSpec spec;
  try {
    spec.kind = generator_kind_from_string(doc.at("generator").get<std::string>());
    spec.t_rows = doc.value("t_rows", spec.t_rows);
    spec.s_rows = doc.value("s_rows", spec.s_rows);
    spec.attributes = doc.value("attributes", spec.attributes);
    spec.domain = doc.value("domain", spec.domain);
    spec.tables = doc.value("tables", spec.tables);
  } catch (const json::exception& e) {
    throw Error(std::string("invalid spec: ") + e.what());
  }
  spec.check();
  return spec;
}

Database gen_synthetic(const SyntheticSpec& spec, uint64_t seed) {
  spec.check();
  Rng rng(seed);
  switch (spec.kind) {
    case GeneratorKind::kIndependent:
      return gen_independent(spec, rng);
    case GeneratorKind::kCorrelated:
      return gen_correlated(spec, rng);
    case GeneratorKind::kFanoutSkew:
      return gen_fanout_skew(spec, rng);
    case GeneratorKind::kRandomPair:
      return gen_random_pair(spec, rng);
    case GeneratorKind::kChain: {
      std::vector<uint32_t> parents(spec.tables - 1);
      std::iota(parents.begin(), parents.end(), 0u);
      return gen_tree(spec, parents, rng);
    }
    case GeneratorKind::kRandomTree: {
      std::vector<uint32_t> parents;
      for (uint32_t i = 1; i < spec.tables; ++i) parents.push_back(static_cast<uint32_t>(uniform(rng, 0, i - 1)));
      return gen_tree(spec, parents, rng);
    }
  }
  throw Error("invalid spec");
}

namespace {

TableMask random_tables(const Catalog& cat, const WorkloadOptions& options, Rng& rng) {
  if (options.all_tables) return cat.all_tables();
  const uint32_t limit = options.max_tables == 0 ? cat.table_count() : std::min(options.max_tables, cat.table_count());
  const auto target = static_cast<uint32_t>(uniform(rng, 1, limit));
  TableMask tables = TableMask{1} << uniform(rng, 0, cat.table_count() - 1);
  for (uint32_t size = 1; size < target; ++size) {
    const TableMask frontier = cat.neighbours(tables);
    if (frontier == 0) break;
    std::vector<uint32_t> options_left;
    for (uint32_t t = 0; t < cat.table_count(); ++t) {
      if (frontier >> t & 1) options_left.push_back(t);
    }
    tables |= TableMask{1} << options_left[uniform(rng, 0, options_left.size() - 1)];
  }
  return tables;
}

AttrConstraint random_constraint(const Database& db, AttrRef ref, const std::vector<PredicateOp>& ops, Rng& rng) {
  const auto& attr = db.catalog.attribute(ref);
  const auto& column = db.tables[ref.table].columns[ref.attr];
  const auto kind = constraint_kind_of(attr.kind);
  std::vector<PredicateOp> allowed;
  for (auto op : ops) {
    if (op != PredicateOp::kRange || attr.is_numeric()) allowed.push_back(op);
  }
  if (allowed.empty()) allowed.push_back(PredicateOp::kEq);
  const auto pick = [&] { return column[uniform(rng, 0, column.size() - 1)]; };
  switch (allowed[uniform(rng, 0, allowed.size() - 1)]) {
    case PredicateOp::kEq:
      return AttrConstraint::points(kind, {pick()});
    case PredicateOp::kRange: {
      double lo = pick(), hi = pick();
      if (lo > hi) std::swap(lo, hi);
      return AttrConstraint::range(kind, lo, hi);
    }
    case PredicateOp::kIn: {
      std::vector<double> values;
      const auto count = uniform(rng, 2, 3);
      for (uint64_t i = 0; i < count; ++i) values.push_back(pick());
      return AttrConstraint::points(kind, values);
    }
  }
  throw Error("unknown predicate op");
}

}  // namespace

std::vector<Query> gen_workload(const Database& db, size_t n, uint64_t seed, const WorkloadOptions& options) {
  if (n < 1) throw Error("workload size must be >= 1");
  if (options.min_predicates < 1 || options.min_predicates > options.max_predicates) {
    throw Error("invalid predicate count range");
  }
  const auto& cat = db.catalog;
  Rng rng(seed);
  std::vector<Query> out;
  while (out.size() < n) {
    Query q;
    q.tables = random_tables(cat, options, rng);
    std::vector<std::vector<AttrRef>> by_table;
    std::vector<AttrRef> candidates;
    for (uint32_t t = 0; t < cat.table_count(); ++t) {
      if (!(q.tables >> t & 1)) continue;
      std::vector<AttrRef> attrs;
      for (uint32_t a = 0; a < cat.tables[t].attributes.size(); ++a) {
        const AttrRef ref{t, a};
        if (options.include_keys || !cat.is_join_key(ref)) attrs.push_back(ref);
      }
      if (db.tables[t].row_count() == 0) attrs.clear();
      candidates.insert(candidates.end(), attrs.begin(), attrs.end());
      by_table.push_back(std::move(attrs));
    }
    if (candidates.empty()) continue;
    std::vector<AttrRef> chosen;
    if (options.predicate_on_every_table) {
      for (const auto& attrs : by_table) {
        if (!attrs.empty()) chosen.push_back(attrs[uniform(rng, 0, attrs.size() - 1)]);
      }
    }
    const auto target = std::min<size_t>(
        candidates.size(),
        std::max<size_t>(chosen.size(), uniform(rng, options.min_predicates, options.max_predicates)));
    std::shuffle(candidates.begin(), candidates.end(), rng);
    for (const auto& ref : candidates) {
      if (chosen.size() >= target) break;
      if (std::find(chosen.begin(), chosen.end(), ref) == chosen.end()) chosen.push_back(ref);
    }
    std::sort(chosen.begin(), chosen.end());
    for (const auto& ref : chosen) q.region.constrain(ref, random_constraint(db, ref, options.ops, rng));
    out.push_back(std::move(q));
  }
  return out;
}

json workload_to_json(const std::vector<Query>& queries, const Catalog& catalog) {
  json out = json::array();
  for (const auto& q : queries) out.push_back(query_to_json(q, catalog));
  return out;
}

std::vector<Query> workload_from_json(const json& doc, const Catalog& catalog) {
  const json& list = doc.is_object() && doc.contains("queries") ? doc["queries"] : doc;
  if (!list.is_array()) throw Error("malformed document: a workload is an array of queries");
  std::vector<Query> out;
  for (const auto& q : list) out.push_back(parse_query(q, catalog));
  return out;
}

}  // namespace glue
