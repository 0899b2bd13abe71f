#include "glue/regions.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "glue/error.hpp"

namespace glue {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double prev_value(double v) { return std::nextafter(v, -kInf); }
double next_value(double v) { return std::nextafter(v, kInf); }

}  // namespace

ConstraintKind constraint_kind_of(AttributeKind kind) {
  return kind == AttributeKind::kCategorical ? ConstraintKind::kCategorical : ConstraintKind::kNumeric;
}

AttrConstraint AttrConstraint::full(ConstraintKind kind) { return from_intervals(kind, {{-kInf, kInf}}); }

AttrConstraint AttrConstraint::empty(ConstraintKind kind) {
  AttrConstraint c;
  c.kind_ = kind;
  return c;
}

AttrConstraint AttrConstraint::range(ConstraintKind kind, double lo, double hi) {
  if (!(lo <= hi)) return empty(kind);
  return from_intervals(kind, {{lo, hi}});
}

AttrConstraint AttrConstraint::points(ConstraintKind kind, std::vector<double> values) {
  std::vector<Interval> intervals;
  intervals.reserve(values.size());
  for (double v : values) intervals.push_back({v, v});
  return from_intervals(kind, std::move(intervals));
}

AttrConstraint AttrConstraint::from_intervals(ConstraintKind kind, std::vector<Interval> intervals) {
  AttrConstraint c;
  c.kind_ = kind;
  std::erase_if(intervals, [](const Interval& i) { return !(i.lo <= i.hi); });
  std::sort(intervals.begin(), intervals.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  for (const auto& i : intervals) {
    if (!c.intervals_.empty() && i.lo <= c.intervals_.back().hi) {
      c.intervals_.back().hi = std::max(c.intervals_.back().hi, i.hi);
    } else {
      c.intervals_.push_back(i);
    }
  }
  return c;
}

AttrConstraint AttrConstraint::below(ConstraintKind kind, double v) { return range(kind, -kInf, prev_value(v)); }

AttrConstraint AttrConstraint::at_least(ConstraintKind kind, double v) { return range(kind, v, kInf); }

bool AttrConstraint::is_full() const {
  return intervals_.size() == 1 && intervals_[0].lo == -kInf && intervals_[0].hi == kInf;
}

bool AttrConstraint::contains(double v) const {
  auto it = std::upper_bound(intervals_.begin(), intervals_.end(), v,
                             [](double x, const Interval& i) { return x < i.lo; });
  if (it == intervals_.begin()) return false;
  return v <= std::prev(it)->hi;
}

bool AttrConstraint::accepts_null() const { return !intervals_.empty() && intervals_.front().lo == kNull; }

AttrConstraint AttrConstraint::intersect(const AttrConstraint& other) const {
  if (kind_ != other.kind_) throw Error("attribute kind mismatch between region operands");
  AttrConstraint out;
  out.kind_ = kind_;
  size_t i = 0, j = 0;
  const auto& a = intervals_;
  const auto& b = other.intervals_;
  while (i < a.size() && j < b.size()) {
    const double lo = std::max(a[i].lo, b[j].lo);
    const double hi = std::min(a[i].hi, b[j].hi);
    if (lo <= hi) out.intervals_.push_back({lo, hi});
    if (a[i].hi < b[j].hi) {
      ++i;
    } else {
      ++j;
    }
  }
  return out;
}

AttrConstraint AttrConstraint::complement() const {
  AttrConstraint out;
  out.kind_ = kind_;
  double start = -kInf;
  bool open = true;
  for (const auto& i : intervals_) {
    if (i.lo > start) out.intervals_.push_back({start, prev_value(i.lo)});
    if (i.hi == kInf) {
      open = false;
      break;
    }
    start = next_value(i.hi);
  }
  if (open) out.intervals_.push_back({start, kInf});
  return out;
}

const AttrConstraint* RegularRegion::find(AttrRef ref) const {
  auto it = std::lower_bound(items_.begin(), items_.end(), ref,
                             [](const Item& item, AttrRef r) { return item.first < r; });
  return it != items_.end() && it->first == ref ? &it->second : nullptr;
}

void RegularRegion::constrain(AttrRef ref, const AttrConstraint& constraint) {
  auto it = std::lower_bound(items_.begin(), items_.end(), ref,
                             [](const Item& item, AttrRef r) { return item.first < r; });
  if (it != items_.end() && it->first == ref) {
    it->second = it->second.intersect(constraint);
  } else {
    items_.insert(it, {ref, constraint});
  }
}

bool RegularRegion::is_empty() const {
  return std::any_of(items_.begin(), items_.end(), [](const Item& i) { return i.second.is_empty(); });
}

bool RegularRegion::accepts_null() const {
  return std::all_of(items_.begin(), items_.end(), [](const Item& i) { return i.second.accepts_null(); });
}

TableMask RegularRegion::tables() const {
  TableMask mask = 0;
  for (const auto& [ref, c] : items_) mask |= TableMask{1} << ref.table;
  return mask;
}

RegularRegion RegularRegion::intersect(const RegularRegion& other) const {
  RegularRegion out;
  out.items_.reserve(items_.size() + other.items_.size());
  size_t i = 0, j = 0;
  while (i < items_.size() || j < other.items_.size()) {
    if (j == other.items_.size() || (i < items_.size() && items_[i].first < other.items_[j].first)) {
      out.items_.push_back(items_[i++]);
    } else if (i == items_.size() || other.items_[j].first < items_[i].first) {
      out.items_.push_back(other.items_[j++]);
    } else {
      out.items_.push_back({items_[i].first, items_[i].second.intersect(other.items_[j].second)});
      ++i;
      ++j;
    }
  }
  return out;
}

RegularRegion RegularRegion::project(TableMask tables) const {
  RegularRegion out;
  for (const auto& item : items_) {
    if (tables >> item.first.table & 1) out.items_.push_back(item);
  }
  return out;
}

RegularRegion RegularRegion::project(const std::vector<AttrRef>& scope) const {
  RegularRegion out;
  for (const auto& item : items_) {
    if (std::find(scope.begin(), scope.end(), item.first) != scope.end()) out.items_.push_back(item);
  }
  return out;
}

size_t RegularRegion::hash() const {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  };
  for (const auto& [ref, c] : items_) {
    mix((uint64_t{ref.table} << 32) | ref.attr);
    mix(static_cast<uint64_t>(c.kind()));
    for (const auto& i : c.intervals()) {
      mix(std::bit_cast<uint64_t>(i.lo));
      mix(std::bit_cast<uint64_t>(i.hi));
    }
  }
  return static_cast<size_t>(h);
}

RegularRegion intersect(const RegularRegion& a, const RegularRegion& b) { return a.intersect(b); }
RegularRegion project(const RegularRegion& r, TableMask tables) { return r.project(tables); }
bool is_empty(const RegularRegion& r) { return r.is_empty(); }

Partition Partition::single(std::vector<AttrRef> scope) {
  Partition p;
  p.scope = std::move(scope);
  p.parts.push_back(RegularRegion::full());
  return p;
}

bool Partition::pairwise_disjoint() const {
  for (size_t i = 0; i < parts.size(); ++i) {
    for (size_t j = i + 1; j < parts.size(); ++j) {
      if (!parts[i].intersect(parts[j]).is_empty()) return false;
    }
  }
  return true;
}

std::vector<AttrRef> Query::constrained_attributes() const {
  std::vector<AttrRef> out;
  for (const auto& [ref, c] : region.items()) out.push_back(ref);
  return out;
}

namespace {

double value_for(const AttributeMeta& attr, const json& v, bool& known) {
  known = true;
  if (attr.kind == AttributeKind::kCategorical) {
    if (!v.is_string()) throw Error("categorical attribute '" + attr.name + "' expects string values");
    auto code = attr.code_of(v.get<std::string>());
    if (!code) {
      known = false;
      return 0.0;
    }
    return *code;
  }
  if (!v.is_number()) throw Error("numeric attribute '" + attr.name + "' expects numeric values");
  return v.get<double>();
}

}  // namespace

Query parse_query(const json& doc, const Catalog& catalog) {
  Query query;
  try {
    if (!doc.is_object()) throw Error("query document must be an object");
    if (doc.contains("or") || doc.contains("any")) throw Error("disjunction across attributes is not supported");
    query.distinct = doc.value("distinct", false);
    const bool explicit_tables = doc.contains("tables");
    if (explicit_tables) {
      for (const auto& name : doc["tables"]) query.tables |= TableMask{1} << catalog.require_table(name.get<std::string>());
    }
    if (doc.contains("predicates")) {
      for (const auto& pred : doc["predicates"]) {
        const auto op = pred.at("op").get<std::string>();
        if (op == "or") throw Error("disjunction across attributes is not supported");
        const AttrRef ref = catalog.resolve(pred.at("col").get<std::string>());
        const TableMask bit = TableMask{1} << ref.table;
        if (explicit_tables && !(query.tables & bit)) {
          throw Error("predicate on table '" + catalog.tables[ref.table].name + "' which is not in 'tables'");
        }
        query.tables |= bit;
        const auto& attr = catalog.attribute(ref);
        const auto kind = constraint_kind_of(attr.kind);
        bool known = true;
        AttrConstraint constraint;
        if (op == "eq") {
          const double v = value_for(attr, pred.at("val"), known);
          constraint = known ? AttrConstraint::points(kind, {v}) : AttrConstraint::empty(kind);
        } else if (op == "range") {
          if (!attr.is_numeric()) throw Error("range predicate on categorical attribute '" + attr.name + "'");
          constraint = AttrConstraint::range(kind, pred.at("lo").get<double>(), pred.at("hi").get<double>());
        } else if (op == "in") {
          const auto& list = pred.contains("vals") ? pred["vals"] : pred.at("values");
          std::vector<double> values;
          for (const auto& v : list) {
            const double x = value_for(attr, v, known);
            if (known) values.push_back(x);
          }
          constraint = AttrConstraint::points(kind, std::move(values));
        } else {
          throw Error("unknown predicate op '" + op + "'");
        }
        query.region.constrain(ref, constraint);
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed query document: ") + e.what());
  }
  if (query.tables == 0) throw Error("query touches no tables");
  if (!catalog.is_connected(query.tables)) throw Error("disconnected touched set");
  return query;
}

Query parse_query(std::string_view query_doc, const Catalog& catalog) {
  json doc;
  try {
    doc = json::parse(query_doc);
  } catch (const json::exception& e) {
    throw Error(std::string("malformed query document: ") + e.what());
  }
  return parse_query(doc, catalog);
}

json query_to_json(const Query& query, const Catalog& catalog) {
  json tables = json::array();
  for (uint32_t t = 0; t < catalog.table_count(); ++t) {
    if (query.tables >> t & 1) tables.push_back(catalog.tables[t].name);
  }
  json preds = json::array();
  for (const auto& [ref, c] : query.region.items()) {
    const auto& attr = catalog.attribute(ref);
    auto encode = [&](double v) -> json {
      if (attr.kind == AttributeKind::kCategorical) return attr.dictionary.at(static_cast<size_t>(v));
      if (attr.kind == AttributeKind::kInteger) return static_cast<long long>(v);
      return v;
    };
    const auto& iv = c.intervals();
    const bool all_points = std::all_of(iv.begin(), iv.end(), [](const Interval& i) { return i.lo == i.hi; });
    json pred = {{"col", catalog.qualified_name(ref)}};
    if (iv.size() == 1 && all_points) {
      pred["op"] = "eq";
      pred["val"] = encode(iv[0].lo);
    } else if (all_points) {
      pred["op"] = "in";
      json vals = json::array();
      for (const auto& i : iv) vals.push_back(encode(i.lo));
      pred["vals"] = std::move(vals);
    } else if (iv.size() == 1 && std::isfinite(iv[0].lo) && std::isfinite(iv[0].hi)) {
      pred["op"] = "range";
      pred["lo"] = encode(iv[0].lo);
      pred["hi"] = encode(iv[0].hi);
    } else {
      throw Error("constraint on " + catalog.qualified_name(ref) + " has no query-document form");
    }
    preds.push_back(std::move(pred));
  }
  json doc = {{"tables", std::move(tables)}, {"predicates", std::move(preds)}};
  if (query.distinct) doc["distinct"] = true;
  return doc;
}

namespace {

json bound_to_json(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  return v;
}

double bound_from_json(const json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw Error("bad interval bound '" + s + "'");
  }
  return v.get<double>();
}

}  // namespace

json region_to_json(const RegularRegion& region) {
  json out = json::array();
  for (const auto& [ref, c] : region.items()) {
    json intervals = json::array();
    for (const auto& i : c.intervals()) intervals.push_back({bound_to_json(i.lo), bound_to_json(i.hi)});
    out.push_back({ref.table, ref.attr, c.kind() == ConstraintKind::kCategorical ? "c" : "n", std::move(intervals)});
  }
  return out;
}

RegularRegion region_from_json(const json& doc) {
  RegularRegion region;
  for (const auto& item : doc) {
    const AttrRef ref{item.at(0).get<uint32_t>(), item.at(1).get<uint32_t>()};
    const auto kind = item.at(2).get<std::string>() == "c" ? ConstraintKind::kCategorical : ConstraintKind::kNumeric;
    std::vector<Interval> intervals;
    for (const auto& i : item.at(3)) intervals.push_back({bound_from_json(i.at(0)), bound_from_json(i.at(1))});
    auto constraint = AttrConstraint::from_intervals(kind, std::move(intervals));
    if (constraint.is_empty()) constraint = AttrConstraint::empty(kind);
    region.constrain(ref, constraint);
  }
  return region;
}

json partition_to_json(const Partition& partition) {
  json scope = json::array();
  for (const auto& ref : partition.scope) scope.push_back({ref.table, ref.attr});
  json parts = json::array();
  for (const auto& part : partition.parts) parts.push_back(region_to_json(part));
  return {{"scope", std::move(scope)}, {"parts", std::move(parts)}};
}

Partition partition_from_json(const json& doc) {
  Partition partition;
  for (const auto& ref : doc.at("scope")) partition.scope.push_back({ref.at(0).get<uint32_t>(), ref.at(1).get<uint32_t>()});
  for (const auto& part : doc.at("parts")) partition.parts.push_back(region_from_json(part));
  return partition;
}

}  // namespace glue
