#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "glue/catalog.hpp"
#include "json.hpp"

namespace glue {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return lo <= v && v <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

enum class ConstraintKind { kNumeric, kCategorical };

ConstraintKind constraint_kind_of(AttributeKind kind);

// Sorted, pairwise disjoint closed intervals over doubles. Categorical value
// sets are point intervals over dictionary codes. An interval starting at -inf
// also admits null-extended cells.
class AttrConstraint {
 public:
  AttrConstraint() = default;

  static AttrConstraint full(ConstraintKind kind);
  static AttrConstraint empty(ConstraintKind kind);
  static AttrConstraint range(ConstraintKind kind, double lo, double hi);
  static AttrConstraint points(ConstraintKind kind, std::vector<double> values);
  static AttrConstraint from_intervals(ConstraintKind kind, std::vector<Interval> intervals);
  // Values strictly below `v` (left) or at least `v` (right); nulls go left.
  static AttrConstraint below(ConstraintKind kind, double v);
  static AttrConstraint at_least(ConstraintKind kind, double v);

  ConstraintKind kind() const { return kind_; }
  const std::vector<Interval>& intervals() const { return intervals_; }

  bool is_empty() const { return intervals_.empty(); }
  bool is_full() const;
  bool contains(double v) const;
  bool accepts_null() const;

  // Throws on kind mismatch.
  AttrConstraint intersect(const AttrConstraint& other) const;
  AttrConstraint complement() const;

  friend bool operator==(const AttrConstraint&, const AttrConstraint&) = default;

 private:
  ConstraintKind kind_ = ConstraintKind::kNumeric;
  std::vector<Interval> intervals_;
};

// Cross product of per-attribute constraints; absent attributes are unconstrained.
class RegularRegion {
 public:
  using Item = std::pair<AttrRef, AttrConstraint>;

  RegularRegion() = default;
  static RegularRegion full() { return {}; }

  const std::vector<Item>& items() const { return items_; }
  const AttrConstraint* find(AttrRef ref) const;

  // Intersects the existing constraint on `ref` (if any) with `constraint`.
  void constrain(AttrRef ref, const AttrConstraint& constraint);

  bool is_empty() const;
  bool is_unconstrained() const { return items_.empty(); }
  // True when a row that is null on every constrained attribute would match.
  bool accepts_null() const;
  TableMask tables() const;

  template <typename ValueOf>
  bool contains(ValueOf&& value_of) const {
    for (const auto& [ref, c] : items_) {
      if (!c.contains(value_of(ref))) return false;
    }
    return true;
  }

  RegularRegion intersect(const RegularRegion& other) const;
  RegularRegion project(TableMask tables) const;
  RegularRegion project(const std::vector<AttrRef>& scope) const;

  size_t hash() const;
  friend bool operator==(const RegularRegion&, const RegularRegion&) = default;

 private:
  std::vector<Item> items_;  // sorted by AttrRef
};

struct RegionHash {
  size_t operator()(const RegularRegion& r) const { return r.hash(); }
};

RegularRegion intersect(const RegularRegion& a, const RegularRegion& b);
RegularRegion project(const RegularRegion& r, TableMask tables);
bool is_empty(const RegularRegion& r);

// Disjoint regions covering the full domain of `scope`.
struct Partition {
  std::vector<AttrRef> scope;
  std::vector<RegularRegion> parts;

  size_t size() const { return parts.size(); }

  static Partition single(std::vector<AttrRef> scope);

  template <typename ValueOf>
  std::optional<size_t> locate(ValueOf&& value_of) const {
    for (size_t i = 0; i < parts.size(); ++i) {
      if (parts[i].contains(value_of)) return i;
    }
    return std::nullopt;
  }

  bool pairwise_disjoint() const;
};

struct Query {
  TableMask tables = 0;
  RegularRegion region;
  bool distinct = false;

  std::vector<AttrRef> constrained_attributes() const;
};

Query parse_query(std::string_view query_doc, const Catalog& catalog);
Query parse_query(const nlohmann::json& doc, const Catalog& catalog);
inline Query parse_query(const std::string& query_doc, const Catalog& catalog) {
  return parse_query(std::string_view(query_doc), catalog);
}
inline Query parse_query(const char* query_doc, const Catalog& catalog) {
  return parse_query(std::string_view(query_doc), catalog);
}
nlohmann::json query_to_json(const Query& query, const Catalog& catalog);

nlohmann::json region_to_json(const RegularRegion& region);
RegularRegion region_from_json(const nlohmann::json& doc);
nlohmann::json partition_to_json(const Partition& partition);
Partition partition_from_json(const nlohmann::json& doc);

}  // namespace glue
