#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "glue/catalog.hpp"
#include "glue/regions.hpp"

namespace glue {

struct CorrelationParams {
  uint32_t k = 20;          // random non-linear features per side
  double s = 1.0 / 6.0;     // projection scale
  uint64_t seed = 42;
};

// Randomized dependence coefficient in [0,1]. Constant inputs score 0.
double rdc_score(std::span<const double> x, std::span<const double> y, const CorrelationParams& params);

// Row-aligned values over a set of attributes, possibly spanning two sides of
// a join (null-extended cells hold kNull).
struct SampleSet {
  std::vector<AttrRef> scope;
  std::vector<ConstraintKind> kinds;  // aligned with scope
  std::vector<std::vector<double>> columns;
  std::map<std::string, std::vector<double>> fanouts;
  std::string provenance;
  uint64_t seed = 0;

  size_t row_count() const { return columns.empty() ? 0 : columns.front().size(); }
  std::optional<size_t> column_index(AttrRef ref) const;
  const std::vector<double>& column(AttrRef ref) const;
};

struct PairScore {
  double score = 0.0;
  AttrRef x;
  AttrRef y;
};

// max over (x_i, y_j) of rdc_score on the same rows of `sample`.
PairScore max_pair_score(const SampleSet& sample, std::span<const AttrRef> x_attrs, std::span<const AttrRef> y_attrs,
                         const CorrelationParams& params);
// Two row-aligned sample sets (e.g. the two halves of one join sample).
PairScore max_pair_score(const SampleSet& a, const SampleSet& b, const CorrelationParams& params);

// Uniform without-replacement row ids in ascending order (all ids when n >= population).
std::vector<uint64_t> sample_indices(uint64_t population, uint64_t n, uint64_t seed);

SampleSet draw_sample(const TableData& table, uint64_t n, uint64_t seed);

enum class JoinSampleMethod { kMaterialize, kOlkenChain };

SampleSet join_sample(const TableData& left, const TableData& right, const JoinEdge& edge, uint64_t n,
                      JoinSampleMethod method, uint64_t seed);

struct FanoutColumn {
  std::vector<double> fanout;   // partner counts F
  std::vector<double> clamped;  // F* = max(F, 1)
};

// F_{a->b}: for every row of `a`, how many rows of `b` share its join key.
FanoutColumn compute_fanout(const TableData& a, const TableData& b, const JoinEdge& edge);

// Full outer join over a connected, acyclic set of tables.
struct JoinedRows {
  std::vector<uint32_t> tables;  // ascending table ids
  std::vector<int64_t> rows;     // row-major, width = tables.size(); -1 is a null side

  size_t width() const { return tables.size(); }
  size_t size() const { return tables.empty() ? 0 : rows.size() / tables.size(); }
  size_t position(uint32_t table) const;
  int64_t row_of(size_t r, uint32_t table) const { return rows[r * width() + position(table)]; }
  double value(const Database& db, size_t r, AttrRef ref) const;
};

inline constexpr uint64_t kDefaultRowLimit = 10'000'000;

JoinedRows materialize_outer_join(const Database& db, TableMask tables, uint64_t row_limit = kDefaultRowLimit);

// Binary split of one attribute's observed values: numeric at the median (a
// split at v sends v right), categorical by seeded bisection of the codes.
struct SplitRule {
  AttrConstraint left;
  AttrConstraint right;
};

std::optional<SplitRule> choose_split(std::vector<double> values, ConstraintKind kind, std::mt19937_64& rng);

}  // namespace glue
