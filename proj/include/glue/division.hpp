#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "glue/correlate.hpp"
#include "glue/regions.hpp"

namespace glue {

struct DivideParams {
  double tau = 0.3;
  size_t max_parts = 64;
  size_t min_rows = 30;
  uint64_t seed = 42;
  size_t rdc_rows = 2000;  // rows per score evaluation
  CorrelationParams rdc;
};

// A partition of a sample's rows. `assignment[r]` is the part of sample row r;
// `scores[p]` is the last dependence score computed for part p.
struct Division {
  Partition partition;
  std::vector<uint32_t> assignment;
  std::vector<double> scores;
  std::vector<bool> capped;  // still above tau when refinement stopped

  std::vector<std::vector<uint32_t>> rows_by_part() const;
};

struct FanoutDivision : Division {
  std::vector<double> expectation;  // mean of F* = max(F, 1) per part
  std::vector<double> null_mass;    // share of rows with F = 0 per part
};

// Score of one part and the scope column to split it on.
struct PartScore {
  double score = 0.0;
  size_t column = 0;
};

using PartScorer = std::function<PartScore(const std::vector<uint32_t>& rows)>;

// Binary refinement loop: repeatedly split the highest-scoring eligible part
// whose score exceeds tau, subject to max_parts and min_rows.
Division refine(const SampleSet& sample, const std::vector<AttrRef>& scope, Division start,
                std::vector<bool> eligible, const PartScorer& scorer, const DivideParams& params);

// Row subset used for scoring one part (deterministic, at most rdc_rows).
std::vector<uint32_t> scoring_rows(const std::vector<uint32_t>& rows, size_t limit);

PartScore fanout_score(const SampleSet& sample, std::span<const double> fanout, const std::vector<uint32_t>& rows,
                       const DivideParams& params);
PartScore cross_score(const SampleSet& joined, std::span<const size_t> t_columns, std::span<const size_t> s_columns,
                      const std::vector<uint32_t>& rows, const DivideParams& params);

// Partition over every attribute of `sample` so that max_A rdc(A, F) <= tau per part.
FanoutDivision divide_fanout(const SampleSet& sample, std::span<const double> fanout, const DivideParams& params);
// Partition over `s_attrs` so that cross-side dependence is <= tau per part.
Division divide_cross(const SampleSet& joined, std::span<const AttrRef> t_attrs, std::span<const AttrRef> s_attrs,
                      const DivideParams& params);
// One part per distinct tuple of the sample's scope.
Division divide_singleton(const SampleSet& sample);

// Per-part means of F* and the share of F = 0.
void fanout_statistics(FanoutDivision& division, std::span<const double> fanout);

// M[k][i]: mean number of S partners in context i over T rows of part k
// (sparse rows), and the share of T rows without any partner.
struct RestrictedFanout {
  std::vector<std::vector<std::pair<uint32_t, double>>> m;
  std::vector<double> null_mass;

  double at(size_t k, size_t i) const;
};

// Keys hold kNull for null-extended rows; s_context is -1 for rows outside every context.
RestrictedFanout restricted_fanout_matrix(std::span<const double> t_keys, std::span<const uint32_t> t_assignment,
                                          size_t t_parts, std::span<const double> s_keys,
                                          std::span<const int64_t> s_context);

}  // namespace glue
