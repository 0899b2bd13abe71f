#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "glue/glue_tree.hpp"
#include "glue/regions.hpp"
#include "json.hpp"

namespace glue {

// Per-node memo of (region, probability) pairs shared across sub-plans.
class SubplanCache {
 public:
  std::optional<double> find(uint32_t node, const RegularRegion& region);
  void store(uint32_t node, const RegularRegion& region, double probability);
  size_t size() const;

  uint64_t leaf_calls = 0;
  uint64_t cache_hits = 0;

 private:
  std::unordered_map<uint32_t, std::unordered_map<RegularRegion, double, RegionHash>> entries_;
};

struct EstimateReport {
  double cardinality = 0.0;
  double probability = 0.0;
  TableMask effective_tables = 0;
  uint64_t leaf_calls = 0;
  double elapsed_ms = 0.0;
  nlohmann::json trace;  // per-node probabilities when requested
};

struct EstimateOptions {
  SubplanCache* cache = nullptr;
  bool trace = false;
};

EstimateReport estimate(const DecompositionTree& tree, const Query& query, EstimationMode mode,
                        const EstimateOptions& options = {});
EstimateReport estimate(const DecompositionTree& tree, const Query& query);

// Distinct tuples of the query's constrained attributes among matching rows.
double distinct_estimate(const DecompositionTree& tree, const Query& query, EstimationMode mode);

struct SubplanEstimate {
  TableMask tables = 0;
  EstimateReport report;
  double uncached_probability = 0.0;
  uint64_t uncached_leaf_calls = 0;
};

struct SubplanReport {
  std::vector<SubplanEstimate> plans;  // the full query first, then ascending table masks
  uint64_t leaf_calls = 0;
  uint64_t cache_hits = 0;
  uint64_t uncached_leaf_calls = 0;
  size_t cache_entries = 0;
  bool bit_identical = true;
};

// Every connected subset of the query's tables, evaluated with one shared cache
// and again without it.
SubplanReport estimate_subplans(const DecompositionTree& tree, const Query& query, EstimationMode mode);

nlohmann::json estimate_to_json(const EstimateReport& report, const Catalog& catalog);
nlohmann::json subplans_to_json(const SubplanReport& report, const Catalog& catalog);
std::vector<std::string> table_names(TableMask tables, const Catalog& catalog);

}  // namespace glue
