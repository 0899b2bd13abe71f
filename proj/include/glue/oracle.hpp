#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "glue/catalog.hpp"
#include "glue/correlate.hpp"
#include "glue/regions.hpp"
#include "json.hpp"

namespace glue {

// Rows of the full outer join over `query.tables | join_set` that satisfy the
// query region. Predicates never match null-extended cells.
uint64_t exec_exact(const Database& db, const Query& query, TableMask join_set = 0,
                    uint64_t row_limit = kDefaultRowLimit);
// Distinct tuples of the constrained attributes among the matching rows.
uint64_t exec_distinct(const Database& db, const Query& query, TableMask join_set = 0,
                       uint64_t row_limit = kDefaultRowLimit);

double qerror(double estimate, double truth);

struct QErrorSummary {
  std::vector<double> qerrors;
  double median = 1.0;
  double p90 = 1.0;
  double p99 = 1.0;
  double max = 1.0;

  static QErrorSummary summarize(std::vector<double> qerrors);
};

// Linear interpolation between closest ranks; `q` in [0,1].
double quantile(std::vector<double> values, double q);
nlohmann::json summary_to_json(const QErrorSummary& summary);

// T(pk, a) = {(1,10),(2,10),(3,20),(4,20)}, S(fk, b) = {(1,100),(1,100),(2,200),(5,300)}, T.pk = S.fk.
extern const std::string_view kFixtureASchema;
extern const std::string_view kFixtureAT;
extern const std::string_view kFixtureAS;
Database fixture_a();

enum class GeneratorKind { kIndependent, kCorrelated, kFanoutSkew, kRandomPair, kChain, kRandomTree };

std::string_view to_string(GeneratorKind kind);
GeneratorKind generator_kind_from_string(std::string_view text);

struct SyntheticSpec {
  GeneratorKind kind = GeneratorKind::kIndependent;
  uint64_t t_rows = 1000;  // rows of T, or of every table for chain/random_tree
  uint64_t s_rows = 2000;
  uint32_t attributes = 1;  // non-key attributes per table
  uint32_t domain = 20;     // integer attribute values lie in [0, domain)
  uint32_t tables = 2;      // chain/random_tree only

  void check() const;
};

nlohmann::json synthetic_spec_to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& doc);

Database gen_synthetic(const SyntheticSpec& spec, uint64_t seed);

enum class PredicateOp { kEq, kRange, kIn };

struct WorkloadOptions {
  uint32_t min_predicates = 1;
  uint32_t max_predicates = 3;
  std::vector<PredicateOp> ops{PredicateOp::kEq, PredicateOp::kRange, PredicateOp::kIn};
  bool all_tables = false;               // always query the whole schema
  bool predicate_on_every_table = false;
  uint32_t max_tables = 0;               // 0 = no limit
  bool include_keys = false;             // allow predicates on join keys
};

std::vector<Query> gen_workload(const Database& db, size_t n, uint64_t seed, const WorkloadOptions& options = {});

nlohmann::json workload_to_json(const std::vector<Query>& queries, const Catalog& catalog);
std::vector<Query> workload_from_json(const nlohmann::json& doc, const Catalog& catalog);

}  // namespace glue
