#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "glue/catalog.hpp"
#include "glue/division.hpp"
#include "glue/leaf_models.hpp"
#include "glue/regions.hpp"
#include "json.hpp"

namespace glue {

enum class EstimationMode { kIndependent, kContext };
enum class StatsMode { kExact, kSampled };
enum class PartitionMode { kAdaptive, kSingleton };

std::string_view to_string(EstimationMode mode);
std::string_view to_string(StatsMode mode);
std::string_view to_string(PartitionMode mode);
EstimationMode estimation_mode_from_string(std::string_view text);
StatsMode stats_mode_from_string(std::string_view text);
PartitionMode partition_mode_from_string(std::string_view text);

struct CostParams {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;

  void check() const;
};

// g(T) of a leaf: linear in the attribute count, quadratic for SPN leaves.
double leaf_cost(LeafKind kind, size_t attribute_count);

struct TreeConfig {
  EstimationMode mode = EstimationMode::kContext;
  double tau = 0.3;
  size_t max_parts = 64;
  size_t min_rows = 30;
  uint64_t sample_n = 10000;
  StatsMode stats = StatsMode::kExact;
  PartitionMode partitions = PartitionMode::kAdaptive;
  CostParams cost;
  LeafKind default_leaf = LeafKind::kSpn;
  std::map<std::string, LeafKind> leaf_overrides;
  LeafParams leaf;
  size_t rdc_rows = 2000;
  CorrelationParams rdc;
  uint64_t seed = 42;

  LeafKind leaf_kind_for(const std::string& table) const;
  DivideParams divide_params(uint64_t seed) const;
  void check() const;
};

nlohmann::json config_to_json(const TreeConfig& config);
TreeConfig config_from_json(const nlohmann::json& doc);

struct DecompNode {
  TableMask tables = 0;
  // Leaf
  int32_t table = -1;
  std::shared_ptr<const LeafEstimator> leaf;
  // Inner: left child is the T side, right child the S side.
  int32_t left = -1;
  int32_t right = -1;
  uint32_t edge = 0;
  AttrRef t_key;
  AttrRef s_key;
  Partition t_part;
  Partition s_part;
  Partition contexts;
  std::vector<double> t_scores, s_scores, context_scores;
  std::vector<double> e_t;     // mean F*_{T->S} per T part
  std::vector<double> t_null;  // share of F_{T->S} = 0 per T part
  std::vector<double> e_s;     // mean F*_{S->T} per S part
  std::vector<double> s_null;  // share of F_{S->T} = 0 per S part
  std::vector<std::vector<std::pair<uint32_t, double>>> m;  // sparse M[k][i]
  std::vector<std::vector<uint32_t>> overlap;                // S parts meeting context i
  double t_rows = 0.0;      // |T|
  double s_rows = 0.0;      // |S|
  double w_rows = 0.0;      // |W|
  double t_dangling = 0.0;  // T rows without partner
  double s_dangling = 0.0;  // S rows without partner
  double cost = 0.0;        // Cost() of the subtree

  bool is_leaf() const { return left < 0; }
  double rows() const;
};

class DecompositionTree {
 public:
  std::shared_ptr<const Database> db;
  TreeConfig config;
  std::vector<DecompNode> nodes;
  uint32_t root = 0;

  const Catalog& catalog() const { return db->catalog; }
  const DecompNode& node(uint32_t id) const { return nodes.at(id); }
  double cost() const { return nodes.at(root).cost; }
  // Lowest node whose tables include `tables`; throws if none.
  uint32_t cover(TableMask tables) const;
  // Structural validity: root covers the join set, inner splits are connected
  // and joined by their edge, leaves are single tables.
  void check() const;
};

// s(T, S) for two disjoint connected table sets.
using ScoreFn = std::function<double(TableMask, TableMask)>;

// Memoized data-driven cross score: max pair RDC between the non-key
// attributes of both sides over joined rows of their outer join.
ScoreFn make_data_score_fn(std::shared_ptr<const Database> db, const TreeConfig& config);

struct TreeShape {
  struct Node {
    TableMask tables = 0;
    int32_t left = -1;
    int32_t right = -1;
    double cost = 0.0;
  };
  std::vector<Node> nodes;
  uint32_t root = 0;

  double cost() const { return nodes.at(root).cost; }
};

// Subset DP over the tree cost. Ties go to the split whose left side has the
// smaller table mask.
TreeShape optimal_shape(const Catalog& catalog, TableMask join_set, const CostParams& cost,
                        const std::function<double(uint32_t)>& leaf_cost_of, const ScoreFn& score);

DecompositionTree build_tree(std::shared_ptr<const Database> db, TableMask join_set, const TreeConfig& config);
DecompositionTree build_tree(std::shared_ptr<const Database> db, TableMask join_set, const TreeConfig& config,
                             const ScoreFn& score);

struct StalePart {
  uint32_t node = 0;
  std::string partition;  // "t", "s" or "contexts"
  uint32_t part = 0;
  double stored_score = 0.0;
  double fresh_score = 0.0;
};

std::vector<StalePart> check_update(const DecompositionTree& tree, const Database& fresh, double tau);
// Re-splits stale parts on the fresh data and refreshes all statistics and leaves.
DecompositionTree apply_update(const DecompositionTree& tree, std::shared_ptr<const Database> fresh, double tau);
nlohmann::json stale_to_json(const std::vector<StalePart>& stale);

inline constexpr uint32_t kTreeFormatVersion = 1;

nlohmann::json tree_to_json(const DecompositionTree& tree);
DecompositionTree tree_from_json(const nlohmann::json& doc);
std::vector<uint8_t> serialize_tree(const DecompositionTree& tree);
DecompositionTree deserialize_tree(const std::vector<uint8_t>& bytes);
void save_tree(const DecompositionTree& tree, const std::string& path);
DecompositionTree load_tree(const std::string& path);

}  // namespace glue
