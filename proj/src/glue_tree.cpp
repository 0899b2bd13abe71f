#include "glue/glue_tree.hpp"

#include <algorithm>
#include <bit>
#include <boost/crc.hpp>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "glue/correlate.hpp"
#include "glue/error.hpp"

namespace glue {

using nlohmann::json;

std::string_view to_string(EstimationMode mode) {
  return mode == EstimationMode::kContext ? "context" : "independent";
}
std::string_view to_string(StatsMode mode) { return mode == StatsMode::kExact ? "exact" : "sampled"; }
std::string_view to_string(PartitionMode mode) {
  return mode == PartitionMode::kAdaptive ? "adaptive" : "singleton";
}

EstimationMode estimation_mode_from_string(std::string_view text) {
  if (text == "context") return EstimationMode::kContext;
  if (text == "independent") return EstimationMode::kIndependent;
  throw Error("unknown estimation mode '" + std::string(text) + "'");
}

StatsMode stats_mode_from_string(std::string_view text) {
  if (text == "exact") return StatsMode::kExact;
  if (text == "sampled") return StatsMode::kSampled;
  throw Error("unknown stats mode '" + std::string(text) + "'");
}

PartitionMode partition_mode_from_string(std::string_view text) {
  if (text == "adaptive") return PartitionMode::kAdaptive;
  if (text == "singleton") return PartitionMode::kSingleton;
  throw Error("unknown partition mode '" + std::string(text) + "'");
}

void CostParams::check() const {
  if (alpha < 0 || beta < 0 || gamma < 0) throw Error("cost weights must be non-negative");
  if (alpha == 0 && beta == 0 && gamma == 0) throw Error("at least one cost weight must be positive");
}

double leaf_cost(LeafKind kind, size_t attribute_count) {
  const double k = static_cast<double>(attribute_count);
  return kind == LeafKind::kSpn ? k * k : k;
}

LeafKind TreeConfig::leaf_kind_for(const std::string& table) const {
  auto it = leaf_overrides.find(table);
  return it == leaf_overrides.end() ? default_leaf : it->second;
}

DivideParams TreeConfig::divide_params(uint64_t part_seed) const {
  DivideParams p;
  p.tau = tau;
  p.max_parts = max_parts;
  p.min_rows = min_rows;
  p.seed = part_seed;
  p.rdc_rows = rdc_rows;
  p.rdc = rdc;
  return p;
}

void TreeConfig::check() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw Error("tau must lie in (0,1]");
  if (max_parts < 1) throw Error("max_parts must be >= 1");
  if (sample_n < 1) throw Error("sample size must be >= 1");
  if (rdc_rows < 3) throw Error("rdc_rows must be >= 3");
  cost.check();
  leaf.check();
}

json config_to_json(const TreeConfig& c) {
  json overrides = json::object();
  for (const auto& [table, kind] : c.leaf_overrides) overrides[table] = to_string(kind);
  return {{"mode", to_string(c.mode)},
          {"tau", c.tau},
          {"max_parts", c.max_parts},
          {"min_rows", c.min_rows},
          {"sample_n", c.sample_n},
          {"stats", to_string(c.stats)},
          {"partitions", to_string(c.partitions)},
          {"alpha", c.cost.alpha},
          {"beta", c.cost.beta},
          {"gamma", c.cost.gamma},
          {"default_leaf", to_string(c.default_leaf)},
          {"leaf_overrides", overrides},
          {"leaf", leaf_params_to_json(c.leaf)},
          {"rdc_rows", c.rdc_rows},
          {"rdc_k", c.rdc.k},
          {"rdc_s", c.rdc.s},
          {"rdc_seed", c.rdc.seed},
          {"seed", c.seed}};
}

TreeConfig config_from_json(const json& doc) {
  TreeConfig c;
  c.mode = estimation_mode_from_string(doc.at("mode").get<std::string>());
  c.tau = doc.at("tau").get<double>();
  c.max_parts = doc.at("max_parts").get<size_t>();
  c.min_rows = doc.at("min_rows").get<size_t>();
  c.sample_n = doc.at("sample_n").get<uint64_t>();
  c.stats = stats_mode_from_string(doc.at("stats").get<std::string>());
  c.partitions = partition_mode_from_string(doc.at("partitions").get<std::string>());
  c.cost = {doc.at("alpha").get<double>(), doc.at("beta").get<double>(), doc.at("gamma").get<double>()};
  c.default_leaf = leaf_kind_from_string(doc.at("default_leaf").get<std::string>());
  for (const auto& [table, kind] : doc.at("leaf_overrides").items()) {
    c.leaf_overrides[table] = leaf_kind_from_string(kind.get<std::string>());
  }
  c.leaf = leaf_params_from_json(doc.at("leaf"));
  c.rdc_rows = doc.at("rdc_rows").get<size_t>();
  c.rdc.k = doc.at("rdc_k").get<uint32_t>();
  c.rdc.s = doc.at("rdc_s").get<double>();
  c.rdc.seed = doc.at("rdc_seed").get<uint64_t>();
  c.seed = doc.at("seed").get<uint64_t>();
  return c;
}

double DecompNode::rows() const { return is_leaf() ? static_cast<double>(leaf->row_count()) : w_rows; }

uint32_t DecompositionTree::cover(TableMask tables) const {
  uint32_t id = root;
  if ((nodes.at(id).tables & tables) != tables) throw Error("query references tables outside the tree");
  while (!nodes[id].is_leaf()) {
    const auto& n = nodes[id];
    if ((nodes[n.left].tables & tables) == tables) {
      id = static_cast<uint32_t>(n.left);
    } else if ((nodes[n.right].tables & tables) == tables) {
      id = static_cast<uint32_t>(n.right);
    } else {
      break;
    }
  }
  return id;
}

void DecompositionTree::check() const {
  const auto& cat = catalog();
  for (const auto& n : nodes) {
    if (!cat.is_connected(n.tables)) throw Error("tree node covers a disconnected table set");
    if (n.is_leaf()) {
      if (std::popcount(n.tables) != 1 || n.table < 0 || n.tables != TableMask{1} << n.table || !n.leaf) {
        throw Error("tree leaf must hold exactly one table");
      }
      continue;
    }
    const auto& l = nodes.at(n.left);
    const auto& r = nodes.at(n.right);
    if ((l.tables & r.tables) != 0 || (l.tables | r.tables) != n.tables) throw Error("tree split is not a partition");
    const auto& e = cat.edges.at(n.edge);
    const bool joins = ((l.tables >> e.left.table & 1) && (r.tables >> e.right.table & 1)) ||
                       ((l.tables >> e.right.table & 1) && (r.tables >> e.left.table & 1));
    if (!joins) throw Error("tree split is not joined by its edge");
  }
}

namespace {

uint64_t mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t node_seed(uint64_t seed, TableMask left, TableMask right, uint64_t salt) {
  return mix(seed ^ mix(left * 0x100000001b3ULL + right) ^ mix(salt));
}

std::vector<AttrRef> non_key_attributes(const Catalog& cat, TableMask mask) {
  std::vector<AttrRef> out;
  for (const auto& a : cat.attributes_of(mask)) {
    if (!cat.is_join_key(a)) out.push_back(a);
  }
  return out;
}

uint32_t edge_between(const Catalog& cat, TableMask a, TableMask b) {
  const auto edges = cat.edges_between(a, b);
  if (edges.size() != 1) throw Error("tree split must be joined by exactly one edge");
  return edges.front();
}

// The endpoints of `edge` inside `a` and inside `b`.
std::pair<AttrRef, AttrRef> edge_sides(const Catalog& cat, uint32_t edge, TableMask a) {
  const auto& e = cat.edges[edge];
  return (a >> e.left.table & 1) ? std::pair{e.left, e.right} : std::pair{e.right, e.left};
}

}  // namespace

ScoreFn make_data_score_fn(std::shared_ptr<const Database> db, const TreeConfig& config) {
  struct State {
    std::map<TableMask, std::shared_ptr<JoinedRows>> joins;
    std::map<std::pair<TableMask, TableMask>, double> scores;
  };
  auto state = std::make_shared<State>();
  return [db, config, state](TableMask a, TableMask b) -> double {
    if (a > b) std::swap(a, b);
    auto hit = state->scores.find({a, b});
    if (hit != state->scores.end()) return hit->second;
    const auto& cat = db->catalog;
    const TableMask x = a | b;
    auto& joined = state->joins[x];
    if (!joined) joined = std::make_shared<JoinedRows>(materialize_outer_join(*db, x));
    const auto [a_key, b_key] = edge_sides(cat, edge_between(cat, a, b), a);
    std::vector<uint32_t> pairs;
    for (size_t r = 0; r < joined->size(); ++r) {
      if (joined->row_of(r, a_key.table) >= 0 && joined->row_of(r, b_key.table) >= 0) {
        pairs.push_back(static_cast<uint32_t>(r));
      }
    }
    pairs = scoring_rows(pairs, config.rdc_rows);
    double best = 0.0;
    const auto a_attrs = non_key_attributes(cat, a);
    const auto b_attrs = non_key_attributes(cat, b);
    if (pairs.size() >= 3) {
      std::vector<std::vector<double>> b_values;
      for (const auto& ref : b_attrs) {
        std::vector<double> v;
        for (uint32_t r : pairs) v.push_back(joined->value(*db, r, ref));
        b_values.push_back(std::move(v));
      }
      for (const auto& ref : a_attrs) {
        std::vector<double> v;
        for (uint32_t r : pairs) v.push_back(joined->value(*db, r, ref));
        for (const auto& w : b_values) best = std::max(best, rdc_score(v, w, config.rdc));
      }
    }
    state->scores[{a, b}] = best;
    return best;
  };
}

TreeShape optimal_shape(const Catalog& catalog, TableMask join_set, const CostParams& cost,
                        const std::function<double(uint32_t)>& leaf_cost_of, const ScoreFn& score) {
  if (join_set == 0 || !catalog.is_connected(join_set)) throw Error("disconnected join set");
  cost.check();
  struct Best {
    double cost = 0.0;
    TableMask left = 0;
  };
  std::unordered_map<TableMask, Best> memo;
  std::function<double(TableMask)> solve = [&](TableMask mask) -> double {
    auto it = memo.find(mask);
    if (it != memo.end()) return it->second.cost;
    Best best;
    if (std::popcount(mask) == 1) {
      best.cost = leaf_cost_of(static_cast<uint32_t>(std::countr_zero(mask)));
    } else {
      std::vector<TableMask> subsets;
      for (TableMask sub = (mask - 1) & mask; sub > 0; sub = (sub - 1) & mask) {
        const TableMask other = mask ^ sub;
        if (sub < other && catalog.is_connected(sub) && catalog.is_connected(other)) subsets.push_back(sub);
      }
      std::sort(subsets.begin(), subsets.end());
      bool found = false;
      for (TableMask sub : subsets) {
        const TableMask other = mask ^ sub;
        const double na = std::popcount(sub), nb = std::popcount(other);
        const double s = score(sub, other);
        const double c = cost.alpha * std::min(na, nb) + cost.beta * s + cost.gamma * std::pow(s, std::max(na, nb)) +
                         solve(sub) + solve(other);
        if (!found || c < best.cost) {
          best = {c, sub};
          found = true;
        }
      }
      if (!found) throw Error("no valid split for a table set");
    }
    memo[mask] = best;
    return best.cost;
  };
  solve(join_set);

  TreeShape shape;
  std::function<uint32_t(TableMask)> emit = [&](TableMask mask) -> uint32_t {
    const auto& best = memo.at(mask);
    TreeShape::Node node;
    node.tables = mask;
    node.cost = best.cost;
    if (std::popcount(mask) > 1) {
      node.left = static_cast<int32_t>(emit(best.left));
      node.right = static_cast<int32_t>(emit(mask ^ best.left));
    }
    shape.nodes.push_back(node);
    return static_cast<uint32_t>(shape.nodes.size() - 1);
  };
  shape.root = emit(join_set);
  return shape;
}

namespace {

// One side of an inner node: its outer join, join keys and partner counts.
struct Side {
  TableMask tables = 0;
  AttrRef key;
  JoinedRows joined;
  std::vector<double> keys;
  std::vector<double> fanout;
  std::vector<uint32_t> sample_rows;
  SampleSet sample;  // every attribute of the side over sample_rows
  std::vector<double> sample_fanout;
};

Side materialize_side(const Database& db, TableMask tables, AttrRef key) {
  Side s;
  s.tables = tables;
  s.key = key;
  s.joined = materialize_outer_join(db, tables);
  s.keys.reserve(s.joined.size());
  for (size_t r = 0; r < s.joined.size(); ++r) s.keys.push_back(s.joined.value(db, r, key));
  return s;
}

void count_partners(Side& side, const Side& other) {
  std::unordered_map<double, double> counts;
  for (double k : other.keys) {
    if (!is_null(k)) counts[k] += 1.0;
  }
  side.fanout.resize(side.keys.size());
  for (size_t r = 0; r < side.keys.size(); ++r) {
    auto it = is_null(side.keys[r]) ? counts.end() : counts.find(side.keys[r]);
    side.fanout[r] = it == counts.end() ? 0.0 : it->second;
  }
}

void sample_side(Side& side, const Database& db, const TreeConfig& config, uint64_t seed) {
  const auto& cat = db.catalog;
  if (config.stats == StatsMode::kExact || side.joined.size() <= config.sample_n) {
    side.sample_rows.resize(side.joined.size());
    for (uint32_t r = 0; r < side.sample_rows.size(); ++r) side.sample_rows[r] = r;
  } else {
    for (uint64_t r : sample_indices(side.joined.size(), config.sample_n, seed)) {
      side.sample_rows.push_back(static_cast<uint32_t>(r));
    }
  }
  side.sample.scope = cat.attributes_of(side.tables);
  for (const auto& ref : side.sample.scope) {
    side.sample.kinds.push_back(constraint_kind_of(cat.attribute(ref).kind));
    std::vector<double> column;
    column.reserve(side.sample_rows.size());
    for (uint32_t r : side.sample_rows) column.push_back(side.joined.value(db, r, ref));
    side.sample.columns.push_back(std::move(column));
  }
  side.sample.provenance = config.stats == StatsMode::kExact ? "exact" : "sampled";
  side.sample.seed = seed;
  for (uint32_t r : side.sample_rows) side.sample_fanout.push_back(side.fanout[r]);
}

// Joined (T row, S row) pairs over the non-key attributes of both sides.
SampleSet pair_sample(const Database& db, const Side& t, const Side& s, const TreeConfig& config, uint64_t seed) {
  const auto& cat = db.catalog;
  std::unordered_map<double, std::vector<uint32_t>> s_by_key;
  for (uint32_t r = 0; r < s.keys.size(); ++r) {
    if (!is_null(s.keys[r])) s_by_key[s.keys[r]].push_back(r);
  }
  uint64_t total = 0;
  for (double f : t.fanout) total += static_cast<uint64_t>(f);
  std::vector<uint64_t> picks;
  const bool all = config.stats == StatsMode::kExact || total <= config.sample_n;
  if (!all && total > 0) picks = sample_indices(total, config.sample_n, seed);

  SampleSet out;
  for (const auto& ref : non_key_attributes(cat, t.tables)) out.scope.push_back(ref);
  for (const auto& ref : non_key_attributes(cat, s.tables)) out.scope.push_back(ref);
  for (const auto& ref : out.scope) out.kinds.push_back(constraint_kind_of(cat.attribute(ref).kind));
  out.columns.resize(out.scope.size());
  auto emit = [&](uint32_t tr, uint32_t sr) {
    for (size_t c = 0; c < out.scope.size(); ++c) {
      const auto& ref = out.scope[c];
      const bool on_t = t.tables >> ref.table & 1;
      out.columns[c].push_back(on_t ? t.joined.value(db, tr, ref) : s.joined.value(db, sr, ref));
    }
  };
  uint64_t position = 0;
  size_t next = 0;
  for (uint32_t tr = 0; tr < t.keys.size(); ++tr) {
    if (t.fanout[tr] == 0.0) continue;
    for (uint32_t sr : s_by_key.at(t.keys[tr])) {
      if (all) {
        emit(tr, sr);
      } else if (next < picks.size() && picks[next] == position) {
        emit(tr, sr);
        ++next;
      }
      ++position;
    }
  }
  out.provenance = all ? "exact_pairs" : "sampled_pairs";
  out.seed = seed;
  return out;
}

// Assigns every sample row to the part containing it.
Division locate_rows(const SampleSet& sample, const Partition& partition, const std::vector<double>& scores) {
  std::map<AttrRef, size_t> column_of;
  for (size_t c = 0; c < sample.scope.size(); ++c) column_of[sample.scope[c]] = c;
  Division d;
  d.partition = partition;
  d.scores = scores;
  d.capped.assign(partition.size(), false);
  d.assignment.resize(sample.row_count());
  for (size_t r = 0; r < sample.row_count(); ++r) {
    const auto part = partition.locate([&](AttrRef ref) { return sample.columns[column_of.at(ref)][r]; });
    if (!part) throw Error("partition does not cover a data row");
    d.assignment[r] = static_cast<uint32_t>(*part);
  }
  return d;
}

std::vector<size_t> column_indices(const SampleSet& sample, TableMask tables) {
  std::vector<size_t> out;
  for (size_t c = 0; c < sample.scope.size(); ++c) {
    if (tables >> sample.scope[c].table & 1) out.push_back(c);
  }
  return out;
}

// Partitions to keep when statistics are recomputed; empty means divide afresh.
struct FixedPartitions {
  const DecompNode* previous = nullptr;
  std::vector<StalePart> stale;
};

struct SideSamples {
  Side t;
  Side s;
  SampleSet pairs;
};

SideSamples prepare_sides(const Database& db, const TreeConfig& config, TableMask left, TableMask right,
                          AttrRef t_key, AttrRef s_key) {
  SideSamples out{materialize_side(db, left, t_key), materialize_side(db, right, s_key), {}};
  count_partners(out.t, out.s);
  count_partners(out.s, out.t);
  sample_side(out.t, db, config, node_seed(config.seed, left, right, 1));
  sample_side(out.s, db, config, node_seed(config.seed, left, right, 2));
  if (config.partitions == PartitionMode::kAdaptive) {
    out.pairs = pair_sample(db, out.t, out.s, config, node_seed(config.seed, left, right, 3));
  }
  return out;
}

std::vector<bool> stale_flags(const std::vector<StalePart>& stale, const std::string& which, size_t parts) {
  std::vector<bool> flags(parts, false);
  for (const auto& s : stale) {
    if (s.partition == which) flags.at(s.part) = true;
  }
  return flags;
}

void compute_inner(DecompNode& node, const Database& db, const TreeConfig& config, TableMask left, TableMask right,
                   const FixedPartitions& fixed) {
  const auto& cat = db.catalog;
  node.edge = edge_between(cat, left, right);
  std::tie(node.t_key, node.s_key) = edge_sides(cat, node.edge, left);
  auto sides = prepare_sides(db, config, left, right, node.t_key, node.s_key);
  const Side& t = sides.t;
  const Side& s = sides.s;
  const auto t_params = config.divide_params(node_seed(config.seed, left, right, 4));
  const auto s_params = config.divide_params(node_seed(config.seed, left, right, 5));
  const auto c_params = config.divide_params(node_seed(config.seed, left, right, 6));
  const bool singleton = config.partitions == PartitionMode::kSingleton;
  const DecompNode* previous = singleton ? nullptr : fixed.previous;

  FanoutDivision t_div, s_div;
  if (singleton) {
    static_cast<Division&>(t_div) = divide_singleton(t.sample);
    static_cast<Division&>(s_div) = divide_singleton(s.sample);
  } else if (!previous) {
    // T parts start from a cross-dependence division of the T-side attributes,
    // so that M[k][i] can tell apart the T rows joining different contexts.
    const auto t_columns = column_indices(sides.pairs, left);
    const auto s_columns = column_indices(sides.pairs, right);
    std::vector<AttrRef> t_attrs, s_attrs;
    for (size_t c : t_columns) t_attrs.push_back(sides.pairs.scope[c]);
    for (size_t c : s_columns) s_attrs.push_back(sides.pairs.scope[c]);
    const auto tc_params = config.divide_params(node_seed(config.seed, left, right, 8));
    const auto t_cross = divide_cross(sides.pairs, s_attrs, t_attrs, tc_params);
    auto t_scorer = [&](const std::vector<uint32_t>& rows) {
      return fanout_score(t.sample, t.sample_fanout, rows, t_params);
    };
    auto start = locate_rows(t.sample, t_cross.partition, t_cross.scores);
    static_cast<Division&>(t_div) = refine(t.sample, t.sample.scope, std::move(start),
                                           std::vector<bool>(t_cross.partition.size(), true), t_scorer, t_params);
    s_div = divide_fanout(s.sample, s.sample_fanout, s_params);
  } else {
    auto t_scorer = [&](const std::vector<uint32_t>& rows) {
      return fanout_score(t.sample, t.sample_fanout, rows, t_params);
    };
    auto s_scorer = [&](const std::vector<uint32_t>& rows) {
      return fanout_score(s.sample, s.sample_fanout, rows, s_params);
    };
    static_cast<Division&>(t_div) =
        refine(t.sample, previous->t_part.scope, locate_rows(t.sample, previous->t_part, previous->t_scores),
               stale_flags(fixed.stale, "t", previous->t_part.size()), t_scorer, t_params);
    static_cast<Division&>(s_div) =
        refine(s.sample, previous->s_part.scope, locate_rows(s.sample, previous->s_part, previous->s_scores),
               stale_flags(fixed.stale, "s", previous->s_part.size()), s_scorer, s_params);
  }
  fanout_statistics(t_div, t.sample_fanout);
  fanout_statistics(s_div, s.sample_fanout);

  std::vector<int64_t> s_context(s.keys.size(), -1);
  if (singleton) {
    node.contexts = s_div.partition;
    node.context_scores = s_div.scores;
    if (s.sample_rows.size() == s.keys.size()) {
      for (size_t r = 0; r < s_context.size(); ++r) s_context[r] = s_div.assignment[r];
    }
  } else {
    const auto t_columns = column_indices(sides.pairs, left);
    const auto s_columns = column_indices(sides.pairs, right);
    std::vector<AttrRef> t_attrs, s_attrs;
    for (size_t c : t_columns) t_attrs.push_back(sides.pairs.scope[c]);
    for (size_t c : s_columns) s_attrs.push_back(sides.pairs.scope[c]);
    Division c_div;
    if (!previous) {
      c_div = divide_cross(sides.pairs, t_attrs, s_attrs, c_params);
    } else {
      auto scorer = [&](const std::vector<uint32_t>& rows) {
        return cross_score(sides.pairs, t_columns, s_columns, rows, c_params);
      };
      c_div = refine(sides.pairs, previous->contexts.scope,
                     locate_rows(sides.pairs, previous->contexts, previous->context_scores),
                     stale_flags(fixed.stale, "contexts", previous->contexts.size()), scorer, c_params);
    }
    node.contexts = std::move(c_div.partition);
    node.context_scores = std::move(c_div.scores);
  }
  if (!singleton || s.sample_rows.size() != s.keys.size()) {
    for (size_t r = 0; r < s_context.size(); ++r) {
      if (s.fanout[r] == 0.0) continue;
      const auto part = node.contexts.locate([&](AttrRef ref) { return s.joined.value(db, r, ref); });
      if (!part) throw Error("context partition does not cover a joined row");
      s_context[r] = static_cast<int64_t>(*part);
    }
  }

  std::vector<double> t_sample_keys;
  t_sample_keys.reserve(t.sample_rows.size());
  for (uint32_t r : t.sample_rows) t_sample_keys.push_back(t.keys[r]);
  auto restricted = restricted_fanout_matrix(t_sample_keys, t_div.assignment, t_div.partition.size(), s.keys, s_context);

  node.t_part = std::move(t_div.partition);
  node.t_scores = std::move(t_div.scores);
  node.e_t = std::move(t_div.expectation);
  node.t_null = std::move(t_div.null_mass);
  node.s_part = std::move(s_div.partition);
  node.s_scores = std::move(s_div.scores);
  node.e_s = std::move(s_div.expectation);
  node.s_null = std::move(s_div.null_mass);
  node.m = std::move(restricted.m);

  node.overlap.assign(node.contexts.size(), {});
  for (uint32_t i = 0; i < node.contexts.size(); ++i) {
    if (singleton) {
      node.overlap[i] = {i};
      continue;
    }
    for (uint32_t j = 0; j < node.s_part.size(); ++j) {
      if (!node.contexts.parts[i].intersect(node.s_part.parts[j]).is_empty()) node.overlap[i].push_back(j);
    }
  }

  node.t_rows = static_cast<double>(t.keys.size());
  node.s_rows = static_cast<double>(s.keys.size());
  double pairs = 0.0;
  node.t_dangling = node.s_dangling = 0.0;
  for (double f : t.fanout) {
    pairs += f;
    if (f == 0.0) node.t_dangling += 1.0;
  }
  for (double f : s.fanout) {
    if (f == 0.0) node.s_dangling += 1.0;
  }
  node.w_rows = pairs + node.t_dangling + node.s_dangling;
}

std::shared_ptr<const LeafEstimator> make_leaf(const std::shared_ptr<const Database>& db, const TreeConfig& config,
                                               uint32_t table) {
  const auto kind = config.leaf_kind_for(db->catalog.tables[table].name);
  std::shared_ptr<const TableData> data(db, &db->tables[table]);
  return build_leaf(data, kind, config.leaf, node_seed(config.seed, TableMask{1} << table, 0, 7));
}

bool is_stale(double stored, double fresh, double tau) {
  return fresh > tau && (stored <= tau || fresh > stored + 0.05);
}

}  // namespace

DecompositionTree build_tree(std::shared_ptr<const Database> db, TableMask join_set, const TreeConfig& config) {
  return build_tree(db, join_set, config, make_data_score_fn(db, config));
}

DecompositionTree build_tree(std::shared_ptr<const Database> db, TableMask join_set, const TreeConfig& config,
                             const ScoreFn& score) {
  config.check();
  const auto& cat = db->catalog;
  if (join_set == 0 || (join_set & ~cat.all_tables()) != 0) throw Error("join set references unknown tables");
  if (!cat.is_connected(join_set)) throw Error("disconnected join set");
  auto leaf_cost_of = [&](uint32_t t) {
    return leaf_cost(config.leaf_kind_for(cat.tables[t].name), cat.tables[t].attributes.size());
  };
  const auto shape = optimal_shape(cat, join_set, config.cost, leaf_cost_of, score);

  DecompositionTree tree;
  tree.db = db;
  tree.config = config;
  tree.nodes.resize(shape.nodes.size());
  for (size_t i = 0; i < shape.nodes.size(); ++i) {
    const auto& sn = shape.nodes[i];
    auto& node = tree.nodes[i];
    node.tables = sn.tables;
    node.cost = sn.cost;
    if (sn.left < 0) {
      node.table = std::countr_zero(sn.tables);
      node.leaf = make_leaf(db, config, static_cast<uint32_t>(node.table));
    } else {
      node.left = sn.left;
      node.right = sn.right;
      compute_inner(node, *db, config, shape.nodes[sn.left].tables, shape.nodes[sn.right].tables, {});
    }
  }
  tree.root = shape.root;
  tree.check();
  return tree;
}

std::vector<StalePart> check_update(const DecompositionTree& tree, const Database& fresh, double tau) {
  std::vector<StalePart> stale;
  const auto& config = tree.config;
  for (uint32_t id = 0; id < tree.nodes.size(); ++id) {
    const auto& node = tree.nodes[id];
    if (node.is_leaf()) continue;
    const TableMask left = tree.nodes[node.left].tables;
    const TableMask right = tree.nodes[node.right].tables;
    auto sides = prepare_sides(fresh, config, left, right, node.t_key, node.s_key);
    const auto params = config.divide_params(0);
    auto scan = [&](const SampleSet& sample, const Partition& partition, const std::vector<double>& stored,
                    const std::string& which, const auto& score_of) {
      const auto rows = locate_rows(sample, partition, stored).rows_by_part();
      for (uint32_t p = 0; p < partition.size(); ++p) {
        const double now = score_of(rows[p]);
        if (is_stale(stored[p], now, tau)) stale.push_back({id, which, p, stored[p], now});
      }
    };
    scan(sides.t.sample, node.t_part, node.t_scores, "t",
         [&](const auto& rows) { return fanout_score(sides.t.sample, sides.t.sample_fanout, rows, params).score; });
    scan(sides.s.sample, node.s_part, node.s_scores, "s",
         [&](const auto& rows) { return fanout_score(sides.s.sample, sides.s.sample_fanout, rows, params).score; });
    if (config.partitions == PartitionMode::kAdaptive) {
      const auto t_columns = column_indices(sides.pairs, left);
      const auto s_columns = column_indices(sides.pairs, right);
      scan(sides.pairs, node.contexts, node.context_scores, "contexts", [&](const auto& rows) {
        return cross_score(sides.pairs, t_columns, s_columns, rows, params).score;
      });
    }
  }
  return stale;
}

DecompositionTree apply_update(const DecompositionTree& tree, std::shared_ptr<const Database> fresh, double tau) {
  const auto stale = check_update(tree, *fresh, tau);
  DecompositionTree out;
  out.db = fresh;
  out.config = tree.config;
  out.config.tau = tau;
  out.root = tree.root;
  out.nodes = tree.nodes;
  for (uint32_t id = 0; id < out.nodes.size(); ++id) {
    auto& node = out.nodes[id];
    if (node.is_leaf()) {
      node.leaf = make_leaf(fresh, out.config, static_cast<uint32_t>(node.table));
      continue;
    }
    FixedPartitions fixed;
    fixed.previous = &tree.nodes[id];
    for (const auto& s : stale) {
      if (s.node == id) fixed.stale.push_back(s);
    }
    compute_inner(node, *fresh, out.config, out.nodes[node.left].tables, out.nodes[node.right].tables, fixed);
  }
  out.check();
  return out;
}

json stale_to_json(const std::vector<StalePart>& stale) {
  json out = json::array();
  for (const auto& s : stale) {
    out.push_back({{"node", s.node},
                   {"partition", s.partition},
                   {"part", s.part},
                   {"stored_score", s.stored_score},
                   {"fresh_score", s.fresh_score}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json attr_to_json(AttrRef ref) { return json::array({ref.table, ref.attr}); }
AttrRef attr_from_json(const json& doc) { return {doc.at(0).get<uint32_t>(), doc.at(1).get<uint32_t>()}; }

constexpr char kMagic[8] = {'G', 'L', 'U', 'E', 'T', 'R', 'E', 'E'};
constexpr size_t kHeaderSize = sizeof(kMagic) + sizeof(uint32_t) + sizeof(uint64_t) + sizeof(uint32_t);

template <typename T>
void put(std::vector<uint8_t>& out, T value) {
  uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T get(const std::vector<uint8_t>& in, size_t offset) {
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  return value;
}

uint32_t crc32(const uint8_t* data, size_t size) {
  boost::crc_32_type crc;
  crc.process_bytes(data, size);
  return crc.checksum();
}

}  // namespace

json tree_to_json(const DecompositionTree& tree) {
  json nodes = json::array();
  for (const auto& n : tree.nodes) {
    json j{{"tables", n.tables}, {"cost", n.cost}};
    if (n.is_leaf()) {
      j["table"] = n.table;
      j["leaf"] = n.leaf->to_json();
    } else {
      j["left"] = n.left;
      j["right"] = n.right;
      j["edge"] = n.edge;
      j["t_key"] = attr_to_json(n.t_key);
      j["s_key"] = attr_to_json(n.s_key);
      j["t_part"] = partition_to_json(n.t_part);
      j["s_part"] = partition_to_json(n.s_part);
      j["contexts"] = partition_to_json(n.contexts);
      j["t_scores"] = n.t_scores;
      j["s_scores"] = n.s_scores;
      j["context_scores"] = n.context_scores;
      j["e_t"] = n.e_t;
      j["t_null"] = n.t_null;
      j["e_s"] = n.e_s;
      j["s_null"] = n.s_null;
      json m = json::array();
      for (const auto& row : n.m) {
        json r = json::array();
        for (const auto& [i, v] : row) r.push_back(json::array({i, v}));
        m.push_back(std::move(r));
      }
      j["m"] = std::move(m);
      j["overlap"] = n.overlap;
      j["t_rows"] = n.t_rows;
      j["s_rows"] = n.s_rows;
      j["w_rows"] = n.w_rows;
      j["t_dangling"] = n.t_dangling;
      j["s_dangling"] = n.s_dangling;
    }
    nodes.push_back(std::move(j));
  }
  return {{"version", kTreeFormatVersion},
          {"config", config_to_json(tree.config)},
          {"database", database_to_json(*tree.db)},
          {"root", tree.root},
          {"nodes", std::move(nodes)}};
}

DecompositionTree tree_from_json(const json& doc) {
  try {
    if (doc.at("version").get<uint32_t>() != kTreeFormatVersion) throw Error("version mismatch");
    DecompositionTree tree;
    tree.db = std::make_shared<const Database>(database_from_json(doc.at("database")));
    tree.config = config_from_json(doc.at("config"));
    tree.root = doc.at("root").get<uint32_t>();
    for (const auto& j : doc.at("nodes")) {
      DecompNode n;
      n.tables = j.at("tables").get<TableMask>();
      n.cost = j.at("cost").get<double>();
      if (j.contains("leaf")) {
        n.table = j.at("table").get<int32_t>();
        n.leaf = leaf_from_json(j.at("leaf"), tree.db);
      } else {
        n.left = j.at("left").get<int32_t>();
        n.right = j.at("right").get<int32_t>();
        n.edge = j.at("edge").get<uint32_t>();
        n.t_key = attr_from_json(j.at("t_key"));
        n.s_key = attr_from_json(j.at("s_key"));
        n.t_part = partition_from_json(j.at("t_part"));
        n.s_part = partition_from_json(j.at("s_part"));
        n.contexts = partition_from_json(j.at("contexts"));
        n.t_scores = j.at("t_scores").get<std::vector<double>>();
        n.s_scores = j.at("s_scores").get<std::vector<double>>();
        n.context_scores = j.at("context_scores").get<std::vector<double>>();
        n.e_t = j.at("e_t").get<std::vector<double>>();
        n.t_null = j.at("t_null").get<std::vector<double>>();
        n.e_s = j.at("e_s").get<std::vector<double>>();
        n.s_null = j.at("s_null").get<std::vector<double>>();
        for (const auto& row : j.at("m")) {
          std::vector<std::pair<uint32_t, double>> r;
          for (const auto& e : row) r.emplace_back(e.at(0).get<uint32_t>(), e.at(1).get<double>());
          n.m.push_back(std::move(r));
        }
        n.overlap = j.at("overlap").get<std::vector<std::vector<uint32_t>>>();
        n.t_rows = j.at("t_rows").get<double>();
        n.s_rows = j.at("s_rows").get<double>();
        n.w_rows = j.at("w_rows").get<double>();
        n.t_dangling = j.at("t_dangling").get<double>();
        n.s_dangling = j.at("s_dangling").get<double>();
      }
      tree.nodes.push_back(std::move(n));
    }
    tree.check();
    return tree;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model: ") + e.what());
  }
}

std::vector<uint8_t> serialize_tree(const DecompositionTree& tree) {
  const auto payload = json::to_cbor(tree_to_json(tree));
  std::vector<uint8_t> out(kMagic, kMagic + sizeof(kMagic));
  put<uint32_t>(out, kTreeFormatVersion);
  put<uint64_t>(out, payload.size());
  put<uint32_t>(out, crc32(payload.data(), payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

DecompositionTree deserialize_tree(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error("not a model file");
  }
  const auto version = get<uint32_t>(bytes, sizeof(kMagic));
  if (version != kTreeFormatVersion) {
    throw Error("version mismatch: file has " + std::to_string(version) + ", expected " +
                std::to_string(kTreeFormatVersion));
  }
  const auto size = get<uint64_t>(bytes, sizeof(kMagic) + sizeof(uint32_t));
  const auto crc = get<uint32_t>(bytes, sizeof(kMagic) + sizeof(uint32_t) + sizeof(uint64_t));
  if (bytes.size() - kHeaderSize != size || crc32(bytes.data() + kHeaderSize, bytes.size() - kHeaderSize) != crc) {
    throw Error("checksum failure");
  }
  json doc;
  try {
    doc = json::from_cbor(bytes.begin() + static_cast<std::ptrdiff_t>(kHeaderSize), bytes.end());
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model: ") + e.what());
  }
  return tree_from_json(doc);
}

void save_tree(const DecompositionTree& tree, const std::string& path) {
  const auto bytes = serialize_tree(tree);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write model '" + path + "'");
}

DecompositionTree load_tree(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_tree(bytes);
}

}  // namespace glue
