// Acceptance harness: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <bit>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../common/exhaustive.hpp"
#include "glue/correlate.hpp"
#include "glue/error.hpp"
#include "glue/glue_tree.hpp"
#include "glue/inference.hpp"
#include "glue/oracle.hpp"

namespace glue {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Every tree built by any criterion, for the model-wide checks (C3, C10).
struct BuiltTree {
  std::string label;
  std::shared_ptr<const DecompositionTree> tree;
};

std::vector<BuiltTree>& registry() {
  static std::vector<BuiltTree> trees;
  return trees;
}

std::shared_ptr<const DecompositionTree> build(const std::string& label, std::shared_ptr<const Database> db,
                                               const TreeConfig& config) {
  auto tree = std::make_shared<const DecompositionTree>(build_tree(db, db->catalog.all_tables(), config));
  registry().push_back({label, tree});
  return tree;
}

TreeConfig exact_config(EstimationMode mode, PartitionMode partitions) {
  TreeConfig config;
  config.mode = mode;
  config.partitions = partitions;
  config.stats = StatsMode::kExact;
  config.default_leaf = LeafKind::kExact;
  return config;
}

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buffer[256];
  std::snprintf(buffer, sizeof(buffer), format, a, b, c);
  return buffer;
}

// C1: singleton partitions with exact leaves reproduce the oracle on 2-table data.
Outcome c1() {
  const auto start = Clock::now();
  std::vector<std::shared_ptr<const Database>> datasets{std::make_shared<const Database>(fixture_a())};
  std::mt19937_64 sizes(1);
  for (uint64_t seed = 0; seed < 50; ++seed) {
    SyntheticSpec spec;
    spec.kind = GeneratorKind::kRandomPair;
    spec.t_rows = std::uniform_int_distribution<uint64_t>(20, 150)(sizes);
    spec.s_rows = std::uniform_int_distribution<uint64_t>(20, 300)(sizes);
    spec.domain = 8;
    datasets.push_back(std::make_shared<const Database>(gen_synthetic(spec, 100 + seed)));
  }
  double worst = 1.0;
  size_t queries = 0;
  WorkloadOptions options;
  options.all_tables = true;
  for (size_t d = 0; d < datasets.size(); ++d) {
    const auto& db = datasets[d];
    const auto tree = build("c1/" + std::to_string(d), db, exact_config(EstimationMode::kContext, PartitionMode::kSingleton));
    for (const auto& q : gen_workload(*db, 200, 500 + d, options)) {
      const auto est = estimate(*tree, q, EstimationMode::kContext);
      worst = std::max(worst, qerror(est.cardinality, static_cast<double>(exec_exact(*db, q, est.effective_tables))));
      ++queries;
    }
  }
  const double elapsed = seconds_since(start);
  Outcome out;
  out.pass = worst - 1.0 <= 1e-9 && elapsed < 60.0;
  out.detail = fmt("max q-error %.12g over %.0f queries, %.1f s (limit 1+1e-9, 60 s)", worst,
                   static_cast<double>(queries), elapsed);
  return out;
}

// C2: cross-independent data, one context, independent mode.
Outcome c2() {
  SyntheticSpec spec;
  spec.kind = GeneratorKind::kIndependent;
  spec.t_rows = 1000;
  spec.s_rows = 2000;
  spec.attributes = 2;
  const auto db = std::make_shared<const Database>(gen_synthetic(spec, 21));
  auto config = exact_config(EstimationMode::kIndependent, PartitionMode::kAdaptive);
  config.max_parts = 1;
  const auto tree = build("c2", db, config);
  const auto& root = tree->node(tree->root);
  double worst = 1.0;
  for (const auto& q : gen_workload(*db, 200, 22)) {
    const auto est = estimate(*tree, q, EstimationMode::kIndependent);
    worst = std::max(worst, qerror(est.cardinality, static_cast<double>(exec_exact(*db, q, est.effective_tables))));
  }
  Outcome out;
  out.pass = root.contexts.size() == 1 && worst - 1.0 <= 1e-6;
  out.detail = fmt("max q-error %.12g over 200 queries, %.0f context(s) (limit 1+1e-6)", worst,
                   static_cast<double>(root.contexts.size()));
  return out;
}

// C4: deterministic cross-table dependence; context mode must beat independence.
Outcome c4() {
  const auto start = Clock::now();
  SyntheticSpec spec;
  spec.kind = GeneratorKind::kCorrelated;
  spec.t_rows = 1000;
  spec.s_rows = 2000;
  spec.attributes = 1;
  spec.domain = 20;
  const auto db = std::make_shared<const Database>(gen_synthetic(spec, 41));
  const TableMask both = 0b11;

  // The construction bound, checked on the oracle alone: the independence
  // product W * Pr(Q_T) * Pr(Q_S) is off by >= 2x on at least half the point queries.
  const double w = static_cast<double>(exec_exact(*db, Query{both, {}, false}));
  size_t off = 0, points = 0;
  for (uint32_t a = 0; a < spec.domain; ++a) {
    for (uint32_t b = 0; b < spec.domain; ++b) {
      Query qt{both, {}, false}, qs{both, {}, false}, q{both, {}, false};
      qt.region.constrain({0, 1}, AttrConstraint::points(ConstraintKind::kNumeric, {double(a)}));
      qs.region.constrain({1, 1}, AttrConstraint::points(ConstraintKind::kNumeric, {double(b)}));
      q.region = qt.region.intersect(qs.region);
      const double product = w * (exec_exact(*db, qt) / w) * (exec_exact(*db, qs) / w);
      off += qerror(product, static_cast<double>(exec_exact(*db, q))) >= 2.0;
      ++points;
    }
  }
  const bool bound = 2 * off >= points;

  TreeConfig config;
  config.stats = StatsMode::kExact;
  const auto tree = build("c4", db, config);
  WorkloadOptions options;
  options.all_tables = true;
  options.predicate_on_every_table = true;
  options.ops = {PredicateOp::kRange};
  std::vector<double> context, independent;
  for (const auto& q : gen_workload(*db, 200, 42, options)) {
    const double truth = static_cast<double>(exec_exact(*db, q));
    context.push_back(qerror(estimate(*tree, q, EstimationMode::kContext).cardinality, truth));
    independent.push_back(qerror(estimate(*tree, q, EstimationMode::kIndependent).cardinality, truth));
  }
  const auto ctx = QErrorSummary::summarize(context);
  const auto ind = QErrorSummary::summarize(independent);
  const double elapsed = seconds_since(start);
  Outcome out;
  out.pass = bound && ctx.median < ind.median && ind.median >= 1.5 && elapsed < 60.0;
  out.detail = fmt("median q-error context %.4g vs independent %.4g (need ind >= 1.5), ", ctx.median, ind.median) +
               std::to_string(off) + "/" + std::to_string(points) + " point queries off by >= 2x, " +
               fmt("%.1f s", elapsed);
  return out;
}

// C5: cached sub-plan enumeration on a 4-table chain.
Outcome c5() {
  SyntheticSpec spec;
  spec.kind = GeneratorKind::kChain;
  spec.tables = 4;
  spec.t_rows = 300;
  spec.attributes = 2;
  const auto db = std::make_shared<const Database>(gen_synthetic(spec, 51));
  TreeConfig config;
  config.stats = StatsMode::kExact;
  const auto tree = build("c5", db, config);
  WorkloadOptions options;
  options.all_tables = true;
  options.predicate_on_every_table = true;
  bool identical = true, fewer = true;
  uint64_t cached = 0, uncached = 0;
  size_t plans = 0;
  for (const auto& q : gen_workload(*db, 20, 52, options)) {
    const auto report = estimate_subplans(*tree, q, tree->config.mode);
    for (const auto& plan : report.plans) {
      identical = identical && std::bit_cast<uint64_t>(plan.report.probability) ==
                                   std::bit_cast<uint64_t>(plan.uncached_probability);
    }
    identical = identical && report.bit_identical && report.plans.size() == 10;
    fewer = fewer && report.leaf_calls < report.uncached_leaf_calls;
    cached += report.leaf_calls;
    uncached += report.uncached_leaf_calls;
    plans += report.plans.size();
  }
  Outcome out;
  out.pass = identical && fewer;
  out.detail = std::to_string(plans) + " sub-plans bit-identical=" + (identical ? "yes" : "no") + ", leaf calls " +
               std::to_string(cached) + " cached vs " + std::to_string(uncached) + " uncached";
  return out;
}

// C6: DP cost equals the exhaustive minimum over valid trees.
Outcome c6() {
  size_t schemas = 0, matched = 0;
  std::string worst;
  for (uint32_t tables : {4u, 5u}) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
      SyntheticSpec spec;
      spec.kind = seed % 2 == 0 ? GeneratorKind::kRandomTree : GeneratorKind::kChain;
      spec.tables = tables;
      spec.t_rows = 150;
      spec.attributes = 2;
      const auto db = std::make_shared<const Database>(gen_synthetic(spec, 600 + 10 * tables + seed));
      TreeConfig config;
      config.stats = StatsMode::kExact;
      config.seed = seed;
      const auto tree = build("c6/" + std::to_string(tables) + "/" + std::to_string(seed), db, config);
      const auto score = make_data_score_fn(db, config);
      const auto leaf = [&](uint32_t t) {
        return leaf_cost(config.leaf_kind_for(db->catalog.tables[t].name), db->catalog.tables[t].attributes.size());
      };
      const double best = testing::exhaustive_min_cost(db->catalog, db->catalog.all_tables(), config.cost, leaf, score);
      ++schemas;
      if (tree->cost() == best) {
        ++matched;
      } else {
        worst = fmt(" (mismatch %.17g vs %.17g)", tree->cost(), best);
      }
    }
  }
  Outcome out;
  out.pass = matched == schemas;
  out.detail = std::to_string(matched) + "/" + std::to_string(schemas) + " schemas at the exhaustive minimum" + worst;
  return out;
}

// C7: (a) SPN single-attribute distinct on constructed data; (b) join distinct formula outputs on Fixture A.
Outcome c7() {
  size_t checked = 0, exact = 0, datasets = 0;
  for (uint64_t seed = 0; seed < 4; ++seed) {
    // y is a function of x, so every sum split separates x values.
    std::mt19937_64 rng(700 + seed);
    const int domain = 30 + 10 * static_cast<int>(seed);
    TableData data;
    data.meta.name = "R";
    for (const char* name : {"x", "y"}) {
      AttributeMeta attr;
      attr.name = name;
      attr.min = 0;
      attr.max = 1000;
      data.meta.attributes.push_back(attr);
    }
    data.columns.resize(2);
    for (int r = 0; r < 2000; ++r) {
      const int x = static_cast<int>(rng() % domain);
      data.columns[0].push_back(x);
      data.columns[1].push_back(seed % 2 == 0 ? x : (3 * x) % domain);
    }
    data.meta.row_count = data.row_count();
    const auto spn = SpnModel::build(data, {}, seed);
    std::set<uint32_t> split_attrs;
    for (const auto& node : spn->nodes()) {
      if (node.type == SpnNode::Type::kSum) split_attrs.insert(node.split_attr);
    }
    if (split_attrs.size() != 1) continue;
    ++datasets;
    const uint32_t attr = *split_attrs.begin();
    for (int lo = 0; lo < domain; lo += 3) {
      for (int hi : {lo, lo + 4, domain + 5}) {
        RegularRegion r;
        r.constrain({0, attr}, AttrConstraint::range(ConstraintKind::kNumeric, lo, hi));
        std::set<double> truth;
        for (size_t i = 0; i < data.row_count(); ++i) {
          if (data.columns[attr][i] >= lo && data.columns[attr][i] <= hi) truth.insert(data.columns[attr][i]);
        }
        ++checked;
        exact += spn->distinct(r) == static_cast<double>(truth.size());
      }
    }
  }

  const auto db = std::make_shared<const Database>(fixture_a());
  const auto tree = build("c7", db, exact_config(EstimationMode::kContext, PartitionMode::kSingleton));
  const auto b100 = parse_query(R"({"tables":["T","S"],"predicates":[{"col":"S.b","op":"eq","val":100}]})", db->catalog);
  const auto q1 = parse_query(
      R"({"tables":["T","S"],"predicates":[{"col":"T.a","op":"eq","val":10},{"col":"S.b","op":"eq","val":100}]})",
      db->catalog);
  const double d_b100 = distinct_estimate(*tree, b100, EstimationMode::kContext);
  const double d_q1 = distinct_estimate(*tree, q1, EstimationMode::kIndependent);
  const auto oracle_b100 = exec_distinct(*db, b100);

  Outcome out;
  out.pass = datasets >= 2 && exact == checked && d_b100 == 1.0 && oracle_b100 == 1 && d_q1 == 2.0;
  out.detail = "(a) " + std::to_string(exact) + "/" + std::to_string(checked) + " SPN distinct exact on " +
               std::to_string(datasets) + " datasets; (b) " +
               fmt("{b=100} -> %g (oracle %g), {a=10,b=100} independent -> %g", d_b100,
                   static_cast<double>(oracle_b100), d_q1);
  return out;
}

// C8: fanout statistics on Fixture A.
Outcome c8() {
  const auto db = std::make_shared<const Database>(fixture_a());
  const auto& edge = db->catalog.edges[0];
  const auto t_to_s = compute_fanout(db->tables[0], db->tables[1], edge);
  const auto s_to_t = compute_fanout(db->tables[1], db->tables[0], edge);
  const auto tree = build("c8", db, exact_config(EstimationMode::kContext, PartitionMode::kSingleton));
  const double w = tree->node(tree->root).w_rows;
  Outcome out;
  out.pass = t_to_s.fanout == std::vector<double>{2, 1, 0, 0} && t_to_s.clamped == std::vector<double>{2, 1, 1, 1} &&
             s_to_t.clamped == std::vector<double>{1, 1, 1, 1} && w == 6.0 &&
             exec_exact(*db, Query{0b11, {}, false}) == 6;
  out.detail = fmt("F_T->S=[%g,%g,...], |W|=%g", t_to_s.fanout[0], t_to_s.fanout[1], w);
  return out;
}

// C9: byte-identical rebuilds and bit-identical estimates after a file round trip.
Outcome c9() {
  SyntheticSpec spec;
  spec.kind = GeneratorKind::kCorrelated;
  spec.t_rows = 400;
  spec.s_rows = 900;
  spec.attributes = 2;
  const auto db = std::make_shared<const Database>(gen_synthetic(spec, 91));
  TreeConfig config;
  config.stats = StatsMode::kSampled;
  config.sample_n = 500;
  config.leaf_overrides["T"] = LeafKind::kSample;
  config.seed = 9;
  const auto a = build("c9/sampled", db, config);
  const auto b = build_tree(db, db->catalog.all_tables(), config);
  const bool bytes_equal = serialize_tree(*a) == serialize_tree(b);

  const auto path = (std::filesystem::temp_directory_path() / "glue_c9_model.bin").string();
  save_tree(*a, path);
  const auto loaded = load_tree(path);
  std::filesystem::remove(path);
  size_t equal = 0;
  const auto queries = gen_workload(*db, 100, 92);
  for (const auto& q : queries) {
    const auto x = estimate(*a, q), y = estimate(loaded, q);
    equal += std::bit_cast<uint64_t>(x.cardinality) == std::bit_cast<uint64_t>(y.cardinality);
  }
  Outcome out;
  out.pass = bytes_equal && equal == queries.size();
  out.detail = std::string("rebuild byte-identical=") + (bytes_equal ? "yes" : "no") + ", " + std::to_string(equal) +
               "/" + std::to_string(queries.size()) + " estimates bit-identical after load(save())";
  return out;
}

// C3: the unconstrained full-schema query returns the stored |W|, equal to the oracle.
Outcome c3() {
  size_t ok = 0, total = 0;
  std::string bad;
  for (const auto& [label, tree] : registry()) {
    if (tree->config.stats != StatsMode::kExact) continue;
    ++total;
    const Query all{tree->catalog().all_tables(), {}, false};
    const double est = estimate(*tree, all).cardinality;
    const double stored = tree->node(tree->root).w_rows;
    const double truth = static_cast<double>(exec_exact(*tree->db, all));
    if (est == stored && stored == truth) {
      ++ok;
    } else {
      bad += " " + label;
    }
  }
  Outcome out;
  out.pass = total > 0 && ok == total;
  out.detail = std::to_string(ok) + "/" + std::to_string(total) + " exact-stats models normalized" + bad;
  return out;
}

// C10: every partition is pairwise disjoint and places each row in exactly one part.
Outcome c10() {
  size_t partitions = 0, rows = 0;
  std::string bad;
  const auto check = [&](const Partition& p, const Database& db, TableMask tables, const std::string& where) {
    ++partitions;
    if (!p.pairwise_disjoint()) bad += " " + where + "(overlap)";
    const auto joined = materialize_outer_join(db, tables);
    for (size_t r = 0; r < joined.size(); ++r) {
      const auto value_of = [&](AttrRef ref) { return joined.value(db, r, ref); };
      size_t hits = 0;
      for (const auto& part : p.parts) hits += part.contains(value_of);
      ++rows;
      if (hits != 1) {
        bad += " " + where + "(row " + std::to_string(r) + " in " + std::to_string(hits) + " parts)";
        return;
      }
    }
  };
  for (const auto& [label, tree] : registry()) {
    for (uint32_t id = 0; id < tree->nodes.size(); ++id) {
      const auto& node = tree->nodes[id];
      const auto where = label + "#" + std::to_string(id);
      if (node.is_leaf()) {
        const auto* spn = dynamic_cast<const SpnModel*>(node.leaf.get());
        if (spn == nullptr) continue;
        const auto& data = tree->db->tables[static_cast<size_t>(node.table)];
        for (const auto& s : spn->nodes()) {
          if (s.type != SpnNode::Type::kSum) continue;
          ++partitions;
          for (double v : data.columns[s.split_attr]) {
            size_t hits = 0;
            for (const auto& c : s.split) hits += c.contains(v);
            ++rows;
            if (hits != 1) bad += " " + where + "(spn split)";
          }
        }
        continue;
      }
      const auto t_tables = tree->nodes[static_cast<size_t>(node.left)].tables;
      const auto s_tables = tree->nodes[static_cast<size_t>(node.right)].tables;
      check(node.t_part, *tree->db, t_tables, where + "/t");
      check(node.s_part, *tree->db, s_tables, where + "/s");
      check(node.contexts, *tree->db, s_tables, where + "/contexts");
    }
  }
  Outcome out;
  out.pass = partitions > 0 && bad.empty();
  out.detail = std::to_string(partitions) + " partitions, " + std::to_string(rows) + " row placements checked" +
               (bad.empty() ? "" : ";" + bad.substr(0, 400));
  return out;
}

}  // namespace
}  // namespace glue

int main(int argc, char** argv) {
  using namespace glue;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"C1", c1}, {"C2", c2}, {"C4", c4}, {"C5", c5}, {"C6", c6},
      {"C7", c7}, {"C8", c8}, {"C9", c9}, {"C3", c3}, {"C10", c10}};
  const std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    const auto start = Clock::now();
    Outcome outcome;
    try {
      outcome = run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failures += !outcome.pass;
    std::printf("%-4s %s  %s  [%.1f s]\n", name.c_str(), outcome.pass ? "PASS" : "FAIL", outcome.detail.c_str(),
                seconds_since(start));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
