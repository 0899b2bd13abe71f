#include "glue/inference.hpp"

#include <algorithm>
#include <bit>
#include <chrono>

#include "glue/error.hpp"

namespace glue {

using nlohmann::json;

std::optional<double> SubplanCache::find(uint32_t node, const RegularRegion& region) {
  auto it = entries_.find(node);
  if (it == entries_.end()) return std::nullopt;
  auto hit = it->second.find(region);
  if (hit == it->second.end()) return std::nullopt;
  ++cache_hits;
  return hit->second;
}

void SubplanCache::store(uint32_t node, const RegularRegion& region, double probability) {
  entries_[node].emplace(region, probability);
}

size_t SubplanCache::size() const {
  size_t n = 0;
  for (const auto& [node, map] : entries_) n += map.size();
  return n;
}

namespace {

class Evaluator {
 public:
  Evaluator(const DecompositionTree& tree, EstimationMode mode, const EstimateOptions& options)
      : tree_(tree), mode_(mode), cache_(options.cache), trace_(options.trace) {}

  uint64_t leaf_calls() const { return leaf_calls_; }
  json take_trace() { return std::move(trace_doc_); }

  double prob(uint32_t id, const RegularRegion& r) {
    if (r.is_unconstrained()) return 1.0;
    if (r.is_empty()) return 0.0;
    if (cache_) {
      if (auto hit = cache_->find(id, r)) return *hit;
    }
    const auto& node = tree_.nodes[id];
    double p;
    if (node.is_leaf()) {
      ++leaf_calls_;
      if (cache_) ++cache_->leaf_calls;
      p = node.leaf->prob(r);
    } else {
      p = inner_prob(node, r);
    }
    p = std::clamp(p, 0.0, 1.0);
    if (cache_) cache_->store(id, r, p);
    if (trace_) trace_doc_.push_back({{"node", id}, {"region", region_to_json(r)}, {"probability", p}});
    return p;
  }

  double distinct(uint32_t id, const RegularRegion& r, const std::vector<AttrRef>& projection) {
    if (r.is_empty()) return 0.0;
    const auto& node = tree_.nodes[id];
    if (projection.empty()) return prob(id, r) > 0.0 ? 1.0 : 0.0;
    if (node.is_leaf()) {
      ++leaf_calls_;
      return node.leaf->distinct(r, projection);
    }
    const TableMask a_tables = tree_.nodes[node.left].tables;
    std::vector<AttrRef> p_t, p_s;
    for (const auto& ref : projection) (a_tables >> ref.table & 1 ? p_t : p_s).push_back(ref);
    const auto r_t = r.project(a_tables);
    const auto r_s = r.project(tree_.nodes[node.right].tables);
    const auto left = static_cast<uint32_t>(node.left);
    const auto right = static_cast<uint32_t>(node.right);

    std::vector<double> d_t(node.t_part.size(), 0.0);
    if (!p_t.empty()) {
      for (size_t k = 0; k < d_t.size(); ++k) d_t[k] = distinct(left, r_t.intersect(node.t_part.parts[k]), p_t);
    }
    if (p_s.empty()) {
      double total = 0.0;
      for (size_t k = 0; k < d_t.size(); ++k) {
        if (node.e_t[k] > 0.0) total += d_t[k];
      }
      return total;
    }
    // Per-context T factor: context mode keeps T parts with partners in the
    // context, independent mode every part with a positive expectation.
    std::vector<double> t_factor(node.contexts.size(), 0.0);
    if (!p_t.empty()) {
      if (mode_ == EstimationMode::kContext) {
        for (size_t k = 0; k < node.m.size(); ++k) {
          for (const auto& [i, v] : node.m[k]) {
            if (v > 0.0) t_factor[i] += d_t[k];
          }
        }
      } else {
        double global = 0.0;
        for (size_t k = 0; k < d_t.size(); ++k) {
          if (node.e_t[k] > 0.0) global += d_t[k];
        }
        std::fill(t_factor.begin(), t_factor.end(), global);
      }
    }
    double total = 0.0;
    for (size_t i = 0; i < node.contexts.size(); ++i) {
      const auto in_context = r_s.intersect(node.contexts.parts[i]);
      if (in_context.is_empty()) continue;
      if (!p_t.empty() && t_factor[i] == 0.0) continue;
      double d_s = 0.0;
      for (uint32_t j : node.overlap[i]) {
        if (node.e_s[j] > 0.0) d_s += distinct(right, in_context.intersect(node.s_part.parts[j]), p_s);
      }
      total += (p_t.empty() ? 1.0 : t_factor[i]) * d_s;
    }
    return total;
  }

 private:
  // Pr_W(R_T) over T parts with clamped expectations, plus S-dangling rows when
  // R_T admits the all-null T side.
  double t_side_mass(const DecompNode& node, const RegularRegion& r_t, const std::vector<double>& p_t) const {
    double sum = 0.0;
    for (size_t k = 0; k < p_t.size(); ++k) sum += p_t[k] * node.e_t[k];
    double mass = node.t_rows / node.w_rows * sum;
    if (r_t.accepts_null()) mass += node.s_dangling / node.w_rows;
    return mass;
  }

  std::vector<double> t_probs(const DecompNode& node, const RegularRegion& r_t) {
    std::vector<double> p(node.t_part.size(), 0.0);
    const auto left = static_cast<uint32_t>(node.left);
    for (size_t k = 0; k < p.size(); ++k) {
      const auto region = r_t.intersect(node.t_part.parts[k]);
      if (!region.is_empty()) p[k] = prob(left, region);
    }
    return p;
  }

  // Σ_i Pr_W(R_S ∩ L_i) with clamped S expectations, plus T-dangling rows
  // (the null context) when R_S admits the all-null S side.
  double s_side_mass(const DecompNode& node, const RegularRegion& r_s) {
    const auto right = static_cast<uint32_t>(node.right);
    double sum = 0.0;
    for (size_t i = 0; i < node.contexts.size(); ++i) {
      const auto in_context = r_s.intersect(node.contexts.parts[i]);
      if (in_context.is_empty()) continue;
      for (uint32_t j : node.overlap[i]) {
        const auto region = in_context.intersect(node.s_part.parts[j]);
        if (!region.is_empty()) sum += prob(right, region) * node.e_s[j];
      }
    }
    double mass = node.s_rows / node.w_rows * sum;
    if (r_s.accepts_null()) mass += node.t_dangling / node.w_rows;
    return mass;
  }

  double inner_prob(const DecompNode& node, const RegularRegion& r) {
    if (node.w_rows <= 0.0) return 0.0;
    const auto r_t = r.project(tree_.nodes[node.left].tables);
    const auto r_s = r.project(tree_.nodes[node.right].tables);
    const bool t_constrained = !r_t.is_unconstrained();
    const bool s_constrained = !r_s.is_unconstrained();
    if (!t_constrained && !s_constrained) return 1.0;

    if (mode_ == EstimationMode::kIndependent) {
      double p = 1.0;
      if (t_constrained) p *= std::clamp(t_side_mass(node, r_t, t_probs(node, r_t)), 0.0, 1.0);
      if (s_constrained) {
        const double full = s_side_mass(node, RegularRegion::full());
        p *= full > 0.0 ? std::clamp(s_side_mass(node, r_s) / full, 0.0, 1.0) : 0.0;
      }
      return p;
    }

    if (!s_constrained) return t_side_mass(node, r_t, t_probs(node, r_t));
    if (!t_constrained) return s_side_mass(node, r_s);

    const auto p_t = t_probs(node, r_t);
    const auto p_full = t_probs(node, RegularRegion::full());
    const auto right = static_cast<uint32_t>(node.right);
    std::vector<double> num(node.contexts.size(), 0.0), den(node.contexts.size(), 0.0);
    for (size_t k = 0; k < node.m.size(); ++k) {
      for (const auto& [i, v] : node.m[k]) {
        num[i] += p_t[k] * v;
        den[i] += p_full[k] * v;
      }
    }
    double joined = 0.0;
    for (size_t i = 0; i < node.contexts.size(); ++i) {
      if (num[i] <= 0.0 || den[i] <= 0.0) continue;
      const auto in_context = r_s.intersect(node.contexts.parts[i]);
      if (in_context.is_empty()) continue;
      double pairs = 0.0;
      for (uint32_t j : node.overlap[i]) {
        const double partners = node.e_s[j] - node.s_null[j];
        if (partners <= 0.0) continue;
        const auto region = in_context.intersect(node.s_part.parts[j]);
        if (!region.is_empty()) pairs += prob(right, region) * partners;
      }
      joined += pairs * (num[i] / den[i]);
    }
    double p = node.s_rows / node.w_rows * joined;
    if (r_s.accepts_null()) {
      double dangling = 0.0;
      for (size_t k = 0; k < p_t.size(); ++k) dangling += p_t[k] * node.t_null[k];
      p += node.t_rows / node.w_rows * dangling;
    }
    if (r_t.accepts_null()) {
      double dangling = 0.0;
      for (size_t j = 0; j < node.s_part.size(); ++j) {
        if (node.s_null[j] <= 0.0) continue;
        const auto region = r_s.intersect(node.s_part.parts[j]);
        if (!region.is_empty()) dangling += prob(right, region) * node.s_null[j];
      }
      p += node.s_rows / node.w_rows * dangling;
    }
    return p;
  }

  const DecompositionTree& tree_;
  EstimationMode mode_;
  SubplanCache* cache_;
  bool trace_;
  json trace_doc_ = json::array();
  uint64_t leaf_calls_ = 0;
};

void check_query(const DecompositionTree& tree, const Query& query) {
  const auto& cat = tree.catalog();
  if (query.tables == 0) throw Error("query names no tables");
  if ((query.tables & ~cat.all_tables()) != 0) throw Error("query references tables outside the tree");
  if (!cat.is_connected(query.tables)) throw Error("disconnected touched set");
  if ((query.region.tables() & ~query.tables) != 0) throw Error("predicate on a table outside the query's tables");
}

}  // namespace

EstimateReport estimate(const DecompositionTree& tree, const Query& query, EstimationMode mode,
                        const EstimateOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  check_query(tree, query);
  const uint32_t cover = tree.cover(query.tables);
  Evaluator evaluator(tree, mode, options);
  EstimateReport report;
  report.probability = evaluator.prob(cover, query.region);
  report.effective_tables = tree.nodes[cover].tables;
  report.cardinality = std::max(0.0, report.probability * tree.nodes[cover].rows());
  report.leaf_calls = evaluator.leaf_calls();
  if (options.trace) report.trace = evaluator.take_trace();
  report.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

EstimateReport estimate(const DecompositionTree& tree, const Query& query) {
  return estimate(tree, query, tree.config.mode);
}

double distinct_estimate(const DecompositionTree& tree, const Query& query, EstimationMode mode) {
  check_query(tree, query);
  const auto projection = query.constrained_attributes();
  if (projection.empty()) throw Error("distinct requires at least one constrained attribute");
  const uint32_t cover = tree.cover(query.tables);
  Evaluator evaluator(tree, mode, {});
  return evaluator.distinct(cover, query.region, projection);
}

SubplanReport estimate_subplans(const DecompositionTree& tree, const Query& query, EstimationMode mode) {
  check_query(tree, query);
  const auto& cat = tree.catalog();
  std::vector<TableMask> subsets{query.tables};
  std::vector<TableMask> rest;
  for (TableMask sub = (query.tables - 1) & query.tables; sub > 0; sub = (sub - 1) & query.tables) {
    if (cat.is_connected(sub)) rest.push_back(sub);
  }
  std::sort(rest.begin(), rest.end());
  subsets.insert(subsets.end(), rest.begin(), rest.end());

  SubplanReport out;
  SubplanCache cache;
  for (TableMask tables : subsets) {
    Query sub{tables, query.region.project(tables), false};
    SubplanEstimate plan;
    plan.tables = tables;
    plan.report = estimate(tree, sub, mode, {&cache, false});
    const auto uncached = estimate(tree, sub, mode, {});
    plan.uncached_probability = uncached.probability;
    plan.uncached_leaf_calls = uncached.leaf_calls;
    out.uncached_leaf_calls += uncached.leaf_calls;
    if (std::bit_cast<uint64_t>(plan.report.probability) != std::bit_cast<uint64_t>(uncached.probability)) {
      out.bit_identical = false;
    }
    out.plans.push_back(std::move(plan));
  }
  out.leaf_calls = cache.leaf_calls;
  out.cache_hits = cache.cache_hits;
  out.cache_entries = cache.size();
  return out;
}

std::vector<std::string> table_names(TableMask tables, const Catalog& catalog) {
  std::vector<std::string> names;
  for (uint32_t t = 0; t < catalog.table_count(); ++t) {
    if (tables >> t & 1) names.push_back(catalog.tables[t].name);
  }
  return names;
}

json estimate_to_json(const EstimateReport& report, const Catalog& catalog) {
  return {{"cardinality", report.cardinality},
          {"probability", report.probability},
          {"effective_tables", table_names(report.effective_tables, catalog)},
          {"leaf_calls", report.leaf_calls},
          {"elapsed_ms", report.elapsed_ms}};
}

json subplans_to_json(const SubplanReport& report, const Catalog& catalog) {
  json plans = json::array();
  for (const auto& p : report.plans) {
    auto j = estimate_to_json(p.report, catalog);
    j["tables"] = table_names(p.tables, catalog);
    j["uncached_probability"] = p.uncached_probability;
    plans.push_back(std::move(j));
  }
  return {{"subplans", std::move(plans)},
          {"leaf_calls", report.leaf_calls},
          {"cache_hits", report.cache_hits},
          {"uncached_leaf_calls", report.uncached_leaf_calls},
          {"cache_entries", report.cache_entries},
          {"bit_identical", report.bit_identical}};
}

}  // namespace glue
