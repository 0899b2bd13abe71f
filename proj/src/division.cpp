#include "glue/division.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <random>
#include <unordered_map>

#include "glue/error.hpp"

namespace glue {

std::vector<std::vector<uint32_t>> Division::rows_by_part() const {
  std::vector<std::vector<uint32_t>> rows(partition.size());
  for (uint32_t r = 0; r < assignment.size(); ++r) rows[assignment[r]].push_back(r);
  return rows;
}

std::vector<uint32_t> scoring_rows(const std::vector<uint32_t>& rows, size_t limit) {
  if (rows.size() <= limit) return rows;
  std::vector<uint32_t> out;
  out.reserve(limit);
  for (size_t i = 0; i < limit; ++i) out.push_back(rows[i * rows.size() / limit]);
  return out;
}

namespace {

std::vector<double> gather(const std::vector<double>& column, const std::vector<uint32_t>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (uint32_t r : rows) out.push_back(column[r]);
  return out;
}

Division single_part(const SampleSet& sample, const std::vector<AttrRef>& scope) {
  Division d;
  d.partition = Partition::single(scope);
  d.assignment.assign(sample.row_count(), 0);
  d.scores = {0.0};
  d.capped = {false};
  return d;
}

}  // namespace

Division refine(const SampleSet& sample, const std::vector<AttrRef>& scope, Division start, std::vector<bool> eligible,
                const PartScorer& scorer, const DivideParams& params) {
  auto rows = start.rows_by_part();
  auto& parts = start.partition.parts;
  std::vector<PartScore> scores(parts.size());
  std::vector<bool> stuck(parts.size(), false);
  for (size_t p = 0; p < parts.size(); ++p) {
    scores[p] = eligible[p] ? scorer(rows[p]) : PartScore{start.scores[p], 0};
  }
  std::mt19937_64 rng(params.seed);

  while (parts.size() < params.max_parts) {
    size_t best = parts.size();
    for (size_t p = 0; p < parts.size(); ++p) {
      if (!eligible[p] || stuck[p] || scores[p].score <= params.tau || rows[p].size() < params.min_rows) continue;
      if (best == parts.size() || scores[p].score > scores[best].score) best = p;
    }
    if (best == parts.size()) break;

    const size_t column = scores[best].column;
    const AttrRef ref = sample.scope[column];
    const auto& values = sample.columns[column];
    auto rule = choose_split(gather(values, rows[best]), sample.kinds[column], rng);
    if (!rule) {
      stuck[best] = true;
      continue;
    }
    std::vector<uint32_t> left, right;
    for (uint32_t r : rows[best]) (rule->left.contains(values[r]) ? left : right).push_back(r);
    if (left.empty() || right.empty()) {
      stuck[best] = true;
      continue;
    }
    RegularRegion right_region = parts[best];
    parts[best].constrain(ref, rule->left);
    right_region.constrain(ref, rule->right);
    parts.push_back(std::move(right_region));
    rows[best] = std::move(left);
    rows.push_back(std::move(right));
    scores[best] = scorer(rows[best]);
    scores.push_back(scorer(rows.back()));
    eligible.push_back(true);
    stuck.push_back(false);
  }

  start.partition.scope = scope;
  start.scores.assign(parts.size(), 0.0);
  start.capped.assign(parts.size(), false);
  for (size_t p = 0; p < parts.size(); ++p) {
    start.scores[p] = scores[p].score;
    start.capped[p] = scores[p].score > params.tau;
    for (uint32_t r : rows[p]) start.assignment[r] = static_cast<uint32_t>(p);
  }
  return start;
}

PartScore fanout_score(const SampleSet& sample, std::span<const double> fanout, const std::vector<uint32_t>& rows,
                       const DivideParams& params) {
  PartScore best;
  if (rows.size() < 3) return best;
  const auto sub = scoring_rows(rows, params.rdc_rows);
  std::vector<double> f;
  f.reserve(sub.size());
  for (uint32_t r : sub) f.push_back(fanout[r]);
  for (size_t c = 0; c < sample.columns.size(); ++c) {
    const double score = rdc_score(gather(sample.columns[c], sub), f, params.rdc);
    if (score > best.score) best = {score, c};
  }
  return best;
}

PartScore cross_score(const SampleSet& joined, std::span<const size_t> t_columns, std::span<const size_t> s_columns,
                      const std::vector<uint32_t>& rows, const DivideParams& params) {
  PartScore best;
  if (rows.size() < 3 || t_columns.empty() || s_columns.empty()) return best;
  const auto sub = scoring_rows(rows, params.rdc_rows);
  std::vector<std::vector<double>> t_values;
  for (size_t c : t_columns) t_values.push_back(gather(joined.columns[c], sub));
  for (size_t s : s_columns) {
    const auto s_values = gather(joined.columns[s], sub);
    for (const auto& t : t_values) {
      const double score = rdc_score(t, s_values, params.rdc);
      if (score > best.score) best = {score, s};
    }
  }
  return best;
}

void fanout_statistics(FanoutDivision& division, std::span<const double> fanout) {
  const size_t parts = division.partition.size();
  std::vector<double> sum(parts, 0.0), nulls(parts, 0.0), count(parts, 0.0);
  for (size_t r = 0; r < division.assignment.size(); ++r) {
    const uint32_t p = division.assignment[r];
    sum[p] += std::max(fanout[r], 1.0);
    nulls[p] += fanout[r] == 0.0 ? 1.0 : 0.0;
    count[p] += 1.0;
  }
  division.expectation.assign(parts, 1.0);
  division.null_mass.assign(parts, 0.0);
  for (size_t p = 0; p < parts; ++p) {
    if (count[p] == 0) continue;
    division.expectation[p] = sum[p] / count[p];
    division.null_mass[p] = nulls[p] / count[p];
  }
}

FanoutDivision divide_fanout(const SampleSet& sample, std::span<const double> fanout, const DivideParams& params) {
  if (fanout.size() != sample.row_count()) throw Error("divide_fanout: fanout column is not row-aligned");
  FanoutDivision out;
  auto scorer = [&](const std::vector<uint32_t>& rows) { return fanout_score(sample, fanout, rows, params); };
  static_cast<Division&>(out) = refine(sample, sample.scope, single_part(sample, sample.scope), {true}, scorer, params);
  fanout_statistics(out, fanout);
  return out;
}

Division divide_cross(const SampleSet& joined, std::span<const AttrRef> t_attrs, std::span<const AttrRef> s_attrs,
                      const DivideParams& params) {
  std::vector<size_t> t_columns, s_columns;
  for (const auto& a : t_attrs) t_columns.push_back(joined.column_index(a).value());
  for (const auto& a : s_attrs) s_columns.push_back(joined.column_index(a).value());
  std::vector<AttrRef> scope(s_attrs.begin(), s_attrs.end());
  auto scorer = [&](const std::vector<uint32_t>& rows) {
    return cross_score(joined, t_columns, s_columns, rows, params);
  };
  return refine(joined, scope, single_part(joined, scope), {true}, scorer, params);
}

Division divide_singleton(const SampleSet& sample) {
  const size_t width = sample.columns.size();
  auto scorer = [&](const std::vector<uint32_t>& rows) {
    PartScore best;
    size_t best_distinct = 0;
    bool varies = false;
    for (size_t c = 0; c < width; ++c) {
      auto values = gather(sample.columns[c], rows);
      std::sort(values.begin(), values.end());
      const size_t d = static_cast<size_t>(std::unique(values.begin(), values.end()) - values.begin());
      if (d > 1) varies = true;
      if (d > best_distinct) best_distinct = d, best.column = c;
    }
    best.score = varies ? 1.0 : 0.0;
    return best;
  };
  DivideParams params;
  params.tau = 0.5;
  params.max_parts = std::numeric_limits<size_t>::max();
  params.min_rows = 2;
  return refine(sample, sample.scope, single_part(sample, sample.scope), {true}, scorer, params);
}

double RestrictedFanout::at(size_t k, size_t i) const {
  for (const auto& [ctx, v] : m[k]) {
    if (ctx == i) return v;
  }
  return 0.0;
}

RestrictedFanout restricted_fanout_matrix(std::span<const double> t_keys, std::span<const uint32_t> t_assignment,
                                          size_t t_parts, std::span<const double> s_keys,
                                          std::span<const int64_t> s_context) {
  if (t_keys.size() != t_assignment.size() || s_keys.size() != s_context.size()) {
    throw Error("restricted_fanout_matrix: inputs are not row-aligned");
  }
  std::unordered_map<double, std::map<uint32_t, double>> by_key;
  std::unordered_map<double, double> partners;
  for (size_t r = 0; r < s_keys.size(); ++r) {
    if (is_null(s_keys[r])) continue;
    partners[s_keys[r]] += 1.0;
    if (s_context[r] >= 0) by_key[s_keys[r]][static_cast<uint32_t>(s_context[r])] += 1.0;
  }
  std::vector<std::map<uint32_t, double>> acc(t_parts);
  std::vector<double> rows(t_parts, 0.0);
  RestrictedFanout out;
  out.null_mass.assign(t_parts, 0.0);
  for (size_t r = 0; r < t_keys.size(); ++r) {
    const uint32_t k = t_assignment[r];
    rows[k] += 1.0;
    const double key = t_keys[r];
    if (is_null(key) || !partners.count(key)) {
      out.null_mass[k] += 1.0;
      continue;
    }
    auto it = by_key.find(key);
    if (it == by_key.end()) continue;
    for (const auto& [ctx, count] : it->second) acc[k][ctx] += count;
  }
  out.m.resize(t_parts);
  for (size_t k = 0; k < t_parts; ++k) {
    if (rows[k] == 0) continue;
    out.null_mass[k] /= rows[k];
    for (const auto& [ctx, total] : acc[k]) out.m[k].emplace_back(ctx, total / rows[k]);
  }
  return out;
}

}  // namespace glue
