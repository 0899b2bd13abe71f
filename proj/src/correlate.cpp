#include "glue/correlate.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "glue/error.hpp"

namespace glue {

namespace {

// Empirical CDF value of every entry: share of entries <= it.
Eigen::VectorXd copula(std::span<const double> x) {
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(x.size());
  Eigen::VectorXd out(static_cast<Eigen::Index>(x.size()));
  for (size_t i = 0; i < x.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] =
        static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), x[i]) - sorted.begin()) / n;
  }
  return out;
}

Eigen::MatrixXd random_features(const Eigen::VectorXd& c, uint32_t k, double s, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd weights(2, k);
  for (Eigen::Index j = 0; j < weights.cols(); ++j) {
    for (Eigen::Index i = 0; i < 2; ++i) weights(i, j) = normal(rng);
  }
  Eigen::MatrixXd input(c.size(), 2);
  input.col(0) = c;
  input.col(1).setOnes();
  // Scale by s / (number of input columns).
  return ((s / 2.0) * (input * weights)).array().sin().matrix();
}

// Orthonormal basis of the centred column space, rank-truncated.
std::optional<Eigen::MatrixXd> centred_basis(Eigen::MatrixXd features) {
  features.rowwise() -= features.colwise().mean();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(features, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] <= 1e-12) return std::nullopt;
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv[rank] > 1e-7 * sv[0]) ++rank;
  return svd.matrixU().leftCols(rank);
}

bool is_constant(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
}

}  // namespace

double rdc_score(std::span<const double> x, std::span<const double> y, const CorrelationParams& params) {
  if (x.size() != y.size()) throw Error("rdc_score: length mismatch");
  if (params.k < 1 || !(params.s > 0)) throw Error("rdc_score: need k >= 1 and s > 0");
  if (x.size() < 3 || is_constant(x) || is_constant(y)) return 0.0;
  std::mt19937_64 rng(params.seed);
  const auto fx = random_features(copula(x), params.k, params.s, rng);
  const auto fy = random_features(copula(y), params.k, params.s, rng);
  const auto bx = centred_basis(fx);
  const auto by = centred_basis(fy);
  if (!bx || !by) return 0.0;
  const Eigen::MatrixXd cross = bx->transpose() * *by;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross);
  const double top = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  return std::clamp(top, 0.0, 1.0);
}

std::optional<size_t> SampleSet::column_index(AttrRef ref) const {
  for (size_t i = 0; i < scope.size(); ++i) {
    if (scope[i] == ref) return i;
  }
  return std::nullopt;
}

const std::vector<double>& SampleSet::column(AttrRef ref) const {
  const auto i = column_index(ref);
  if (!i) throw Error("sample has no column for attribute " + std::to_string(ref.table) + "." + std::to_string(ref.attr));
  return columns[*i];
}

PairScore max_pair_score(const SampleSet& sample, std::span<const AttrRef> x_attrs, std::span<const AttrRef> y_attrs,
                         const CorrelationParams& params) {
  if (x_attrs.empty() || y_attrs.empty()) throw Error("max_pair_score: empty attribute scope");
  PairScore best{-1.0, x_attrs.front(), y_attrs.front()};
  for (const auto& x : x_attrs) {
    for (const auto& y : y_attrs) {
      const double score = rdc_score(sample.column(x), sample.column(y), params);
      if (score > best.score) best = {score, x, y};
    }
  }
  return best;
}

PairScore max_pair_score(const SampleSet& a, const SampleSet& b, const CorrelationParams& params) {
  if (a.scope.empty() || b.scope.empty()) throw Error("max_pair_score: empty attribute scope");
  if (a.row_count() != b.row_count()) throw Error("max_pair_score: samples are not row-aligned");
  PairScore best{-1.0, a.scope.front(), b.scope.front()};
  for (size_t i = 0; i < a.scope.size(); ++i) {
    for (size_t j = 0; j < b.scope.size(); ++j) {
      const double score = rdc_score(a.columns[i], b.columns[j], params);
      if (score > best.score) best = {score, a.scope[i], b.scope[j]};
    }
  }
  return best;
}

std::vector<uint64_t> sample_indices(uint64_t population, uint64_t n, uint64_t seed) {
  if (n == 0) throw Error("sample size must satisfy n >= 1");
  std::vector<uint64_t> picked;
  if (n >= population) {
    picked.resize(population);
    std::iota(picked.begin(), picked.end(), uint64_t{0});
    return picked;
  }
  std::mt19937_64 rng(seed);
  picked.resize(n);
  std::iota(picked.begin(), picked.end(), uint64_t{0});
  for (uint64_t i = n; i < population; ++i) {
    std::uniform_int_distribution<uint64_t> pick(0, i);
    const uint64_t j = pick(rng);
    if (j < n) picked[j] = i;
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

namespace {

std::vector<AttrRef> table_scope(const TableData& table) {
  std::vector<AttrRef> scope;
  for (uint32_t a = 0; a < table.columns.size(); ++a) scope.push_back({table.table, a});
  return scope;
}

std::vector<ConstraintKind> table_kinds(const TableData& table) {
  std::vector<ConstraintKind> kinds;
  for (const auto& a : table.meta.attributes) kinds.push_back(constraint_kind_of(a.kind));
  return kinds;
}

}  // namespace

SampleSet draw_sample(const TableData& table, uint64_t n, uint64_t seed) {
  const auto rows = sample_indices(table.row_count(), n, seed);
  SampleSet sample;
  sample.scope = table_scope(table);
  sample.kinds = table_kinds(table);
  sample.columns.resize(table.columns.size());
  for (size_t c = 0; c < table.columns.size(); ++c) {
    sample.columns[c].reserve(rows.size());
    for (uint64_t r : rows) sample.columns[c].push_back(table.columns[c][r]);
  }
  sample.provenance = "single_table";
  sample.seed = seed;
  return sample;
}

FanoutColumn compute_fanout(const TableData& a, const TableData& b, const JoinEdge& edge) {
  if (!((edge.left.table == a.table && edge.right.table == b.table) ||
        (edge.left.table == b.table && edge.right.table == a.table))) {
    throw Error("compute_fanout: edge does not join the two tables");
  }
  const auto& a_key = a.columns[edge.side(a.table).attr];
  const auto& b_key = b.columns[edge.side(b.table).attr];
  std::unordered_map<double, double> counts;
  for (double v : b_key) counts[v] += 1.0;
  FanoutColumn out;
  out.fanout.reserve(a_key.size());
  for (double v : a_key) {
    auto it = counts.find(v);
    out.fanout.push_back(it == counts.end() ? 0.0 : it->second);
  }
  out.clamped = out.fanout;
  for (double& f : out.clamped) f = std::max(f, 1.0);
  return out;
}

SampleSet join_sample(const TableData& left, const TableData& right, const JoinEdge& edge, uint64_t n,
                      JoinSampleMethod method, uint64_t seed) {
  if (n == 0) throw Error("join sample size must satisfy n >= 1");
  if (method == JoinSampleMethod::kOlkenChain && edge.kind != JoinKind::kPkFk) {
    throw Error("olken_chain sampling requires a pk_fk edge");
  }
  const auto l_key = left.columns[edge.side(left.table).attr];
  const auto r_key = right.columns[edge.side(right.table).attr];
  std::unordered_map<double, std::vector<uint32_t>> right_by_key;
  for (uint32_t r = 0; r < r_key.size(); ++r) right_by_key[r_key[r]].push_back(r);
  std::unordered_map<double, uint32_t> left_key_count;
  for (double v : l_key) ++left_key_count[v];

  // Each pair is (left row or -1, right row or -1).
  std::vector<std::pair<int64_t, int64_t>> pairs;
  if (method == JoinSampleMethod::kMaterialize) {
    std::vector<std::pair<int64_t, int64_t>> all;
    std::vector<bool> right_matched(r_key.size(), false);
    for (uint32_t l = 0; l < l_key.size(); ++l) {
      auto it = right_by_key.find(l_key[l]);
      if (it == right_by_key.end()) {
        all.emplace_back(l, -1);
        continue;
      }
      for (uint32_t r : it->second) {
        all.emplace_back(l, r);
        right_matched[r] = true;
      }
    }
    for (uint32_t r = 0; r < r_key.size(); ++r) {
      if (!right_matched[r]) all.emplace_back(-1, r);
    }
    for (uint64_t i : sample_indices(all.size(), n, seed)) pairs.push_back(all[i]);
  } else {
    // Olken: pick a left row uniformly, accept with F*(l) / max F*, then a
    // uniform partner. Dangling right rows are mixed in by their share of |W|.
    std::vector<double> fan(l_key.size());
    double max_fan = 1.0, total = 0.0;
    for (size_t l = 0; l < l_key.size(); ++l) {
      auto it = right_by_key.find(l_key[l]);
      fan[l] = it == right_by_key.end() ? 0.0 : static_cast<double>(it->second.size());
      max_fan = std::max(max_fan, fan[l]);
      total += std::max(fan[l], 1.0);
    }
    std::vector<uint32_t> dangling_right;
    for (uint32_t r = 0; r < r_key.size(); ++r) {
      if (!left_key_count.count(r_key[r])) dangling_right.push_back(r);
    }
    const double w = total + static_cast<double>(dangling_right.size());
    if (w == 0) throw Error("cannot sample from an empty join");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (pairs.size() < n) {
      if (unit(rng) * w < static_cast<double>(dangling_right.size())) {
        std::uniform_int_distribution<size_t> pick(0, dangling_right.size() - 1);
        pairs.emplace_back(-1, dangling_right[pick(rng)]);
        continue;
      }
      if (l_key.empty()) continue;
      std::uniform_int_distribution<size_t> pick_left(0, l_key.size() - 1);
      const size_t l = pick_left(rng);
      if (unit(rng) * max_fan >= std::max(fan[l], 1.0)) continue;
      if (fan[l] == 0.0) {
        pairs.emplace_back(static_cast<int64_t>(l), -1);
      } else {
        const auto& partners = right_by_key.at(l_key[l]);
        std::uniform_int_distribution<size_t> pick_partner(0, partners.size() - 1);
        pairs.emplace_back(static_cast<int64_t>(l), partners[pick_partner(rng)]);
      }
    }
  }

  SampleSet sample;
  sample.scope = table_scope(left);
  const auto right_scope = table_scope(right);
  sample.scope.insert(sample.scope.end(), right_scope.begin(), right_scope.end());
  sample.kinds = table_kinds(left);
  const auto right_kinds = table_kinds(right);
  sample.kinds.insert(sample.kinds.end(), right_kinds.begin(), right_kinds.end());
  sample.columns.resize(sample.scope.size());
  const auto l_fan = compute_fanout(left, right, edge);
  const auto r_fan = compute_fanout(right, left, edge);
  const std::string l_name = "F:" + left.meta.name + "->" + right.meta.name;
  const std::string r_name = "F:" + right.meta.name + "->" + left.meta.name;
  auto& lf = sample.fanouts[l_name];
  auto& rf = sample.fanouts[r_name];
  for (const auto& [l, r] : pairs) {
    for (size_t c = 0; c < left.columns.size(); ++c) sample.columns[c].push_back(l < 0 ? kNull : left.columns[c][l]);
    for (size_t c = 0; c < right.columns.size(); ++c) {
      sample.columns[left.columns.size() + c].push_back(r < 0 ? kNull : right.columns[c][r]);
    }
    lf.push_back(l < 0 ? kNull : l_fan.fanout[l]);
    rf.push_back(r < 0 ? kNull : r_fan.fanout[r]);
  }
  sample.provenance = std::string("join(") + left.meta.name + "," + right.meta.name + "," +
                      (method == JoinSampleMethod::kMaterialize ? "materialize" : "olken_chain") + ")";
  sample.seed = seed;
  return sample;
}

size_t JoinedRows::position(uint32_t table) const {
  auto it = std::lower_bound(tables.begin(), tables.end(), table);
  if (it == tables.end() || *it != table) throw Error("table is not part of the joined rows");
  return static_cast<size_t>(it - tables.begin());
}

double JoinedRows::value(const Database& db, size_t r, AttrRef ref) const {
  const int64_t row = row_of(r, ref.table);
  return row < 0 ? kNull : db.tables[ref.table].columns[ref.attr][static_cast<size_t>(row)];
}

JoinedRows materialize_outer_join(const Database& db, TableMask mask, uint64_t row_limit) {
  const auto& catalog = db.catalog;
  if (!catalog.is_connected(mask)) throw Error("disconnected touched set");
  JoinedRows out;
  for (uint32_t t = 0; t < catalog.table_count(); ++t) {
    if (mask >> t & 1) out.tables.push_back(t);
  }
  const size_t width = out.tables.size();
  const uint32_t first = out.tables.front();
  const auto& first_rows = db.tables[first].row_count();
  if (first_rows > row_limit) throw Error("memory cap exceeded while materializing the join");
  out.rows.assign(first_rows * width, -1);
  for (uint64_t r = 0; r < first_rows; ++r) out.rows[r * width + out.position(first)] = static_cast<int64_t>(r);

  TableMask joined = TableMask{1} << first;
  while (joined != mask) {
    // Next table adjacent to the joined set; acyclicity means exactly one edge.
    uint32_t edge_id = 0;
    uint32_t next = 0;
    bool found = false;
    for (uint32_t e = 0; e < catalog.edges.size() && !found; ++e) {
      const auto& edge = catalog.edges[e];
      const bool l_in = joined >> edge.left.table & 1, r_in = joined >> edge.right.table & 1;
      const bool l_ok = mask >> edge.left.table & 1, r_ok = mask >> edge.right.table & 1;
      if (l_in && !r_in && r_ok) {
        edge_id = e, next = edge.right.table, found = true;
      } else if (r_in && !l_in && l_ok) {
        edge_id = e, next = edge.left.table, found = true;
      }
    }
    if (!found) throw Error("disconnected touched set");
    const auto& edge = catalog.edges[edge_id];
    const AttrRef new_side = edge.side(next);
    const AttrRef old_side = edge.other_side(next);
    const auto& new_key = db.tables[next].columns[new_side.attr];
    std::unordered_map<double, std::vector<uint32_t>> by_key;
    for (uint32_t r = 0; r < new_key.size(); ++r) by_key[new_key[r]].push_back(r);
    std::vector<bool> matched(new_key.size(), false);
    const size_t old_pos = out.position(old_side.table);
    const size_t new_pos = out.position(next);
    std::vector<int64_t> rows;
    rows.reserve(out.rows.size());
    const size_t n = out.size();
    auto emit = [&](const int64_t* tuple, int64_t new_row) {
      if (rows.size() / width >= row_limit) throw Error("memory cap exceeded while materializing the join");
      const size_t base = rows.size();
      rows.insert(rows.end(), tuple, tuple + width);
      rows[base + new_pos] = new_row;
    };
    for (size_t r = 0; r < n; ++r) {
      const int64_t* tuple = &out.rows[r * width];
      const int64_t old_row = tuple[old_pos];
      const std::vector<uint32_t>* partners = nullptr;
      if (old_row >= 0) {
        auto it = by_key.find(db.tables[old_side.table].columns[old_side.attr][static_cast<size_t>(old_row)]);
        if (it != by_key.end()) partners = &it->second;
      }
      if (!partners) {
        emit(tuple, -1);
        continue;
      }
      for (uint32_t p : *partners) {
        emit(tuple, p);
        matched[p] = true;
      }
    }
    std::vector<int64_t> nulls(width, -1);
    for (uint32_t p = 0; p < new_key.size(); ++p) {
      if (!matched[p]) emit(nulls.data(), p);
    }
    out.rows = std::move(rows);
    joined |= TableMask{1} << next;
  }
  return out;
}

std::optional<SplitRule> choose_split(std::vector<double> values, ConstraintKind kind, std::mt19937_64& rng) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  if (values.front() == values.back()) return std::nullopt;
  if (kind == ConstraintKind::kNumeric) {
    double v = values[values.size() / 2];
    if (v == values.front()) v = *std::upper_bound(values.begin(), values.end(), values.front());
    return SplitRule{AttrConstraint::below(kind, v), AttrConstraint::at_least(kind, v)};
  }
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::shuffle(values.begin(), values.end(), rng);
  std::vector<double> left(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2));
  auto left_constraint = AttrConstraint::points(kind, std::move(left));
  auto right_constraint = left_constraint.complement();
  return SplitRule{std::move(left_constraint), std::move(right_constraint)};
}

}  // namespace glue
