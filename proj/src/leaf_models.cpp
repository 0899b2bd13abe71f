#include "glue/leaf_models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "glue/error.hpp"

namespace glue {

using nlohmann::json;

std::string_view to_string(LeafKind kind) {
  switch (kind) {
    case LeafKind::kExact:
      return "exact";
    case LeafKind::kHistogram:
      return "histogram";
    case LeafKind::kSample:
      return "sample";
    case LeafKind::kSpn:
      return "spn";
  }
  return "exact";
}

LeafKind leaf_kind_from_string(std::string_view text) {
  if (text == "exact") return LeafKind::kExact;
  if (text == "histogram") return LeafKind::kHistogram;
  if (text == "sample") return LeafKind::kSample;
  if (text == "spn") return LeafKind::kSpn;
  throw Error("unknown leaf kind '" + std::string(text) + "'");
}

void LeafParams::check() const {
  if (histogram_buckets < 1 || spn_leaf_buckets < 1) throw Error("invalid leaf parameters: bucket count must be >= 1");
  if (sample_size < 1) throw Error("invalid leaf parameters: sample size must be >= 1");
  if (!(tau_ind > 0.0 && tau_ind < 1.0)) throw Error("invalid leaf parameters: tau_ind must lie in (0,1)");
  if (spn_min_rows < 1 || rdc_rows < 3) throw Error("invalid leaf parameters: row thresholds too small");
  if (rdc.k < 1 || !(rdc.s > 0.0)) throw Error("invalid leaf parameters: rdc needs k >= 1 and s > 0");
}

json leaf_params_to_json(const LeafParams& p) {
  return {{"histogram_buckets", p.histogram_buckets}, {"sample_size", p.sample_size},
          {"tau_ind", p.tau_ind},                     {"spn_min_rows", p.spn_min_rows},
          {"spn_leaf_buckets", p.spn_leaf_buckets},   {"rdc_rows", p.rdc_rows},
          {"rdc_k", p.rdc.k},                         {"rdc_s", p.rdc.s},
          {"rdc_seed", p.rdc.seed}};
}

LeafParams leaf_params_from_json(const json& doc) {
  LeafParams p;
  p.histogram_buckets = doc.value("histogram_buckets", p.histogram_buckets);
  p.sample_size = doc.value("sample_size", p.sample_size);
  p.tau_ind = doc.value("tau_ind", p.tau_ind);
  p.spn_min_rows = doc.value("spn_min_rows", p.spn_min_rows);
  p.spn_leaf_buckets = doc.value("spn_leaf_buckets", p.spn_leaf_buckets);
  p.rdc_rows = doc.value("rdc_rows", p.rdc_rows);
  p.rdc.k = doc.value("rdc_k", p.rdc.k);
  p.rdc.s = doc.value("rdc_s", p.rdc.s);
  p.rdc.seed = doc.value("rdc_seed", p.rdc.seed);
  return p;
}

namespace {

json encode_double(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return v;
}

double decode_double(const json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw Error("malformed number '" + s + "'");
  }
  return v.get<double>();
}

json constraint_to_json(const AttrConstraint& c) {
  json ivs = json::array();
  for (const auto& iv : c.intervals()) ivs.push_back({encode_double(iv.lo), encode_double(iv.hi)});
  return {{"kind", c.kind() == ConstraintKind::kNumeric ? "numeric" : "categorical"}, {"intervals", ivs}};
}

AttrConstraint constraint_from_json(const json& doc) {
  const auto kind = doc.at("kind").get<std::string>() == "numeric" ? ConstraintKind::kNumeric
                                                                    : ConstraintKind::kCategorical;
  std::vector<Interval> ivs;
  for (const auto& iv : doc.at("intervals")) ivs.push_back({decode_double(iv.at(0)), decode_double(iv.at(1))});
  return AttrConstraint::from_intervals(kind, std::move(ivs));
}

}  // namespace

// ---------------------------------------------------------------------------
// LeafEstimator

void LeafEstimator::check_scope(const RegularRegion& r) const {
  for (const auto& [ref, c] : r.items()) {
    if (ref.table != table_ || ref.attr >= attr_count_) throw Error("region scope violation");
  }
}

double LeafEstimator::prob(const RegularRegion& r) const {
  check_scope(r);
  if (r.is_unconstrained()) return 1.0;
  if (r.is_empty() || row_count_ == 0) return 0.0;
  return std::clamp(do_prob(r), 0.0, 1.0);
}

double LeafEstimator::distinct(const RegularRegion& r, std::span<const AttrRef> projection) const {
  check_scope(r);
  if (projection.empty()) throw Error("distinct requires at least one constrained attribute");
  for (const auto& ref : projection) {
    if (ref.table != table_ || ref.attr >= attr_count_) throw Error("region scope violation");
  }
  if (r.is_empty() || row_count_ == 0) return 0.0;
  return std::max(0.0, do_distinct(r, projection));
}

double LeafEstimator::distinct(const RegularRegion& r) const {
  std::vector<AttrRef> projection;
  for (const auto& [ref, c] : r.items()) projection.push_back(ref);
  return distinct(r, projection);
}

json LeafEstimator::header_json() const {
  return {{"kind", to_string(kind())}, {"table", table_}, {"attr_count", attr_count_}, {"row_count", row_count_}};
}

// ---------------------------------------------------------------------------
// ExactModel

ExactModel::ExactModel(std::shared_ptr<const TableData> data)
    : LeafEstimator(data->table, static_cast<uint32_t>(data->columns.size()), data->row_count()),
      data_(std::move(data)) {
  for (const auto& column : data_->columns) {
    std::vector<uint32_t> order(column.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) { return column[a] < column[b]; });
    std::vector<double> sorted;
    sorted.reserve(order.size());
    for (uint32_t r : order) sorted.push_back(column[r]);
    order_.push_back(std::move(order));
    sorted_.push_back(std::move(sorted));
  }
}

std::vector<uint32_t> ExactModel::matching_rows(const RegularRegion& r) const {
  // Scan candidates of the most selective constrained attribute.
  size_t best_attr = 0;
  size_t best_count = std::numeric_limits<size_t>::max();
  for (const auto& [ref, c] : r.items()) {
    const auto& sorted = sorted_[ref.attr];
    size_t count = 0;
    for (const auto& iv : c.intervals()) {
      count += static_cast<size_t>(std::upper_bound(sorted.begin(), sorted.end(), iv.hi) -
                                   std::lower_bound(sorted.begin(), sorted.end(), iv.lo));
    }
    if (count < best_count) best_count = count, best_attr = ref.attr;
  }
  std::vector<uint32_t> rows;
  if (r.is_unconstrained()) {
    rows.resize(row_count());
    std::iota(rows.begin(), rows.end(), 0u);
    return rows;
  }
  const auto& sorted = sorted_[best_attr];
  const auto& order = order_[best_attr];
  const auto* c = r.find({table(), static_cast<uint32_t>(best_attr)});
  for (const auto& iv : c->intervals()) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), iv.lo) - sorted.begin();
    const auto hi = std::upper_bound(sorted.begin(), sorted.end(), iv.hi) - sorted.begin();
    for (auto i = lo; i < hi; ++i) {
      const uint32_t row = order[static_cast<size_t>(i)];
      if (r.contains([&](AttrRef ref) { return data_->columns[ref.attr][row]; })) rows.push_back(row);
    }
  }
  return rows;
}

double ExactModel::do_prob(const RegularRegion& r) const {
  return static_cast<double>(matching_rows(r).size()) / static_cast<double>(row_count());
}

double ExactModel::do_distinct(const RegularRegion& r, std::span<const AttrRef> projection) const {
  const auto rows = matching_rows(r);
  std::vector<std::vector<double>> tuples;
  tuples.reserve(rows.size());
  for (uint32_t row : rows) {
    std::vector<double> t;
    t.reserve(projection.size());
    for (const auto& ref : projection) t.push_back(data_->columns[ref.attr][row]);
    tuples.push_back(std::move(t));
  }
  std::sort(tuples.begin(), tuples.end());
  return static_cast<double>(std::unique(tuples.begin(), tuples.end()) - tuples.begin());
}

json ExactModel::to_json() const { return header_json(); }

// ---------------------------------------------------------------------------
// Histogram1D

Histogram1D Histogram1D::build(std::vector<double> values, AttributeKind kind, uint32_t max_buckets) {
  if (max_buckets < 1) throw Error("histogram needs at least one bucket");
  Histogram1D h;
  h.kind_ = kind;
  if (values.empty()) return h;
  std::sort(values.begin(), values.end());
  std::vector<std::pair<double, double>> groups;  // value, count
  for (double v : values) {
    if (groups.empty() || groups.back().first != v) {
      groups.emplace_back(v, 1.0);
    } else {
      groups.back().second += 1.0;
    }
  }
  const double n = static_cast<double>(values.size());
  if (kind == AttributeKind::kCategorical || groups.size() <= max_buckets) {
    for (const auto& [v, count] : groups) h.buckets_.push_back({v, v, count / n, 1.0});
    return h;
  }
  const double target = n / static_cast<double>(max_buckets);
  Bucket current{groups.front().first, groups.front().first, 0.0, 0.0};
  for (const auto& [v, count] : groups) {
    if (current.distinct > 0 && current.fraction >= target) {
      current.fraction /= n;
      h.buckets_.push_back(current);
      current = {v, v, 0.0, 0.0};
    }
    current.hi = v;
    current.fraction += count;
    current.distinct += 1.0;
  }
  current.fraction /= n;
  h.buckets_.push_back(current);
  return h;
}

double Histogram1D::share(const Bucket& b, const Interval& iv) const {
  const double lo = std::max(b.lo, iv.lo);
  const double hi = std::min(b.hi, iv.hi);
  if (lo > hi) return 0.0;
  if (b.lo == b.hi) return 1.0;
  if (kind_ == AttributeKind::kInteger) {
    const double points = std::floor(hi) - std::ceil(lo) + 1.0;
    return std::clamp(points / (b.hi - b.lo + 1.0), 0.0, 1.0);
  }
  if (lo == hi) return std::min(1.0, 1.0 / b.distinct);
  return std::clamp((hi - lo) / (b.hi - b.lo), 0.0, 1.0);
}

double Histogram1D::coverage(const AttrConstraint& c) const {
  double total = 0.0;
  for (const auto& b : buckets_) {
    double s = 0.0;
    for (const auto& iv : c.intervals()) s += share(b, iv);
    total += b.fraction * std::min(1.0, s);
  }
  return std::clamp(total, 0.0, 1.0);
}

double Histogram1D::distinct(const AttrConstraint& c) const {
  double total = 0.0;
  for (const auto& b : buckets_) {
    double s = 0.0;
    for (const auto& iv : c.intervals()) s += share(b, iv);
    total += b.distinct * std::min(1.0, s);
  }
  return total;
}

double Histogram1D::total_distinct() const {
  double total = 0.0;
  for (const auto& b : buckets_) total += b.distinct;
  return total;
}

json Histogram1D::to_json() const {
  json buckets = json::array();
  for (const auto& b : buckets_) buckets.push_back({encode_double(b.lo), encode_double(b.hi), b.fraction, b.distinct});
  return {{"kind", glue::to_string(kind_)}, {"buckets", buckets}};
}

Histogram1D Histogram1D::from_json(const json& doc) {
  Histogram1D h;
  h.kind_ = attribute_kind_from_string(doc.at("kind").get<std::string>());
  for (const auto& b : doc.at("buckets")) {
    h.buckets_.push_back({decode_double(b.at(0)), decode_double(b.at(1)), b.at(2).get<double>(), b.at(3).get<double>()});
  }
  return h;
}

// ---------------------------------------------------------------------------
// HistogramModel

HistogramModel::HistogramModel(uint32_t table, uint64_t row_count, std::vector<Histogram1D> histograms)
    : LeafEstimator(table, static_cast<uint32_t>(histograms.size()), row_count), histograms_(std::move(histograms)) {}

std::unique_ptr<HistogramModel> HistogramModel::build(const TableData& data, uint32_t buckets) {
  std::vector<Histogram1D> histograms;
  for (size_t a = 0; a < data.columns.size(); ++a) {
    histograms.push_back(Histogram1D::build(data.columns[a], data.meta.attributes[a].kind, buckets));
  }
  return std::make_unique<HistogramModel>(data.table, data.row_count(), std::move(histograms));
}

double HistogramModel::do_prob(const RegularRegion& r) const {
  double p = 1.0;
  for (const auto& [ref, c] : r.items()) p *= histograms_[ref.attr].coverage(c);
  return p;
}

double HistogramModel::do_distinct(const RegularRegion& r, std::span<const AttrRef> projection) const {
  const double p = do_prob(r);
  if (p <= 0.0) return 0.0;
  double d = 1.0;
  for (const auto& ref : projection) {
    const auto* c = r.find(ref);
    d *= c ? histograms_[ref.attr].distinct(*c) : histograms_[ref.attr].total_distinct();
  }
  return std::min(d, std::max(1.0, p * static_cast<double>(row_count())));
}

json HistogramModel::to_json() const {
  auto doc = header_json();
  doc["histograms"] = json::array();
  for (const auto& h : histograms_) doc["histograms"].push_back(h.to_json());
  return doc;
}

// ---------------------------------------------------------------------------
// SampleModel

SampleModel::SampleModel(uint32_t table, uint64_t row_count, std::vector<std::vector<double>> columns, uint64_t seed)
    : LeafEstimator(table, static_cast<uint32_t>(columns.size()), row_count), columns_(std::move(columns)), seed_(seed) {}

std::unique_ptr<SampleModel> SampleModel::build(const TableData& data, uint64_t n, uint64_t seed) {
  if (data.row_count() == 0) {
    return std::make_unique<SampleModel>(data.table, 0, std::vector<std::vector<double>>(data.columns.size()), seed);
  }
  auto sample = draw_sample(data, n, seed);
  return std::make_unique<SampleModel>(data.table, data.row_count(), std::move(sample.columns), seed);
}

double SampleModel::do_prob(const RegularRegion& r) const {
  const size_t n = sample_size();
  if (n == 0) return 0.0;
  size_t hits = 0;
  for (size_t row = 0; row < n; ++row) {
    if (r.contains([&](AttrRef ref) { return columns_[ref.attr][row]; })) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double SampleModel::do_distinct(const RegularRegion& r, std::span<const AttrRef> projection) const {
  const size_t n = sample_size();
  std::map<std::vector<double>, uint64_t> freq;
  for (size_t row = 0; row < n; ++row) {
    if (!r.contains([&](AttrRef ref) { return columns_[ref.attr][row]; })) continue;
    std::vector<double> t;
    for (const auto& ref : projection) t.push_back(columns_[ref.attr][row]);
    ++freq[t];
  }
  if (n >= row_count()) return static_cast<double>(freq.size());
  // Guaranteed-error estimator: singletons scale by sqrt(N/n).
  double singletons = 0.0, repeated = 0.0;
  for (const auto& [t, f] : freq) (f == 1 ? singletons : repeated) += 1.0;
  return std::sqrt(static_cast<double>(row_count()) / static_cast<double>(n)) * singletons + repeated;
}

json SampleModel::to_json() const {
  auto doc = header_json();
  doc["seed"] = seed_;
  doc["columns"] = columns_;
  return doc;
}

// ---------------------------------------------------------------------------
// SpnModel

namespace {

struct SpnBuilder {
  const TableData& data;
  const LeafParams& params;
  std::mt19937_64 rng;
  std::vector<SpnNode> nodes;

  uint32_t add(SpnNode node) {
    nodes.push_back(std::move(node));
    return static_cast<uint32_t>(nodes.size() - 1);
  }

  std::vector<double> values(uint32_t attr, const std::vector<uint32_t>& rows) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (uint32_t r : rows) out.push_back(data.columns[attr][r]);
    return out;
  }

  uint32_t leaf(uint32_t attr, const std::vector<uint32_t>& rows) {
    SpnNode node;
    node.type = SpnNode::Type::kLeaf;
    node.attrs = {attr};
    node.rows = rows.size();
    node.histogram = Histogram1D::build(values(attr, rows), data.meta.attributes[attr].kind, params.spn_leaf_buckets);
    return add(std::move(node));
  }

  uint32_t product(std::vector<std::vector<uint32_t>> groups, const std::vector<uint32_t>& rows) {
    std::vector<uint32_t> children;
    std::vector<uint32_t> attrs;
    for (auto& group : groups) {
      attrs.insert(attrs.end(), group.begin(), group.end());
      children.push_back(build(rows, std::move(group)));
    }
    SpnNode node;
    node.type = SpnNode::Type::kProduct;
    std::sort(attrs.begin(), attrs.end());
    node.attrs = std::move(attrs);
    node.children = std::move(children);
    node.rows = rows.size();
    return add(std::move(node));
  }

  uint32_t product_of_leaves(const std::vector<uint32_t>& rows, const std::vector<uint32_t>& attrs) {
    std::vector<std::vector<uint32_t>> groups;
    for (uint32_t a : attrs) groups.push_back({a});
    return product(std::move(groups), rows);
  }

  uint32_t build(const std::vector<uint32_t>& rows, std::vector<uint32_t> attrs) {
    if (attrs.size() == 1) return leaf(attrs.front(), rows);
    if (rows.size() < params.spn_min_rows) return product_of_leaves(rows, attrs);

    std::vector<uint32_t> scored_rows = rows;
    if (scored_rows.size() > params.rdc_rows) {
      std::shuffle(scored_rows.begin(), scored_rows.end(), rng);
      scored_rows.resize(params.rdc_rows);
      std::sort(scored_rows.begin(), scored_rows.end());
    }
    const size_t m = attrs.size();
    std::vector<std::vector<double>> cols;
    for (uint32_t a : attrs) cols.push_back(values(a, scored_rows));
    std::vector<double> total(m, 0.0);
    std::vector<size_t> component(m);
    std::iota(component.begin(), component.end(), size_t{0});
    auto find = [&](size_t x) {
      while (component[x] != x) x = component[x] = component[component[x]];
      return x;
    };
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = i + 1; j < m; ++j) {
        const double score = rdc_score(cols[i], cols[j], params.rdc);
        total[i] += score;
        total[j] += score;
        if (score >= params.tau_ind) component[find(i)] = find(j);
      }
    }
    std::map<size_t, std::vector<uint32_t>> groups;
    for (size_t i = 0; i < m; ++i) groups[find(i)].push_back(attrs[i]);
    if (groups.size() > 1) {
      std::vector<std::vector<uint32_t>> grouped;
      for (auto& [root, g] : groups) grouped.push_back(std::move(g));
      return product(std::move(grouped), rows);
    }

    const size_t pick = static_cast<size_t>(std::max_element(total.begin(), total.end()) - total.begin());
    const uint32_t attr = attrs[pick];
    const auto kind = constraint_kind_of(data.meta.attributes[attr].kind);
    auto rule = choose_split(values(attr, rows), kind, rng);
    if (!rule) return product_of_leaves(rows, attrs);
    std::vector<uint32_t> left, right;
    for (uint32_t r : rows) (rule->left.contains(data.columns[attr][r]) ? left : right).push_back(r);
    if (left.empty() || right.empty()) return product_of_leaves(rows, attrs);

    SpnNode node;
    node.type = SpnNode::Type::kSum;
    node.attrs = attrs;
    node.rows = rows.size();
    node.split_attr = attr;
    node.split = {rule->left, rule->right};
    const double n = static_cast<double>(rows.size());
    node.weights = {static_cast<double>(left.size()) / n, static_cast<double>(right.size()) / n};
    const uint32_t l = build(left, attrs);
    const uint32_t r = build(right, attrs);
    node.children = {l, r};
    return add(std::move(node));
  }
};

}  // namespace

SpnModel::SpnModel(uint32_t table, uint64_t row_count, std::vector<AttributeKind> kinds, std::vector<SpnNode> nodes,
                   uint32_t root)
    : LeafEstimator(table, static_cast<uint32_t>(kinds.size()), row_count),
      kinds_(std::move(kinds)),
      nodes_(std::move(nodes)),
      root_(root) {
  for (const auto& node : nodes_) {
    if (node.type != SpnNode::Type::kSum) continue;
    const double sum = std::accumulate(node.weights.begin(), node.weights.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-9) throw Error("spn sum node weights do not sum to 1");
    for (size_t i = 0; i < node.split.size(); ++i) {
      for (size_t j = i + 1; j < node.split.size(); ++j) {
        if (!node.split[i].intersect(node.split[j]).is_empty()) throw Error("spn sum node splits overlap");
      }
    }
  }
}

std::unique_ptr<SpnModel> SpnModel::build(const TableData& data, const LeafParams& params, uint64_t seed) {
  std::vector<AttributeKind> kinds;
  for (const auto& a : data.meta.attributes) kinds.push_back(a.kind);
  if (data.row_count() == 0 || data.columns.empty()) {
    return std::make_unique<SpnModel>(data.table, 0, std::move(kinds), std::vector<SpnNode>{}, 0);
  }
  SpnBuilder builder{data, params, std::mt19937_64(seed), {}};
  std::vector<uint32_t> rows(data.row_count());
  std::iota(rows.begin(), rows.end(), 0u);
  std::vector<uint32_t> attrs(data.columns.size());
  std::iota(attrs.begin(), attrs.end(), 0u);
  const uint32_t root = builder.build(rows, attrs);
  return std::make_unique<SpnModel>(data.table, data.row_count(), std::move(kinds), std::move(builder.nodes), root);
}

SpnModel::Box SpnModel::to_box(const RegularRegion& r) const {
  Box box;
  for (auto k : kinds_) box.push_back(AttrConstraint::full(constraint_kind_of(k)));
  for (const auto& [ref, c] : r.items()) box[ref.attr] = box[ref.attr].intersect(c);
  return box;
}

double SpnModel::prob_at(uint32_t index, const Box& box) const {
  const auto& node = nodes_[index];
  switch (node.type) {
    case SpnNode::Type::kLeaf: {
      const auto& c = box[node.attrs.front()];
      return c.is_full() ? 1.0 : node.histogram.coverage(c);
    }
    case SpnNode::Type::kProduct: {
      double p = 1.0;
      for (uint32_t child : node.children) {
        p *= prob_at(child, box);
        if (p == 0.0) break;
      }
      return p;
    }
    case SpnNode::Type::kSum: {
      double p = 0.0;
      for (size_t c = 0; c < node.children.size(); ++c) {
        Box sub = box;
        sub[node.split_attr] = sub[node.split_attr].intersect(node.split[c]);
        if (sub[node.split_attr].is_empty()) continue;
        p += node.weights[c] * prob_at(node.children[c], sub);
      }
      return p;
    }
  }
  return 0.0;
}

double SpnModel::distinct_at(uint32_t index, const Box& box, const std::vector<bool>& projected) const {
  const auto& node = nodes_[index];
  const bool touches = std::any_of(node.attrs.begin(), node.attrs.end(), [&](uint32_t a) { return projected[a]; });
  if (!touches) return prob_at(index, box) > 0.0 ? 1.0 : 0.0;
  switch (node.type) {
    case SpnNode::Type::kLeaf:
      return node.histogram.distinct(box[node.attrs.front()]);
    case SpnNode::Type::kProduct: {
      double d = 1.0;
      for (uint32_t child : node.children) {
        d *= distinct_at(child, box, projected);
        if (d == 0.0) break;
      }
      return d;
    }
    case SpnNode::Type::kSum: {
      double d = 0.0;
      for (size_t c = 0; c < node.children.size(); ++c) {
        Box sub = box;
        sub[node.split_attr] = sub[node.split_attr].intersect(node.split[c]);
        if (sub[node.split_attr].is_empty()) continue;
        d += distinct_at(node.children[c], sub, projected);
      }
      return d;
    }
  }
  return 0.0;
}

double SpnModel::do_prob(const RegularRegion& r) const {
  if (nodes_.empty()) return 0.0;
  return prob_at(root_, to_box(r));
}

double SpnModel::do_distinct(const RegularRegion& r, std::span<const AttrRef> projection) const {
  if (nodes_.empty()) return 0.0;
  std::vector<bool> projected(kinds_.size(), false);
  for (const auto& ref : projection) projected[ref.attr] = true;
  return distinct_at(root_, to_box(r), projected);
}

json SpnModel::to_json() const {
  auto doc = header_json();
  doc["root"] = root_;
  doc["kinds"] = json::array();
  for (auto k : kinds_) doc["kinds"].push_back(glue::to_string(k));
  doc["nodes"] = json::array();
  for (const auto& node : nodes_) {
    json n{{"attrs", node.attrs}, {"rows", node.rows}};
    switch (node.type) {
      case SpnNode::Type::kLeaf:
        n["type"] = "leaf";
        n["histogram"] = node.histogram.to_json();
        break;
      case SpnNode::Type::kProduct:
        n["type"] = "product";
        n["children"] = node.children;
        break;
      case SpnNode::Type::kSum:
        n["type"] = "sum";
        n["children"] = node.children;
        n["weights"] = node.weights;
        n["split_attr"] = node.split_attr;
        n["split"] = json::array();
        for (const auto& c : node.split) n["split"].push_back(constraint_to_json(c));
        break;
    }
    doc["nodes"].push_back(std::move(n));
  }
  return doc;
}

// ---------------------------------------------------------------------------

std::unique_ptr<LeafEstimator> build_leaf(std::shared_ptr<const TableData> data, LeafKind kind,
                                          const LeafParams& params, uint64_t seed) {
  params.check();
  switch (kind) {
    case LeafKind::kExact:
      return std::make_unique<ExactModel>(std::move(data));
    case LeafKind::kHistogram:
      return HistogramModel::build(*data, params.histogram_buckets);
    case LeafKind::kSample:
      return SampleModel::build(*data, params.sample_size, seed);
    case LeafKind::kSpn:
      return SpnModel::build(*data, params, seed);
  }
  throw Error("unknown leaf kind");
}

std::unique_ptr<LeafEstimator> leaf_from_json(const json& doc, std::shared_ptr<const Database> db) {
  try {
    const auto kind = leaf_kind_from_string(doc.at("kind").get<std::string>());
    const auto table = doc.at("table").get<uint32_t>();
    const auto rows = doc.at("row_count").get<uint64_t>();
    if (table >= db->tables.size()) throw Error("leaf references unknown table");
    switch (kind) {
      case LeafKind::kExact:
        return std::make_unique<ExactModel>(std::shared_ptr<const TableData>(db, &db->tables[table]));
      case LeafKind::kHistogram: {
        std::vector<Histogram1D> histograms;
        for (const auto& h : doc.at("histograms")) histograms.push_back(Histogram1D::from_json(h));
        return std::make_unique<HistogramModel>(table, rows, std::move(histograms));
      }
      case LeafKind::kSample:
        return std::make_unique<SampleModel>(table, rows, doc.at("columns").get<std::vector<std::vector<double>>>(),
                                             doc.at("seed").get<uint64_t>());
      case LeafKind::kSpn: {
        std::vector<AttributeKind> kinds;
        for (const auto& k : doc.at("kinds")) kinds.push_back(attribute_kind_from_string(k.get<std::string>()));
        std::vector<SpnNode> nodes;
        for (const auto& n : doc.at("nodes")) {
          SpnNode node;
          node.attrs = n.at("attrs").get<std::vector<uint32_t>>();
          node.rows = n.at("rows").get<uint64_t>();
          const auto type = n.at("type").get<std::string>();
          if (type == "leaf") {
            node.type = SpnNode::Type::kLeaf;
            node.histogram = Histogram1D::from_json(n.at("histogram"));
          } else if (type == "product") {
            node.type = SpnNode::Type::kProduct;
            node.children = n.at("children").get<std::vector<uint32_t>>();
          } else if (type == "sum") {
            node.type = SpnNode::Type::kSum;
            node.children = n.at("children").get<std::vector<uint32_t>>();
            node.weights = n.at("weights").get<std::vector<double>>();
            node.split_attr = n.at("split_attr").get<uint32_t>();
            for (const auto& c : n.at("split")) node.split.push_back(constraint_from_json(c));
          } else {
            throw Error("unknown spn node type '" + type + "'");
          }
          nodes.push_back(std::move(node));
        }
        return std::make_unique<SpnModel>(table, rows, std::move(kinds), std::move(nodes), doc.at("root").get<uint32_t>());
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed leaf model: ") + e.what());
  }
  throw Error("unknown leaf kind");
}

}  // namespace glue
