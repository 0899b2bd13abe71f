#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "glue/catalog.hpp"
#include "glue/correlate.hpp"
#include "glue/regions.hpp"
#include "json.hpp"

namespace glue {

enum class LeafKind { kExact, kHistogram, kSample, kSpn };

std::string_view to_string(LeafKind kind);
LeafKind leaf_kind_from_string(std::string_view text);

struct LeafParams {
  uint32_t histogram_buckets = 32;
  uint64_t sample_size = 1000;
  double tau_ind = 0.3;
  uint64_t spn_min_rows = 64;
  uint32_t spn_leaf_buckets = 64;
  uint64_t rdc_rows = 2000;
  CorrelationParams rdc;

  void check() const;
};

nlohmann::json leaf_params_to_json(const LeafParams& params);
LeafParams leaf_params_from_json(const nlohmann::json& doc);

// Single-table model answering Pr_T(region) and distinct counts. Regions may
// only constrain attributes of the model's table.
class LeafEstimator {
 public:
  LeafEstimator(uint32_t table, uint32_t attr_count, uint64_t row_count)
      : table_(table), attr_count_(attr_count), row_count_(row_count) {}
  virtual ~LeafEstimator() = default;

  virtual LeafKind kind() const = 0;
  uint32_t table() const { return table_; }
  uint32_t attr_count() const { return attr_count_; }
  uint64_t row_count() const { return row_count_; }

  double prob(const RegularRegion& r) const;
  // Distinct tuples of `projection` among rows matching `r`.
  double distinct(const RegularRegion& r, std::span<const AttrRef> projection) const;
  // Projection onto the constrained attributes of `r`.
  double distinct(const RegularRegion& r) const;

  virtual nlohmann::json to_json() const = 0;

 protected:
  virtual double do_prob(const RegularRegion& r) const = 0;
  virtual double do_distinct(const RegularRegion& r, std::span<const AttrRef> projection) const = 0;
  nlohmann::json header_json() const;

 private:
  void check_scope(const RegularRegion& r) const;

  uint32_t table_;
  uint32_t attr_count_;
  uint64_t row_count_;
};

class ExactModel final : public LeafEstimator {
 public:
  explicit ExactModel(std::shared_ptr<const TableData> data);
  LeafKind kind() const override { return LeafKind::kExact; }
  nlohmann::json to_json() const override;
  const TableData& data() const { return *data_; }

 protected:
  double do_prob(const RegularRegion& r) const override;
  double do_distinct(const RegularRegion& r, std::span<const AttrRef> projection) const override;

 private:
  std::vector<uint32_t> matching_rows(const RegularRegion& r) const;

  std::shared_ptr<const TableData> data_;
  std::vector<std::vector<uint32_t>> order_;  // row ids sorted by value, per attribute
  std::vector<std::vector<double>> sorted_;   // matching sorted values
};

struct Bucket {
  double lo = 0.0;
  double hi = 0.0;
  double fraction = 0.0;
  double distinct = 0.0;

  friend bool operator==(const Bucket&, const Bucket&) = default;
};

// One-dimensional equi-depth histogram; falls back to one bucket per value
// when the attribute has few distinct values (always for categorical).
class Histogram1D {
 public:
  Histogram1D() = default;
  static Histogram1D build(std::vector<double> values, AttributeKind kind, uint32_t max_buckets);

  AttributeKind kind() const { return kind_; }
  const std::vector<Bucket>& buckets() const { return buckets_; }

  double coverage(const AttrConstraint& c) const;
  double distinct(const AttrConstraint& c) const;
  double total_distinct() const;

  nlohmann::json to_json() const;
  static Histogram1D from_json(const nlohmann::json& doc);

 private:
  double share(const Bucket& b, const Interval& iv) const;

  AttributeKind kind_ = AttributeKind::kInteger;
  std::vector<Bucket> buckets_;
};

class HistogramModel final : public LeafEstimator {
 public:
  HistogramModel(uint32_t table, uint64_t row_count, std::vector<Histogram1D> histograms);
  static std::unique_ptr<HistogramModel> build(const TableData& data, uint32_t buckets);
  LeafKind kind() const override { return LeafKind::kHistogram; }
  const std::vector<Histogram1D>& histograms() const { return histograms_; }
  nlohmann::json to_json() const override;

 protected:
  double do_prob(const RegularRegion& r) const override;
  double do_distinct(const RegularRegion& r, std::span<const AttrRef> projection) const override;

 private:
  std::vector<Histogram1D> histograms_;
};

class SampleModel final : public LeafEstimator {
 public:
  SampleModel(uint32_t table, uint64_t row_count, std::vector<std::vector<double>> columns, uint64_t seed);
  static std::unique_ptr<SampleModel> build(const TableData& data, uint64_t n, uint64_t seed);
  LeafKind kind() const override { return LeafKind::kSample; }
  size_t sample_size() const { return columns_.empty() ? 0 : columns_.front().size(); }
  const std::vector<std::vector<double>>& columns() const { return columns_; }
  nlohmann::json to_json() const override;

 protected:
  double do_prob(const RegularRegion& r) const override;
  double do_distinct(const RegularRegion& r, std::span<const AttrRef> projection) const override;

 private:
  std::vector<std::vector<double>> columns_;
  uint64_t seed_;
};

struct SpnNode {
  enum class Type { kSum, kProduct, kLeaf };
  Type type = Type::kLeaf;
  std::vector<uint32_t> attrs;     // attributes in this node's scope
  std::vector<uint32_t> children;  // node indices
  // Sum nodes: child weights and the split of `split_attr` routed to each child.
  std::vector<double> weights;
  uint32_t split_attr = 0;
  std::vector<AttrConstraint> split;
  // Leaf nodes: histogram of attrs[0].
  Histogram1D histogram;
  uint64_t rows = 0;
};

class SpnModel final : public LeafEstimator {
 public:
  SpnModel(uint32_t table, uint64_t row_count, std::vector<AttributeKind> kinds, std::vector<SpnNode> nodes,
           uint32_t root);
  static std::unique_ptr<SpnModel> build(const TableData& data, const LeafParams& params, uint64_t seed);
  LeafKind kind() const override { return LeafKind::kSpn; }
  const std::vector<SpnNode>& nodes() const { return nodes_; }
  const SpnNode& root() const { return nodes_.at(root_); }
  nlohmann::json to_json() const override;

 protected:
  double do_prob(const RegularRegion& r) const override;
  double do_distinct(const RegularRegion& r, std::span<const AttrRef> projection) const override;

 private:
  using Box = std::vector<AttrConstraint>;  // one constraint per attribute
  Box to_box(const RegularRegion& r) const;
  double prob_at(uint32_t node, const Box& box) const;
  double distinct_at(uint32_t node, const Box& box, const std::vector<bool>& projected) const;

  std::vector<AttributeKind> kinds_;
  std::vector<SpnNode> nodes_;
  uint32_t root_ = 0;
};

std::unique_ptr<LeafEstimator> build_leaf(std::shared_ptr<const TableData> data, LeafKind kind,
                                          const LeafParams& params, uint64_t seed);
std::unique_ptr<LeafEstimator> leaf_from_json(const nlohmann::json& doc, std::shared_ptr<const Database> db);

}  // namespace glue
