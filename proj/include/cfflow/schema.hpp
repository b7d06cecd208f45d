#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace cfflow {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FeatureKind { continuous, categorical };

struct ContinuousStats {
  double mean = 0.0;
  double stddev = 1.0;
  double min = 0.0;
  double max = 0.0;

  double range() const { return max - min; }
  bool operator==(const ContinuousStats&) const = default;
};

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::continuous;
  std::vector<std::string> categories;  // empty iff continuous
  ContinuousStats stats;                // meaningful for continuous features only

  bool is_continuous() const { return kind == FeatureKind::continuous; }
  bool operator==(const FeatureSpec&) const = default;
};

// Encoded coordinates [offset, offset + width) belonging to one feature.
struct EncodedBlock {
  std::size_t feature = 0;
  std::size_t offset = 0;
  std::size_t width = 0;
};

using RawValue = std::variant<double, std::string>;

struct Instance {
  std::vector<RawValue> values;
  bool operator==(const Instance&) const = default;
};

struct EncodedVector {
  std::vector<double> data;

  std::size_t size() const { return data.size(); }
  std::span<const double> view() const { return data; }
};

// Feature-level actionability mask: bit f = 1 means feature f should not change.
struct FeatureMask {
  std::vector<unsigned char> bits;

  std::size_t size() const { return bits.size(); }
  bool any() const;
  bool operator==(const FeatureMask&) const = default;
};

class TableSchema {
 public:
  TableSchema() = default;
  TableSchema(std::vector<FeatureSpec> features, std::vector<std::string> class_labels,
              std::string label_column = "label");

  const std::vector<FeatureSpec>& features() const { return features_; }
  const FeatureSpec& feature(std::size_t i) const { return features_.at(i); }
  std::size_t feature_count() const { return features_.size(); }
  std::size_t class_count() const { return class_labels_.size(); }
  const std::vector<std::string>& class_labels() const { return class_labels_; }
  const std::string& label_column() const { return label_column_; }

  std::size_t encoded_dim() const { return encoded_dim_; }
  const std::vector<EncodedBlock>& blocks() const { return blocks_; }
  std::size_t continuous_count() const;
  std::size_t categorical_count() const;

  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;  // throws Error if absent
  std::optional<std::size_t> class_index(std::string_view label) const;

  // Throws Error naming the offending feature if `x` does not fit the schema.
  void validate(const Instance& x) const;

  FeatureMask mask_from_names(std::span<const std::string> names) const;
  FeatureMask empty_mask() const { return FeatureMask{std::vector<unsigned char>(feature_count(), 0)}; }
  std::vector<std::string> mask_names(const FeatureMask& mask) const;

  nlohmann::json to_json() const;
  static TableSchema from_json(const nlohmann::json& j);

  bool operator==(const TableSchema& other) const {
    return features_ == other.features_ && class_labels_ == other.class_labels_ &&
           label_column_ == other.label_column_;
  }

 private:
  std::vector<FeatureSpec> features_;
  std::vector<std::string> class_labels_;
  std::string label_column_;
  std::vector<EncodedBlock> blocks_;
  std::size_t encoded_dim_ = 0;
};

// Continuous entries z-scored, categorical entries one-hot.
EncodedVector encode(const Instance& x, const TableSchema& schema);

// Inverse of encode; categorical blocks decode by argmax, lowest index on ties.
Instance decode(std::span<const double> v, const TableSchema& schema);
inline Instance decode(const EncodedVector& v, const TableSchema& schema) {
  return decode(v.view(), schema);
}

// Row-major n x encoded_dim matrix of encoded instances.
std::vector<double> encode_rows(std::span<const Instance> rows, const TableSchema& schema);

std::string format_value(const RawValue& v);

}  // namespace cfflow
