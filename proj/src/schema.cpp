#include "cfflow/schema.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

namespace cfflow {

bool FeatureMask::any() const {
  return std::any_of(bits.begin(), bits.end(), [](unsigned char b) { return b != 0; });
}

TableSchema::TableSchema(std::vector<FeatureSpec> features, std::vector<std::string> class_labels,
                         std::string label_column)
    : features_(std::move(features)),
      class_labels_(std::move(class_labels)),
      label_column_(std::move(label_column)) {
  if (features_.empty()) throw Error("schema has no features");
  if (class_labels_.size() < 2) throw Error("schema needs at least 2 classes");
  std::set<std::string> seen;
  for (const auto& label : class_labels_) {
    if (!seen.insert(label).second) throw Error("duplicate class label '" + label + "'");
  }
  seen.clear();
  std::size_t offset = 0;
  for (std::size_t f = 0; f < features_.size(); ++f) {
    const auto& spec = features_[f];
    if (!seen.insert(spec.name).second) throw Error("duplicate feature name '" + spec.name + "'");
    std::size_t width = 1;
    if (spec.is_continuous()) {
      if (!spec.categories.empty()) {
        throw Error("continuous feature '" + spec.name + "' declares categories");
      }
      if (!(spec.stats.stddev > 0.0) || !std::isfinite(spec.stats.stddev)) {
        throw Error("continuous feature '" + spec.name + "' has non-positive stddev");
      }
    } else {
      if (spec.categories.size() < 2) {
        throw Error("categorical feature '" + spec.name + "' needs at least 2 categories");
      }
      std::set<std::string> cats(spec.categories.begin(), spec.categories.end());
      if (cats.size() != spec.categories.size()) {
        throw Error("categorical feature '" + spec.name + "' has duplicate categories");
      }
      width = spec.categories.size();
    }
    blocks_.push_back({f, offset, width});
    offset += width;
  }
  encoded_dim_ = offset;
}

std::size_t TableSchema::continuous_count() const {
  return static_cast<std::size_t>(
      std::count_if(features_.begin(), features_.end(), [](const auto& f) { return f.is_continuous(); }));
}

std::size_t TableSchema::categorical_count() const { return feature_count() - continuous_count(); }

std::optional<std::size_t> TableSchema::find(std::string_view name) const {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t TableSchema::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw Error("unknown feature '" + std::string(name) + "'");
}

std::optional<std::size_t> TableSchema::class_index(std::string_view label) const {
  for (std::size_t i = 0; i < class_labels_.size(); ++i) {
    if (class_labels_[i] == label) return i;
  }
  return std::nullopt;
}

void TableSchema::validate(const Instance& x) const {
  if (x.values.size() != features_.size()) {
    throw Error("instance has " + std::to_string(x.values.size()) + " values, schema has " +
                std::to_string(features_.size()) + " features");
  }
  for (std::size_t f = 0; f < features_.size(); ++f) {
    const auto& spec = features_[f];
    if (spec.is_continuous()) {
      const double* v = std::get_if<double>(&x.values[f]);
      if (!v) throw Error("feature '" + spec.name + "' expects a number");
      if (!std::isfinite(*v)) throw Error("feature '" + spec.name + "' is not finite");
    } else {
      const std::string* v = std::get_if<std::string>(&x.values[f]);
      if (!v) throw Error("feature '" + spec.name + "' expects a category label");
      if (std::find(spec.categories.begin(), spec.categories.end(), *v) == spec.categories.end()) {
        throw Error("feature '" + spec.name + "' has unknown category '" + *v + "'");
      }
    }
  }
}

FeatureMask TableSchema::mask_from_names(std::span<const std::string> names) const {
  FeatureMask mask = empty_mask();
  for (const auto& name : names) mask.bits[index_of(name)] = 1;
  return mask;
}

std::vector<std::string> TableSchema::mask_names(const FeatureMask& mask) const {
  std::vector<std::string> out;
  for (std::size_t f = 0; f < mask.bits.size() && f < features_.size(); ++f) {
    if (mask.bits[f]) out.push_back(features_[f].name);
  }
  return out;
}

nlohmann::json TableSchema::to_json() const {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : features_) {
    nlohmann::json jf{{"name", f.name}};
    if (f.is_continuous()) {
      jf["kind"] = "continuous";
      jf["mean"] = f.stats.mean;
      jf["stddev"] = f.stats.stddev;
      jf["min"] = f.stats.min;
      jf["max"] = f.stats.max;
    } else {
      jf["kind"] = "categorical";
      jf["categories"] = f.categories;
    }
    feats.push_back(std::move(jf));
  }
  return {{"features", feats}, {"class_labels", class_labels_}, {"label_column", label_column_}};
}

TableSchema TableSchema::from_json(const nlohmann::json& j) {
  try {
    std::vector<FeatureSpec> features;
    for (const auto& jf : j.at("features")) {
      FeatureSpec f;
      f.name = jf.at("name").get<std::string>();
      const auto kind = jf.at("kind").get<std::string>();
      if (kind == "continuous") {
        f.kind = FeatureKind::continuous;
        f.stats = {jf.at("mean").get<double>(), jf.at("stddev").get<double>(),
                   jf.at("min").get<double>(), jf.at("max").get<double>()};
      } else if (kind == "categorical") {
        f.kind = FeatureKind::categorical;
        f.categories = jf.at("categories").get<std::vector<std::string>>();
      } else {
        throw Error("feature '" + f.name + "' has unknown kind '" + kind + "'");
      }
      features.push_back(std::move(f));
    }
    return TableSchema(std::move(features), j.at("class_labels").get<std::vector<std::string>>(),
                       j.value("label_column", std::string("label")));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed schema document: ") + e.what());
  }
}

EncodedVector encode(const Instance& x, const TableSchema& schema) {
  schema.validate(x);
  EncodedVector out;
  out.data.assign(schema.encoded_dim(), 0.0);
  for (const auto& block : schema.blocks()) {
    const auto& spec = schema.feature(block.feature);
    const auto& value = x.values[block.feature];
    if (spec.is_continuous()) {
      out.data[block.offset] = (std::get<double>(value) - spec.stats.mean) / spec.stats.stddev;
    } else {
      const auto& label = std::get<std::string>(value);
      const auto it = std::find(spec.categories.begin(), spec.categories.end(), label);
      out.data[block.offset + static_cast<std::size_t>(it - spec.categories.begin())] = 1.0;
    }
  }
  return out;
}

Instance decode(std::span<const double> v, const TableSchema& schema) {
  if (v.size() != schema.encoded_dim()) {
    throw Error("encoded vector has dimension " + std::to_string(v.size()) + ", schema expects " +
                std::to_string(schema.encoded_dim()));
  }
  Instance out;
  out.values.reserve(schema.feature_count());
  for (const auto& block : schema.blocks()) {
    const auto& spec = schema.feature(block.feature);
    if (spec.is_continuous()) {
      out.values.emplace_back(v[block.offset] * spec.stats.stddev + spec.stats.mean);
    } else {
      std::size_t best = 0;
      for (std::size_t c = 1; c < block.width; ++c) {
        if (v[block.offset + c] > v[block.offset + best]) best = c;
      }
      out.values.emplace_back(spec.categories[best]);
    }
  }
  return out;
}

std::vector<double> encode_rows(std::span<const Instance> rows, const TableSchema& schema) {
  const std::size_t dim = schema.encoded_dim();
  std::vector<double> out(rows.size() * dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto e = encode(rows[i], schema);
    std::copy(e.data.begin(), e.data.end(), out.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return out;
}

std::string format_value(const RawValue& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), std::get<double>(v));
  return std::string(buf, res.ptr);
}

}  // namespace cfflow
