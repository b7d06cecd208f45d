#include "cfflow/bundle.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace cfflow {
namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

struct Blob {
  std::vector<std::uint8_t> bytes;

  json append(const std::vector<double>& values) {
    const std::size_t offset = bytes.size() / 4;
    bytes.reserve(bytes.size() + values.size() * 4);
    for (double v : values) {
      const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int s = 0; s < 32; s += 8) bytes.push_back(static_cast<std::uint8_t>(u >> s));
    }
    return {{"offset", offset}, {"count", values.size()}};
  }

  std::vector<double> read(const json& section) const {
    const auto offset = section.at("offset").get<std::size_t>();
    const auto count = section.at("count").get<std::size_t>();
    if ((offset + count) * 4 > bytes.size()) throw Error("weights.bin is shorter than the manifest says");
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint8_t* b = bytes.data() + (offset + i) * 4;
      const std::uint32_t u = std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 |
                              std::uint32_t{b[3]} << 24;
      out[i] = static_cast<double>(std::bit_cast<float>(u));
    }
    return out;
  }
};

std::string fnv1a_hex(std::string_view manifest, const std::vector<std::uint8_t>& blob) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint8_t c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (char c : manifest) mix(static_cast<std::uint8_t>(c));
  for (auto c : blob) mix(c);
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

json flow_json(const FlowModel& model, Blob& blob) {
  const auto& a = model.arch();
  json j{{"dim", a.dim},
         {"context_dim", a.context_dim},
         {"layers", a.layers},
         {"hidden", a.hidden},
         {"hidden_layers", a.hidden_layers},
         {"log_scale_clamp", a.log_scale_clamp},
         {"center_on_context", a.center_on_context}};
  if (const auto& c = model.conditioner()) {
    j["conditioner"] = {{"encoded_dim", c->encoded_dim},
                        {"class_count", c->class_count},
                        {"feature_count", c->feature_count},
                        {"order", {"x", "one_hot_target", "log_p", "mask"}}};
  }
  json degrees = json::array();
  for (std::size_t l = 0; l < a.layers; ++l) degrees.push_back(model.degrees(l));
  j["degrees"] = degrees;
  json tensors = json::array();
  for (const auto& t : model.tensors()) {
    tensors.push_back({{"name", t.name}, {"offset", t.offset}, {"rows", t.rows}, {"cols", t.cols}});
  }
  j["tensors"] = tensors;
  j["weights"] = blob.append(model.parameters());
  return j;
}

FlowModel flow_from_json(const json& j, const Blob& blob) {
  FlowArchitecture a;
  a.dim = j.at("dim").get<std::size_t>();
  a.context_dim = j.at("context_dim").get<std::size_t>();
  a.layers = j.at("layers").get<std::size_t>();
  a.hidden = j.at("hidden").get<std::size_t>();
  a.hidden_layers = j.at("hidden_layers").get<std::size_t>();
  a.log_scale_clamp = j.at("log_scale_clamp").get<double>();
  a.center_on_context = j.at("center_on_context").get<bool>();
  FlowModel model(a);
  if (j.contains("conditioner")) {
    const auto& c = j["conditioner"];
    model.set_conditioner({c.at("encoded_dim").get<std::size_t>(), c.at("class_count").get<std::size_t>(),
                           c.at("feature_count").get<std::size_t>()});
  } else if (a.context_dim != 0) {
    throw Error("conditional flow without a conditioner layout");
  }
  const auto& tensors = j.at("tensors");
  if (tensors.size() != model.tensors().size()) throw Error("flow tensor list does not match the architecture");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = model.tensors()[i];
    if (tensors[i].at("name").get<std::string>() != t.name || tensors[i].at("offset").get<std::size_t>() != t.offset ||
        tensors[i].at("rows").get<std::size_t>() != t.rows || tensors[i].at("cols").get<std::size_t>() != t.cols) {
      throw Error("flow tensor '" + t.name + "' does not match the architecture");
    }
  }
  for (std::size_t l = 0; l < a.layers; ++l) {
    if (j.at("degrees").at(l).get<std::vector<int>>() != model.degrees(l)) {
      throw Error("flow layer " + std::to_string(l) + " has unexpected autoregressive degrees");
    }
  }
  auto params = blob.read(j.at("weights"));
  if (params.size() != model.parameters().size()) throw Error("flow weight count does not match the architecture");
  model.parameters() = std::move(params);
  model.apply_masks();
  return model;
}

}  // namespace

json train_config_json(const TrainConfig& c, const TableSchema& schema) {
  json masks = json::array();
  for (const auto& m : c.masks) masks.push_back(schema.mask_names(m));
  return {{"steps", c.steps},
          {"batch_instances", c.batch_instances},
          {"k", c.k},
          {"p_values", c.p_values},
          {"masks", masks},
          {"class_prior", c.class_prior},
          {"alpha", c.alpha},
          {"seed", c.seed},
          {"learning_rate", c.optimizer.learning_rate},
          {"clip_norm", c.optimizer.clip_norm},
          {"layers", c.layers},
          {"hidden", c.hidden},
          {"hidden_layers", c.hidden_layers},
          {"log_scale_clamp", c.log_scale_clamp},
          {"center_on_query", c.center_on_query},
          {"dequant_noise", c.dequant_noise},
          {"continuous_noise", c.continuous_noise},
          {"holdout_fraction", c.holdout_fraction}};
}

std::string save_bundle(const std::filesystem::path& dir, ModelBundle& b) {
  if (b.flow.dim() != b.schema.encoded_dim()) throw Error("bundle flow does not match the schema");
  std::filesystem::create_directories(dir);
  Blob blob;
  json m;
  m["format"] = "cfflow-bundle";
  m["version"] = kFormatVersion;
  m["schema"] = b.schema.to_json();
  m["flow"] = flow_json(b.flow, blob);
  if (b.density) m["density"] = flow_json(*b.density, blob);
  if (b.classifier) {
    m["classifier"] = {{"kind", std::string(to_string(b.classifier->kind()))},
                       {"input_dim", b.classifier->input_dim()},
                       {"class_count", b.classifier->class_count()},
                       {"hidden", b.classifier->hidden()},
                       {"weights", blob.append(b.classifier->parameters())}};
  }
  json masks = json::array();
  for (const auto& mask : b.masks) masks.push_back(b.schema.mask_names(mask));
  m["constraints"] = {{"p_values", b.p_values}, {"masks", masks}, {"k", b.k}, {"alpha", b.alpha}};
  m["train_config"] = b.train_config;
  m["metric_defaults"] = b.metric_defaults.to_json();
  if (!b.reference_rows.empty()) m["reference_rows"] = blob.append(b.reference_rows);

  b.bundle_id = fnv1a_hex(m.dump(), blob.bytes);
  m["bundle_id"] = b.bundle_id;

  std::ofstream mf(dir / "manifest.json");
  mf << m.dump(2) << '\n';
  std::ofstream wf(dir / "weights.bin", std::ios::binary);
  wf.write(reinterpret_cast<const char*>(blob.bytes.data()), static_cast<std::streamsize>(blob.bytes.size()));
  if (!mf || !wf) throw Error("failed to write bundle to " + dir.string());
  return b.bundle_id;
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw Error("bundle " + dir.string() + " has no manifest.json");
  std::ifstream wf(dir / "weights.bin", std::ios::binary);
  if (!wf) throw Error("bundle " + dir.string() + " has no weights.bin");
  Blob blob;
  blob.bytes.assign(std::istreambuf_iterator<char>(wf), {});
  try {
    const json m = json::parse(mf);
    if (m.value("format", "") != "cfflow-bundle") throw Error("not a cfflow bundle");
    if (m.at("version").get<int>() != kFormatVersion) throw Error("unsupported bundle version");
    ModelBundle b;
    b.schema = TableSchema::from_json(m.at("schema"));
    b.flow = flow_from_json(m.at("flow"), blob);
    if (b.flow.dim() != b.schema.encoded_dim()) throw Error("flow dimension does not match the schema");
    if (m.contains("density")) b.density = flow_from_json(m["density"], blob);
    if (m.contains("classifier")) {
      const auto& c = m["classifier"];
      Classifier clf(classifier_kind_from_string(c.at("kind").get<std::string>()), c.at("input_dim").get<std::size_t>(),
                     c.at("class_count").get<std::size_t>(), c.at("hidden").get<std::size_t>());
      auto w = blob.read(c.at("weights"));
      if (w.size() != clf.parameters().size()) throw Error("classifier weight count mismatch");
      clf.parameters() = std::move(w);
      b.classifier = std::move(clf);
    }
    const auto& cons = m.at("constraints");
    b.p_values = cons.at("p_values").get<std::vector<double>>();
    for (const auto& names : cons.at("masks")) b.masks.push_back(b.schema.mask_from_names(names.get<std::vector<std::string>>()));
    b.k = cons.at("k").get<std::size_t>();
    b.alpha = cons.at("alpha").get<double>();
    b.train_config = m.value("train_config", json::object());
    b.metric_defaults = MetricDefaults::from_json(m.at("metric_defaults"));
    if (m.contains("reference_rows")) b.reference_rows = blob.read(m["reference_rows"]);
    b.bundle_id = m.at("bundle_id").get<std::string>();
    return b;
  } catch (const json::exception& e) {
    throw Error("bundle " + dir.string() + ": malformed manifest (" + e.what() + ")");
  }
}

}  // namespace cfflow
