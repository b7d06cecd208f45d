#include "cfflow/config.hpp"

#include <fstream>
#include <set>

namespace cfflow {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw Error(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw Error(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(where + "." + key + ": wrong type");
  }
}

}  // namespace

json MetricDefaults::to_json() const {
  return {{"n", n}, {"eps", eps}, {"k_lof", k_lof}, {"lambda1", lambda1}, {"lambda2", lambda2}};
}

MetricDefaults MetricDefaults::from_json(const json& j) {
  check_keys(j, "metrics", {"n", "eps", "k_lof", "lambda1", "lambda2"});
  MetricDefaults m;
  read(j, "n", m.n, "metrics");
  read(j, "eps", m.eps, "metrics");
  read(j, "k_lof", m.k_lof, "metrics");
  read(j, "lambda1", m.lambda1, "metrics");
  read(j, "lambda2", m.lambda2, "metrics");
  if (m.n == 0) throw Error("metrics.n must be positive");
  if (!(m.eps > 0.0)) throw Error("metrics.eps must be positive");
  if (m.k_lof == 0) throw Error("metrics.k_lof must be positive");
  if (m.lambda1 < 0.0 || m.lambda2 < 0.0) throw Error("metrics.lambda1/lambda2 must be non-negative");
  return m;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, "config",
             {"dataset", "label_column", "output", "seed", "classifier", "train", "flow", "density", "metrics"});
  ExperimentConfig c;
  if (!j.contains("dataset")) throw Error("config: missing key 'dataset'");
  std::string path;
  read(j, "dataset", path, "config");
  c.dataset = path;
  if (c.dataset.is_relative() && !base_dir.empty()) c.dataset = base_dir / c.dataset;
  read(j, "label_column", c.label_column, "config");
  if (j.contains("output")) {
    read(j, "output", path, "config");
    c.output = path;
    if (c.output.is_relative() && !base_dir.empty()) c.output = base_dir / c.output;
  }
  read(j, "seed", c.seed, "config");
  c.classifier.seed = c.seed;
  c.train.seed = c.seed;

  if (j.contains("classifier")) {
    const auto& jc = j["classifier"];
    check_keys(jc, "classifier", {"kind", "hidden", "epochs", "learning_rate", "l2", "tolerance", "seed"});
    std::string kind = "mlp-2-layer";
    read(jc, "kind", kind, "classifier");
    c.classifier_kind = classifier_kind_from_string(kind);
    read(jc, "hidden", c.classifier.hidden, "classifier");
    read(jc, "epochs", c.classifier.epochs, "classifier");
    read(jc, "learning_rate", c.classifier.learning_rate, "classifier");
    read(jc, "l2", c.classifier.l2, "classifier");
    read(jc, "tolerance", c.classifier.tolerance, "classifier");
    read(jc, "seed", c.classifier.seed, "classifier");
  }
  if (j.contains("train")) {
    const auto& jt = j["train"];
    check_keys(jt, "train",
               {"steps", "batch_instances", "k", "p_values", "masks", "class_prior", "alpha", "seed", "learning_rate",
                "clip_norm", "holdout_fraction", "dequant_noise", "continuous_noise", "validation_pairs", "log_every", "init_output_scale"});
    auto& t = c.train;
    read(jt, "steps", t.steps, "train");
    read(jt, "batch_instances", t.batch_instances, "train");
    read(jt, "k", t.k, "train");
    read(jt, "p_values", t.p_values, "train");
    read(jt, "masks", c.mask_names, "train");
    read(jt, "class_prior", t.class_prior, "train");
    read(jt, "alpha", t.alpha, "train");
    read(jt, "seed", t.seed, "train");
    read(jt, "learning_rate", t.optimizer.learning_rate, "train");
    read(jt, "clip_norm", t.optimizer.clip_norm, "train");
    read(jt, "holdout_fraction", t.holdout_fraction, "train");
    read(jt, "dequant_noise", t.dequant_noise, "train");
    read(jt, "continuous_noise", t.continuous_noise, "train");
    read(jt, "validation_pairs", t.validation_pairs, "train");
    read(jt, "log_every", t.log_every, "train");
    read(jt, "init_output_scale", t.init_output_scale, "train");
  }
  if (j.contains("flow")) {
    const auto& jf = j["flow"];
    check_keys(jf, "flow", {"layers", "hidden", "hidden_layers", "log_scale_clamp", "center_on_query"});
    read(jf, "layers", c.train.layers, "flow");
    read(jf, "hidden", c.train.hidden, "flow");
    read(jf, "hidden_layers", c.train.hidden_layers, "flow");
    read(jf, "log_scale_clamp", c.train.log_scale_clamp, "flow");
    read(jf, "center_on_query", c.train.center_on_query, "flow");
  }
  if (j.contains("density")) {
    const auto& jd = j["density"];
    check_keys(jd, "density", {"steps", "batch", "layers", "hidden", "seed"});
    DensityConfig d;
    d.seed = c.seed;
    read(jd, "steps", d.steps, "density");
    read(jd, "batch", d.batch, "density");
    read(jd, "layers", d.layers, "density");
    read(jd, "hidden", d.hidden, "density");
    read(jd, "seed", d.seed, "density");
    c.density = d;
  }
  if (j.contains("metrics")) c.metrics = MetricDefaults::from_json(j["metrics"]);
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("config file " + path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

}  // namespace cfflow
