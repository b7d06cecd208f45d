#include "cfflow/service.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <thread>

#include "cfflow/generator.hpp"
#include "httplib.h"

namespace cfflow {
namespace {

using nlohmann::json;

HttpReply json_reply(int status, const json& body) { return {status, body.dump(), {}}; }

HttpReply error_reply(int status, const std::string& message) { return json_reply(status, {{"error", message}}); }

HttpReply not_loaded(const std::string& load_error) {
  if (!load_error.empty()) return json_reply(503, {{"error", "bundle failed to load"}, {"detail", load_error}});
  return json_reply(503, {{"error", "bundle is loading"}});
}

// Field-level validation messages keyed by JSON path.
using FieldErrors = std::map<std::string, std::string>;

HttpReply invalid(const FieldErrors& errors) {
  return json_reply(400, {{"error", "invalid request"}, {"fields", errors}});
}

std::optional<json> parse_body(std::string_view body, FieldErrors& errors) {
  try {
    auto j = json::parse(body);
    if (!j.is_object()) {
      errors["body"] = "expected a JSON object";
      return std::nullopt;
    }
    return j;
  } catch (const json::parse_error&) {
    errors["body"] = "malformed JSON";
    return std::nullopt;
  }
}

std::optional<Instance> parse_instance(const json& j, const TableSchema& schema, FieldErrors& errors) {
  if (!j.is_object()) {
    errors["instance"] = "expected an object of feature values";
    return std::nullopt;
  }
  for (const auto& [key, value] : j.items()) {
    if (!schema.find(key)) errors["instance." + key] = "unknown feature";
  }
  Instance x;
  x.values.resize(schema.feature_count());
  bool ok = true;
  for (std::size_t f = 0; f < schema.feature_count(); ++f) {
    const auto& spec = schema.feature(f);
    const std::string field = "instance." + spec.name;
    if (!j.contains(spec.name)) {
      errors[field] = "missing";
      ok = false;
      continue;
    }
    const auto& v = j.at(spec.name);
    if (spec.is_continuous()) {
      if (!v.is_number() || !std::isfinite(v.get<double>())) {
        errors[field] = "expected a finite number";
        ok = false;
      } else {
        x.values[f] = v.get<double>();
      }
    } else {
      if (!v.is_string()) {
        errors[field] = "expected a category label";
        ok = false;
      } else if (std::find(spec.categories.begin(), spec.categories.end(), v.get<std::string>()) ==
                 spec.categories.end()) {
        errors[field] = "unknown category '" + v.get<std::string>() + "'";
        ok = false;
      } else {
        x.values[f] = v.get<std::string>();
      }
    }
  }
  if (!ok || !errors.empty()) return std::nullopt;
  return x;
}

json instance_json(const Instance& x, const TableSchema& schema) {
  json out = json::object();
  for (std::size_t f = 0; f < schema.feature_count(); ++f) {
    const auto& v = x.values[f];
    if (const auto* d = std::get_if<double>(&v)) out[schema.feature(f).name] = *d;
    else out[schema.feature(f).name] = std::get<std::string>(v);
  }
  return out;
}

json masks_json(const ModelBundle& b) {
  json masks = json::array();
  for (const auto& m : b.masks) masks.push_back(b.schema.mask_names(m));
  return masks;
}

}  // namespace

void ExplainService::set_bundle(std::shared_ptr<const ModelBundle> bundle) {
  std::lock_guard lock(mutex_);
  bundle_ = std::move(bundle);
  load_error_.clear();
}

void ExplainService::load(const std::filesystem::path& dir) {
  try {
    set_bundle(std::make_shared<const ModelBundle>(load_bundle(dir)));
  } catch (const std::exception& e) {
    std::lock_guard lock(mutex_);
    load_error_ = e.what();
  }
}

bool ExplainService::ready() const { return current() != nullptr; }

std::shared_ptr<const ModelBundle> ExplainService::current() const {
  std::lock_guard lock(mutex_);
  return bundle_;
}

HttpReply ExplainService::handle(std::string_view method, std::string_view path, std::string_view body) const {
  struct Route {
    std::string_view path, method;
  };
  static constexpr Route routes[] = {
      {"/healthz", "GET"}, {"/schema", "GET"}, {"/classify", "POST"}, {"/generate", "POST"}};
  bool known = false;
  for (const auto& r : routes) {
    if (r.path != path) continue;
    known = true;
    if (method == "OPTIONS") return {204, "", {}};
    if (r.method != method) return error_reply(405, "method not allowed");
  }
  if (!known) return error_reply(404, "not found");
  if (path == "/healthz") return healthz();
  if (path == "/schema") return schema();
  if (path == "/classify") return classify(body);
  return generate(body);
}

HttpReply ExplainService::healthz() const {
  const auto b = current();
  if (!b) {
    std::lock_guard lock(mutex_);
    return not_loaded(load_error_);
  }
  return json_reply(200, {{"status", "ok"}, {"bundle_id", b->bundle_id}});
}

HttpReply ExplainService::schema() const {
  const auto b = current();
  if (!b) return healthz();
  json feats = json::array();
  for (const auto& f : b->schema.features()) {
    json jf{{"name", f.name}, {"kind", f.is_continuous() ? "continuous" : "categorical"}};
    if (f.is_continuous()) {
      jf["min"] = f.stats.min;
      jf["max"] = f.stats.max;
      jf["mean"] = f.stats.mean;
      jf["stddev"] = f.stats.stddev;
    } else {
      jf["categories"] = f.categories;
    }
    feats.push_back(std::move(jf));
  }
  return json_reply(200, {{"features", feats},
                          {"class_labels", b->schema.class_labels()},
                          {"p_values", b->p_values},
                          {"masks", masks_json(*b)},
                          {"has_classifier", b->classifier.has_value()},
                          {"defaults", b->metric_defaults.to_json()},
                          {"bundle_id", b->bundle_id}});
}

HttpReply ExplainService::classify(std::string_view body) const {
  const auto b = current();
  if (!b) return healthz();
  if (!b->classifier) return error_reply(404, "bundle has no classifier");
  FieldErrors errors;
  const auto req = parse_body(body, errors);
  if (!req) return invalid(errors);
  if (!req->contains("instance")) return invalid({{"instance", "missing"}});
  const auto x = parse_instance(req->at("instance"), b->schema, errors);
  if (!x) return invalid(errors);
  const auto proba = b->classifier->predict_proba(encode(*x, b->schema));
  const auto pred = static_cast<std::size_t>(std::max_element(proba.begin(), proba.end()) - proba.begin());
  return json_reply(200, {{"probabilities", proba},
                          {"predicted_class", pred},
                          {"predicted_label", b->schema.class_labels()[pred]}});
}

HttpReply ExplainService::generate(std::string_view body) const {
  const auto start = std::chrono::steady_clock::now();
  const auto b = current();
  if (!b) return healthz();
  const auto& schema = b->schema;
  FieldErrors errors;
  const auto req = parse_body(body, errors);
  if (!req) return invalid(errors);

  static const std::set<std::string> allowed{"instance", "target_class", "n",       "p",       "mask",
                                             "rank_by_score", "seed", "lambda1", "lambda2", "eps"};
  for (const auto& [key, v] : req->items()) {
    if (!allowed.count(key)) errors[key] = "unknown field";
  }

  GenerateOptions opt;
  opt.n = b->metric_defaults.n;
  opt.eps = b->metric_defaults.eps;
  opt.lambda1 = b->metric_defaults.lambda1;
  opt.lambda2 = b->metric_defaults.lambda2;

  std::optional<Instance> x;
  if (!req->contains("instance")) errors["instance"] = "missing";
  else x = parse_instance(req->at("instance"), schema, errors);

  if (req->contains("target_class")) {
    const auto& t = req->at("target_class");
    if (t.is_string() && t.get<std::string>() == "flip") {
      if (!b->classifier) errors["target_class"] = "\"flip\" needs a classifier in the bundle";
    } else if (t.is_number_unsigned() && t.get<std::size_t>() < schema.class_count()) {
      opt.target = t.get<std::size_t>();
    } else if (t.is_string() && schema.class_index(t.get<std::string>())) {
      opt.target = *schema.class_index(t.get<std::string>());
    } else {
      errors["target_class"] = "expected a class index, a class label or \"flip\"";
    }
  } else if (!b->classifier) {
    errors["target_class"] = "required when the bundle has no classifier";
  }
  if (req->contains("n")) {
    const auto& n = req->at("n");
    if (!n.is_number_integer() || n.get<long long>() < 1 || n.get<long long>() > static_cast<long long>(kMaxRequestN)) {
      errors["n"] = "expected an integer in [1, " + std::to_string(kMaxRequestN) + "]";
    } else {
      opt.n = n.get<std::size_t>();
    }
  }
  auto positive = [&](const char* key, double& out, bool strictly) {
    if (!req->contains(key)) return;
    const auto& v = req->at(key);
    if (!v.is_number() || !std::isfinite(v.get<double>()) || (strictly ? !(v.get<double>() > 0.0) : v.get<double>() < 0.0)) {
      errors[key] = strictly ? "expected a positive number" : "expected a non-negative number";
    } else {
      out = v.get<double>();
    }
  };
  positive("p", opt.p, true);
  positive("eps", opt.eps, true);
  positive("lambda1", opt.lambda1, false);
  positive("lambda2", opt.lambda2, false);
  if (opt.lambda2 > 0.0 && !b->density) errors["lambda2"] = "bundle has no density estimator";
  if (req->contains("mask")) {
    const auto& m = req->at("mask");
    if (!m.is_array()) {
      errors["mask"] = "expected a list of feature names";
    } else {
      opt.mask = schema.empty_mask();
      for (const auto& name : m) {
        if (!name.is_string() || !schema.find(name.get<std::string>())) {
          errors["mask"] = "unknown feature " + name.dump();
          break;
        }
        opt.mask.bits[*schema.find(name.get<std::string>())] = 1;
      }
    }
  }
  if (req->contains("rank_by_score")) {
    if (!req->at("rank_by_score").is_boolean()) errors["rank_by_score"] = "expected a boolean";
    else opt.rank_by_score = req->at("rank_by_score").get<bool>();
  }
  bool pinned = false;
  if (req->contains("seed")) {
    if (!req->at("seed").is_number_unsigned()) {
      errors["seed"] = "expected a non-negative integer";
    } else {
      opt.seed = req->at("seed").get<std::uint64_t>();
      pinned = true;
    }
  } else {
    opt.seed = (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();
  }
  if (!errors.empty() || !x) return invalid(errors);

  GenerationResult result;
  try {
    result = generate_counterfactuals(*b, *x, opt);
  } catch (const Error& e) {
    return error_reply(400, e.what());
  }

  json cfs = json::array();
  for (const auto& cf : result.counterfactuals) {
    json jc{{"features", instance_json(cf.features, schema)},
            {"valid", cf.valid},
            {"class_prob", cf.class_prob},
            {"proximity_num", cf.proximity_num},
            {"changed_features", cf.changed_features},
            {"score", cf.score ? json(*cf.score) : json(nullptr)}};
    if (!cf.explanation.empty()) jc["explanation"] = cf.explanation;
    cfs.push_back(std::move(jc));
  }
  json factual{{"features", instance_json(*x, schema)}};
  if (result.predicted) {
    factual["predicted_class"] = *result.predicted;
    factual["probabilities"] = result.factual_proba;
  }
  json resp{{"counterfactuals", cfs},
            {"factual", factual},
            {"target_class", result.target},
            {"target_label", schema.class_labels()[result.target]},
            {"p", opt.p},
            {"mask", schema.mask_names(opt.mask.bits.empty() ? schema.empty_mask() : opt.mask)},
            {"seed", opt.seed},
            {"warnings", result.warnings},
            {"model_info", {{"bundle_id", b->bundle_id}, {"p_values", b->p_values}, {"masks", masks_json(*b)}}}};
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (!pinned) resp["timing_ms"] = ms;
  HttpReply reply = json_reply(200, resp);
  reply.headers.emplace_back("X-Timing-Ms", format_value(RawValue{ms}));
  return reply;
}

struct HttpServer::Impl {
  ServerOptions options;
  ExplainService service;
  httplib::Server server;
  std::thread loader;
  std::thread listener;
  int port = 0;

  void configure() {
    // Routes registered per method: a pre-routing handler would run before the body is read.
    auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
      const auto reply = service.handle(req.method, req.path, req.body);
      res.status = reply.status;
      for (const auto& [k, v] : reply.headers) res.set_header(k, v);
      res.set_header("Access-Control-Allow-Origin", options.cors_origin);
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      if (!reply.body.empty()) res.set_content(reply.body, "application/json");
    };
    const std::string any = ".*";
    server.Get(any, dispatch);
    server.Post(any, dispatch);
    server.Put(any, dispatch);
    server.Patch(any, dispatch);
    server.Delete(any, dispatch);
    server.Options(any, dispatch);
  }

  void bind() {
    configure();
    if (options.port == 0) {
      port = server.bind_to_any_port(options.host);
    } else {
      port = server.bind_to_port(options.host, options.port) ? options.port : -1;
    }
    if (port <= 0) throw Error("cannot bind " + options.host + ":" + std::to_string(options.port));
    loader = std::thread([this] { service.load(options.bundle); });
  }
};

HttpServer::HttpServer(ServerOptions options) : impl_(std::make_unique<Impl>()) { impl_->options = std::move(options); }

HttpServer::~HttpServer() {
  stop();
  if (impl_->listener.joinable()) impl_->listener.join();
  if (impl_->loader.joinable()) impl_->loader.join();
}

int HttpServer::start() {
  impl_->bind();
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void HttpServer::run() {
  impl_->bind();
  impl_->server.listen_after_bind();
}

void HttpServer::stop() { impl_->server.stop(); }

const ExplainService& HttpServer::service() const { return impl_->service; }

}  // namespace cfflow
