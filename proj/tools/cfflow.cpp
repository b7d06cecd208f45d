// Command-line front end: datasets, classifier fitting, flow training,
// generation, evaluation and the HTTP service.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cfflow/bundle.hpp"
#include "cfflow/csv.hpp"
#include "cfflow/datasets.hpp"
#include "cfflow/generator.hpp"
#include "cfflow/metrics.hpp"
#include "cfflow/pipeline.hpp"
#include "cfflow/service.hpp"

namespace fs = std::filesystem;
using namespace cfflow;

namespace {

constexpr int kExitError = 1;
constexpr int kExitMissingInput = 2;

struct MissingInput : Error {
  using Error::Error;
};

void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw MissingInput(std::string(what) + " not found: " + p.string());
}

std::vector<std::string> split_names(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

std::optional<std::size_t> parse_target(const std::string& s, const TableSchema& schema) {
  if (s.empty() || s == "flip") return std::nullopt;
  if (auto c = schema.class_index(s)) return c;
  if (auto v = parse_number(s); v && *v >= 0 && *v == std::floor(*v) && *v < static_cast<double>(schema.class_count())) {
    return static_cast<std::size_t>(*v);
  }
  throw Error("unknown target class '" + s + "'");
}

struct GenerationFlags {
  std::size_t n = 0;  // 0: bundle default
  double p = 2.0;
  std::string mask;
  std::string target = "flip";
  bool rank = false;
  std::uint64_t seed = 0;
  std::size_t threads = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--n", n, "Counterfactuals per row (default: bundle default, 10)");
    cmd->add_option("--p", p, "Sparsity exponent p")->capture_default_str();
    cmd->add_option("--mask", mask, "Comma-separated features that must not change");
    cmd->add_option("--target", target, "Target class index or label, or 'flip'")->capture_default_str();
    cmd->add_flag("--rank", rank, "Order each row's counterfactuals by score");
    cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
    cmd->add_option("--threads", threads, "Worker threads (0: all cores)")->capture_default_str();
  }

  GenerateOptions options(const ModelBundle& b) const {
    GenerateOptions o;
    o.n = n ? n : b.metric_defaults.n;
    o.p = p;
    o.mask = b.schema.mask_from_names(split_names(mask));
    o.target = parse_target(target, b.schema);
    o.rank_by_score = rank;
    o.lambda1 = b.metric_defaults.lambda1;
    o.lambda2 = b.density ? b.metric_defaults.lambda2 : 0.0;
    o.eps = b.metric_defaults.eps;
    o.seed = seed;
    return o;
  }
};

std::vector<Instance> read_rows(const fs::path& path, const ModelBundle& b) {
  require_file(path, "input file");
  CsvOptions opts;
  opts.label_column = b.schema.label_column();
  opts.schema_hint = b.schema;
  return ingest_csv(path, opts).rows;
}

void print_train_report(const TrainReport& r, std::ostream& out) {
  out << "step,train_nll,validation_nll\n";
  for (std::size_t i = 0; i < r.logged_steps.size(); ++i) {
    out << r.logged_steps[i] << ',' << format_value(RawValue{r.train_nll[i]}) << ',';
    if (i < r.validation_nll.size()) out << format_value(RawValue{r.validation_nll[i]});
    out << '\n';
  }
  out << "train_rows=" << r.train_rows << " holdout_rows=" << r.holdout_rows << " steps=" << r.steps
      << " first_decile_nll=" << format_value(RawValue{r.first_decile_nll})
      << " last_decile_nll=" << format_value(RawValue{r.last_decile_nll});
  if (r.final_validation_nll) out << " validation_nll=" << format_value(RawValue{*r.final_validation_nll});
  out << " wall_seconds=" << format_value(RawValue{r.wall_seconds}) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cfflow: counterfactual explanations from a conditional autoregressive flow"};
  app.require_subcommand(1);

  // make-dataset
  auto* make = app.add_subcommand("make-dataset", "Write a synthetic dataset (two-moons or adult-like) as CSV");
  std::string kind = "two-moons";
  std::size_t rows = 2000;
  double noise = 0.1;
  std::uint64_t make_seed = 0;
  fs::path make_out;
  make->add_option("--kind", kind, "two-moons | adult-like")->capture_default_str();
  make->add_option("--rows", rows, "Row count")->capture_default_str();
  make->add_option("--noise", noise, "Two-moons noise level")->capture_default_str();
  make->add_option("--seed", make_seed, "Random seed")->capture_default_str();
  make->add_option("--out", make_out, "Output CSV")->required();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Read a CSV, infer its schema and write the schema as JSON");
  fs::path ingest_data, ingest_schema;
  std::string ingest_label = "label";
  std::uint64_t ingest_seed = 0;
  ingest->add_option("--data", ingest_data, "Input CSV")->required();
  ingest->add_option("--label-column", ingest_label, "Label column name")->capture_default_str();
  ingest->add_option("--schema-out", ingest_schema, "Where to write the schema JSON");
  ingest->add_option("--seed", ingest_seed, "Unused; accepted for uniformity");

  // fit-classifier
  auto* fit = app.add_subcommand("fit-classifier", "Fit a reference classifier and write its labels as CSV");
  fs::path fit_data, fit_out;
  std::string fit_label = "label", fit_kind = "mlp-2-layer";
  ClassifierSettings fit_settings;
  fit->add_option("--data", fit_data, "Input CSV")->required();
  fit->add_option("--label-column", fit_label, "Label column name")->capture_default_str();
  fit->add_option("--kind", fit_kind, "logistic-linear | mlp-2-layer")->capture_default_str();
  fit->add_option("--hidden", fit_settings.hidden, "Hidden width (mlp-2-layer)")->capture_default_str();
  fit->add_option("--epochs", fit_settings.epochs, "Maximum epochs")->capture_default_str();
  fit->add_option("--seed", fit_settings.seed, "Random seed")->capture_default_str();
  fit->add_option("--out", fit_out, "Relabeled CSV")->required();

  // train
  auto* trn = app.add_subcommand("train", "Train classifier and flow from a JSON config and write a bundle");
  fs::path train_config, train_out;
  std::optional<std::uint64_t> train_seed;
  trn->add_option("--config", train_config, "Experiment config (JSON)")->required();
  trn->add_option("--out", train_out, "Bundle directory (used when the config has no 'output')");
  trn->add_option("--seed", train_seed, "Seed (used when the config has no 'seed')");

  // generate
  auto* gen = app.add_subcommand("generate", "Generate counterfactuals for each input row");
  fs::path gen_bundle, gen_input, gen_out;
  GenerationFlags gen_flags;
  gen->add_option("--bundle", gen_bundle, "Bundle directory")->required();
  gen->add_option("--input", gen_input, "CSV of factual rows")->required();
  gen->add_option("--out", gen_out, "Output CSV (default: stdout)");
  gen_flags.add(gen);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Generate for test rows and report the metric suite");
  fs::path eval_bundle, eval_input, eval_json, eval_csv;
  GenerationFlags eval_flags;
  std::size_t eval_max_rows = 0;
  eval->add_option("--bundle", eval_bundle, "Bundle directory")->required();
  eval->add_option("--input", eval_input, "CSV of test rows")->required();
  eval->add_option("--max-rows", eval_max_rows, "Use at most this many rows (0: all)");
  eval->add_option("--json", eval_json, "Write the report as JSON");
  eval->add_option("--csv", eval_csv, "Write per-instance metrics as CSV");
  eval_flags.add(eval);

  // serve
  auto* srv = app.add_subcommand("serve", "Serve a bundle over HTTP");
  ServerOptions server_opts;
  if (const char* env = std::getenv("CFFLOW_BUNDLE")) server_opts.bundle = env;
  if (const char* env = std::getenv("CFFLOW_PORT")) server_opts.port = std::atoi(env);
  std::uint64_t serve_seed = 0;
  srv->add_option("--bundle", server_opts.bundle, "Bundle directory (env CFFLOW_BUNDLE)");
  srv->add_option("--host", server_opts.host, "Listen address")->capture_default_str();
  srv->add_option("--port", server_opts.port, "Port (env CFFLOW_PORT)")->capture_default_str();
  srv->add_option("--cors-origin", server_opts.cors_origin, "Access-Control-Allow-Origin value")
      ->capture_default_str();
  srv->add_option("--seed", serve_seed, "Unused; requests carry their own seeds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*make) {
      std::string text;
      if (kind == "two-moons") text = datasets::two_moons_csv(rows, noise, make_seed);
      else if (kind == "adult-like") text = datasets::adult_like_csv(rows, make_seed);
      else throw Error("unknown dataset kind '" + kind + "'");
      std::ofstream out(make_out);
      out << text;
      if (!out) throw Error("cannot write " + make_out.string());
      std::cout << "wrote " << rows << " rows to " << make_out.string() << '\n';
    } else if (*ingest) {
      require_file(ingest_data, "dataset");
      CsvOptions opts;
      opts.label_column = ingest_label;
      const auto table = ingest_csv(ingest_data, opts);
      std::cout << "rows=" << table.rows.size() << " features=" << table.schema.feature_count()
                << " continuous=" << table.schema.continuous_count()
                << " categorical=" << table.schema.categorical_count()
                << " encoded_dim=" << table.schema.encoded_dim() << " classes=" << table.schema.class_count()
                << '\n';
      const auto j = table.schema.to_json().dump(2);
      if (ingest_schema.empty()) {
        std::cout << j << '\n';
      } else {
        std::ofstream(ingest_schema) << j << '\n';
      }
    } else if (*fit) {
      require_file(fit_data, "dataset");
      CsvOptions opts;
      opts.label_column = fit_label;
      const auto table = ingest_csv(fit_data, opts);
      const auto result = fit_classifier(table.schema, {table.rows, table.labels},
                                         classifier_kind_from_string(fit_kind), fit_settings);
      const auto labeled = label_dataset(result.classifier, table.schema, table.rows);
      write_csv(fit_out, table.schema, labeled.instances, labeled.labels);
      std::cout << "train_accuracy=" << format_value(RawValue{result.report.train_accuracy})
                << " epochs=" << result.report.epochs << " loss=" << format_value(RawValue{result.report.final_loss})
                << '\n';
      if (!result.report.warning.empty()) std::cerr << "warning: " << result.report.warning << '\n';
    } else if (*trn) {
      require_file(train_config, "config file");
      std::ifstream in(train_config);
      const auto raw = nlohmann::json::parse(in, nullptr, false);
      if (raw.is_discarded()) throw Error("config file " + train_config.string() + " is not valid JSON");
      auto j = raw;
      if (train_seed && !j.contains("seed")) j["seed"] = *train_seed;
      if (!train_out.empty() && !j.contains("output")) j["output"] = fs::absolute(train_out).string();
      const auto cfg = ExperimentConfig::from_json(j, train_config.parent_path());
      require_file(cfg.dataset, "dataset");
      CsvOptions opts;
      opts.label_column = cfg.label_column;
      const auto table = ingest_csv(cfg.dataset, opts);
      auto result = run_training(table, cfg);
      if (result.classifier_report) {
        std::cout << "classifier train_accuracy=" << format_value(RawValue{result.classifier_report->train_accuracy})
                  << '\n';
        if (!result.classifier_report->warning.empty()) {
          std::cerr << "warning: " << result.classifier_report->warning << '\n';
        }
      }
      print_train_report(result.train_report, std::cout);
      const auto id = save_bundle(cfg.output, result.bundle);
      std::cout << "bundle " << cfg.output.string() << " id=" << id << '\n';
    } else if (*gen) {
      require_file(gen_bundle / "manifest.json", "bundle");
      const auto bundle = load_bundle(gen_bundle);
      const auto inputs = read_rows(gen_input, bundle);
      const auto opts = gen_flags.options(bundle);
      const auto results = generate_batch(bundle, inputs, opts, gen_flags.threads);
      std::ofstream file;
      if (!gen_out.empty()) file.open(gen_out);
      std::ostream& out = gen_out.empty() ? std::cout : file;
      const auto& schema = bundle.schema;
      out << "row_id,cf_index,target";
      for (const auto& f : schema.features()) out << ',' << csv_escape(f.name);
      out << ",valid,class_prob,score,proximity_num,sparsity_cat,sparsity_num,eps_sparsity_num\n";
      std::set<std::string> warned;
      for (std::size_t r = 0; r < results.size(); ++r) {
        for (const auto& w : results[r].warnings) {
          if (warned.insert(w).second) std::cerr << "warning: " << w << '\n';
        }
        for (std::size_t i = 0; i < results[r].counterfactuals.size(); ++i) {
          const auto& cf = results[r].counterfactuals[i];
          const Instance one[] = {cf.features};
          out << r << ',' << i << ',' << csv_escape(schema.class_labels()[results[r].target]);
          for (const auto& v : cf.features.values) out << ',' << csv_escape(format_value(v));
          out << ',' << (cf.valid ? 1 : 0) << ',' << format_value(RawValue{cf.class_prob}) << ','
              << (cf.score ? format_value(RawValue{*cf.score}) : std::string()) << ','
              << format_value(RawValue{cf.proximity_num}) << ','
              << format_value(RawValue{sparsity_cat(inputs[r], one, schema)}) << ','
              << format_value(RawValue{sparsity_num(inputs[r], one, schema)}) << ','
              << format_value(RawValue{eps_sparsity(inputs[r], one, schema, opts.eps)}) << '\n';
        }
      }
    } else if (*eval) {
      require_file(eval_bundle / "manifest.json", "bundle");
      const auto bundle = load_bundle(eval_bundle);
      if (!bundle.classifier) throw Error("evaluation needs a bundle with a classifier");
      if (bundle.reference_rows.empty()) throw Error("bundle has no reference rows for LOF");
      auto inputs = read_rows(eval_input, bundle);
      if (eval_max_rows && inputs.size() > eval_max_rows) inputs.resize(eval_max_rows);
      if (inputs.empty()) throw Error("no test rows in " + eval_input.string());
      const auto opts = eval_flags.options(bundle);
      const auto t0 = std::chrono::steady_clock::now();
      const auto results = generate_batch(bundle, inputs, opts, eval_flags.threads);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::vector<InstanceCounterfactuals> items;
      for (const auto& r : results) {
        InstanceCounterfactuals item{r.factual, r.target, {}};
        for (const auto& cf : r.counterfactuals) item.counterfactuals.push_back(cf.features);
        items.push_back(std::move(item));
      }
      const LofModel lof(bundle.reference_rows, bundle.schema.encoded_dim(), bundle.metric_defaults.k_lof);
      const auto report = evaluate_counterfactuals(items, bundle.schema, *bundle.classifier, lof, {opts.eps});
      write_report_table(std::cout, report, "p=" + format_value(RawValue{opts.p}));
      std::cout << "instances=" << inputs.size() << " seconds=" << format_value(RawValue{secs})
                << " seconds_per_instance=" << format_value(RawValue{secs / static_cast<double>(inputs.size())})
                << '\n';
      if (!eval_json.empty()) {
        auto j = report.to_json();
        j["seconds_per_instance"] = secs / static_cast<double>(inputs.size());
        std::ofstream(eval_json) << j.dump(2) << '\n';
      }
      if (!eval_csv.empty()) {
        std::ofstream out(eval_csv);
        write_instance_csv(out, report);
      }
    } else if (*srv) {
      if (server_opts.bundle.empty()) throw MissingInput("no bundle given (--bundle or CFFLOW_BUNDLE)");
      require_file(server_opts.bundle / "manifest.json", "bundle");
      HttpServer server(server_opts);
      std::cout << "serving " << server_opts.bundle.string() << " on http://" << server_opts.host << ':'
                << server_opts.port << '\n'
                << std::flush;
      server.run();
    }
  } catch (const MissingInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissingInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return 0;
}
