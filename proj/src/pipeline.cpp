#include "cfflow/pipeline.hpp"

#include "cfflow/neighborhood.hpp"

namespace cfflow {

PipelineResult run_training(const Table& table, const ExperimentConfig& config) {
  PipelineResult out;
  const auto& schema = table.schema;
  if (table.labels.size() != table.rows.size()) throw Error("dataset has no label column");
  LabeledDataset raw{table.rows, table.labels};
  if (config.classifier_kind) {
    auto fit = fit_classifier(schema, raw, *config.classifier_kind, config.classifier);
    out.classifier_report = fit.report;
    out.data = label_dataset(fit.classifier, schema, table.rows);
    out.bundle.classifier = std::move(fit.classifier);
  } else {
    out.data = std::move(raw);
  }

  TrainConfig tc = config.train;
  for (const auto& names : config.mask_names) tc.masks.push_back(schema.mask_from_names(names));
  tc.normalize(schema);
  auto trained = train(schema, out.data, tc);
  out.train_report = trained.report;

  auto& b = out.bundle;
  b.schema = schema;
  b.flow = std::move(trained.model);
  b.p_values = tc.p_values;
  b.masks = tc.masks;
  b.k = tc.k;
  b.alpha = tc.alpha;
  b.train_config = train_config_json(tc, schema);
  b.metric_defaults = config.metrics;
  b.reference_rows = encode_rows(out.data.instances, schema);
  if (config.density) {
    const EncodedDataset all(schema.encoded_dim(), b.reference_rows, out.data.labels, schema.class_count());
    b.density = train_density(schema, all, *config.density);
  }
  return out;
}

}  // namespace cfflow
