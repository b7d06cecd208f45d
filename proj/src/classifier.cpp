#include "cfflow/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cfflow/optimizer.hpp"
#include "cfflow/simd.hpp"

namespace cfflow {
namespace {

void softmax_inplace(double* z, std::size_t c) {
  const double mx = *std::max_element(z, z + c);
  double sum = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    z[k] = std::exp(z[k] - mx);
    sum += z[k];
  }
  for (std::size_t k = 0; k < c; ++k) z[k] /= sum;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::string_view to_string(ClassifierKind kind) {
  return kind == ClassifierKind::logistic_linear ? "logistic-linear" : "mlp-2-layer";
}

ClassifierKind classifier_kind_from_string(std::string_view name) {
  if (name == "logistic-linear") return ClassifierKind::logistic_linear;
  if (name == "mlp-2-layer") return ClassifierKind::mlp_2_layer;
  throw Error("unknown classifier kind '" + std::string(name) + "'");
}

std::vector<std::size_t> LabeledDataset::class_counts(std::size_t class_count) const {
  std::vector<std::size_t> counts(class_count, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= class_count) throw Error("label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

void require_class_support(const LabeledDataset& data, std::size_t class_count, std::size_t min_rows) {
  if (data.labels.size() != data.instances.size()) throw Error("labels and instances differ in length");
  const auto counts = data.class_counts(class_count);
  for (std::size_t c = 0; c < class_count; ++c) {
    if (counts[c] < min_rows) {
      throw Error("class " + std::to_string(c) + " has " + std::to_string(counts[c]) + " rows, need at least " +
                  std::to_string(min_rows));
    }
  }
}

Classifier::Classifier(ClassifierKind kind, std::size_t input_dim, std::size_t class_count, std::size_t hidden)
    : kind_(kind), input_dim_(input_dim), class_count_(class_count), hidden_(hidden) {
  if (class_count < 2) throw Error("classifier needs at least 2 classes");
  if (input_dim == 0) throw Error("classifier needs a non-empty input");
  if (kind == ClassifierKind::logistic_linear) {
    hidden_ = 0;
    params_.assign(class_count * input_dim + class_count, 0.0);
  } else {
    if (hidden == 0) throw Error("mlp-2-layer needs a hidden width");
    params_.assign(hidden * input_dim + hidden + class_count * hidden + class_count, 0.0);
  }
}

void Classifier::logits_rows(std::span<const double> rows, std::size_t n, std::vector<double>& logits,
                             std::vector<double>* hidden_out) const {
  const auto& k = simd::kernels();
  const std::size_t d = input_dim_, c = class_count_;
  logits.assign(n * c, 0.0);
  if (kind_ == ClassifierKind::logistic_linear) {
    const double* w = params_.data();
    const double* b = w + c * d;
    for (std::size_t i = 0; i < n; ++i) std::copy(b, b + c, logits.begin() + static_cast<std::ptrdiff_t>(i * c));
    k.gemm_nt(rows.data(), w, logits.data(), n, c, d);
    return;
  }
  const std::size_t h = hidden_;
  const double* w1 = params_.data();
  const double* b1 = w1 + h * d;
  const double* w2 = b1 + h;
  const double* b2 = w2 + c * h;
  std::vector<double> local;
  std::vector<double>& hid = hidden_out ? *hidden_out : local;
  hid.assign(n * h, 0.0);
  for (std::size_t i = 0; i < n; ++i) std::copy(b1, b1 + h, hid.begin() + static_cast<std::ptrdiff_t>(i * h));
  k.gemm_nt(rows.data(), w1, hid.data(), n, h, d);
  for (double& v : hid) v = std::tanh(v);
  for (std::size_t i = 0; i < n; ++i) std::copy(b2, b2 + c, logits.begin() + static_cast<std::ptrdiff_t>(i * c));
  k.gemm_nt(hid.data(), w2, logits.data(), n, c, h);
}

std::vector<double> Classifier::predict_proba(std::span<const double> x) const {
  if (x.size() != input_dim_) {
    throw Error("classifier input has dimension " + std::to_string(x.size()) + ", expected " +
                std::to_string(input_dim_));
  }
  return predict_proba_rows(x, 1);
}

int Classifier::predict(std::span<const double> x) const {
  return static_cast<int>(argmax(predict_proba(x)));
}

std::vector<double> Classifier::predict_proba_rows(std::span<const double> rows, std::size_t n) const {
  if (rows.size() != n * input_dim_) throw Error("classifier input size mismatch");
  std::vector<double> logits;
  logits_rows(rows, n, logits, nullptr);
  for (std::size_t i = 0; i < n; ++i) softmax_inplace(logits.data() + i * class_count_, class_count_);
  return logits;
}

double Classifier::loss_and_grad(std::span<const double> rows, std::span<const int> labels, double l2,
                                 std::vector<double>& grad) const {
  const auto& k = simd::kernels();
  const std::size_t n = labels.size(), d = input_dim_, c = class_count_;
  std::vector<double> logits, hid;
  logits_rows(rows, n, logits, &hid);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double* z = logits.data() + i * c;
    softmax_inplace(z, c);
    const auto y = static_cast<std::size_t>(labels[i]);
    loss -= std::log(std::max(z[y], 1e-300));
    z[y] -= 1.0;
    for (std::size_t t = 0; t < c; ++t) z[t] /= static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  grad.assign(params_.size(), 0.0);

  auto add_l2 = [&](std::size_t offset, std::size_t count) {
    for (std::size_t t = offset; t < offset + count; ++t) {
      loss += 0.5 * l2 * params_[t] * params_[t];
      grad[t] += l2 * params_[t];
    }
  };
  auto colsum = [&](const std::vector<double>& m, std::size_t width, double* out) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < width; ++t) out[t] += m[i * width + t];
  };

  if (kind_ == ClassifierKind::logistic_linear) {
    k.gemm_tn(logits.data(), rows.data(), grad.data(), n, c, d);
    colsum(logits, c, grad.data() + c * d);
    add_l2(0, c * d);
    return loss;
  }
  const std::size_t h = hidden_;
  const std::size_t o_b1 = h * d, o_w2 = o_b1 + h, o_b2 = o_w2 + c * h;
  k.gemm_tn(logits.data(), hid.data(), grad.data() + o_w2, n, c, h);
  colsum(logits, c, grad.data() + o_b2);
  std::vector<double> dh(n * h, 0.0);
  k.gemm_nn(logits.data(), params_.data() + o_w2, dh.data(), n, c, h);
  for (std::size_t t = 0; t < dh.size(); ++t) dh[t] *= 1.0 - hid[t] * hid[t];
  k.gemm_tn(dh.data(), rows.data(), grad.data(), n, h, d);
  colsum(dh, h, grad.data() + o_b1);
  add_l2(0, h * d);
  add_l2(o_w2, c * h);
  return loss;
}

FitResult fit_classifier(const TableSchema& schema, const LabeledDataset& data, ClassifierKind kind,
                         const ClassifierSettings& settings) {
  if (data.labels.size() != data.instances.size()) throw Error("labels and instances differ in length");
  const auto counts = data.class_counts(schema.class_count());
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t n) { return n > 0; }) < 2) {
    throw Error("classifier training needs at least 2 classes present");
  }
  const auto rows = encode_rows(data.instances, schema);
  const std::size_t d = schema.encoded_dim();
  Classifier clf(kind, d, schema.class_count(), kind == ClassifierKind::mlp_2_layer ? settings.hidden : 0);

  if (kind == ClassifierKind::mlp_2_layer) {
    std::mt19937_64 rng(settings.seed);
    auto& p = clf.parameters();
    const std::size_t h = settings.hidden, c = schema.class_count();
    std::uniform_real_distribution<double> u1(-std::sqrt(3.0 / static_cast<double>(d)),
                                              std::sqrt(3.0 / static_cast<double>(d)));
    for (std::size_t t = 0; t < h * d; ++t) p[t] = u1(rng);
    std::uniform_real_distribution<double> u2(-std::sqrt(3.0 / static_cast<double>(h)),
                                              std::sqrt(3.0 / static_cast<double>(h)));
    for (std::size_t t = 0; t < c * h; ++t) p[h * d + h + t] = u2(rng);
  }

  AdamSettings adam;
  adam.learning_rate = settings.learning_rate;
  adam.clip_norm = 0.0;
  Adam opt(clf.parameters().size(), adam);
  std::vector<double> grad;
  FitReport report;
  for (std::size_t epoch = 0; epoch < settings.epochs; ++epoch) {
    report.final_loss = clf.loss_and_grad(rows, data.labels, settings.l2, grad);
    report.epochs = epoch + 1;
    const double norm = opt.step(clf.parameters(), grad);
    if (norm < settings.tolerance) {
      report.converged = true;
      break;
    }
  }
  if (!report.converged) {
    report.warning = "classifier did not converge within " + std::to_string(settings.epochs) + " epochs";
  }
  const auto probs = clf.predict_proba_rows(rows, data.size());
  std::size_t correct = 0;
  const std::size_t c = schema.class_count();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (argmax(std::span<const double>(probs.data() + i * c, c)) == static_cast<std::size_t>(data.labels[i])) {
      ++correct;
    }
  }
  report.train_accuracy = data.size() ? static_cast<double>(correct) / static_cast<double>(data.size()) : 0.0;
  return {std::move(clf), report};
}

LabeledDataset label_dataset(const Classifier& clf, const TableSchema& schema, std::vector<Instance> instances) {
  LabeledDataset out;
  out.labels.reserve(instances.size());
  for (const auto& x : instances) out.labels.push_back(clf.predict(encode(x, schema).view()));
  out.instances = std::move(instances);
  return out;
}

}  // namespace cfflow
