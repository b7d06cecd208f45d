#include "cfflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cfflow/simd.hpp"

namespace cfflow {
namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void check_finite(std::span<const double> v, std::size_t layer, const char* where) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw Error(std::string("non-finite value in flow layer ") + std::to_string(layer) + " (" + where + ")");
    }
  }
}

void broadcast_rows(const double* row, std::size_t width, std::size_t n, std::vector<double>& out) {
  out.resize(n * width);
  for (std::size_t i = 0; i < n; ++i) std::copy(row, row + width, out.begin() + static_cast<std::ptrdiff_t>(i * width));
}

void add_colsum(const std::vector<double>& m, std::size_t n, std::size_t width, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = m.data() + i * width;
    for (std::size_t t = 0; t < width; ++t) out[t] += r[t];
  }
}

}  // namespace

void ConditionerLayout::flatten_into(const ConditioningContext& ctx, double* out) const {
  if (ctx.x.size() != encoded_dim) {
    throw Error("conditioning query has dimension " + std::to_string(ctx.x.size()) + ", expected " +
                std::to_string(encoded_dim));
  }
  if (ctx.target >= class_count) throw Error("conditioning target class out of range");
  if (!(ctx.p > 0.0) || !std::isfinite(ctx.p)) throw Error("conditioning exponent p must be positive");
  if (ctx.mask.size() != feature_count) throw Error("conditioning mask has the wrong number of features");
  std::copy(ctx.x.data.begin(), ctx.x.data.end(), out);
  out += encoded_dim;
  std::fill_n(out, class_count, 0.0);
  out[ctx.target] = 1.0;
  out += class_count;
  *out++ = std::log(ctx.p);
  for (std::size_t f = 0; f < feature_count; ++f) out[f] = ctx.mask.bits[f] ? 1.0 : 0.0;
}

std::vector<double> ConditionerLayout::flatten(const ConditioningContext& ctx) const {
  std::vector<double> out(dim());
  flatten_into(ctx, out.data());
  return out;
}

struct FlowModel::LayerCache {
  std::vector<double> u;                    // layer input
  std::vector<std::vector<double>> hidden;  // tanh activations per hidden layer
  std::vector<double> z;
  std::vector<double> scale;   // exp(-a)
  std::vector<double> inside;  // 1 where the raw log-scale was inside the clamp
};

FlowModel::FlowModel(const FlowArchitecture& arch) : arch_(arch) {
  if (arch_.dim == 0) throw Error("flow dimension must be positive");
  if (arch_.layers == 0 || arch_.hidden == 0 || arch_.hidden_layers == 0) {
    throw Error("flow needs at least one layer, hidden unit and hidden layer");
  }
  if (!(arch_.log_scale_clamp > 0.0)) throw Error("log-scale clamp must be positive");
  if (arch_.center_on_context && arch_.context_dim < arch_.dim) {
    throw Error("a centered flow needs a context at least as wide as its input");
  }
  build();
}

void FlowModel::build() {
  const std::size_t d = arch_.dim, h = arch_.hidden, c = arch_.context_dim;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    tensors_.push_back({std::move(name), offset, rows, cols});
    offset += rows * cols;
    return tensors_.back().offset;
  };
  for (std::size_t l = 0; l < arch_.layers; ++l) {
    std::vector<int> deg(d);
    for (std::size_t i = 0; i < d; ++i) deg[i] = l % 2 == 0 ? static_cast<int>(i + 1) : static_cast<int>(d - i);
    degrees_.push_back(std::move(deg));
    Layout lay;
    const std::string prefix = "layer" + std::to_string(l) + ".";
    for (std::size_t t = 0; t < arch_.hidden_layers; ++t) {
      lay.w.push_back(add(prefix + "w" + std::to_string(t), h, t == 0 ? d : h));
      lay.v.push_back(c ? add(prefix + "v" + std::to_string(t), h, c) : 0);
      lay.b.push_back(add(prefix + "b" + std::to_string(t), h, 1));
    }
    lay.w_out = add(prefix + "w_out", 2 * d, h);
    lay.b_out = add(prefix + "b_out", 2 * d, 1);
    layout_.push_back(std::move(lay));
  }
  params_.assign(offset, 0.0);
  param_mask_.assign(offset, 1.0);

  std::vector<int> hdeg(h);
  for (std::size_t k = 0; k < h; ++k) hdeg[k] = d > 1 ? static_cast<int>(k % (d - 1)) + 1 : 0;
  for (std::size_t l = 0; l < arch_.layers; ++l) {
    const auto& deg = degrees_[l];
    const auto& lay = layout_[l];
    for (std::size_t t = 0; t < arch_.hidden_layers; ++t) {
      double* m = param_mask_.data() + lay.w[t];
      const std::size_t in = t == 0 ? d : h;
      for (std::size_t k = 0; k < h; ++k) {
        for (std::size_t i = 0; i < in; ++i) {
          const int in_deg = t == 0 ? deg[i] : hdeg[i];
          m[k * in + i] = hdeg[k] >= in_deg ? 1.0 : 0.0;
        }
      }
    }
    double* m = param_mask_.data() + lay.w_out;
    for (std::size_t r = 0; r < 2 * d; ++r) {
      for (std::size_t k = 0; k < h; ++k) m[r * h + k] = deg[r % d] > hdeg[k] ? 1.0 : 0.0;
    }
  }
}

void FlowModel::apply_masks() {
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i] *= param_mask_[i];
}

void FlowModel::initialize(std::mt19937_64& rng, double output_scale) {
  const std::size_t d = arch_.dim, h = arch_.hidden, c = arch_.context_dim;
  std::fill(params_.begin(), params_.end(), 0.0);
  auto fill = [&](std::size_t offset, std::size_t count, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < count; ++i) params_[offset + i] = u(rng);
  };
  for (const auto& lay : layout_) {
    for (std::size_t t = 0; t < arch_.hidden_layers; ++t) {
      const std::size_t in = t == 0 ? d : h;
      const double bound = 1.0 / std::sqrt(static_cast<double>(in + c));
      fill(lay.w[t], h * in, bound);
      if (c) fill(lay.v[t], h * c, bound);
    }
    fill(lay.w_out, 2 * d * h, output_scale / std::sqrt(static_cast<double>(h)));
  }
  apply_masks();
}

void FlowModel::set_conditioner(const ConditionerLayout& layout) {
  if (layout.dim() != arch_.context_dim) {
    throw Error("conditioner layout has dimension " + std::to_string(layout.dim()) + ", flow expects " +
                std::to_string(arch_.context_dim));
  }
  if (arch_.center_on_context && layout.encoded_dim != arch_.dim) {
    throw Error("a centered flow needs the query at the front of its conditioner");
  }
  conditioner_ = layout;
}

void FlowModel::context_terms(std::size_t layer, std::span<const double> ctx, std::size_t n,
                              std::vector<std::vector<double>>& terms) const {
  const auto& k = simd::kernels();
  const auto& lay = layout_[layer];
  const std::size_t h = arch_.hidden, c = arch_.context_dim;
  terms.resize(arch_.hidden_layers);
  for (std::size_t t = 0; t < arch_.hidden_layers; ++t) {
    broadcast_rows(params_.data() + lay.b[t], h, n, terms[t]);
    if (c) k.gemm_nt(ctx.data(), params_.data() + lay.v[t], terms[t].data(), n, h, c);
  }
}

void FlowModel::net(std::size_t layer, const double* u, const double* ctx_term, std::size_t n, LayerCache* cache,
                    std::vector<double>& out) const {
  // ctx_term points at hidden_layers consecutive (n x H) blocks.
  const auto& k = simd::kernels();
  const auto& lay = layout_[layer];
  const std::size_t d = arch_.dim, h = arch_.hidden;
  std::vector<double> local_a, local_b;
  const double* input = u;
  std::size_t in = d;
  std::vector<double>* act = nullptr;
  for (std::size_t t = 0; t < arch_.hidden_layers; ++t) {
    act = cache ? &cache->hidden[t] : (t % 2 == 0 ? &local_a : &local_b);
    act->assign(ctx_term + t * n * h, ctx_term + (t + 1) * n * h);
    k.gemm_nt(input, params_.data() + lay.w[t], act->data(), n, h, in);
    for (double& v : *act) v = std::tanh(v);
    input = act->data();
    in = h;
  }
  broadcast_rows(params_.data() + lay.b_out, 2 * d, n, out);
  k.gemm_nt(input, params_.data() + lay.w_out, out.data(), n, 2 * d, h);
}

void FlowModel::layer_forward(std::size_t layer, const double* u, std::span<const double> ctx, std::size_t n,
                              double* z, double* log_det, LayerCache* cache) const {
  const std::size_t d = arch_.dim, h = arch_.hidden;
  std::vector<std::vector<double>> terms;
  context_terms(layer, ctx, n, terms);
  std::vector<double> flat(arch_.hidden_layers * n * h);
  for (std::size_t t = 0; t < terms.size(); ++t) std::copy(terms[t].begin(), terms[t].end(), flat.begin() + static_cast<std::ptrdiff_t>(t * n * h));
  if (cache) {
    cache->u.assign(u, u + n * d);
    cache->hidden.resize(arch_.hidden_layers);
    cache->scale.resize(n * d);
    cache->inside.resize(n * d);
  }
  std::vector<double> out;
  net(layer, u, flat.data(), n, cache, out);
  const double clamp = arch_.log_scale_clamp;
  for (std::size_t i = 0; i < n; ++i) {
    double ld = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double mu = out[i * 2 * d + j];
      const double raw = out[i * 2 * d + d + j];
      const double a = std::clamp(raw, -clamp, clamp);
      const double s = std::exp(-a);
      z[i * d + j] = (u[i * d + j] - mu) * s;
      ld -= a;
      if (cache) {
        cache->scale[i * d + j] = s;
        cache->inside[i * d + j] = (raw > -clamp && raw < clamp) ? 1.0 : 0.0;
      }
    }
    log_det[i] += ld;
  }
  check_finite({z, n * d}, layer, "forward");
  if (cache) cache->z.assign(z, z + n * d);
}

void FlowModel::layer_inverse(std::size_t layer, const double* z, std::span<const double> ctx, std::size_t n,
                              double* u) const {
  const std::size_t d = arch_.dim, h = arch_.hidden;
  std::vector<std::vector<double>> terms;
  context_terms(layer, ctx, n, terms);
  std::vector<double> flat(arch_.hidden_layers * n * h);
  for (std::size_t t = 0; t < terms.size(); ++t) std::copy(terms[t].begin(), terms[t].end(), flat.begin() + static_cast<std::ptrdiff_t>(t * n * h));

  const auto& deg = degrees_[layer];
  std::vector<std::size_t> order(d);
  for (std::size_t j = 0; j < d; ++j) order[static_cast<std::size_t>(deg[j] - 1)] = j;

  std::fill(u, u + n * d, 0.0);
  std::vector<double> out;
  const double clamp = arch_.log_scale_clamp;
  for (std::size_t step = 0; step < d; ++step) {
    const std::size_t j = order[step];
    net(layer, u, flat.data(), n, nullptr, out);
    for (std::size_t i = 0; i < n; ++i) {
      const double mu = out[i * 2 * d + j];
      const double a = std::clamp(out[i * 2 * d + d + j], -clamp, clamp);
      u[i * d + j] = z[i * d + j] * std::exp(a) + mu;
    }
  }
  check_finite({u, n * d}, layer, "inverse");
}

void FlowModel::forward_layer(std::size_t layer, std::span<const double> u, std::span<const double> ctx,
                              std::size_t n, std::vector<double>& z, std::vector<double>& log_det) const {
  if (layer >= arch_.layers) throw Error("flow layer index out of range");
  if (u.size() != n * arch_.dim || ctx.size() != n * arch_.context_dim) throw Error("flow batch size mismatch");
  z.assign(n * arch_.dim, 0.0);
  log_det.assign(n, 0.0);
  layer_forward(layer, u.data(), ctx, n, z.data(), log_det.data(), nullptr);
}

std::vector<double> FlowModel::centered_input(std::span<const double> x, std::span<const double> ctx,
                                             std::size_t n) const {
  std::vector<double> u(x.begin(), x.end());
  if (!arch_.center_on_context) return u;
  const std::size_t d = arch_.dim, c = arch_.context_dim;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) u[i * d + j] -= ctx[i * c + j];
  }
  return u;
}

LogProbBatch FlowModel::forward_batch(std::span<const double> x, std::span<const double> ctx, std::size_t n) const {
  const std::size_t d = arch_.dim;
  if (x.size() != n * d || ctx.size() != n * arch_.context_dim) throw Error("flow batch size mismatch");
  LogProbBatch out;
  out.log_det.assign(n, 0.0);
  std::vector<double> cur = centered_input(x, ctx, n), next(n * d);
  for (std::size_t l = 0; l < arch_.layers; ++l) {
    layer_forward(l, cur.data(), ctx, n, next.data(), out.log_det.data(), nullptr);
    cur.swap(next);
  }
  out.log_prob.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.log_prob[i] = standard_normal_log_density({cur.data() + i * d, d}) + out.log_det[i];
  }
  out.z = std::move(cur);
  return out;
}

std::vector<double> FlowModel::inverse_batch(std::span<const double> z, std::span<const double> ctx,
                                             std::size_t n) const {
  const std::size_t d = arch_.dim;
  if (z.size() != n * d || ctx.size() != n * arch_.context_dim) throw Error("flow batch size mismatch");
  std::vector<double> cur(z.begin(), z.end()), next(n * d);
  for (std::size_t l = arch_.layers; l-- > 0;) {
    layer_inverse(l, cur.data(), ctx, n, next.data());
    cur.swap(next);
  }
  if (arch_.center_on_context) {
    const std::size_t c = arch_.context_dim;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) cur[i * d + j] += ctx[i * c + j];
    }
  }
  return cur;
}

double FlowModel::nll_and_grad(std::span<const double> x, std::span<const double> ctx, std::size_t n,
                               std::vector<double>& grad) const {
  const auto& k = simd::kernels();
  const std::size_t d = arch_.dim, h = arch_.hidden, c = arch_.context_dim;
  if (n == 0) throw Error("nll_and_grad: empty batch");
  if (x.size() != n * d || ctx.size() != n * c) throw Error("flow batch size mismatch");

  std::vector<LayerCache> caches(arch_.layers);
  std::vector<double> log_det(n, 0.0);
  std::vector<double> cur = centered_input(x, ctx, n), next(n * d);
  for (std::size_t l = 0; l < arch_.layers; ++l) {
    layer_forward(l, cur.data(), ctx, n, next.data(), log_det.data(), &caches[l]);
    cur.swap(next);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    loss -= standard_normal_log_density({cur.data() + i * d, d}) + log_det[i];
  }
  loss *= inv_n;
  if (!std::isfinite(loss)) throw Error("non-finite negative log-likelihood");

  grad.assign(params_.size(), 0.0);
  std::vector<double> gz(n * d);
  for (std::size_t t = 0; t < n * d; ++t) gz[t] = cur[t] * inv_n;

  std::vector<double> dout(n * 2 * d), dh, da, dinput, gu(n * d);
  for (std::size_t l = arch_.layers; l-- > 0;) {
    const auto& cache = caches[l];
    const auto& lay = layout_[l];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t t = i * d + j;
        const double g = gz[t], s = cache.scale[t];
        gu[t] = g * s;
        dout[i * 2 * d + j] = -g * s;
        dout[i * 2 * d + d + j] = (-g * cache.z[t] + inv_n) * cache.inside[t];
      }
    }
    const auto& last = cache.hidden.back();
    k.gemm_tn(dout.data(), last.data(), grad.data() + lay.w_out, n, 2 * d, h);
    add_colsum(dout, n, 2 * d, grad.data() + lay.b_out);
    dh.assign(n * h, 0.0);
    k.gemm_nn(dout.data(), params_.data() + lay.w_out, dh.data(), n, 2 * d, h);
    for (std::size_t t = arch_.hidden_layers; t-- > 0;) {
      const auto& act = cache.hidden[t];
      da.resize(n * h);
      for (std::size_t q = 0; q < n * h; ++q) da[q] = dh[q] * (1.0 - act[q] * act[q]);
      const double* input = t == 0 ? cache.u.data() : cache.hidden[t - 1].data();
      const std::size_t in = t == 0 ? d : h;
      k.gemm_tn(da.data(), input, grad.data() + lay.w[t], n, h, in);
      if (c) k.gemm_tn(da.data(), ctx.data(), grad.data() + lay.v[t], n, h, c);
      add_colsum(da, n, h, grad.data() + lay.b[t]);
      dinput.assign(n * in, 0.0);
      k.gemm_nn(da.data(), params_.data() + lay.w[t], dinput.data(), n, h, in);
      if (t == 0) {
        for (std::size_t q = 0; q < n * d; ++q) gu[q] += dinput[q];
      } else {
        dh.swap(dinput);
      }
    }
    gz.swap(gu);
  }
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= param_mask_[i];
  return loss;
}

double standard_normal_log_density(std::span<const double> z) {
  double sq = 0.0;
  for (double v : z) sq += v * v;
  return -0.5 * sq - static_cast<double>(z.size()) * kHalfLog2Pi;
}

namespace {

std::vector<double> flatten_context(const FlowModel& model, const ConditioningContext& ctx) {
  if (model.context_dim() == 0) return {};
  if (!model.conditioner()) throw Error("flow model has no conditioner layout");
  return model.conditioner()->flatten(ctx);
}

}  // namespace

LogProbResult forward(const FlowModel& model, const EncodedVector& x, const ConditioningContext& ctx) {
  if (x.size() != model.dim()) throw Error("flow input dimension mismatch");
  const auto c = flatten_context(model, ctx);
  auto batch = model.forward_batch(x.view(), c, 1);
  return {batch.log_prob[0], std::move(batch.z), batch.log_det[0]};
}

EncodedVector inverse(const FlowModel& model, std::span<const double> z, const ConditioningContext& ctx) {
  if (z.size() != model.dim()) throw Error("flow latent dimension mismatch");
  const auto c = flatten_context(model, ctx);
  return {model.inverse_batch(z, c, 1)};
}

std::vector<EncodedVector> sample(const FlowModel& model, const ConditioningContext& ctx, std::size_t n,
                                  std::mt19937_64& rng) {
  if (n == 0) throw Error("sample count must be positive");
  const std::size_t d = model.dim();
  const auto c = flatten_context(model, ctx);
  std::vector<double> ctx_rows;
  ctx_rows.reserve(n * c.size());
  for (std::size_t i = 0; i < n; ++i) ctx_rows.insert(ctx_rows.end(), c.begin(), c.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(n * d);
  for (double& v : z) v = normal(rng);
  const auto x = model.inverse_batch(z, ctx_rows, n);
  std::vector<EncodedVector> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].data.assign(x.begin() + static_cast<std::ptrdiff_t>(i * d), x.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
  return out;
}

std::vector<double> grad_nll(const FlowModel& model, std::span<const FlowSample> batch) {
  if (batch.empty()) throw Error("grad_nll: empty batch");
  const std::size_t d = model.dim(), n = batch.size();
  std::vector<double> x(n * d), ctx;
  ctx.reserve(n * model.context_dim());
  for (std::size_t i = 0; i < n; ++i) {
    if (batch[i].x.size() != d) throw Error("flow input dimension mismatch");
    std::copy(batch[i].x.data.begin(), batch[i].x.data.end(), x.begin() + static_cast<std::ptrdiff_t>(i * d));
    const auto c = flatten_context(model, batch[i].ctx);
    ctx.insert(ctx.end(), c.begin(), c.end());
  }
  std::vector<double> grad;
  model.nll_and_grad(x, ctx, n, grad);
  return grad;
}

}  // namespace cfflow
