#include "camloc/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace camloc {

namespace {
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;
}  // namespace

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

Tensor global_pool(const Tensor& features, PoolMode mode) {
  if (features.rank() != 3)
    throw std::invalid_argument("global_pool: features must be MxHxW, got " +
                                features.shape_string());
  const int m = features.dim(0), h = features.dim(1), w = features.dim(2);
  if (h < 1 || w < 1) throw std::invalid_argument("global_pool: empty spatial extent");
  Tensor out({m});
  const int hw = h * w;
  for (int c = 0; c < m; ++c) {
    const double* plane = features.data() + static_cast<std::size_t>(c) * hw;
    if (mode == PoolMode::kAvg) {
      double acc = 0.0;
      for (int i = 0; i < hw; ++i) acc += plane[i];
      out[c] = acc / hw;
    } else {
      double best = plane[0];
      for (int i = 1; i < hw; ++i) best = std::max(best, plane[i]);
      out[c] = best;
    }
  }
  return out;
}

Tensor global_pool_backward(const Tensor& grad_pooled, const Tensor& features, PoolMode mode) {
  const int m = features.dim(0), h = features.dim(1), w = features.dim(2);
  if (grad_pooled.rank() != 1 || grad_pooled.dim(0) != m)
    throw std::invalid_argument("global_pool_backward: gradient length mismatch");
  Tensor grad({m, h, w});
  const int hw = h * w;
  for (int c = 0; c < m; ++c) {
    const double* plane = features.data() + static_cast<std::size_t>(c) * hw;
    double* gplane = grad.data() + static_cast<std::size_t>(c) * hw;
    if (mode == PoolMode::kAvg) {
      const double g = grad_pooled[c] / hw;
      for (int i = 0; i < hw; ++i) gplane[i] = g;
    } else {
      int arg = 0;
      for (int i = 1; i < hw; ++i)
        if (plane[i] > plane[arg]) arg = i;
      gplane[arg] = grad_pooled[c];
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy
// ---------------------------------------------------------------------------

SoftmaxResult softmax_cross_entropy(const std::vector<double>& logits, int label) {
  const int n = static_cast<int>(logits.size());
  if (n < 2) throw std::invalid_argument("softmax_cross_entropy: need at least 2 classes");
  if (label < 0 || label >= n)
    throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                " out of range [0," + std::to_string(n) + ")");
  SoftmaxResult r;
  const double maxv = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  r.probs.resize(n);
  for (int i = 0; i < n; ++i) {
    r.probs[i] = std::exp(logits[i] - maxv);
    denom += r.probs[i];
  }
  for (int i = 0; i < n; ++i) r.probs[i] /= denom;
  r.loss = -(logits[label] - maxv - std::log(denom));
  r.grad_logits = r.probs;
  r.grad_logits[label] -= 1.0;
  return r;
}

// ---------------------------------------------------------------------------
// Config / params
// ---------------------------------------------------------------------------

void ConvNetConfig::validate() const {
  if (layers.empty()) throw std::invalid_argument("ConvNetConfig: no conv layers");
  if (num_classes < 2) throw std::invalid_argument("ConvNetConfig: class count must be >= 2");
  if (in_channels < 1 || in_h < 1 || in_w < 1)
    throw std::invalid_argument("ConvNetConfig: bad input dims");
  for (const auto& l : layers) {
    if (l.kernel_h < 1 || l.kernel_w < 1 || l.kernel_h % 2 == 0 || l.kernel_w % 2 == 0)
      throw std::invalid_argument("ConvNetConfig: kernel sizes must be odd and >= 1, got " +
                                  std::to_string(l.kernel_h) + "x" + std::to_string(l.kernel_w));
    if (l.out_channels < 1) throw std::invalid_argument("ConvNetConfig: out_channels must be >= 1");
    if (l.stride < 1) throw std::invalid_argument("ConvNetConfig: stride must be >= 1");
    if (l.pad_h < 0 || l.pad_w < 0) throw std::invalid_argument("ConvNetConfig: pad must be >= 0");
  }
  int h, w;
  layer_output_dims(static_cast<int>(layers.size()) - 1, &h, &w);  // throws if collapsed
}

void ConvNetConfig::layer_output_dims(int layer, int* out_h, int* out_w) const {
  int h = in_h, w = in_w;
  for (int i = 0; i <= layer; ++i) {
    const auto& l = layers[static_cast<std::size_t>(i)];
    const int nh = (h + 2 * l.pad_h - l.kernel_h) / l.stride + 1;
    const int nw = (w + 2 * l.pad_w - l.kernel_w) / l.stride + 1;
    if (nh < 1 || nw < 1)
      throw std::invalid_argument("ConvNetConfig: layer " + std::to_string(i) +
                                  " collapses the spatial extent");
    h = nh;
    w = nw;
  }
  *out_h = h;
  *out_w = w;
}

void ModelParams::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
  for (std::size_t i = 0; i < conv.size(); ++i) {
    fn("conv" + std::to_string(i) + ".w", conv[i].weights);
    fn("conv" + std::to_string(i) + ".b", conv[i].bias);
    if (i < bn.size()) {
      fn("bn" + std::to_string(i) + ".gamma", bn[i].gamma);
      fn("bn" + std::to_string(i) + ".beta", bn[i].beta);
    }
  }
  fn("cls.w", classifier_w);
  fn("cls.b", classifier_b);
}

void ModelParams::visit_const(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<ModelParams*>(this)->visit(
      [&](const std::string& name, Tensor& t) { fn(name, t); });
}

std::int64_t ModelParams::parameter_count() const {
  std::int64_t n = 0;
  visit_const([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

ModelParams init_params(const ConvNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  Rng rng(derive_seed(seed, seed_tag::kInit));
  int ic = cfg.in_channels;
  for (const auto& l : cfg.layers) {
    ModelParams::ConvLayer layer;
    layer.weights = Tensor({l.out_channels, ic, l.kernel_h, l.kernel_w});
    layer.bias = Tensor({l.out_channels});
    const double bound = std::sqrt(6.0 / (static_cast<double>(ic) * l.kernel_h * l.kernel_w));
    for (std::int64_t i = 0; i < layer.weights.size(); ++i)
      layer.weights[i] = rng.uniform(-bound, bound);
    p.conv.push_back(std::move(layer));
    if (cfg.batch_norm) {
      BnParams b;
      b.gamma = Tensor::full({l.out_channels}, 1.0);
      b.beta = Tensor({l.out_channels});
      b.running_mean = Tensor({l.out_channels});
      b.running_var = Tensor::full({l.out_channels}, 1.0);
      p.bn.push_back(std::move(b));
    }
    ic = l.out_channels;
  }
  const int m = cfg.feature_channels();
  p.classifier_w = Tensor({cfg.num_classes, m});
  const double bound = std::sqrt(6.0 / m);
  for (std::int64_t i = 0; i < p.classifier_w.size(); ++i)
    p.classifier_w[i] = rng.uniform(-bound, bound);
  p.classifier_b = Tensor({cfg.num_classes});
  return p;
}

ModelParams zero_like(const ModelParams& p) {
  ModelParams z;
  for (const auto& l : p.conv) {
    ModelParams::ConvLayer zl;
    zl.weights = Tensor(l.weights.shape());
    zl.bias = Tensor(l.bias.shape());
    z.conv.push_back(std::move(zl));
  }
  for (const auto& b : p.bn) {
    BnParams zb;
    zb.gamma = Tensor(b.gamma.shape());
    zb.beta = Tensor(b.beta.shape());
    zb.running_mean = Tensor(b.running_mean.shape());
    zb.running_var = Tensor(b.running_var.shape());
    z.bn.push_back(std::move(zb));
  }
  z.classifier_w = Tensor(p.classifier_w.shape());
  z.classifier_b = Tensor(p.classifier_b.shape());
  return z;
}

// ---------------------------------------------------------------------------
// ConvNet
// ---------------------------------------------------------------------------

ConvNet::ConvNet(ConvNetConfig cfg, ModelParams params, const kernels::Backend& backend)
    : cfg_(std::move(cfg)), params_(std::move(params)), backend_(&backend) {
  cfg_.validate();
  scratch_.resize(cfg_.layers.size());
  if (params_.classifier_w.rank() != 2 || params_.classifier_w.dim(1) != cfg_.feature_channels())
    throw std::invalid_argument("ConvNet: classifier width " +
                                std::to_string(params_.classifier_w.dim(1)) +
                                " does not match final conv channels " +
                                std::to_string(cfg_.feature_channels()));
  if (cfg_.batch_norm && params_.bn.size() != cfg_.layers.size())
    throw std::invalid_argument("ConvNet: batch_norm enabled but BN parameters missing");
}

void ConvNet::forward_batch(const std::vector<const Tensor*>& inputs, bool training,
                            BatchCache& cache, const FeatureHook& hook) {
  const int nlayers = static_cast<int>(cfg_.layers.size());
  const int batch = static_cast<int>(inputs.size());
  if (batch == 0) throw std::invalid_argument("forward_batch: empty batch");
  cache.samples.assign(static_cast<std::size_t>(batch), SampleCache{});
  cache.bn_mean.assign(cfg_.batch_norm ? nlayers : 0, Tensor());
  cache.bn_var.assign(cfg_.batch_norm ? nlayers : 0, Tensor());

  for (int s = 0; s < batch; ++s) {
    const Tensor& x = *inputs[s];
    if (x.rank() != 3 || x.dim(0) != cfg_.in_channels || x.dim(1) != cfg_.in_h ||
        x.dim(2) != cfg_.in_w)
      throw std::invalid_argument("forward_batch: input " + x.shape_string() +
                                  " does not match configured " +
                                  Tensor::shape_string({cfg_.in_channels, cfg_.in_h, cfg_.in_w}));
    auto& sc = cache.samples[s];
    sc.input = x;
    sc.pre_activations.resize(nlayers);
    sc.post_activations.resize(nlayers);
    sc.feature_hide_mask.resize(nlayers);
    if (cfg_.batch_norm) sc.conv_outputs.resize(nlayers);
  }

  for (int l = 0; l < nlayers; ++l) {
    const auto& spec = cfg_.layers[static_cast<std::size_t>(l)];
    const auto& lp = params_.conv[static_cast<std::size_t>(l)];
    for (int s = 0; s < batch; ++s) {
      auto& sc = cache.samples[s];
      const Tensor& in = (l == 0) ? sc.input : sc.post_activations[l - 1];
      Tensor out = conv2d_forward_hw(in, lp.weights, lp.bias, spec.stride, spec.pad_h, spec.pad_w,
                                     *backend_, &scratch_[static_cast<std::size_t>(l)]);
      if (cfg_.batch_norm) {
        sc.conv_outputs[l] = std::move(out);
      } else {
        sc.pre_activations[l] = std::move(out);
      }
    }

    if (cfg_.batch_norm) {
      auto& bp = params_.bn[static_cast<std::size_t>(l)];
      const int ch = cfg_.layers[l].out_channels;
      const Tensor& first = cache.samples[0].conv_outputs[l];
      const int hw = first.dim(1) * first.dim(2);
      const double count = static_cast<double>(batch) * hw;
      Tensor mean({ch}), var({ch});
      if (training) {
        for (int c = 0; c < ch; ++c) {
          double acc = 0.0;
          for (int s = 0; s < batch; ++s) {
            const double* plane =
                cache.samples[s].conv_outputs[l].data() + static_cast<std::size_t>(c) * hw;
            for (int i = 0; i < hw; ++i) acc += plane[i];
          }
          mean[c] = acc / count;
          double vacc = 0.0;
          for (int s = 0; s < batch; ++s) {
            const double* plane =
                cache.samples[s].conv_outputs[l].data() + static_cast<std::size_t>(c) * hw;
            for (int i = 0; i < hw; ++i) {
              const double d = plane[i] - mean[c];
              vacc += d * d;
            }
          }
          var[c] = vacc / count;
          bp.running_mean[c] = kBnMomentum * bp.running_mean[c] + (1.0 - kBnMomentum) * mean[c];
          bp.running_var[c] = kBnMomentum * bp.running_var[c] + (1.0 - kBnMomentum) * var[c];
        }
      } else {
        mean = bp.running_mean;
        var = bp.running_var;
      }
      cache.bn_mean[l] = mean;
      cache.bn_var[l] = var;
      for (int s = 0; s < batch; ++s) {
        auto& sc = cache.samples[s];
        const Tensor& src = sc.conv_outputs[l];
        Tensor norm(src.shape());
        for (int c = 0; c < ch; ++c) {
          const double inv = 1.0 / std::sqrt(var[c] + kBnEps);
          const double* ip = src.data() + static_cast<std::size_t>(c) * hw;
          double* op = norm.data() + static_cast<std::size_t>(c) * hw;
          for (int i = 0; i < hw; ++i) op[i] = bp.gamma[c] * ((ip[i] - mean[c]) * inv) + bp.beta[c];
        }
        sc.pre_activations[l] = std::move(norm);
      }
    }

    for (int s = 0; s < batch; ++s) {
      auto& sc = cache.samples[s];
      const Tensor& pre = sc.pre_activations[l];
      Tensor post(pre.shape());
      if (cfg_.relu) {
        for (std::int64_t i = 0; i < pre.size(); ++i) post[i] = pre[i] > 0.0 ? pre[i] : 0.0;
      } else {
        post = pre;
      }
      if (training && hook) {
        Tensor mask;
        hook(l, s, post, mask);
        sc.feature_hide_mask[l] = std::move(mask);
      }
      sc.post_activations[l] = std::move(post);
    }
  }

  // Head: pooling + linear classifier.
  const int m = cfg_.feature_channels();
  for (int s = 0; s < batch; ++s) {
    auto& sc = cache.samples[s];
    const Tensor& feats = sc.post_activations[nlayers - 1];
    Tensor pooled = global_pool(feats, cfg_.head == Head::kGap ? PoolMode::kAvg : PoolMode::kMax);
    sc.pooled.assign(pooled.data(), pooled.data() + m);
    if (cfg_.head == Head::kGmp) {
      sc.max_positions.resize(m);
      const int hw = feats.dim(1) * feats.dim(2);
      for (int c = 0; c < m; ++c) {
        const double* plane = feats.data() + static_cast<std::size_t>(c) * hw;
        int arg = 0;
        for (int i = 1; i < hw; ++i)
          if (plane[i] > plane[arg]) arg = i;
        sc.max_positions[c] = arg;
      }
    }
    sc.logits.assign(cfg_.num_classes, 0.0);
    for (int n = 0; n < cfg_.num_classes; ++n) {
      double acc = params_.classifier_b[n];
      const double* wrow = params_.classifier_w.data() + static_cast<std::size_t>(n) * m;
      for (int c = 0; c < m; ++c) acc += wrow[c] * sc.pooled[c];
      sc.logits[n] = acc;
    }
  }
}

void ConvNet::backward_batch(const BatchCache& cache,
                             const std::vector<std::vector<double>>& grad_logits,
                             ModelParams& grads) {
  const int nlayers = static_cast<int>(cfg_.layers.size());
  const int batch = static_cast<int>(cache.samples.size());
  if (static_cast<int>(grad_logits.size()) != batch)
    throw std::invalid_argument("backward_batch: gradient count does not match batch");
  const int m = cfg_.feature_channels();

  std::vector<Tensor> dpost(batch);
  for (int s = 0; s < batch; ++s) {
    const auto& sc = cache.samples[s];
    const auto& dl = grad_logits[s];
    // Classifier.
    std::vector<double> dpooled(m, 0.0);
    for (int n = 0; n < cfg_.num_classes; ++n) {
      const double g = dl[n];
      grads.classifier_b[n] += g;
      double* gw = grads.classifier_w.data() + static_cast<std::size_t>(n) * m;
      const double* w = params_.classifier_w.data() + static_cast<std::size_t>(n) * m;
      for (int c = 0; c < m; ++c) {
        gw[c] += g * sc.pooled[c];
        dpooled[c] += w[c] * g;
      }
    }
    // Pooling.
    const Tensor& feats = sc.post_activations[nlayers - 1];
    Tensor dfeat({m, feats.dim(1), feats.dim(2)});
    const int hw = feats.dim(1) * feats.dim(2);
    if (cfg_.head == Head::kGap) {
      for (int c = 0; c < m; ++c) {
        const double g = dpooled[c] / hw;
        double* gp = dfeat.data() + static_cast<std::size_t>(c) * hw;
        for (int i = 0; i < hw; ++i) gp[i] = g;
      }
    } else {
      for (int c = 0; c < m; ++c)
        dfeat.data()[static_cast<std::size_t>(c) * hw + sc.max_positions[c]] = dpooled[c];
    }
    dpost[s] = std::move(dfeat);
  }

  for (int l = nlayers - 1; l >= 0; --l) {
    const auto& spec = cfg_.layers[static_cast<std::size_t>(l)];
    const auto& lp = params_.conv[static_cast<std::size_t>(l)];
    auto& gl = grads.conv[static_cast<std::size_t>(l)];

    // d(post) -> d(pre): feature-hide mask, then ReLU.
    std::vector<Tensor> dpre(batch);
    for (int s = 0; s < batch; ++s) {
      const auto& sc = cache.samples[s];
      Tensor d = std::move(dpost[s]);
      const Tensor& mask = sc.feature_hide_mask[l];
      if (!mask.empty()) {
        for (std::int64_t i = 0; i < d.size(); ++i)
          if (mask[i] != 0.0) d[i] = 0.0;
      }
      if (cfg_.relu) {
        const Tensor& pre = sc.pre_activations[l];
        for (std::int64_t i = 0; i < d.size(); ++i)
          if (pre[i] <= 0.0) d[i] = 0.0;
      }
      dpre[s] = std::move(d);
    }

    // BN backward (batch statistics shared across samples).
    if (cfg_.batch_norm) {
      const auto& bp = params_.bn[static_cast<std::size_t>(l)];
      auto& gb = grads.bn[static_cast<std::size_t>(l)];
      const Tensor& mean = cache.bn_mean[l];
      const Tensor& var = cache.bn_var[l];
      const int ch = spec.out_channels;
      const int hw = dpre[0].dim(1) * dpre[0].dim(2);
      const double count = static_cast<double>(batch) * hw;
      for (int c = 0; c < ch; ++c) {
        const double inv = 1.0 / std::sqrt(var[c] + kBnEps);
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int s = 0; s < batch; ++s) {
          const double* xp =
              cache.samples[s].conv_outputs[l].data() + static_cast<std::size_t>(c) * hw;
          const double* dp = dpre[s].data() + static_cast<std::size_t>(c) * hw;
          for (int i = 0; i < hw; ++i) {
            sum_dy += dp[i];
            sum_dy_xhat += dp[i] * ((xp[i] - mean[c]) * inv);
          }
        }
        gb.gamma[c] += sum_dy_xhat;
        gb.beta[c] += sum_dy;
        for (int s = 0; s < batch; ++s) {
          const double* xp =
              cache.samples[s].conv_outputs[l].data() + static_cast<std::size_t>(c) * hw;
          double* dp = dpre[s].data() + static_cast<std::size_t>(c) * hw;
          for (int i = 0; i < hw; ++i) {
            const double xhat = (xp[i] - mean[c]) * inv;
            dp[i] = bp.gamma[c] * inv * (dp[i] - sum_dy / count - xhat * sum_dy_xhat / count);
          }
        }
      }
    }

    // Conv backward.
    std::vector<Tensor> dinput(batch);
    for (int s = 0; s < batch; ++s) {
      const auto& sc = cache.samples[s];
      const Tensor& in = (l == 0) ? sc.input : sc.post_activations[l - 1];
      dinput[s] = conv2d_backward_acc(dpre[s], in, lp.weights, spec.stride, spec.pad_h,
                                      spec.pad_w, gl.weights, gl.bias,
                                      /*need_grad_input=*/l > 0, *backend_,
                                      &scratch_[static_cast<std::size_t>(l)]);
    }
    dpost = std::move(dinput);
  }
}

SampleCache ConvNet::forward_one(const Tensor& input) const {
  auto* self = const_cast<ConvNet*>(this);
  BatchCache cache;
  // Eval path: running statistics, no hooks, no running-stat updates (BN
  // eval mode reads but never writes them).
  self->forward_batch({&input}, /*training=*/false, cache);
  return std::move(cache.samples[0]);
}

// ---------------------------------------------------------------------------
// SGD
// ---------------------------------------------------------------------------

bool sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum) {
  if (!grad.all_finite()) return false;
  for (std::int64_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    param[i] -= lr * velocity[i];
  }
  return true;
}

Sgd::Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {
  if (!(lr > 0.0)) throw std::invalid_argument("Sgd: lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("Sgd: momentum must be in [0,1)");
}

void Sgd::set_lr(double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("Sgd: lr must be > 0");
  lr_ = lr;
}

bool Sgd::step(ModelParams& params, const ModelParams& grads) {
  bool finite = true;
  grads.visit_const([&](const std::string&, const Tensor& g) {
    if (!g.all_finite()) finite = false;
  });
  if (!finite) return false;

  if (!initialized_) {
    params.visit([&](const std::string&, Tensor& t) { velocity_.emplace_back(t.shape()); });
    initialized_ = true;
  }
  std::size_t i = 0;
  std::vector<const Tensor*> gptrs;
  grads.visit_const([&](const std::string&, const Tensor& g) { gptrs.push_back(&g); });
  params.visit([&](const std::string&, Tensor& t) {
    sgd_step(t, *gptrs[i], velocity_[i], lr_, momentum_);
    ++i;
  });
  return true;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient oracle
// ---------------------------------------------------------------------------

namespace {

struct LossProbe {
  double loss;
  // ReLU sign pattern and GMP argmax positions; central differences are only
  // valid when these match on both sides of the perturbation.
  std::vector<std::uint8_t> signature;
};

LossProbe probe_loss(ConvNet& net, const Tensor& input, int label) {
  BatchCache cache;
  net.forward_batch({&input}, /*training=*/true, cache);
  const auto& sc = cache.samples[0];
  LossProbe p;
  p.loss = softmax_cross_entropy(sc.logits, label).loss;
  for (const Tensor& pre : sc.pre_activations) {
    for (std::int64_t i = 0; i < pre.size(); ++i)
      p.signature.push_back(pre[i] > 0.0 ? 1 : 0);
  }
  for (int pos : sc.max_positions) {
    p.signature.push_back(static_cast<std::uint8_t>(pos & 0xff));
    p.signature.push_back(static_cast<std::uint8_t>((pos >> 8) & 0xff));
  }
  return p;
}

}  // namespace

GradCheckResult finite_difference_check(const ConvNet& net_in, const Tensor& input, int label,
                                        double epsilon, int max_params, std::uint64_t seed) {
  if (!(epsilon > 0.0) || epsilon > 1e-2)
    throw std::invalid_argument("finite_difference_check: epsilon must be in (0, 1e-2]");

  ConvNet net(net_in.config(), net_in.params(), net_in.backend());

  // Analytic gradients.
  BatchCache cache;
  net.forward_batch({&input}, /*training=*/true, cache);
  const auto sm = softmax_cross_entropy(cache.samples[0].logits, label);
  ModelParams grads = zero_like(net.params());
  net.backward_batch(cache, {sm.grad_logits}, grads);

  std::vector<double*> param_ptrs;
  std::vector<double> analytic;
  net.params().visit([&](const std::string&, Tensor& t) {
    for (std::int64_t i = 0; i < t.size(); ++i) param_ptrs.push_back(&t[i]);
  });
  grads.visit_const([&](const std::string&, const Tensor& g) {
    for (std::int64_t i = 0; i < g.size(); ++i) analytic.push_back(g[i]);
  });

  const std::int64_t total = static_cast<std::int64_t>(param_ptrs.size());
  std::vector<std::int64_t> indices;
  if (total <= max_params) {
    indices.resize(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; ++i) indices[static_cast<std::size_t>(i)] = i;
  } else {
    Rng rng(derive_seed(seed, 0x6664636bULL));
    std::vector<std::uint8_t> taken(static_cast<std::size_t>(total), 0);
    while (static_cast<int>(indices.size()) < max_params) {
      const auto idx = static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(total));
      if (!taken[static_cast<std::size_t>(idx)]) {
        taken[static_cast<std::size_t>(idx)] = 1;
        indices.push_back(idx);
      }
    }
  }

  GradCheckResult result;
  for (const std::int64_t idx : indices) {
    double* p = param_ptrs[static_cast<std::size_t>(idx)];
    const double orig = *p;
    *p = orig + epsilon;
    const LossProbe hi = probe_loss(net, input, label);
    *p = orig - epsilon;
    const LossProbe lo = probe_loss(net, input, label);
    *p = orig;
    if (hi.signature != lo.signature) {
      ++result.skipped_nonsmooth;
      continue;
    }
    const double cd = (hi.loss - lo.loss) / (2.0 * epsilon);
    const double a = analytic[static_cast<std::size_t>(idx)];
    const double denom = std::max({std::abs(a), std::abs(cd), 1e-8});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(a - cd) / denom);
    ++result.checked;
  }
  return result;
}

}  // namespace camloc
