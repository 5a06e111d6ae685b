#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "camloc/kernels.hpp"
#include "camloc/rng.hpp"
#include "camloc/tensor.hpp"

namespace camloc {

// ---------------------------------------------------------------------------
// Convolution kernels
// ---------------------------------------------------------------------------

struct ConvScratch {
  std::vector<double> col;
  std::vector<double> col_t;
  std::vector<double> dcol;
};

/// out[oc,oy,ox] = bias[oc] + sum over (ic,ky,kx) of w*x, zero padding.
/// Reduction order is fixed (channel-outer, then row-major over the kernel),
/// matching the nested-loop reference exactly.
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      int stride, int pad,
                      const kernels::Backend& backend = kernels::scalar_backend(),
                      ConvScratch* scratch = nullptr);

/// Asymmetric-pad variant (1xK kernels of sequence models need pad_h=0).
Tensor conv2d_forward_hw(const Tensor& input, const Tensor& weights, const Tensor& bias,
                         int stride, int pad_h, int pad_w,
                         const kernels::Backend& backend = kernels::scalar_backend(),
                         ConvScratch* scratch = nullptr);

struct ConvGrads {
  Tensor grad_input;    // empty when not requested
  Tensor grad_weights;  // same shape as weights
  Tensor grad_bias;     // same shape as bias
};

/// Gradients of the forward pass. `cached_input` is the tensor the forward
/// saw; an empty cache is rejected.
ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& cached_input,
                          const Tensor& weights, int stride, int pad,
                          bool need_grad_input = true,
                          const kernels::Backend& backend = kernels::scalar_backend(),
                          ConvScratch* scratch = nullptr);

/// Accumulating variant used by the training loop: adds this sample's weight
/// and bias gradients into `grad_weights_acc` / `grad_bias_acc`.
Tensor conv2d_backward_acc(const Tensor& grad_out, const Tensor& cached_input,
                           const Tensor& weights, int stride, int pad_h, int pad_w,
                           Tensor& grad_weights_acc, Tensor& grad_bias_acc,
                           bool need_grad_input, const kernels::Backend& backend,
                           ConvScratch* scratch);

// ---------------------------------------------------------------------------
// Pooling, loss, SGD
// ---------------------------------------------------------------------------

enum class PoolMode { kAvg, kMax };

/// Per-channel mean or maximum of an MxHxW map. Rejects empty spatial extent.
Tensor global_pool(const Tensor& features, PoolMode mode);

/// Backward of global_pool. Max mode routes each channel's gradient to the
/// first (row-major) argmax position.
Tensor global_pool_backward(const Tensor& grad_pooled, const Tensor& features, PoolMode mode);

struct SoftmaxResult {
  double loss;
  std::vector<double> probs;
  std::vector<double> grad_logits;  // softmax - onehot
};

/// Numerically stable −log softmax(logits)[label] with gradient.
SoftmaxResult softmax_cross_entropy(const std::vector<double>& logits, int label);

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

struct ConvLayerSpec {
  int kernel_h = 3;
  int kernel_w = 3;
  int out_channels = 16;
  int stride = 1;
  int pad_h = 1;
  int pad_w = 1;
};

enum class Head { kGap, kGmp };

struct ConvNetConfig {
  int in_channels = 3;
  int in_h = 64;
  int in_w = 64;
  std::vector<ConvLayerSpec> layers;
  Head head = Head::kGap;
  int num_classes = 4;
  bool relu = true;        // activation after every conv layer
  bool batch_norm = false; // optional, off by default

  void validate() const;
  /// Spatial size of layer i's output.
  void layer_output_dims(int layer, int* h, int* w) const;
  int feature_channels() const { return layers.back().out_channels; }
};

struct BnParams {
  Tensor gamma;  // [C]
  Tensor beta;   // [C]
  // Running statistics used at eval time; updated during training.
  Tensor running_mean;
  Tensor running_var;
};

struct ModelParams {
  struct ConvLayer {
    Tensor weights;  // [oc, ic, kh, kw]
    Tensor bias;     // [oc]
  };
  std::vector<ConvLayer> conv;
  std::vector<BnParams> bn;  // empty unless batch_norm
  Tensor classifier_w;       // [classes, feature_channels]
  Tensor classifier_b;       // [classes]

  /// Visits every trainable tensor in declaration order (the checkpoint
  /// array order): conv0.w, conv0.b, [bn0.gamma, bn0.beta,] ..., cls.w, cls.b.
  void visit(const std::function<void(const std::string&, Tensor&)>& fn);
  void visit_const(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  std::int64_t parameter_count() const;
};

/// He-style uniform initialization, deterministic under the given seed.
ModelParams init_params(const ConvNetConfig& cfg, std::uint64_t seed);

/// Gradients in the same layout as ModelParams (BN running stats excluded).
ModelParams zero_like(const ModelParams& p);

struct SampleCache {
  Tensor input;                          // network input (after any image hiding)
  std::vector<Tensor> conv_outputs;      // pre-BN conv outputs; filled only with BN
  std::vector<Tensor> pre_activations;   // conv (+BN) output before ReLU
  std::vector<Tensor> post_activations;  // after ReLU (and feature hiding)
  std::vector<Tensor> feature_hide_mask; // per layer; empty when unused
  std::vector<double> pooled;
  std::vector<int> max_positions;        // GMP argmax per channel
  std::vector<double> logits;

  /// Final feature maps, the CAM input.
  const Tensor& features() const { return post_activations.back(); }
};

struct BatchCache {
  std::vector<SampleCache> samples;
  // BN per-layer batch statistics needed for backward.
  std::vector<Tensor> bn_mean, bn_var;
};

/// Training-time transform applied to a layer's post-activation map
/// (feature-map hiding). Receives (layer, sample index, features) and fills
/// `mask` with 1 at overwritten positions; leave mask empty for identity.
using FeatureHook =
    std::function<void(int layer, int sample, Tensor& features, Tensor& mask)>;

class ConvNet {
 public:
  ConvNet(ConvNetConfig cfg, ModelParams params,
          const kernels::Backend& backend = kernels::scalar_backend());

  const ConvNetConfig& config() const { return cfg_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }
  const kernels::Backend& backend() const { return *backend_; }

  /// Forward over a batch. In training mode BN uses batch statistics and the
  /// feature hook (when set) runs after each layer's activation.
  void forward_batch(const std::vector<const Tensor*>& inputs, bool training,
                     BatchCache& cache, const FeatureHook& hook = nullptr);

  /// Backward from per-sample logit gradients; accumulates into `grads`.
  void backward_batch(const BatchCache& cache, const std::vector<std::vector<double>>& grad_logits,
                      ModelParams& grads);

  /// Single-sample convenience forward (eval path).
  SampleCache forward_one(const Tensor& input) const;

 private:
  ConvNetConfig cfg_;
  ModelParams params_;
  const kernels::Backend* backend_;
  mutable std::vector<ConvScratch> scratch_;
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

class Sgd {
 public:
  Sgd(double lr, double momentum);

  double lr() const { return lr_; }
  void set_lr(double lr);

  /// v = momentum*v + g; p -= lr*v. Returns false (params untouched) when a
  /// gradient is non-finite.
  bool step(ModelParams& params, const ModelParams& grads);

 private:
  double lr_;
  double momentum_;
  std::vector<Tensor> velocity_;
  bool initialized_ = false;
};

/// One plain momentum update on a flat tensor pair; the contract the Sgd
/// class implements per parameter.
bool sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum);

// ---------------------------------------------------------------------------
// Gradient oracle
// ---------------------------------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  // Parameters whose +/-eps perturbation crossed a ReLU kink or moved a GMP
  // argmax; central differences are invalid there and the sample is skipped.
  int skipped_nonsmooth = 0;
};

/// Central-difference check of d(loss)/d(theta) for a single (input, label)
/// pair. Samples at most `max_params` parameters (all, when the model is
/// small enough). epsilon must be in (0, 1e-2].
GradCheckResult finite_difference_check(const ConvNet& net, const Tensor& input, int label,
                                        double epsilon, int max_params = 256,
                                        std::uint64_t seed = 0);

}  // namespace camloc
