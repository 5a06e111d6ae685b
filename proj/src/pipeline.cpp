#include "camloc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "camloc/cam.hpp"
#include "camloc/io.hpp"

using nlohmann::json;

namespace camloc {

// ---------------------------------------------------------------------------
// Config serialization
// ---------------------------------------------------------------------------

namespace {

std::string head_name(Head h) { return h == Head::kGap ? "gap" : "gmp"; }
Head head_from(const std::string& s) {
  if (s == "gap") return Head::kGap;
  if (s == "gmp") return Head::kGmp;
  throw std::invalid_argument("config: unknown head '" + s + "'");
}

std::string variant_name(HideVariant v) {
  switch (v) {
    case HideVariant::kNone: return "none";
    case HideVariant::kImage: return "image";
    case HideVariant::kFeaturemap: return "featuremap";
    case HideVariant::kTemporal: return "temporal";
    case HideVariant::kDropout: return "dropout";
  }
  return "none";
}
HideVariant variant_from(const std::string& s) {
  if (s == "none") return HideVariant::kNone;
  if (s == "image") return HideVariant::kImage;
  if (s == "featuremap") return HideVariant::kFeaturemap;
  if (s == "temporal") return HideVariant::kTemporal;
  if (s == "dropout") return HideVariant::kDropout;
  throw std::invalid_argument("config: unknown hide mode '" + s + "'");
}

std::string fill_name(FillKind f) {
  switch (f) {
    case FillKind::kDatasetMean: return "dataset_mean";
    case FillKind::kZero: return "zero";
    case FillKind::kExplicit: return "explicit";
  }
  return "dataset_mean";
}
FillKind fill_from(const std::string& s) {
  if (s == "dataset_mean") return FillKind::kDatasetMean;
  if (s == "zero") return FillKind::kZero;
  if (s == "explicit") return FillKind::kExplicit;
  throw std::invalid_argument("config: unknown fill kind '" + s + "'");
}

json hide_to_json(const HideConfig& h) {
  json j;
  j["mode"] = variant_name(h.mode);
  j["patch_size"] = h.patch_size;
  j["hide_prob"] = h.hide_prob;
  j["fill"] = fill_name(h.fill);
  j["fill_values"] = h.fill_values;
  j["mixed_sizes"] = h.mixed_sizes;
  j["featuremap_layer"] = h.featuremap_layer;
  j["segment_len"] = h.segment_len;
  j["dropout_rate"] = h.dropout_rate;
  j["dropout_mode"] = h.dropout_mode == DropoutMode::kTrainOnly ? "train_only" : "train_and_test";
  return j;
}

HideConfig hide_from_json(const json& j) {
  HideConfig h;
  if (j.contains("mode")) h.mode = variant_from(j.at("mode").get<std::string>());
  if (j.contains("patch_size")) h.patch_size = j.at("patch_size").get<int>();
  if (j.contains("hide_prob")) h.hide_prob = j.at("hide_prob").get<double>();
  if (j.contains("fill")) h.fill = fill_from(j.at("fill").get<std::string>());
  if (j.contains("fill_values")) h.fill_values = j.at("fill_values").get<std::vector<double>>();
  if (j.contains("mixed_sizes")) h.mixed_sizes = j.at("mixed_sizes").get<std::vector<int>>();
  if (j.contains("featuremap_layer")) h.featuremap_layer = j.at("featuremap_layer").get<int>();
  if (j.contains("segment_len")) h.segment_len = j.at("segment_len").get<int>();
  if (j.contains("dropout_rate")) h.dropout_rate = j.at("dropout_rate").get<double>();
  if (j.contains("dropout_mode"))
    h.dropout_mode = j.at("dropout_mode") == "train_and_test" ? DropoutMode::kTrainAndTest
                                                              : DropoutMode::kTrainOnly;
  return h;
}

json arch_to_json(const ArchConfig& a) {
  json layers = json::array();
  for (const auto& l : a.layers)
    layers.push_back(
        {{"kernel", l.kernel}, {"channels", l.channels}, {"stride", l.stride}, {"pad", l.pad}});
  json j;
  j["layers"] = layers;
  j["head"] = head_name(a.head);
  j["relu"] = a.relu;
  j["batch_norm"] = a.batch_norm;
  return j;
}

ArchConfig arch_from_json(const json& j) {
  ArchConfig a;
  if (j.contains("layers")) {
    a.layers.clear();
    for (const auto& l : j.at("layers")) {
      ArchConfig::Layer layer;
      layer.kernel = l.at("kernel").get<int>();
      layer.channels = l.at("channels").get<int>();
      if (l.contains("stride")) layer.stride = l.at("stride").get<int>();
      if (l.contains("pad")) layer.pad = l.at("pad").get<int>();
      a.layers.push_back(layer);
    }
  }
  if (j.contains("head")) a.head = head_from(j.at("head").get<std::string>());
  if (j.contains("relu")) a.relu = j.at("relu").get<bool>();
  if (j.contains("batch_norm")) a.batch_norm = j.at("batch_norm").get<bool>();
  return a;
}

json experiment_to_json_obj(const ExperimentConfig& c) {
  json j;
  j["dataset"] = c.dataset;
  j["arch"] = arch_to_json(c.arch);
  j["hide"] = hide_to_json(c.hide);
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"lr", c.train.lr},
                {"momentum", c.train.momentum},
                {"lr_decay_factor", c.train.lr_decay_factor},
                {"lr_decay_frac", c.train.lr_decay_frac},
                {"val_every", c.train.val_every}};
  j["eval"] = {{"cam_threshold", c.eval.cam_threshold},
               {"box_iou", c.eval.box_iou},
               {"strict_box_iou", c.eval.strict_box_iou},
               {"strict_temporal_iou", c.eval.strict_temporal_iou},
               {"temporal_thresholds", c.eval.temporal_thresholds}};
  j["seed"] = c.seed;
  j["backend"] = c.backend;
  return j;
}

ExperimentConfig experiment_from_json_obj(const json& j) {
  ExperimentConfig c;
  if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
  if (j.contains("arch")) c.arch = arch_from_json(j.at("arch"));
  if (j.contains("hide")) c.hide = hide_from_json(j.at("hide"));
  if (j.contains("train")) {
    const json& t = j.at("train");
    if (t.contains("epochs")) c.train.epochs = t.at("epochs").get<int>();
    if (t.contains("batch_size")) c.train.batch_size = t.at("batch_size").get<int>();
    if (t.contains("lr")) c.train.lr = t.at("lr").get<double>();
    if (t.contains("momentum")) c.train.momentum = t.at("momentum").get<double>();
    if (t.contains("lr_decay_factor")) c.train.lr_decay_factor = t.at("lr_decay_factor").get<double>();
    if (t.contains("lr_decay_frac")) c.train.lr_decay_frac = t.at("lr_decay_frac").get<double>();
    if (t.contains("val_every")) c.train.val_every = t.at("val_every").get<int>();
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    if (e.contains("cam_threshold")) c.eval.cam_threshold = e.at("cam_threshold").get<double>();
    if (e.contains("box_iou")) c.eval.box_iou = e.at("box_iou").get<double>();
    if (e.contains("strict_box_iou")) c.eval.strict_box_iou = e.at("strict_box_iou").get<bool>();
    if (e.contains("strict_temporal_iou"))
      c.eval.strict_temporal_iou = e.at("strict_temporal_iou").get<bool>();
    if (e.contains("temporal_thresholds"))
      c.eval.temporal_thresholds = e.at("temporal_thresholds").get<std::vector<double>>();
  }
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("backend")) c.backend = j.at("backend").get<std::string>();
  return c;
}

json net_config_to_json(const ConvNetConfig& n) {
  json layers = json::array();
  for (const auto& l : n.layers)
    layers.push_back({{"kernel_h", l.kernel_h},
                      {"kernel_w", l.kernel_w},
                      {"channels", l.out_channels},
                      {"stride", l.stride},
                      {"pad_h", l.pad_h},
                      {"pad_w", l.pad_w}});
  json j;
  j["in_channels"] = n.in_channels;
  j["in_h"] = n.in_h;
  j["in_w"] = n.in_w;
  j["layers"] = layers;
  j["head"] = head_name(n.head);
  j["classes"] = n.num_classes;
  j["relu"] = n.relu;
  j["batch_norm"] = n.batch_norm;
  return j;
}

ConvNetConfig net_config_from_json(const json& j) {
  ConvNetConfig n;
  n.in_channels = j.at("in_channels").get<int>();
  n.in_h = j.at("in_h").get<int>();
  n.in_w = j.at("in_w").get<int>();
  n.layers.clear();
  for (const auto& l : j.at("layers")) {
    ConvLayerSpec s;
    s.kernel_h = l.at("kernel_h").get<int>();
    s.kernel_w = l.at("kernel_w").get<int>();
    s.out_channels = l.at("channels").get<int>();
    s.stride = l.at("stride").get<int>();
    s.pad_h = l.at("pad_h").get<int>();
    s.pad_w = l.at("pad_w").get<int>();
    n.layers.push_back(s);
  }
  n.head = head_from(j.at("head").get<std::string>());
  n.num_classes = j.at("classes").get<int>();
  n.relu = j.at("relu").get<bool>();
  n.batch_norm = j.at("batch_norm").get<bool>();
  return n;
}

}  // namespace

std::string ExperimentConfig::to_json() const { return experiment_to_json_obj(*this).dump(2); }

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  return experiment_from_json_obj(json::parse(text));
}

void ExperimentConfig::validate() const {
  if (arch.layers.empty()) throw std::invalid_argument("config: arch.layers is empty");
  for (const auto& l : arch.layers) {
    if (l.kernel < 1 || l.kernel % 2 == 0)
      throw std::invalid_argument("config: kernel sizes must be odd and >= 1");
    if (l.channels < 1 || l.stride < 1 || l.pad < 0)
      throw std::invalid_argument("config: bad layer parameters");
  }
  if (train.epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (train.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (!(train.lr > 0.0)) throw std::invalid_argument("config: lr must be > 0");
  if (train.momentum < 0.0 || train.momentum >= 1.0)
    throw std::invalid_argument("config: momentum must be in [0,1)");
  if (!(eval.cam_threshold > 0.0 && eval.cam_threshold < 1.0))
    throw std::invalid_argument("config: cam_threshold must be in (0,1)");
  if (hide.mode != HideVariant::kNone) {
    if (hide.hide_prob < 0.0 || hide.hide_prob > 1.0)
      throw std::invalid_argument("config: hide_prob must be in [0,1]");
    if (hide.patch_size < 1 || hide.segment_len < 1)
      throw std::invalid_argument("config: patch/segment size must be >= 1");
    if (hide.mode == HideVariant::kDropout &&
        (hide.dropout_rate < 0.0 || hide.dropout_rate >= 1.0))
      throw std::invalid_argument("config: dropout_rate must be in [0,1)");
  }
}

ArchConfig default_image_arch() {
  ArchConfig a;
  a.layers = {{3, 16, 2, 1}, {3, 32, 2, 1}, {3, 32, 1, 1}};
  a.head = Head::kGap;
  return a;
}

ArchConfig default_sequence_arch() {
  ArchConfig a;
  a.layers = {{1, 32, 1, 0}, {1, 32, 1, 0}};
  a.head = Head::kGmp;
  return a;
}

ExperimentConfig default_image_experiment() {
  ExperimentConfig c;
  c.arch = default_image_arch();
  c.hide.mode = HideVariant::kImage;
  c.hide.patch_size = 16;
  c.hide.hide_prob = 0.5;
  c.train.epochs = 12;
  c.eval.cam_threshold = 0.2;
  return c;
}

ExperimentConfig default_sequence_experiment() {
  ExperimentConfig c;
  c.arch = default_sequence_arch();
  c.hide.mode = HideVariant::kTemporal;
  c.hide.segment_len = 10;
  c.hide.hide_prob = 0.5;
  c.train.epochs = 15;
  c.train.lr = 0.02;
  c.eval.cam_threshold = 0.5;
  return c;
}

// ---------------------------------------------------------------------------
// Training engine
// ---------------------------------------------------------------------------

namespace {

ConvNetConfig build_net_config(const ExperimentConfig& cfg, const Dataset& data) {
  ConvNetConfig n;
  n.head = cfg.arch.head;
  n.num_classes = data.classes;
  n.relu = cfg.arch.relu;
  n.batch_norm = cfg.arch.batch_norm;
  if (data.modality == Modality::kImage) {
    if (data.images.empty()) throw std::invalid_argument("train: empty image dataset");
    const Tensor& img = data.images.front().image;
    n.in_channels = img.dim(0);
    n.in_h = img.dim(1);
    n.in_w = img.dim(2);
    for (const auto& l : cfg.arch.layers)
      n.layers.push_back({l.kernel, l.kernel, l.channels, l.stride, l.pad, l.pad});
  } else {
    if (data.sequences.empty()) throw std::invalid_argument("train: empty sequence dataset");
    const Tensor& seq = data.sequences.front().features;
    n.in_channels = seq.dim(1);
    n.in_h = 1;
    n.in_w = seq.dim(0);
    for (const auto& l : cfg.arch.layers)
      n.layers.push_back({1, l.kernel, l.channels, l.stride, 0, l.pad});
  }
  n.validate();
  return n;
}

Tensor sequence_to_input(const Tensor& seq) {
  const int t = seq.dim(0), d = seq.dim(1);
  Tensor x({d, 1, t});
  for (int f = 0; f < t; ++f)
    for (int k = 0; k < d; ++k) x(k, 0, f) = seq(f, k);
  return x;
}

std::vector<double> resolve_fill(const HideConfig& hide, const std::vector<double>& mean,
                                 int channels) {
  switch (hide.fill) {
    case FillKind::kDatasetMean: return mean;
    case FillKind::kZero: return std::vector<double>(static_cast<std::size_t>(channels), 0.0);
    case FillKind::kExplicit:
      if (static_cast<int>(hide.fill_values.size()) != channels)
        throw std::invalid_argument("config: fill_values length does not match channels");
      return hide.fill_values;
  }
  return mean;
}

std::vector<double> softmax_probs(const std::vector<double>& logits) {
  const double maxv = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - maxv);
    denom += p[i];
  }
  for (double& v : p) v /= denom;
  return p;
}

struct TrainSampleRef {
  int id = 0;
  int label = 0;
  const Tensor* image = nullptr;     // images
  const Tensor* sequence = nullptr;  // sequences
};

TrainResult train_engine(const ExperimentConfig& cfg, const Dataset& data) {
  cfg.validate();
  const bool temporal_data = data.modality == Modality::kSequence;
  if (temporal_data && cfg.hide.mode == HideVariant::kImage)
    throw std::invalid_argument("train: image hiding requires an image dataset");
  if (!temporal_data && cfg.hide.mode == HideVariant::kTemporal)
    throw std::invalid_argument("train: temporal hiding requires a sequence dataset");

  TrainResult result;
  result.net_config = build_net_config(cfg, data);
  result.params = init_params(result.net_config, cfg.seed);

  std::vector<TrainSampleRef> train_set, val_set;
  if (!temporal_data) {
    for (const auto& s : data.images)
      (s.train ? train_set : val_set).push_back({s.id, s.label, &s.image, nullptr});
  } else {
    for (const auto& s : data.sequences)
      (s.train ? train_set : val_set).push_back({s.id, s.label, nullptr, &s.features});
  }
  if (train_set.empty()) throw std::invalid_argument("train: empty training split");

  // Fill vector (dataset mean over the training split only).
  std::vector<double> mean;
  {
    std::vector<const Tensor*> ptrs;
    for (const auto& s : train_set) ptrs.push_back(temporal_data ? s.sequence : s.image);
    mean = temporal_data ? dataset_mean_sequences(ptrs) : dataset_mean_images(ptrs);
  }
  result.dataset_mean = mean;
  const std::vector<double> fill =
      resolve_fill(cfg.hide, mean, result.net_config.in_channels);

  const kernels::Backend& backend = kernels::select_backend(cfg.backend);
  ConvNet net(result.net_config, std::move(result.params), backend);
  Sgd sgd(cfg.train.lr, cfg.train.momentum);

  const int decay_epoch =
      std::max(1, static_cast<int>(std::floor(cfg.train.lr_decay_frac * cfg.train.epochs)));

  ModelParams last_good = net.params();
  int last_good_epoch = 0;
  bool diverged = false;

  HideSpec hide_spec;
  hide_spec.patch_size =
      cfg.hide.mode == HideVariant::kTemporal ? cfg.hide.segment_len : cfg.hide.patch_size;
  hide_spec.hide_prob = cfg.hide.hide_prob;
  hide_spec.fill = fill;
  hide_spec.seed = cfg.seed;
  hide_spec.mixed_sizes = cfg.hide.mixed_sizes;

  // Feature-map hiding: zero fill by default (configurable to the sample's
  // per-channel feature mean).
  const int fm_layer = cfg.hide.featuremap_layer;
  if (cfg.hide.mode == HideVariant::kFeaturemap &&
      (fm_layer < 0 || fm_layer >= static_cast<int>(result.net_config.layers.size())))
    throw std::invalid_argument("config: featuremap_layer out of range");

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    const double lr = cfg.train.lr * (epoch >= decay_epoch ? cfg.train.lr_decay_factor : 1.0);
    sgd.set_lr(lr);

    // Deterministic per-epoch order.
    std::vector<int> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(derive_seed(cfg.seed, seed_tag::kShuffle, static_cast<std::uint64_t>(epoch)));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(shuffle_rng.uniform_int(i + 1))]);

    double loss_sum = 0.0;
    bool epoch_ok = true;

    for (std::size_t start = 0; start < order.size() && epoch_ok;
         start += static_cast<std::size_t>(cfg.train.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.train.batch_size));
      const int bsz = static_cast<int>(end - start);

      std::vector<Tensor> inputs(static_cast<std::size_t>(bsz));
      std::vector<const Tensor*> input_ptrs(static_cast<std::size_t>(bsz));
      std::vector<int> labels(static_cast<std::size_t>(bsz));
      std::vector<int> ids(static_cast<std::size_t>(bsz));

      for (int b = 0; b < bsz; ++b) {
        const TrainSampleRef& s = train_set[static_cast<std::size_t>(order[start + b])];
        labels[static_cast<std::size_t>(b)] = s.label;
        ids[static_cast<std::size_t>(b)] = s.id;
        const std::uint64_t uid = static_cast<std::uint64_t>(s.id);
        const std::uint64_t uep = static_cast<std::uint64_t>(epoch);
        Tensor x;
        switch (cfg.hide.mode) {
          case HideVariant::kImage: {
            HideSpec spec = hide_spec;
            if (!spec.mixed_sizes.empty()) {
              Rng mix_rng(derive_seed(cfg.seed, seed_tag::kMixed, uid, uep));
              const int size = sample_mixed_patch_size(spec, mix_rng);
              if (size == kNoHide) {
                x = *s.image;
                break;
              }
              spec.patch_size = size;
            }
            x = hide_patches_image(*s.image, spec, derive_seed(cfg.seed, seed_tag::kMask, uid, uep))
                    .first;
            break;
          }
          case HideVariant::kTemporal: {
            Tensor hidden =
                hide_segments_sequence(*s.sequence, hide_spec,
                                       derive_seed(cfg.seed, seed_tag::kMask, uid, uep))
                    .first;
            x = sequence_to_input(hidden);
            break;
          }
          case HideVariant::kDropout:
            x = pixel_dropout(*s.image, cfg.hide.dropout_rate,
                              derive_seed(cfg.seed, seed_tag::kDropout, uid, uep));
            break;
          case HideVariant::kFeaturemap:
          case HideVariant::kNone:
            x = temporal_data ? sequence_to_input(*s.sequence) : *s.image;
            break;
        }
        inputs[static_cast<std::size_t>(b)] = std::move(x);
        input_ptrs[static_cast<std::size_t>(b)] = &inputs[static_cast<std::size_t>(b)];
      }

      FeatureHook hook;
      if (cfg.hide.mode == HideVariant::kFeaturemap) {
        const int epoch_copy = epoch;
        hook = [&, epoch_copy](int layer, int sample, Tensor& features, Tensor& mask) {
          if (layer != fm_layer) return;
          HideSpec spec;
          spec.patch_size = cfg.hide.patch_size;
          spec.hide_prob = cfg.hide.hide_prob;
          if (cfg.hide.fill == FillKind::kDatasetMean) {
            // Per-channel mean of this sample's own feature map.
            const int ch = features.dim(0), hw = features.dim(1) * features.dim(2);
            spec.fill.resize(static_cast<std::size_t>(ch));
            for (int c = 0; c < ch; ++c) {
              double acc = 0.0;
              const double* plane = features.data() + static_cast<std::size_t>(c) * hw;
              for (int i = 0; i < hw; ++i) acc += plane[i];
              spec.fill[static_cast<std::size_t>(c)] = acc / hw;
            }
          }
          const std::uint64_t mseed =
              derive_seed(cfg.seed, seed_tag::kMask,
                          static_cast<std::uint64_t>(ids[static_cast<std::size_t>(sample)]),
                          static_cast<std::uint64_t>(epoch_copy));
          auto [hidden, hmask] = hide_patches_featuremap(features, spec, mseed);
          features = std::move(hidden);
          mask = hmask.pixel_mask();
          // Broadcast the pixel mask across channels for the backward pass.
          const int ch = features.dim(0), h = features.dim(1), w = features.dim(2);
          Tensor full({ch, h, w});
          for (int c = 0; c < ch; ++c)
            for (int y = 0; y < h; ++y)
              for (int xx = 0; xx < w; ++xx) full(c, y, xx) = mask(y, xx);
          mask = std::move(full);
        };
      }

      BatchCache cache;
      net.forward_batch(input_ptrs, /*training=*/true, cache, hook);

      std::vector<std::vector<double>> grad_logits(static_cast<std::size_t>(bsz));
      double batch_loss = 0.0;
      for (int b = 0; b < bsz; ++b) {
        auto sm = softmax_cross_entropy(cache.samples[static_cast<std::size_t>(b)].logits,
                                        labels[static_cast<std::size_t>(b)]);
        batch_loss += sm.loss;
        for (double& g : sm.grad_logits) g /= bsz;
        grad_logits[static_cast<std::size_t>(b)] = std::move(sm.grad_logits);
      }
      batch_loss /= bsz;
      loss_sum += batch_loss * bsz;

      if (!std::isfinite(batch_loss)) {
        epoch_ok = false;
        diverged = true;
        break;
      }

      ModelParams grads = zero_like(net.params());
      net.backward_batch(cache, grad_logits, grads);
      if (!sgd.step(net.params(), grads)) {
        epoch_ok = false;
        diverged = true;
        break;
      }
    }

    if (!epoch_ok) break;

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = loss_sum / static_cast<double>(train_set.size());

    const bool probe = !val_set.empty() &&
                       (cfg.train.val_every > 0 &&
                        (epoch % cfg.train.val_every == 0 || epoch == cfg.train.epochs - 1));
    if (probe) {
      int correct = 0;
      BatchCache vcache;
      for (const auto& s : val_set) {
        const Tensor x = temporal_data ? sequence_to_input(*s.sequence) : *s.image;
        net.forward_batch({&x}, /*training=*/false, vcache);
        const auto& logits = vcache.samples[0].logits;
        int arg = 0;
        for (int i = 1; i < static_cast<int>(logits.size()); ++i)
          if (logits[static_cast<std::size_t>(i)] > logits[static_cast<std::size_t>(arg)]) arg = i;
        correct += arg == s.label;
      }
      log.val_accuracy = static_cast<double>(correct) / static_cast<double>(val_set.size());
    }
    result.log.push_back(log);

    last_good = net.params();
    last_good_epoch = epoch + 1;
  }

  result.params = std::move(last_good);
  result.epochs_completed = last_good_epoch;
  result.diverged = diverged;
  return result;
}

}  // namespace

std::string TrainResult::log_csv() const {
  std::ostringstream os;
  os << "epoch,lr,loss,val_accuracy\n";
  for (const auto& row : log) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g\n", row.epoch, row.lr, row.train_loss,
                  row.val_accuracy);
    os << buf;
  }
  return os.str();
}

TrainResult train(const ExperimentConfig& config, const Dataset& data) {
  return train_engine(config, data);
}

TrainResult train_temporal(const ExperimentConfig& config, const Dataset& data) {
  if (data.modality != Modality::kSequence)
    throw std::invalid_argument("train_temporal: sequence dataset required");
  return train_engine(config, data);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

std::span<const double> classifier_row(const ModelParams& params, int cls) {
  const int m = params.classifier_w.dim(1);
  return {params.classifier_w.data() + static_cast<std::size_t>(cls) * m,
          static_cast<std::size_t>(m)};
}

void check_audit(const audit::Snapshot& before, const ExperimentConfig& cfg) {
  const audit::Snapshot after = audit::snapshot();
  if (after.hiding_total() != before.hiding_total())
    throw std::logic_error("evaluation invoked a hiding transform");
  const bool dropout_allowed = cfg.hide.mode == HideVariant::kDropout &&
                               cfg.hide.dropout_mode == DropoutMode::kTrainAndTest;
  if (!dropout_allowed && after.dropout != before.dropout)
    throw std::logic_error("evaluation invoked pixel dropout");
}

}  // namespace

EvaluationResult evaluate(const ConvNetConfig& net_config, const ModelParams& params,
                          const ExperimentConfig& config, const Dataset& data) {
  const kernels::Backend& backend = kernels::select_backend(config.backend);
  ConvNet net(net_config, params, backend);

  EvaluationResult out;
  out.modality = data.modality;
  const audit::Snapshot before = audit::snapshot();

  const bool eval_dropout = config.hide.mode == HideVariant::kDropout &&
                            config.hide.dropout_mode == DropoutMode::kTrainAndTest;

  if (data.modality == Modality::kImage) {
    for (const auto* s : data.val_images()) {
      Tensor input = s->image;
      if (eval_dropout)
        input = pixel_dropout(input, config.hide.dropout_rate,
                              derive_seed(config.seed, seed_tag::kEval,
                                          static_cast<std::uint64_t>(s->id)));
      const SampleCache fc = net.forward_one(input);

      EvalRecord rec;
      rec.input_id = s->id;
      rec.true_class = s->label;
      rec.probs = softmax_probs(fc.logits);
      rec.gt_boxes = s->gt_boxes;

      const Cam cam_gt = compute_cam(fc.features(), classifier_row(net.params(), s->label),
                                     s->label, s->id, net_config.in_h, net_config.in_w);
      rec.box_true_class = localize_bbox(cam_gt, config.eval.cam_threshold);
      const int top1 = rec.top1();
      if (top1 == s->label) {
        rec.box_top1_class = rec.box_true_class;
      } else {
        const Cam cam_top = compute_cam(fc.features(), classifier_row(net.params(), top1), top1,
                                        s->id, net_config.in_h, net_config.in_w);
        rec.box_top1_class = localize_bbox(cam_top, config.eval.cam_threshold);
      }
      out.records.push_back(std::move(rec));
    }
    out.image = image_metrics(out.records, config.eval.box_iou, config.eval.strict_box_iou);
    out.per_class =
        image_metrics_per_class(out.records, config.eval.box_iou, config.eval.strict_box_iou);
  } else {
    for (const auto* s : data.val_sequences()) {
      const Tensor input = sequence_to_input(s->features);
      const SampleCache fc = net.forward_one(input);

      EvalRecord rec;
      rec.input_id = s->id;
      rec.true_class = s->label;
      rec.probs = softmax_probs(fc.logits);
      rec.gt_intervals = s->gt_intervals;
      // Ground-truth class known for temporal localization.
      const Cam cam = compute_cam(fc.features(), classifier_row(net.params(), s->label), s->label,
                                  s->id, 1, net_config.in_w);
      rec.pred_intervals = extract_temporal_segments(cam, config.eval.cam_threshold);
      out.records.push_back(std::move(rec));
    }
    out.temporal = temporal_map(out.records, config.eval.temporal_thresholds,
                                config.eval.strict_temporal_iou);
  }

  check_audit(before, config);
  return out;
}

EvaluationResult evaluate_ensemble(const std::vector<const TrainResult*>& members,
                                   const ExperimentConfig& config, const Dataset& data) {
  if (members.empty()) throw std::invalid_argument("evaluate_ensemble: no members");
  if (data.modality != Modality::kImage)
    throw std::invalid_argument("evaluate_ensemble: image datasets only");

  const kernels::Backend& backend = kernels::select_backend(config.backend);
  std::vector<ConvNet> nets;
  nets.reserve(members.size());
  for (const auto* m : members) nets.emplace_back(m->net_config, m->params, backend);

  EvaluationResult out;
  out.modality = data.modality;
  const audit::Snapshot before = audit::snapshot();

  const int in_h = members[0]->net_config.in_h, in_w = members[0]->net_config.in_w;
  for (const auto* s : data.val_images()) {
    std::vector<SampleCache> caches;
    std::vector<std::vector<double>> probs;
    caches.reserve(nets.size());
    for (auto& net : nets) {
      caches.push_back(net.forward_one(s->image));
      probs.push_back(softmax_probs(caches.back().logits));
    }

    auto fused_for_class = [&](int cls) {
      std::vector<Cam> cams;
      cams.reserve(nets.size());
      for (std::size_t i = 0; i < nets.size(); ++i)
        cams.push_back(compute_cam(caches[i].features(), classifier_row(nets[i].params(), cls),
                                   cls, s->id, in_h, in_w));
      return ensemble_cams(cams, probs);
    };

    EvalRecord rec;
    rec.input_id = s->id;
    rec.true_class = s->label;
    rec.gt_boxes = s->gt_boxes;
    auto [cam_gt, fused_probs] = fused_for_class(s->label);
    rec.probs = fused_probs;
    rec.box_true_class = localize_bbox(cam_gt, config.eval.cam_threshold);
    const int top1 = rec.top1();
    if (top1 == s->label) {
      rec.box_top1_class = rec.box_true_class;
    } else {
      auto [cam_top, unused] = fused_for_class(top1);
      rec.box_top1_class = localize_bbox(cam_top, config.eval.cam_threshold);
    }
    out.records.push_back(std::move(rec));
  }
  out.image = image_metrics(out.records, config.eval.box_iou, config.eval.strict_box_iou);
  out.per_class =
      image_metrics_per_class(out.records, config.eval.box_iou, config.eval.strict_box_iou);
  check_audit(before, config);
  return out;
}

std::string EvaluationResult::metrics_json(const std::string& config_hash,
                                           const std::vector<std::uint64_t>& seeds) const {
  json j;
  j["config_hash"] = config_hash;
  j["seeds"] = seeds;
  if (modality == Modality::kImage) {
    j["metrics"] = {{"gt_known_loc", image.gt_known_loc},
                    {"top1_loc", image.top1_loc},
                    {"top1_clas", image.top1_clas}};
    json pc;
    for (const auto& [cls, m] : per_class)
      pc[std::to_string(cls)] = {{"gt_known_loc", m.gt_known_loc},
                                 {"top1_loc", m.top1_loc},
                                 {"top1_clas", m.top1_clas}};
    j["per_class"] = pc;
  } else {
    json maps, per_cls;
    for (const auto& [th, v] : temporal.map_at) {
      char key[16];
      std::snprintf(key, sizeof(key), "%.1f", th);
      maps[key] = v;
      json cls_obj;
      const auto it = temporal.ap_per_class.find(th);
      if (it != temporal.ap_per_class.end())
        for (const auto& [cls, ap] : it->second) cls_obj[std::to_string(cls)] = ap;
      per_cls[key] = cls_obj;
    }
    j["metrics"] = {{"map", maps}};
    j["per_class"] = per_cls;
    j["skipped_classes"] = temporal.skipped_classes;
  }
  return j.dump(2);
}

std::string EvaluationResult::records_jsonl() const {
  std::ostringstream os;
  for (const auto& r : records) {
    if (modality == Modality::kImage) {
      json j;
      j["input_id"] = r.input_id;
      j["class_id"] = r.top1();
      if (r.box_top1_class) {
        const BBox& b = *r.box_top1_class;
        j["box"] = {b.x0, b.y0, b.x1, b.y1};
        j["score"] = b.score.value_or(0.0);
      } else {
        j["box"] = nullptr;
      }
      os << j.dump() << "\n";
    } else {
      for (const auto& iv : r.pred_intervals) {
        json j;
        j["input_id"] = r.input_id;
        j["class_id"] = r.true_class;
        j["interval"] = {iv.start, iv.end};
        j["score"] = iv.score;
        os << j.dump() << "\n";
      }
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_model_checkpoint(const std::string& path, const ExperimentConfig& config,
                           const ConvNetConfig& net_config, const ModelParams& params,
                           int epoch) {
  Checkpoint ckpt;
  ckpt.seed = config.seed;
  ckpt.epoch = epoch;
  json meta;
  meta["experiment"] = experiment_to_json_obj(config);
  meta["net"] = net_config_to_json(net_config);
  ckpt.config_json = meta.dump();
  params.visit_const(
      [&](const std::string& name, const Tensor& t) { ckpt.arrays.emplace_back(name, t); });
  for (std::size_t i = 0; i < params.bn.size(); ++i) {
    ckpt.arrays.emplace_back("bn" + std::to_string(i) + ".running_mean", params.bn[i].running_mean);
    ckpt.arrays.emplace_back("bn" + std::to_string(i) + ".running_var", params.bn[i].running_var);
  }
  save_checkpoint(ckpt, path);
}

LoadedModel load_model_checkpoint(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  LoadedModel m;
  const json meta = json::parse(ckpt.config_json);
  m.config = experiment_from_json_obj(meta.at("experiment"));
  m.net_config = net_config_from_json(meta.at("net"));
  m.epoch = ckpt.epoch;

  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : ckpt.arrays) by_name[name] = &t;

  m.params = init_params(m.net_config, ckpt.seed);
  bool missing = false;
  std::string missing_name;
  m.params.visit([&](const std::string& name, Tensor& t) {
    auto it = by_name.find(name);
    if (it == by_name.end() || it->second->shape() != t.shape()) {
      missing = true;
      if (missing_name.empty()) missing_name = name;
      return;
    }
    t = *it->second;
  });
  if (missing)
    throw std::runtime_error("checkpoint: array '" + missing_name +
                             "' missing or shape-incompatible with its config");
  for (std::size_t i = 0; i < m.params.bn.size(); ++i) {
    const auto rm = by_name.find("bn" + std::to_string(i) + ".running_mean");
    const auto rv = by_name.find("bn" + std::to_string(i) + ".running_var");
    if (rm != by_name.end()) m.params.bn[i].running_mean = *rm->second;
    if (rv != by_name.end()) m.params.bn[i].running_var = *rv->second;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Ablation suite
// ---------------------------------------------------------------------------

std::string SuiteConfig::to_json() const {
  json j;
  j["base"] = experiment_to_json_obj(base);
  json vars = json::array();
  for (const auto& v : variants) {
    json jv;
    jv["name"] = v.name;
    jv["hide"] = hide_to_json(v.hide);
    if (v.head_override) jv["head"] = head_name(*v.head_override);
    if (!v.ensemble_members.empty()) jv["ensemble_members"] = v.ensemble_members;
    vars.push_back(jv);
  }
  j["variants"] = vars;
  j["seeds"] = seeds;
  j["quick"] = quick;
  return j.dump(2);
}

SuiteConfig SuiteConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  SuiteConfig c;
  if (j.contains("base")) c.base = experiment_from_json_obj(j.at("base"));
  if (j.contains("variants")) {
    for (const auto& jv : j.at("variants")) {
      SuiteVariant v;
      v.name = jv.at("name").get<std::string>();
      if (jv.contains("hide")) v.hide = hide_from_json(jv.at("hide"));
      if (jv.contains("head")) v.head_override = head_from(jv.at("head").get<std::string>());
      if (jv.contains("ensemble_members"))
        v.ensemble_members = jv.at("ensemble_members").get<std::vector<std::string>>();
      c.variants.push_back(v);
    }
  }
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("quick")) c.quick = j.at("quick").get<bool>();
  return c;
}

namespace {

struct RunSlot {
  bool ok = false;
  std::string error;
  ImageMetrics metrics;
  TrainResult trained;  // kept for ensembles
};

void mean_sd(const std::vector<double>& xs, double* mean, double* sd) {
  *mean = 0.0;
  *sd = 0.0;
  if (xs.empty()) return;
  for (double x : xs) *mean += x;
  *mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double acc = 0.0;
    for (double x : xs) acc += (x - *mean) * (x - *mean);
    *sd = std::sqrt(acc / static_cast<double>(xs.size() - 1));
  }
}

}  // namespace

std::string SuiteResult::table_csv() const {
  std::ostringstream os;
  os << "variant,runs,gt_known_mean,gt_known_sd,top1_loc_mean,top1_loc_sd,top1_clas_mean,"
        "top1_clas_sd,failures\n";
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d\n", r.variant.c_str(),
                  r.runs, r.gt_known_mean, r.gt_known_sd, r.top1_loc_mean, r.top1_loc_sd,
                  r.top1_clas_mean, r.top1_clas_sd, static_cast<int>(r.failures.size()));
    os << buf;
  }
  return os.str();
}

SuiteResult run_ablation_suite(const SuiteConfig& config, const Dataset& data, int jobs) {
  if (config.variants.empty()) throw std::invalid_argument("suite: no variants");
  const std::size_t nseeds = config.seeds.size();
  if (nseeds == 0) throw std::invalid_argument("suite: no seeds");

  // Trained variants first; ensemble variants fuse their members afterwards.
  std::vector<std::size_t> trained_idx, ensemble_idx;
  for (std::size_t i = 0; i < config.variants.size(); ++i)
    (config.variants[i].ensemble_members.empty() ? trained_idx : ensemble_idx).push_back(i);

  std::vector<std::vector<RunSlot>> slots(config.variants.size(),
                                          std::vector<RunSlot>(nseeds));

  struct Job {
    std::size_t variant;
    std::size_t seed;
  };
  std::vector<Job> queue;
  for (std::size_t v : trained_idx)
    for (std::size_t s = 0; s < nseeds; ++s) queue.push_back({v, s});

  auto run_one = [&](const Job& job) {
    RunSlot& slot = slots[job.variant][job.seed];
    try {
      ExperimentConfig cfg = config.base;
      cfg.hide = config.variants[job.variant].hide;
      if (config.variants[job.variant].head_override)
        cfg.arch.head = *config.variants[job.variant].head_override;
      cfg.seed = config.seeds[job.seed];
      if (config.quick) cfg.train.epochs = std::max(2, cfg.train.epochs / 4);
      slot.trained = train_engine(cfg, data);
      const EvaluationResult ev = evaluate(slot.trained.net_config, slot.trained.params, cfg, data);
      slot.metrics = ev.image;
      slot.ok = true;
    } catch (const std::exception& e) {
      slot.ok = false;
      slot.error = e.what();
    }
  };

  if (jobs <= 1) {
    for (const Job& job : queue) run_one(job);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    const int nw = std::min<int>(jobs, static_cast<int>(queue.size()));
    for (int w = 0; w < nw; ++w) {
      workers.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= queue.size()) return;
          run_one(queue[i]);
        }
      });
    }
    for (auto& t : workers) t.join();
  }

  // Ensembles: fuse member runs per seed.
  for (std::size_t v : ensemble_idx) {
    const auto& variant = config.variants[v];
    for (std::size_t s = 0; s < nseeds; ++s) {
      RunSlot& slot = slots[v][s];
      try {
        std::vector<const TrainResult*> members;
        for (const std::string& name : variant.ensemble_members) {
          bool found = false;
          for (std::size_t i = 0; i < config.variants.size(); ++i) {
            if (config.variants[i].name == name) {
              if (!slots[i][s].ok)
                throw std::runtime_error("ensemble member '" + name + "' failed for this seed");
              members.push_back(&slots[i][s].trained);
              found = true;
              break;
            }
          }
          if (!found) throw std::runtime_error("ensemble member '" + name + "' is not a variant");
        }
        ExperimentConfig cfg = config.base;
        cfg.seed = config.seeds[s];
        const EvaluationResult ev = evaluate_ensemble(members, cfg, data);
        slot.metrics = ev.image;
        slot.ok = true;
      } catch (const std::exception& e) {
        slot.ok = false;
        slot.error = e.what();
      }
    }
  }

  SuiteResult out;
  for (std::size_t v = 0; v < config.variants.size(); ++v) {
    SuiteRow row;
    row.variant = config.variants[v].name;
    std::vector<double> gt, t1l, t1c;
    for (std::size_t s = 0; s < nseeds; ++s) {
      const RunSlot& slot = slots[v][s];
      if (slot.ok) {
        gt.push_back(slot.metrics.gt_known_loc);
        t1l.push_back(slot.metrics.top1_loc);
        t1c.push_back(slot.metrics.top1_clas);
      } else {
        row.failures.push_back("seed=" + std::to_string(config.seeds[s]) + ": " + slot.error);
      }
    }
    row.runs = static_cast<int>(gt.size());
    mean_sd(gt, &row.gt_known_mean, &row.gt_known_sd);
    mean_sd(t1l, &row.top1_loc_mean, &row.top1_loc_sd);
    mean_sd(t1c, &row.top1_clas_mean, &row.top1_clas_sd);
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace camloc
