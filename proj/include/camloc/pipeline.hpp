#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "camloc/hiding.hpp"
#include "camloc/metrics.hpp"
#include "camloc/net.hpp"
#include "camloc/synth.hpp"

namespace camloc {

// ---------------------------------------------------------------------------
// Experiment configuration (JSON-serializable; see configs in README)
// ---------------------------------------------------------------------------

enum class HideVariant { kNone, kImage, kFeaturemap, kTemporal, kDropout };

enum class FillKind { kDatasetMean, kZero, kExplicit };

struct HideConfig {
  HideVariant mode = HideVariant::kNone;
  int patch_size = 16;
  double hide_prob = 0.5;
  FillKind fill = FillKind::kDatasetMean;
  std::vector<double> fill_values;   // when kExplicit
  std::vector<int> mixed_sizes;      // non-empty switches image hiding to mixed
  int featuremap_layer = 0;
  int segment_len = 10;
  double dropout_rate = 0.5;
  DropoutMode dropout_mode = DropoutMode::kTrainOnly;
};

struct ArchConfig {
  struct Layer {
    int kernel = 3;
    int channels = 16;
    int stride = 1;
    int pad = 1;
  };
  std::vector<Layer> layers;
  Head head = Head::kGap;
  bool relu = true;
  bool batch_norm = false;
};

struct TrainParams {
  int epochs = 12;
  int batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  double lr_decay_factor = 0.1;
  double lr_decay_frac = 2.0 / 3.0;  // decay once at this fraction of epochs
  int val_every = 1;                 // epochs between val-accuracy probes
};

struct EvalParams {
  double cam_threshold = 0.2;
  double box_iou = 0.5;
  bool strict_box_iou = true;       // "more than 50% IoU"
  bool strict_temporal_iou = false; // interval criterion defaults to >=
  std::vector<double> temporal_thresholds = {0.1, 0.2, 0.3, 0.4, 0.5};
};

struct ExperimentConfig {
  std::string dataset;  // dataset directory
  ArchConfig arch;
  HideConfig hide;
  TrainParams train;
  EvalParams eval;
  std::uint64_t seed = 1;
  std::string backend = "auto";

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& json_text);
  void validate() const;
};

/// Desk-scale defaults: 64x64 inputs, three conv layers (16/32/32).
ArchConfig default_image_arch();
/// Temporal net: two 1-wide conv layers with a global-max head.
ArchConfig default_sequence_arch();
ExperimentConfig default_image_experiment();
ExperimentConfig default_sequence_experiment();

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_accuracy = -1.0;  // -1 when not probed this epoch
};

struct TrainResult {
  ConvNetConfig net_config;
  ModelParams params;
  std::vector<EpochLog> log;
  int epochs_completed = 0;
  bool diverged = false;
  std::vector<double> dataset_mean;  // fill vector used (train split)

  std::string log_csv() const;
};

/// Trains per the config: a fresh hide mask per (image, epoch) before the
/// forward pass, deterministic under (config, seed). On divergence the last
/// finite-loss epoch's parameters are returned with `diverged` set.
TrainResult train(const ExperimentConfig& config, const Dataset& data);

/// Sequence counterpart (segment hiding, 1D CAM-ready model).
TrainResult train_temporal(const ExperimentConfig& config, const Dataset& data);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvaluationResult {
  std::vector<EvalRecord> records;
  ImageMetrics image;                        // image datasets
  std::map<int, ImageMetrics> per_class;
  TemporalMapResult temporal;                // sequence datasets
  Modality modality = Modality::kImage;

  std::string metrics_json(const std::string& config_hash,
                           const std::vector<std::uint64_t>& seeds) const;
  std::string records_jsonl() const;
};

/// Evaluates on the validation split with full (unhidden) inputs. CAMs are
/// computed for the ground-truth class and the top-predicted class. Asserts
/// through the audit counters that no hiding transform ran.
EvaluationResult evaluate(const ConvNetConfig& net_config, const ModelParams& params,
                          const ExperimentConfig& config, const Dataset& data);

/// Ensemble evaluation: per sample, member CAMs are averaged and class
/// probabilities averaged.
EvaluationResult evaluate_ensemble(const std::vector<const TrainResult*>& members,
                                   const ExperimentConfig& config, const Dataset& data);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_model_checkpoint(const std::string& path, const ExperimentConfig& config,
                           const ConvNetConfig& net_config, const ModelParams& params,
                           int epoch);

struct LoadedModel {
  ExperimentConfig config;
  ConvNetConfig net_config;
  ModelParams params;
  int epoch = 0;
};

LoadedModel load_model_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Ablation suite
// ---------------------------------------------------------------------------

struct SuiteVariant {
  std::string name;
  HideConfig hide;
  std::optional<Head> head_override;
  std::vector<std::string> ensemble_members;  // non-empty: fuse these variants
};

struct SuiteConfig {
  ExperimentConfig base;
  std::vector<SuiteVariant> variants;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  bool quick = false;  // reduced epochs for smoke runs

  std::string to_json() const;
  static SuiteConfig from_json(const std::string& json_text);
};

struct SuiteRow {
  std::string variant;
  int runs = 0;
  double gt_known_mean = 0.0, gt_known_sd = 0.0;
  double top1_loc_mean = 0.0, top1_loc_sd = 0.0;
  double top1_clas_mean = 0.0, top1_clas_sd = 0.0;
  std::vector<std::string> failures;  // per-seed failure notes
};

struct SuiteResult {
  std::vector<SuiteRow> rows;
  std::string table_csv() const;
};

/// Runs every variant over every seed (failures isolated per run), averaging
/// the image metrics. `jobs` > 1 runs independent (variant, seed) pairs
/// concurrently.
SuiteResult run_ablation_suite(const SuiteConfig& config, const Dataset& data, int jobs = 1);

}  // namespace camloc
