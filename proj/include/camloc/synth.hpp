#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "camloc/cam.hpp"
#include "camloc/tensor.hpp"

namespace camloc {

// ---------------------------------------------------------------------------
// Synthetic image dataset: each object has one small highly discriminative
// part (class-unique texture) and larger body parts whose class signal is
// deliberately weak, so a classifier can succeed from the discriminative part
// alone. Ground truth is the tight box over all object pixels.
// ---------------------------------------------------------------------------

struct SyntheticImageSpec {
  int size = 64;
  int channels = 3;
  int classes = 4;

  double background_level = 0.45;
  double background_noise = 0.05;  // per-pixel uniform noise amplitude

  // Body: shared base color plus a weak class tint. The tint direction is
  // class-specific but a per-sample jitter of comparable magnitude caps how
  // much a classifier can trust the body alone.
  double body_signal = 0.10;
  double body_noise = 0.8;    // per-sample tint jitter, relative to the unit tint direction
  double texture_noise = 0.02;

  int head_size = 9;   // discriminative part (square)
  int body_w = 26;
  int body_h = 13;
  int tail_w = 10;
  int tail_h = 4;

  int jitter = 8;      // max |translation| of the object from center
  int max_retries = 20;

  void validate() const;
};

// Part-mask labels stored alongside each image.
inline constexpr std::uint8_t kMaskBackground = 0;
inline constexpr std::uint8_t kMaskBody = 1;
inline constexpr std::uint8_t kMaskDiscriminative = 2;

struct ImageSample {
  int id = 0;
  int label = 0;
  bool train = true;
  Tensor image;                      // [C,H,W]
  std::vector<BBox> gt_boxes;
  std::vector<std::uint8_t> part_mask;  // H*W labels (kMask*)
};

struct SequenceSample {
  int id = 0;
  int label = 0;
  bool train = true;
  Tensor features;                   // [T,D]
  std::vector<Interval> gt_intervals;
};

enum class Modality { kImage, kSequence };

struct Dataset {
  Modality modality = Modality::kImage;
  int classes = 0;
  std::vector<ImageSample> images;
  std::vector<SequenceSample> sequences;
  std::string generator_config_json;  // resolved generation config snapshot

  std::vector<const ImageSample*> train_images() const;
  std::vector<const ImageSample*> val_images() const;
  std::vector<const SequenceSample*> train_sequences() const;
  std::vector<const SequenceSample*> val_sequences() const;
};

/// Deterministic under seed; labels round-robin so classes stay balanced.
Dataset generate_image_dataset(const SyntheticImageSpec& spec, int n_train, int n_val,
                               std::uint64_t seed);

/// Renders class `label`'s object parts (no noise) at the given top-left
/// offset. Exposed for the nearest-template separability oracle.
void render_object_clean(const SyntheticImageSpec& spec, int label, int ox, int oy,
                         Tensor& image, std::vector<std::uint8_t>* part_mask);

// ---------------------------------------------------------------------------
// Synthetic sequences: action extents contain a short, strong key-frame
// signature plus weakly indicative frames over the whole extent.
// ---------------------------------------------------------------------------

struct SyntheticSequenceSpec {
  int length = 200;
  int dim = 32;
  int classes = 4;

  double background_noise = 0.30;
  double weak_signal = 0.45;   // extent frames
  double weak_noise = 0.30;    // per-sample amplitude jitter on the weak signal
  double key_signal = 2.0;     // key frames (added on top)
  int key_len = 5;

  int min_extent = 30;
  int max_extent = 60;
  double two_instance_prob = 0.35;
  int max_retries = 64;

  void validate() const;
};

/// Each sequence carries one or two non-overlapping instances of its class.
Dataset generate_sequence_dataset(const SyntheticSequenceSpec& spec, int n_train, int n_val,
                                  std::uint64_t seed);

/// Class-direction vectors used by the generator (unit vectors, orthogonal
/// across classes). Exposed for separability tests.
std::vector<double> sequence_weak_direction(const SyntheticSequenceSpec& spec, int label);
std::vector<double> sequence_key_direction(const SyntheticSequenceSpec& spec, int label);

// ---------------------------------------------------------------------------
// Dataset persistence: manifest.jsonl + tensors/ + masks/
// ---------------------------------------------------------------------------

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// ---------------------------------------------------------------------------
// Discriminativity report: where does a trained model's CAM mass fall?
// ---------------------------------------------------------------------------

struct DiscriminativityReport {
  double frac_discriminative = 0.0;
  double frac_body = 0.0;
  double frac_background = 0.0;
  int samples_used = 0;
  int samples_skipped = 0;  // CAMs with non-positive maximum
};

/// Fraction of above-threshold CAM mass falling on the discriminative part,
/// the body parts and the background, averaged over the given samples. CAMs
/// are upsampled nearest-neighbor to image resolution.
DiscriminativityReport discriminativity_report(const std::vector<const ImageSample*>& samples,
                                               const std::vector<Cam>& cams,
                                               double threshold_fraction);

}  // namespace camloc
