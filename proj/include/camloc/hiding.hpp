#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "camloc/rng.hpp"
#include "camloc/tensor.hpp"

namespace camloc {

/// Sentinel in a mixed-size list meaning "leave the image unhidden".
inline constexpr int kNoHide = 0;

/// Parameters of one hiding policy (image grid, feature-map grid or temporal
/// segments).
struct HideSpec {
  int patch_size = 16;        // S in pixels, or segment length in frames
  double hide_prob = 0.5;     // p_hide
  std::vector<double> fill;   // one value per channel (mean vector), or empty = zero fill
  std::uint64_t seed = 0;     // base seed; per-epoch seeds are derived by the caller
  std::vector<int> mixed_sizes;  // optional; may include kNoHide

  void validate(int channels) const;
};

/// Boolean grid of hidden cells plus the mapping back to pixels/frames.
struct HideMask {
  int height = 0, width = 0;  // extent the mask covers (width=frames for 1D)
  int patch = 1;
  int grid_h = 0, grid_w = 0;
  std::vector<std::uint8_t> cell_hidden;  // row-major grid_h x grid_w

  bool hidden_cell(int gy, int gx) const {
    return cell_hidden[static_cast<std::size_t>(gy) * grid_w + gx] != 0;
  }
  bool hidden_at(int y, int x) const { return hidden_cell(y / patch, x / patch); }
  int hidden_cell_count() const;
  /// Per-pixel 0/1 map (1 = hidden).
  Tensor pixel_mask() const;
};

/// Per-channel mean over every pixel of the given images (the training split).
std::vector<double> dataset_mean_images(const std::vector<const Tensor*>& images);
/// Mean feature vector over every frame of the given [T,D] sequences.
std::vector<double> dataset_mean_sequences(const std::vector<const Tensor*>& sequences);

/// Divides a CxHxW image into a ceil(H/S) x ceil(W/S) grid (edge cells
/// truncated but hidden atomically) and hides each cell independently with
/// probability p_hide, writing the fill vector into hidden pixels.
std::pair<Tensor, HideMask> hide_patches_image(const Tensor& image, const HideSpec& spec,
                                               std::uint64_t epoch_seed);

/// Reapplies an existing mask (idempotent for the same mask and fill).
Tensor apply_image_mask(const Tensor& image, const HideMask& mask,
                        const std::vector<double>& fill);

/// Grid-hides spatial cells of an MxHxW feature map across all channels.
/// Empty spec.fill means zero fill; otherwise one value per channel.
std::pair<Tensor, HideMask> hide_patches_featuremap(const Tensor& features, const HideSpec& spec,
                                                    std::uint64_t epoch_seed);

/// Splits a [T,D] feature sequence into consecutive segments of length
/// spec.patch_size and hides each with p_hide; hidden frames become the
/// dataset-mean feature vector.
std::pair<Tensor, HideMask> hide_segments_sequence(const Tensor& sequence, const HideSpec& spec,
                                                   std::uint64_t epoch_seed);

/// Uniform draw over spec.mixed_sizes (which may include kNoHide); one draw
/// per image per epoch.
int sample_mixed_patch_size(const HideSpec& spec, Rng& rng);

enum class DropoutMode { kTrainOnly, kTrainAndTest };

/// Zeroes each pixel-channel value independently with probability `rate`.
Tensor pixel_dropout(const Tensor& image, double rate, std::uint64_t seed);

/// Writes a hide mask as a binary PGM (hidden = black) for debugging.
void write_mask_pgm(const HideMask& mask, const std::string& path);

// Transform-call audit counters. The evaluation path asserts that no hiding
// transform ran while it was active.
namespace audit {
struct Snapshot {
  std::uint64_t hide_image = 0;
  std::uint64_t hide_featuremap = 0;
  std::uint64_t hide_segments = 0;
  std::uint64_t dropout = 0;
  std::uint64_t hiding_total() const { return hide_image + hide_featuremap + hide_segments; }
};
Snapshot snapshot();
void reset();
}  // namespace audit

}  // namespace camloc
