#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "camloc/hiding.hpp"
#include "camloc/tensor.hpp"

namespace camloc {

enum class WindowCase { kFullyVisible, kFullyHidden, kPartial };

struct WindowInfo {
  WindowCase kind = WindowCase::kFullyVisible;
  int hidden_pixels = 0;
  bool touches_padding = false;  // excluded from case statistics
};

struct WindowGrid {
  int out_h = 0, out_w = 0;
  std::vector<WindowInfo> windows;  // row-major

  const WindowInfo& at(int oy, int ox) const {
    return windows[static_cast<std::size_t>(oy) * out_w + ox];
  }
  int count(WindowCase kind) const;
};

/// Labels every KxK convolution window position by the number of hidden
/// pixels in its receptive field: 0 -> fully visible, K*K -> fully hidden,
/// anything else -> partial. Padding pixels are never counted as hidden.
WindowGrid classify_windows(const HideMask& mask, int kernel, int stride, int pad);

/// |conv(window filled with mu) - (sum_i w_i . mu + bias)|: the fully-hidden
/// activation must reduce to the closed form exactly.
double hidden_case_exactness(const Tensor& filter_weights, double bias,
                             const std::vector<double>& mu);

struct CaseStats {
  std::int64_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

struct FilterGapRow {
  int filter = 0;
  CaseStats visible, hidden, partial;
  double gap_hidden = 0.0;   // |mean(hidden)  - mean(visible)|
  double gap_partial = 0.0;  // |mean(partial) - mean(visible)|
};

struct ExpectationGapReport {
  // Window counts pooled over filters/images (padding-touching excluded).
  std::int64_t windows_visible = 0;
  std::int64_t windows_hidden = 0;
  std::int64_t windows_partial = 0;
  bool insufficient_samples = false;  // some case had < min_case_count windows

  std::vector<FilterGapRow> mean_fill;
  std::vector<FilterGapRow> zero_fill;

  // Per-filter gaps normalized by that filter's visible-case stddev, then
  // averaged over filters.
  double norm_gap_hidden_mean_fill = 0.0;
  double norm_gap_partial_mean_fill = 0.0;
  double norm_gap_hidden_zero_fill = 0.0;
  double norm_gap_partial_zero_fill = 0.0;

  std::string to_text_table() const;
  std::string to_json() const;
  std::string histogram_csv() const;  // per-case per-filter mean/stddev rows
};

/// Empirically compares first-layer activation distributions across the
/// three window cases, under mean fill and under the zero-fill
/// counterfactual, using the same masks for both.
ExpectationGapReport expectation_gap_report(const std::vector<const Tensor*>& images,
                                            const Tensor& filter_weights, const Tensor& bias,
                                            const HideSpec& spec, int masks_per_image,
                                            std::uint64_t seed, int kernel_stride = 1,
                                            int kernel_pad = 0,
                                            std::int64_t min_case_count = 100);

}  // namespace camloc
