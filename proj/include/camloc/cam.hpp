#pragma once

#include <optional>
#include <span>
#include <vector>

#include "camloc/tensor.hpp"

namespace camloc {

/// Axis-aligned box in input-pixel coordinates, half-open.
struct BBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::optional<double> score;

  double area() const { return static_cast<double>(x1 - x0) * (y1 - y0); }
  void validate() const {
    if (x0 >= x1 || y0 >= y1)
      throw std::invalid_argument("BBox: degenerate box [" + std::to_string(x0) + "," +
                                  std::to_string(y0) + "," + std::to_string(x1) + "," +
                                  std::to_string(y1) + "]");
  }
};

/// Temporal segment [start,end) in frame indices.
struct Interval {
  int start = 0, end = 0;
  double score = 0.0;

  int length() const { return end - start; }
  void validate() const {
    if (start >= end)
      throw std::invalid_argument("Interval: degenerate [" + std::to_string(start) + "," +
                                  std::to_string(end) + ")");
  }
};

/// Class activation map: 2D [H',W'] for images or 1D [T'] for sequences, with
/// the mapping back to input pixel/frame coordinates.
struct Cam {
  Tensor values;
  int class_id = 0;
  int input_id = 0;
  int input_h = 0;  // input extent in pixels (input_h unused for 1D)
  int input_w = 0;  // or total frame count for 1D maps

  bool temporal() const { return values.rank() == 1; }
  double scale_y() const { return static_cast<double>(input_h) / values.dim(0); }
  double scale_x() const {
    return temporal() ? static_cast<double>(input_w) / values.dim(0)
                      : static_cast<double>(input_w) / values.dim(1);
  }
};

/// CAM(c) = sum_i weight_row[i] * features[i], per spatial/temporal position.
/// `features` is [M,H,W]; an H==1 map is returned as a 1D CAM of length W.
Cam compute_cam(const Tensor& features, std::span<const double> weight_row, int class_id,
                int input_id, int input_h, int input_w);

/// mask[p] = 1 iff cam[p] >= fraction * max(cam); empty when max(cam) <= 0.
std::vector<std::uint8_t> threshold_cam(const Cam& cam, double fraction);

struct Component {
  int label = 0;
  int size = 0;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive extent in map coordinates
};

struct ComponentLabels {
  std::vector<int> labels;  // 0 = background, else component label
  std::vector<Component> components;
};

/// Maximal 8-connected foreground regions of a binary HxW mask.
ComponentLabels connected_components(const std::vector<std::uint8_t>& mask, int h, int w);

/// Threshold, take the largest component (ties: larger interior CAM maximum,
/// then top-left extent), fit a tight box and scale it to input pixels.
/// Returns nullopt when the thresholded mask is empty ("no localization").
std::optional<BBox> localize_bbox(const Cam& cam, double fraction);

/// Maximal runs of above-threshold frames of a 1D CAM, scored by the
/// maximum CAM value inside, ordered by start.
std::vector<Interval> extract_temporal_segments(const Cam& cam, double fraction);

/// Element-wise mean CAM (members resampled nearest-neighbor to the first
/// map's grid when shapes differ) and element-wise mean class probabilities.
std::pair<Cam, std::vector<double>> ensemble_cams(const std::vector<Cam>& cams,
                                                  const std::vector<std::vector<double>>& probs);

}  // namespace camloc
