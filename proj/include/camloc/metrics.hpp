#pragma once

#include <map>
#include <optional>
#include <vector>

#include "camloc/cam.hpp"

namespace camloc {

/// Intersection-over-union of two pixel boxes, in [0,1].
double iou_box(const BBox& a, const BBox& b);

/// Intersection-over-union of two frame intervals.
double iou_interval(const Interval& a, const Interval& b);

/// One evaluated sample.
struct EvalRecord {
  int input_id = 0;
  int true_class = 0;
  std::vector<double> probs;                 // class probabilities, sum to 1
  std::optional<BBox> box_true_class;        // box from the true class's CAM
  std::optional<BBox> box_top1_class;        // box from the predicted class's CAM
  std::vector<BBox> gt_boxes;
  std::vector<Interval> pred_intervals;      // temporal predictions (true class)
  std::vector<Interval> gt_intervals;

  int top1() const;
};

struct ImageMetrics {
  double gt_known_loc = 0.0;
  double top1_loc = 0.0;
  double top1_clas = 0.0;
};

/// The three §-style image metrics. Box criterion: IoU strictly greater than
/// `box_iou` when `strict` (default), >= otherwise. Missing boxes count as
/// localization failures. Rejects an empty record set.
ImageMetrics image_metrics(const std::vector<EvalRecord>& records, double box_iou = 0.5,
                           bool strict = true);

/// Per-true-class breakdown of the same metrics.
std::map<int, ImageMetrics> image_metrics_per_class(const std::vector<EvalRecord>& records,
                                                    double box_iou = 0.5, bool strict = true);

struct ScoredInterval {
  int video_id = 0;
  Interval interval;
};

struct GtInterval {
  int video_id = 0;
  Interval interval;
};

/// Average precision for one class: predictions sorted by descending score,
/// greedy-matched (best IoU first, each ground truth used once), AP as the
/// exact area under the interpolated precision-recall curve. The IoU test is
/// `iou >= threshold` by default, strict `>` when `strict` is set.
double average_precision(std::vector<ScoredInterval> predictions,
                         const std::vector<GtInterval>& gts, double threshold,
                         bool strict = false);

struct TemporalMapResult {
  // threshold -> mAP (fraction in [0,1])
  std::map<double, double> map_at;
  // threshold -> class -> AP
  std::map<double, std::map<int, double>> ap_per_class;
  std::vector<int> skipped_classes;  // classes without ground truth
};

/// Mean AP over classes with ground truth at each IoU threshold. Records
/// group by their true class (class label assumed known). Rejects empty
/// record sets.
TemporalMapResult temporal_map(const std::vector<EvalRecord>& records,
                               const std::vector<double>& thresholds = {0.1, 0.2, 0.3, 0.4, 0.5},
                               bool strict = false);

}  // namespace camloc
