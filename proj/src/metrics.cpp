#include "camloc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace camloc {

double iou_box(const BBox& a, const BBox& b) {
  a.validate();
  b.validate();
  const double ix = std::max(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double iy = std::max(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

double iou_interval(const Interval& a, const Interval& b) {
  a.validate();
  b.validate();
  const double inter = std::max(0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  return inter / uni;
}

int EvalRecord::top1() const {
  int best = 0;
  for (int i = 1; i < static_cast<int>(probs.size()); ++i)
    if (probs[static_cast<std::size_t>(i)] > probs[static_cast<std::size_t>(best)]) best = i;
  return best;
}

namespace {

bool iou_passes(double iou, double threshold, bool strict) {
  return strict ? iou > threshold : iou >= threshold;
}

bool box_hit(const std::optional<BBox>& box, const std::vector<BBox>& gts, double threshold,
             bool strict) {
  if (!box.has_value()) return false;  // "no localization" counts as failure
  for (const BBox& gt : gts) {
    if (iou_passes(iou_box(*box, gt), threshold, strict)) return true;
  }
  return false;
}

void check_record(const EvalRecord& r) {
  if (r.probs.empty()) throw std::invalid_argument("image_metrics: record without probabilities");
  double sum = 0.0;
  for (double p : r.probs) sum += p;
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("image_metrics: probabilities do not sum to 1");
  if (r.gt_boxes.empty())
    throw std::invalid_argument("image_metrics: record without ground-truth boxes");
}

ImageMetrics metrics_of(const std::vector<const EvalRecord*>& records, double box_iou,
                        bool strict) {
  ImageMetrics m;
  for (const EvalRecord* r : records) {
    const bool gt_hit = box_hit(r->box_true_class, r->gt_boxes, box_iou, strict);
    const bool clas = r->top1() == r->true_class;
    const bool top1_hit = clas && box_hit(r->box_top1_class, r->gt_boxes, box_iou, strict);
    m.gt_known_loc += gt_hit;
    m.top1_clas += clas;
    m.top1_loc += top1_hit;
  }
  const double n = static_cast<double>(records.size());
  m.gt_known_loc /= n;
  m.top1_clas /= n;
  m.top1_loc /= n;
  return m;
}

}  // namespace

ImageMetrics image_metrics(const std::vector<EvalRecord>& records, double box_iou, bool strict) {
  if (records.empty()) throw std::invalid_argument("image_metrics: empty record set");
  std::vector<const EvalRecord*> ptrs;
  ptrs.reserve(records.size());
  for (const auto& r : records) {
    check_record(r);
    ptrs.push_back(&r);
  }
  return metrics_of(ptrs, box_iou, strict);
}

std::map<int, ImageMetrics> image_metrics_per_class(const std::vector<EvalRecord>& records,
                                                    double box_iou, bool strict) {
  if (records.empty()) throw std::invalid_argument("image_metrics: empty record set");
  std::map<int, std::vector<const EvalRecord*>> by_class;
  for (const auto& r : records) {
    check_record(r);
    by_class[r.true_class].push_back(&r);
  }
  std::map<int, ImageMetrics> out;
  for (const auto& [cls, ptrs] : by_class) out[cls] = metrics_of(ptrs, box_iou, strict);
  return out;
}

double average_precision(std::vector<ScoredInterval> predictions,
                         const std::vector<GtInterval>& gts, double threshold, bool strict) {
  if (gts.empty())
    throw std::invalid_argument("average_precision: no ground truth for this class");
  if (predictions.empty()) return 0.0;

  // Descending score; deterministic tie order by (video, start, end).
  std::stable_sort(predictions.begin(), predictions.end(),
                   [](const ScoredInterval& a, const ScoredInterval& b) {
                     if (a.interval.score != b.interval.score)
                       return a.interval.score > b.interval.score;
                     if (a.video_id != b.video_id) return a.video_id < b.video_id;
                     if (a.interval.start != b.interval.start)
                       return a.interval.start < b.interval.start;
                     return a.interval.end < b.interval.end;
                   });

  std::vector<bool> matched(gts.size(), false);
  std::vector<int> tp_flags;
  tp_flags.reserve(predictions.size());
  for (const auto& pred : predictions) {
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (matched[g] || gts[g].video_id != pred.video_id) continue;
      const double iou = iou_interval(pred.interval, gts[g].interval);
      if (!iou_passes(iou, threshold, strict)) continue;
      if (best < 0 || iou > best_iou) {
        best = static_cast<int>(g);
        best_iou = iou;
      }
    }
    if (best >= 0) {
      matched[static_cast<std::size_t>(best)] = true;
      tp_flags.push_back(1);
    } else {
      tp_flags.push_back(0);
    }
  }

  // Precision/recall curve; exact area under the interpolated envelope.
  const double total_gt = static_cast<double>(gts.size());
  const int n = static_cast<int>(tp_flags.size());
  std::vector<double> precision(static_cast<std::size_t>(n)), recall(static_cast<std::size_t>(n));
  int tp = 0;
  for (int i = 0; i < n; ++i) {
    tp += tp_flags[static_cast<std::size_t>(i)];
    precision[static_cast<std::size_t>(i)] = static_cast<double>(tp) / (i + 1);
    recall[static_cast<std::size_t>(i)] = static_cast<double>(tp) / total_gt;
  }
  // Envelope: precision at recall r is the max precision at any recall >= r.
  for (int i = n - 2; i >= 0; --i)
    precision[static_cast<std::size_t>(i)] =
        std::max(precision[static_cast<std::size_t>(i)], precision[static_cast<std::size_t>(i + 1)]);

  double ap = 0.0;
  double prev_recall = 0.0;
  for (int i = 0; i < n; ++i) {
    if (recall[static_cast<std::size_t>(i)] > prev_recall) {
      ap += (recall[static_cast<std::size_t>(i)] - prev_recall) * precision[static_cast<std::size_t>(i)];
      prev_recall = recall[static_cast<std::size_t>(i)];
    }
  }
  return ap;
}

TemporalMapResult temporal_map(const std::vector<EvalRecord>& records,
                               const std::vector<double>& thresholds, bool strict) {
  if (records.empty()) throw std::invalid_argument("temporal_map: empty record set");

  std::set<int> classes;
  for (const auto& r : records) classes.insert(r.true_class);

  TemporalMapResult out;
  std::set<int> skipped;
  for (double th : thresholds) {
    double sum = 0.0;
    int counted = 0;
    for (int cls : classes) {
      std::vector<ScoredInterval> preds;
      std::vector<GtInterval> gts;
      for (const auto& r : records) {
        if (r.true_class != cls) continue;
        for (const auto& iv : r.pred_intervals) preds.push_back({r.input_id, iv});
        for (const auto& iv : r.gt_intervals) gts.push_back({r.input_id, iv});
      }
      if (gts.empty()) {
        skipped.insert(cls);
        continue;
      }
      const double ap = average_precision(std::move(preds), gts, th, strict);
      out.ap_per_class[th][cls] = ap;
      sum += ap;
      ++counted;
    }
    if (counted == 0) throw std::invalid_argument("temporal_map: no class has ground truth");
    out.map_at[th] = sum / counted;
  }
  out.skipped_classes.assign(skipped.begin(), skipped.end());
  return out;
}

}  // namespace camloc
