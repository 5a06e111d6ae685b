#include "camloc/cam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace camloc {

Cam compute_cam(const Tensor& features, std::span<const double> weight_row, int class_id,
                int input_id, int input_h, int input_w) {
  if (features.rank() != 3)
    throw std::invalid_argument("compute_cam: features must be MxHxW, got " +
                                features.shape_string());
  const int m = features.dim(0), h = features.dim(1), w = features.dim(2);
  if (static_cast<int>(weight_row.size()) != m)
    throw std::invalid_argument("compute_cam: weight row length " +
                                std::to_string(weight_row.size()) +
                                " does not match feature map count " + std::to_string(m));
  if (input_h < 1 || input_w < 1)
    throw std::invalid_argument("compute_cam: input extent must be positive");

  Cam cam;
  cam.class_id = class_id;
  cam.input_id = input_id;
  cam.input_h = input_h;
  cam.input_w = input_w;
  const int hw = h * w;
  std::vector<double> vals(static_cast<std::size_t>(hw), 0.0);
  for (int c = 0; c < m; ++c) {
    const double wv = weight_row[static_cast<std::size_t>(c)];
    const double* plane = features.data() + static_cast<std::size_t>(c) * hw;
    for (int i = 0; i < hw; ++i) vals[static_cast<std::size_t>(i)] += wv * plane[i];
  }
  // Feature maps with a single row come from sequence models: 1D CAM.
  if (h == 1) {
    cam.values = Tensor::from_data({w}, std::move(vals));
  } else {
    cam.values = Tensor::from_data({h, w}, std::move(vals));
  }
  return cam;
}

std::vector<std::uint8_t> threshold_cam(const Cam& cam, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("threshold_cam: fraction must be in (0,1)");
  const auto n = static_cast<std::size_t>(cam.values.size());
  std::vector<std::uint8_t> mask(n, 0);
  double maxv = cam.values[0];
  for (std::size_t i = 1; i < n; ++i) maxv = std::max(maxv, cam.values[static_cast<std::int64_t>(i)]);
  if (maxv <= 0.0) return mask;  // no positive evidence: empty foreground
  const double cut = fraction * maxv;
  for (std::size_t i = 0; i < n; ++i)
    mask[i] = cam.values[static_cast<std::int64_t>(i)] >= cut ? 1 : 0;
  return mask;
}

ComponentLabels connected_components(const std::vector<std::uint8_t>& mask, int h, int w) {
  if (static_cast<std::size_t>(h) * w != mask.size())
    throw std::invalid_argument("connected_components: mask size does not match extent");
  ComponentLabels out;
  out.labels.assign(mask.size(), 0);

  // Union-find over provisional labels, two passes, 8-connectivity.
  std::vector<int> parent(1, 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!mask[i]) continue;
      // Earlier neighbors in raster order: W, NW, N, NE.
      int label = 0;
      const int dx[4] = {-1, -1, 0, 1};
      const int dy[4] = {0, -1, -1, -1};
      for (int k = 0; k < 4; ++k) {
        const int ny = y + dy[k], nx = x + dx[k];
        if (ny < 0 || nx < 0 || nx >= w) continue;
        const int nl = out.labels[static_cast<std::size_t>(ny) * w + nx];
        if (nl == 0) continue;
        if (label == 0)
          label = nl;
        else
          unite(label, nl);
      }
      if (label == 0) {
        label = static_cast<int>(parent.size());
        parent.push_back(label);
      }
      out.labels[i] = label;
    }
  }

  // Second pass: canonical labels, densely renumbered in scan order.
  std::vector<int> dense(parent.size(), 0);
  int next = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!out.labels[i]) continue;
      const int root = find(out.labels[i]);
      if (dense[static_cast<std::size_t>(root)] == 0) {
        dense[static_cast<std::size_t>(root)] = ++next;
        Component comp;
        comp.label = next;
        comp.x0 = comp.x1 = x;
        comp.y0 = comp.y1 = y;
        out.components.push_back(comp);
      }
      const int id = dense[static_cast<std::size_t>(root)];
      out.labels[i] = id;
      Component& comp = out.components[static_cast<std::size_t>(id - 1)];
      comp.size += 1;
      comp.x0 = std::min(comp.x0, x);
      comp.x1 = std::max(comp.x1, x);
      comp.y0 = std::min(comp.y0, y);
      comp.y1 = std::max(comp.y1, y);
    }
  }
  return out;
}

std::optional<BBox> localize_bbox(const Cam& cam, double fraction) {
  if (cam.temporal())
    throw std::invalid_argument("localize_bbox: CAM must be 2D");
  const int h = cam.values.dim(0), w = cam.values.dim(1);
  const auto mask = threshold_cam(cam, fraction);
  const auto cc = connected_components(mask, h, w);
  if (cc.components.empty()) return std::nullopt;

  // Max CAM value inside each component (tie-break and score).
  std::vector<double> peak(cc.components.size(), -std::numeric_limits<double>::infinity());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int id = cc.labels[static_cast<std::size_t>(y) * w + x];
      if (id) peak[static_cast<std::size_t>(id - 1)] =
          std::max(peak[static_cast<std::size_t>(id - 1)], cam.values(y, x));
    }
  }

  int best = 0;
  for (int i = 1; i < static_cast<int>(cc.components.size()); ++i) {
    const auto& a = cc.components[static_cast<std::size_t>(i)];
    const auto& b = cc.components[static_cast<std::size_t>(best)];
    const double pa = peak[static_cast<std::size_t>(i)], pb = peak[static_cast<std::size_t>(best)];
    if (a.size > b.size ||
        (a.size == b.size &&
         (pa > pb || (pa == pb && (a.y0 < b.y0 || (a.y0 == b.y0 && a.x0 < b.x0))))))
      best = i;
  }
  const auto& comp = cc.components[static_cast<std::size_t>(best)];

  const double sx = cam.scale_x(), sy = cam.scale_y();
  BBox box;
  box.x0 = static_cast<int>(std::floor(comp.x0 * sx));
  box.y0 = static_cast<int>(std::floor(comp.y0 * sy));
  box.x1 = static_cast<int>(std::ceil((comp.x1 + 1) * sx));
  box.y1 = static_cast<int>(std::ceil((comp.y1 + 1) * sy));
  box.x1 = std::min(box.x1, cam.input_w);
  box.y1 = std::min(box.y1, cam.input_h);
  box.score = peak[static_cast<std::size_t>(best)];
  box.validate();
  return box;
}

std::vector<Interval> extract_temporal_segments(const Cam& cam, double fraction) {
  if (!cam.temporal())
    throw std::invalid_argument("extract_temporal_segments: CAM must be 1D");
  const int t = cam.values.dim(0);
  const auto mask = threshold_cam(cam, fraction);
  const double scale = cam.scale_x();

  std::vector<Interval> out;
  int run_start = -1;
  double run_peak = 0.0;
  for (int i = 0; i <= t; ++i) {
    const bool on = i < t && mask[static_cast<std::size_t>(i)];
    if (on) {
      if (run_start < 0) {
        run_start = i;
        run_peak = cam.values(i);
      } else {
        run_peak = std::max(run_peak, cam.values(i));
      }
    } else if (run_start >= 0) {
      Interval iv;
      iv.start = static_cast<int>(std::floor(run_start * scale));
      iv.end = std::min(static_cast<int>(std::ceil(i * scale)), cam.input_w);
      iv.score = run_peak;
      iv.validate();
      out.push_back(iv);
      run_start = -1;
    }
  }
  return out;
}

namespace {

Tensor resample_nearest(const Tensor& src, const std::vector<int>& dst_shape) {
  if (src.shape() == dst_shape) return src;
  Tensor dst(dst_shape);
  if (src.rank() == 1) {
    const int sn = src.dim(0), dn = dst_shape[0];
    for (int i = 0; i < dn; ++i) {
      int j = static_cast<int>((static_cast<std::int64_t>(i) * sn) / dn);
      dst(i) = src(std::min(j, sn - 1));
    }
  } else {
    const int sh = src.dim(0), sw = src.dim(1);
    const int dh = dst_shape[0], dw = dst_shape[1];
    for (int y = 0; y < dh; ++y) {
      const int syi = std::min(static_cast<int>((static_cast<std::int64_t>(y) * sh) / dh), sh - 1);
      for (int x = 0; x < dw; ++x) {
        const int sxi = std::min(static_cast<int>((static_cast<std::int64_t>(x) * sw) / dw), sw - 1);
        dst(y, x) = src(syi, sxi);
      }
    }
  }
  return dst;
}

}  // namespace

std::pair<Cam, std::vector<double>> ensemble_cams(const std::vector<Cam>& cams,
                                                  const std::vector<std::vector<double>>& probs) {
  if (cams.empty()) throw std::invalid_argument("ensemble_cams: empty CAM list");
  if (probs.size() != cams.size())
    throw std::invalid_argument("ensemble_cams: probability list size mismatch");
  const Cam& ref = cams[0];
  for (const Cam& c : cams) {
    if (c.class_id != ref.class_id)
      throw std::invalid_argument("ensemble_cams: CAMs must share a class id");
    if (c.input_h != ref.input_h || c.input_w != ref.input_w)
      throw std::invalid_argument("ensemble_cams: CAMs must cover the same input extent");
  }

  Cam fused = ref;
  const double n = static_cast<double>(cams.size());
  for (std::size_t i = 1; i < cams.size(); ++i) {
    const Tensor r = resample_nearest(cams[i].values, ref.values.shape());
    for (std::int64_t j = 0; j < fused.values.size(); ++j) fused.values[j] += r[j];
  }
  for (std::int64_t j = 0; j < fused.values.size(); ++j) fused.values[j] /= n;

  std::vector<double> fused_probs(probs[0].size(), 0.0);
  for (const auto& p : probs) {
    if (p.size() != fused_probs.size())
      throw std::invalid_argument("ensemble_cams: probability vectors disagree in length");
    for (std::size_t j = 0; j < p.size(); ++j) fused_probs[j] += p[j];
  }
  for (double& v : fused_probs) v /= n;
  return {std::move(fused), std::move(fused_probs)};
}

}  // namespace camloc
