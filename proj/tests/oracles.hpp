#pragma once

// Independent test oracles. Everything here is deliberately written as
// directly as possible (nested loops, BFS, long double) and never shares code
// with the implementation paths it checks.

#include <cmath>
#include <deque>
#include <vector>

#include "camloc/tensor.hpp"

namespace oracles {

/// Plain nested-loop convolution, channel-outer kernel order: the summation
/// order contract conv2d_forward must match bit for bit.
inline camloc::Tensor conv_nested_loop(const camloc::Tensor& input, const camloc::Tensor& weights,
                                       const camloc::Tensor& bias, int stride, int pad_h,
                                       int pad_w) {
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int oc = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  const int oh = (h + 2 * pad_h - kh) / stride + 1;
  const int ow = (w + 2 * pad_w - kw) / stride + 1;
  camloc::Tensor out({oc, oh, ow});
  for (int o = 0; o < oc; ++o) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias(o);
        for (int ic = 0; ic < c; ++ic) {
          for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
              const int iy = oy * stride - pad_h + ky;
              const int ix = ox * stride - pad_w + kx;
              const double x = (iy < 0 || iy >= h || ix < 0 || ix >= w) ? 0.0 : input(ic, iy, ix);
              acc = acc + weights(o, ic, ky, kx) * x;
            }
          }
        }
        out(o, oy, ox) = acc;
      }
    }
  }
  return out;
}

/// Naive softmax cross-entropy in long double without max subtraction; valid
/// while exp() stays inside long double range.
inline double softmax_xent_longdouble(const std::vector<double>& logits, int label) {
  long double denom = 0.0L;
  for (double v : logits) denom += expl(static_cast<long double>(v));
  const long double p = expl(static_cast<long double>(logits[static_cast<std::size_t>(label)])) /
                        denom;
  return static_cast<double>(-logl(p));
}

/// BFS flood fill, 8-connectivity. Labels assigned in scan order of each
/// component's first pixel.
inline std::vector<int> floodfill_components(const std::vector<std::uint8_t>& mask, int h, int w) {
  std::vector<int> labels(mask.size(), 0);
  int next = 0;
  for (int sy = 0; sy < h; ++sy) {
    for (int sx = 0; sx < w; ++sx) {
      const std::size_t start = static_cast<std::size_t>(sy) * w + sx;
      if (!mask[start] || labels[start]) continue;
      ++next;
      std::deque<std::pair<int, int>> queue{{sy, sx}};
      labels[start] = next;
      while (!queue.empty()) {
        const auto [y, x] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const std::size_t i = static_cast<std::size_t>(ny) * w + nx;
            if (mask[i] && !labels[i]) {
              labels[i] = next;
              queue.emplace_back(ny, nx);
            }
          }
        }
      }
    }
  }
  return labels;
}

/// Set-based run extraction for 1D threshold masks: every maximal run of set
/// frames, found by membership tests rather than a scan state machine.
inline std::vector<std::pair<int, int>> runs_by_membership(const std::vector<std::uint8_t>& on) {
  const int n = static_cast<int>(on.size());
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n; ++i) {
    const bool starts = on[static_cast<std::size_t>(i)] &&
                        (i == 0 || !on[static_cast<std::size_t>(i - 1)]);
    if (!starts) continue;
    int j = i;
    while (j + 1 < n && on[static_cast<std::size_t>(j + 1)]) ++j;
    out.emplace_back(i, j + 1);
  }
  return out;
}

}  // namespace oracles
