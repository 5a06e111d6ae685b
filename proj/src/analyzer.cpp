#include "camloc/analyzer.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "camloc/net.hpp"

using nlohmann::json;

namespace camloc {

int WindowGrid::count(WindowCase kind) const {
  int n = 0;
  for (const auto& w : windows) n += w.kind == kind;
  return n;
}

WindowGrid classify_windows(const HideMask& mask, int kernel, int stride, int pad) {
  if (kernel < 1 || stride < 1 || pad < 0)
    throw std::invalid_argument("classify_windows: bad kernel/stride/pad");
  const int h = mask.height, w = mask.width;
  WindowGrid grid;
  grid.out_h = (h + 2 * pad - kernel) / stride + 1;
  grid.out_w = (w + 2 * pad - kernel) / stride + 1;
  if (grid.out_h < 1 || grid.out_w < 1)
    throw std::invalid_argument("classify_windows: kernel exceeds padded extent");
  grid.windows.resize(static_cast<std::size_t>(grid.out_h) * grid.out_w);

  const int full = kernel * kernel;
  for (int oy = 0; oy < grid.out_h; ++oy) {
    for (int ox = 0; ox < grid.out_w; ++ox) {
      WindowInfo info;
      int hidden = 0;
      for (int ky = 0; ky < kernel; ++ky) {
        const int iy = oy * stride - pad + ky;
        for (int kx = 0; kx < kernel; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
            info.touches_padding = true;  // padding pixels are not "hidden"
          } else if (mask.hidden_at(iy, ix)) {
            ++hidden;
          }
        }
      }
      info.hidden_pixels = hidden;
      info.kind = hidden == 0 ? WindowCase::kFullyVisible
                 : hidden == full ? WindowCase::kFullyHidden
                                  : WindowCase::kPartial;
      grid.windows[static_cast<std::size_t>(oy) * grid.out_w + ox] = info;
    }
  }
  return grid;
}

double hidden_case_exactness(const Tensor& filter_weights, double bias,
                             const std::vector<double>& mu) {
  if (filter_weights.rank() != 3)
    throw std::invalid_argument("hidden_case_exactness: filter must be [C,KH,KW]");
  const int c = filter_weights.dim(0), kh = filter_weights.dim(1), kw = filter_weights.dim(2);
  if (static_cast<int>(mu.size()) != c)
    throw std::invalid_argument("hidden_case_exactness: mu length does not match channels");

  // Route A: the real convolution applied to a window filled with mu.
  Tensor window({c, kh, kw});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < kh; ++y)
      for (int x = 0; x < kw; ++x) window(ch, y, x) = mu[static_cast<std::size_t>(ch)];
  Tensor w4 = Tensor::from_data({1, c, kh, kw},
                                std::vector<double>(filter_weights.data(),
                                                    filter_weights.data() + filter_weights.size()));
  Tensor b = Tensor::from_data({1}, {bias});
  const Tensor out = conv2d_forward(window, w4, b, 1, 0);

  // Route B: closed form sum_c mu_c * (sum over kernel taps) + bias,
  // accumulated in a different order.
  double closed = bias;
  for (int ch = 0; ch < c; ++ch) {
    double tap_sum = 0.0;
    for (int y = 0; y < kh; ++y)
      for (int x = 0; x < kw; ++x) tap_sum += filter_weights(ch, y, x);
    closed += mu[static_cast<std::size_t>(ch)] * tap_sum;
  }
  return std::abs(out[0] - closed);
}

namespace {

struct Accumulator {
  std::int64_t n = 0;
  double sum = 0.0;
  double sumsq = 0.0;
  void add(double v) {
    ++n;
    sum += v;
    sumsq += v * v;
  }
  CaseStats stats() const {
    CaseStats s;
    s.count = n;
    if (n > 0) {
      s.mean = sum / static_cast<double>(n);
      const double var = std::max(0.0, sumsq / static_cast<double>(n) - s.mean * s.mean);
      s.stddev = std::sqrt(var);
    }
    return s;
  }
};

}  // namespace

ExpectationGapReport expectation_gap_report(const std::vector<const Tensor*>& images,
                                            const Tensor& filter_weights, const Tensor& bias,
                                            const HideSpec& spec, int masks_per_image,
                                            std::uint64_t seed, int kernel_stride, int kernel_pad,
                                            std::int64_t min_case_count) {
  if (images.empty()) throw std::invalid_argument("expectation_gap_report: no images");
  if (filter_weights.rank() != 4)
    throw std::invalid_argument("expectation_gap_report: filters must be [F,C,KH,KW]");
  if (filter_weights.dim(2) != filter_weights.dim(3))
    throw std::invalid_argument("expectation_gap_report: analysis assumes square kernels");
  const int nf = filter_weights.dim(0);
  const int kernel = filter_weights.dim(2);
  const int channels = filter_weights.dim(1);

  const std::vector<double> mu = dataset_mean_images(images);
  if (static_cast<int>(mu.size()) != channels)
    throw std::invalid_argument("expectation_gap_report: filter channels do not match images");
  const std::vector<double> zero_fill(mu.size(), 0.0);

  // accumulators[fill][filter][case]
  std::vector<std::vector<Accumulator>> acc_mean(2, std::vector<Accumulator>(
                                                        static_cast<std::size_t>(nf) * 3));
  std::int64_t win_v = 0, win_h = 0, win_p = 0;

  HideSpec local = spec;
  local.fill = mu;
  HideSpec local_zero = spec;
  local_zero.fill = zero_fill;

  int image_idx = 0;
  for (const Tensor* img : images) {
    for (int rep = 0; rep < masks_per_image; ++rep) {
      const std::uint64_t mask_seed =
          derive_seed(seed, seed_tag::kMask, static_cast<std::uint64_t>(image_idx),
                      static_cast<std::uint64_t>(rep));
      const auto [hidden_mean, mask] = hide_patches_image(*img, local, mask_seed);
      const Tensor hidden_zero = apply_image_mask(*img, mask, zero_fill);
      const WindowGrid grid = classify_windows(mask, kernel, kernel_stride, kernel_pad);

      const Tensor act_mean =
          conv2d_forward(hidden_mean, filter_weights, bias, kernel_stride, kernel_pad);
      const Tensor act_zero =
          conv2d_forward(hidden_zero, filter_weights, bias, kernel_stride, kernel_pad);

      for (int oy = 0; oy < grid.out_h; ++oy) {
        for (int ox = 0; ox < grid.out_w; ++ox) {
          const WindowInfo& info = grid.at(oy, ox);
          if (info.touches_padding) continue;  // padding excluded from statistics
          const int case_idx = info.kind == WindowCase::kFullyVisible ? 0
                               : info.kind == WindowCase::kFullyHidden ? 1
                                                                        : 2;
          if (case_idx == 0) ++win_v;
          if (case_idx == 1) ++win_h;
          if (case_idx == 2) ++win_p;
          for (int f = 0; f < nf; ++f) {
            const std::size_t slot = static_cast<std::size_t>(f) * 3 + case_idx;
            acc_mean[0][slot].add(act_mean(f, oy, ox));
            acc_mean[1][slot].add(act_zero(f, oy, ox));
          }
        }
      }
    }
    ++image_idx;
  }

  ExpectationGapReport rep;
  rep.windows_visible = win_v;
  rep.windows_hidden = win_h;
  rep.windows_partial = win_p;
  rep.insufficient_samples = win_v < min_case_count || win_h < min_case_count ||
                             win_p < min_case_count;

  double ngh_mean = 0.0, ngp_mean = 0.0, ngh_zero = 0.0, ngp_zero = 0.0;
  for (int fill = 0; fill < 2; ++fill) {
    auto& rows = fill == 0 ? rep.mean_fill : rep.zero_fill;
    for (int f = 0; f < nf; ++f) {
      FilterGapRow row;
      row.filter = f;
      row.visible = acc_mean[fill][static_cast<std::size_t>(f) * 3 + 0].stats();
      row.hidden = acc_mean[fill][static_cast<std::size_t>(f) * 3 + 1].stats();
      row.partial = acc_mean[fill][static_cast<std::size_t>(f) * 3 + 2].stats();
      row.gap_hidden = std::abs(row.hidden.mean - row.visible.mean);
      row.gap_partial = std::abs(row.partial.mean - row.visible.mean);
      rows.push_back(row);
      const double sd = std::max(row.visible.stddev, 1e-300);
      if (fill == 0) {
        ngh_mean += row.gap_hidden / sd;
        ngp_mean += row.gap_partial / sd;
      } else {
        ngh_zero += row.gap_hidden / sd;
        ngp_zero += row.gap_partial / sd;
      }
    }
  }
  rep.norm_gap_hidden_mean_fill = ngh_mean / nf;
  rep.norm_gap_partial_mean_fill = ngp_mean / nf;
  rep.norm_gap_hidden_zero_fill = ngh_zero / nf;
  rep.norm_gap_partial_zero_fill = ngp_zero / nf;
  return rep;
}

std::string ExpectationGapReport::to_text_table() const {
  std::ostringstream os;
  os << "window counts: visible=" << windows_visible << " hidden=" << windows_hidden
     << " partial=" << windows_partial
     << (insufficient_samples ? "  [insufficient-sample]" : "") << "\n";
  os << "normalized gaps (|mean(case)-mean(visible)| / sd(visible), averaged over filters)\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "  %-10s %12s %12s\n", "fill", "hidden", "partial");
  os << buf;
  std::snprintf(buf, sizeof(buf), "  %-10s %12.6f %12.6f\n", "mean",
                norm_gap_hidden_mean_fill, norm_gap_partial_mean_fill);
  os << buf;
  std::snprintf(buf, sizeof(buf), "  %-10s %12.6f %12.6f\n", "zero",
                norm_gap_hidden_zero_fill, norm_gap_partial_zero_fill);
  os << buf;
  os << "per-filter case means (mean fill)\n";
  std::snprintf(buf, sizeof(buf), "  %-6s %12s %12s %12s %12s\n", "filter", "visible", "hidden",
                "partial", "sd(visible)");
  os << buf;
  for (const auto& row : mean_fill) {
    std::snprintf(buf, sizeof(buf), "  %-6d %12.6f %12.6f %12.6f %12.6f\n", row.filter,
                  row.visible.mean, row.hidden.mean, row.partial.mean, row.visible.stddev);
    os << buf;
  }
  return os.str();
}

namespace {
json row_json(const FilterGapRow& r) {
  json j;
  j["filter"] = r.filter;
  j["visible"] = {{"count", r.visible.count}, {"mean", r.visible.mean}, {"stddev", r.visible.stddev}};
  j["hidden"] = {{"count", r.hidden.count}, {"mean", r.hidden.mean}, {"stddev", r.hidden.stddev}};
  j["partial"] = {{"count", r.partial.count}, {"mean", r.partial.mean}, {"stddev", r.partial.stddev}};
  j["gap_hidden"] = r.gap_hidden;
  j["gap_partial"] = r.gap_partial;
  return j;
}
}  // namespace

std::string ExpectationGapReport::to_json() const {
  json j;
  j["windows"] = {{"visible", windows_visible},
                  {"hidden", windows_hidden},
                  {"partial", windows_partial}};
  j["insufficient_samples"] = insufficient_samples;
  j["normalized_gaps"] = {{"hidden_mean_fill", norm_gap_hidden_mean_fill},
                          {"partial_mean_fill", norm_gap_partial_mean_fill},
                          {"hidden_zero_fill", norm_gap_hidden_zero_fill},
                          {"partial_zero_fill", norm_gap_partial_zero_fill}};
  json mf = json::array(), zf = json::array();
  for (const auto& r : mean_fill) mf.push_back(row_json(r));
  for (const auto& r : zero_fill) zf.push_back(row_json(r));
  j["mean_fill"] = mf;
  j["zero_fill"] = zf;
  return j.dump(2);
}

std::string ExpectationGapReport::histogram_csv() const {
  std::ostringstream os;
  os << "fill,filter,case,count,mean,stddev\n";
  auto emit = [&os](const char* fill, const FilterGapRow& r) {
    auto line = [&](const char* name, const CaseStats& s) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s,%d,%s,%lld,%.12g,%.12g\n", fill, r.filter, name,
                    static_cast<long long>(s.count), s.mean, s.stddev);
      os << buf;
    };
    line("visible", r.visible);
    line("hidden", r.hidden);
    line("partial", r.partial);
  };
  for (const auto& r : mean_fill) emit("mean", r);
  for (const auto& r : zero_fill) emit("zero", r);
  return os.str();
}

}  // namespace camloc
