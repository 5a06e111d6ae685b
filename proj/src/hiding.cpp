#include "camloc/hiding.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "camloc/io.hpp"

namespace camloc {

namespace audit {
namespace {
// Thread-local so concurrent suite runs audit only their own transforms.
thread_local std::uint64_t g_hide_image = 0;
thread_local std::uint64_t g_hide_featuremap = 0;
thread_local std::uint64_t g_hide_segments = 0;
thread_local std::uint64_t g_dropout = 0;
}  // namespace

Snapshot snapshot() {
  return Snapshot{g_hide_image, g_hide_featuremap, g_hide_segments, g_dropout};
}

void reset() {
  g_hide_image = 0;
  g_hide_featuremap = 0;
  g_hide_segments = 0;
  g_dropout = 0;
}
}  // namespace audit

void HideSpec::validate(int channels) const {
  if (patch_size < 1) throw std::invalid_argument("HideSpec: patch size must be >= 1");
  if (hide_prob < 0.0 || hide_prob > 1.0)
    throw std::invalid_argument("HideSpec: hide_prob must be in [0,1]");
  if (!fill.empty() && static_cast<int>(fill.size()) != channels)
    throw std::invalid_argument("HideSpec: fill length " + std::to_string(fill.size()) +
                                " does not match channel count " + std::to_string(channels));
}

int HideMask::hidden_cell_count() const {
  int n = 0;
  for (auto v : cell_hidden) n += v != 0;
  return n;
}

Tensor HideMask::pixel_mask() const {
  Tensor m({height, width});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) m(y, x) = hidden_at(y, x) ? 1.0 : 0.0;
  return m;
}

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

HideMask draw_mask(int height, int width, int patch, double p_hide, std::uint64_t seed) {
  HideMask m;
  m.height = height;
  m.width = width;
  m.patch = patch;
  m.grid_h = ceil_div(height, patch);
  m.grid_w = ceil_div(width, patch);
  m.cell_hidden.assign(static_cast<std::size_t>(m.grid_h) * m.grid_w, 0);
  Rng rng(seed);
  for (auto& cell : m.cell_hidden) cell = rng.uniform() < p_hide ? 1 : 0;
  return m;
}

}  // namespace

std::vector<double> dataset_mean_images(const std::vector<const Tensor*>& images) {
  if (images.empty()) throw std::invalid_argument("dataset mean: empty dataset");
  const int c = images[0]->dim(0);
  std::vector<double> mu(static_cast<std::size_t>(c), 0.0);
  std::int64_t pixels = 0;
  for (const Tensor* img : images) {
    if (img->rank() != 3 || img->dim(0) != c)
      throw std::invalid_argument("dataset mean: inconsistent channel counts");
    const int hw = img->dim(1) * img->dim(2);
    for (int ch = 0; ch < c; ++ch) {
      const double* plane = img->data() + static_cast<std::size_t>(ch) * hw;
      double acc = 0.0;
      for (int i = 0; i < hw; ++i) acc += plane[i];
      mu[static_cast<std::size_t>(ch)] += acc;
    }
    pixels += hw;
  }
  for (double& v : mu) v /= static_cast<double>(pixels);
  return mu;
}

std::vector<double> dataset_mean_sequences(const std::vector<const Tensor*>& sequences) {
  if (sequences.empty()) throw std::invalid_argument("dataset mean: empty dataset");
  const int d = sequences[0]->dim(1);
  std::vector<double> mu(static_cast<std::size_t>(d), 0.0);
  std::int64_t frames = 0;
  for (const Tensor* seq : sequences) {
    if (seq->rank() != 2 || seq->dim(1) != d)
      throw std::invalid_argument("dataset mean: inconsistent feature dims");
    const int t = seq->dim(0);
    for (int f = 0; f < t; ++f)
      for (int k = 0; k < d; ++k) mu[static_cast<std::size_t>(k)] += (*seq)(f, k);
    frames += t;
  }
  for (double& v : mu) v /= static_cast<double>(frames);
  return mu;
}

Tensor apply_image_mask(const Tensor& image, const HideMask& mask,
                        const std::vector<double>& fill) {
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (static_cast<int>(fill.size()) != c)
    throw std::invalid_argument("apply_image_mask: fill length " + std::to_string(fill.size()) +
                                " does not match channel count " + std::to_string(c));
  Tensor out = image;
  for (int gy = 0; gy < mask.grid_h; ++gy) {
    for (int gx = 0; gx < mask.grid_w; ++gx) {
      if (!mask.hidden_cell(gy, gx)) continue;
      const int y0 = gy * mask.patch, y1 = std::min(h, y0 + mask.patch);
      const int x0 = gx * mask.patch, x1 = std::min(w, x0 + mask.patch);
      for (int ch = 0; ch < c; ++ch) {
        const double v = fill[static_cast<std::size_t>(ch)];
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) out(ch, y, x) = v;
      }
    }
  }
  return out;
}

std::pair<Tensor, HideMask> hide_patches_image(const Tensor& image, const HideSpec& spec,
                                               std::uint64_t epoch_seed) {
  if (image.rank() != 3) throw std::invalid_argument("hide_patches_image: image must be CxHxW");
  spec.validate(image.dim(0));
  if (spec.fill.empty())
    throw std::invalid_argument("hide_patches_image: fill vector required (dataset mean)");
  ++audit::g_hide_image;
  HideMask mask = draw_mask(image.dim(1), image.dim(2), spec.patch_size, spec.hide_prob,
                            epoch_seed);
  return {apply_image_mask(image, mask, spec.fill), std::move(mask)};
}

std::pair<Tensor, HideMask> hide_patches_featuremap(const Tensor& features, const HideSpec& spec,
                                                    std::uint64_t epoch_seed) {
  if (features.rank() != 3)
    throw std::invalid_argument("hide_patches_featuremap: features must be MxHxW");
  const int m = features.dim(0), h = features.dim(1), w = features.dim(2);
  spec.validate(m);
  if (spec.patch_size > h || spec.patch_size > w)
    throw std::invalid_argument("hide_patches_featuremap: patch size " +
                                std::to_string(spec.patch_size) + " exceeds feature map extent " +
                                std::to_string(h) + "x" + std::to_string(w));
  ++audit::g_hide_featuremap;
  HideMask mask = draw_mask(h, w, spec.patch_size, spec.hide_prob, epoch_seed);
  Tensor out = features;
  for (int gy = 0; gy < mask.grid_h; ++gy) {
    for (int gx = 0; gx < mask.grid_w; ++gx) {
      if (!mask.hidden_cell(gy, gx)) continue;
      const int y0 = gy * mask.patch, y1 = std::min(h, y0 + mask.patch);
      const int x0 = gx * mask.patch, x1 = std::min(w, x0 + mask.patch);
      for (int ch = 0; ch < m; ++ch) {
        const double v = spec.fill.empty() ? 0.0 : spec.fill[static_cast<std::size_t>(ch)];
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) out(ch, y, x) = v;
      }
    }
  }
  return {std::move(out), std::move(mask)};
}

std::pair<Tensor, HideMask> hide_segments_sequence(const Tensor& sequence, const HideSpec& spec,
                                                   std::uint64_t epoch_seed) {
  if (sequence.rank() != 2)
    throw std::invalid_argument("hide_segments_sequence: sequence must be [T,D]");
  const int t = sequence.dim(0), d = sequence.dim(1);
  spec.validate(d);
  if (spec.fill.empty())
    throw std::invalid_argument("hide_segments_sequence: fill vector required (mean feature)");
  if (spec.patch_size > t)
    throw std::invalid_argument("hide_segments_sequence: segment length " +
                                std::to_string(spec.patch_size) + " exceeds sequence length " +
                                std::to_string(t));
  ++audit::g_hide_segments;
  HideMask mask = draw_mask(t, 1, spec.patch_size, spec.hide_prob, epoch_seed);
  // draw_mask treats the sequence as a Tx1 grid; segments index grid rows.
  Tensor out = sequence;
  for (int seg = 0; seg < mask.grid_h; ++seg) {
    if (!mask.cell_hidden[static_cast<std::size_t>(seg)]) continue;
    const int f0 = seg * spec.patch_size, f1 = std::min(t, f0 + spec.patch_size);
    for (int f = f0; f < f1; ++f)
      for (int k = 0; k < d; ++k) out(f, k) = spec.fill[static_cast<std::size_t>(k)];
  }
  return {std::move(out), std::move(mask)};
}

int sample_mixed_patch_size(const HideSpec& spec, Rng& rng) {
  if (spec.mixed_sizes.empty())
    throw std::invalid_argument("sample_mixed_patch_size: mixed_sizes is empty");
  const int pick = rng.uniform_int(static_cast<int>(spec.mixed_sizes.size()));
  return spec.mixed_sizes[static_cast<std::size_t>(pick)];
}

Tensor pixel_dropout(const Tensor& image, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("pixel_dropout: rate must be in [0,1)");
  ++audit::g_dropout;
  Tensor out = image;
  Rng rng(seed);
  for (std::int64_t i = 0; i < out.size(); ++i) {
    if (rng.uniform() < rate) out[i] = 0.0;
  }
  return out;
}

void write_mask_pgm(const HideMask& mask, const std::string& path) {
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(mask.height) * mask.width);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      gray[static_cast<std::size_t>(y) * mask.width + x] = mask.hidden_at(y, x) ? 0 : 255;
  write_pgm(gray, mask.height, mask.width, path);
}

}  // namespace camloc
