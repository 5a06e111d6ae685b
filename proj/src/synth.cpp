#include "camloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "camloc/io.hpp"
#include "camloc/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace camloc {

// ---------------------------------------------------------------------------
// Image generation
// ---------------------------------------------------------------------------

namespace {

struct Rgb {
  double r, g, b;
};

// Class tint directions for the body (unit-ish, well separated).
constexpr Rgb kTintTable[8] = {
    {0.82, -0.41, -0.41}, {-0.41, 0.82, -0.41}, {-0.41, -0.41, 0.82}, {0.58, 0.58, -0.58},
    {0.58, -0.58, 0.58},  {-0.58, 0.58, 0.58},  {0.71, 0.0, -0.71},   {0.0, 0.71, -0.71}};

constexpr Rgb kBodyBase = {0.52, 0.44, 0.36};

// High-contrast palette pairs for the discriminative part.
constexpr Rgb kHeadA[8] = {{0.90, 0.12, 0.12}, {0.10, 0.80, 0.20}, {0.15, 0.25, 0.90},
                           {0.92, 0.85, 0.10}, {0.85, 0.10, 0.85}, {0.10, 0.85, 0.85},
                           {0.95, 0.55, 0.10}, {0.55, 0.10, 0.95}};
constexpr Rgb kHeadB[8] = {{0.95, 0.95, 0.95}, {0.08, 0.08, 0.08}, {0.15, 0.25, 0.90},
                           {0.80, 0.10, 0.80}, {0.10, 0.60, 0.10}, {0.90, 0.30, 0.10},
                           {0.10, 0.10, 0.60}, {0.90, 0.90, 0.20}};

struct ObjectGeometry {
  int total_w, total_h;
  int body_x, head_x, head_y;
};

ObjectGeometry geometry(const SyntheticImageSpec& s) {
  ObjectGeometry g;
  g.total_w = s.tail_w + s.body_w + s.head_size;
  g.total_h = s.body_h;
  g.body_x = s.tail_w;
  g.head_x = s.tail_w + s.body_w;
  g.head_y = (s.body_h - s.head_size) / 2;
  return g;
}

bool in_tail_ellipse(const SyntheticImageSpec& s, int lx, int ly) {
  const double xc = s.tail_w / 2.0;
  const double yc = s.body_h / 2.0;
  const double rx = s.tail_w / 2.0;
  const double ry = s.tail_h / 2.0;
  const double dx = (lx + 0.5 - xc) / rx;
  const double dy = (ly + 0.5 - yc) / ry;
  return dx * dx + dy * dy <= 1.0;
}

Rgb head_texel(int label, int lx, int ly) {
  const Rgb a = kHeadA[label % 8];
  const Rgb b = kHeadB[label % 8];
  switch (label % 4) {
    case 0: return ((lx / 2 + ly / 2) % 2 == 0) ? a : b;  // checker
    case 1: return (ly / 2 % 2 == 0) ? a : b;             // horizontal stripes
    case 2: return a;                                     // solid
    default: return (lx / 2 % 2 == 0) ? a : b;            // vertical stripes
  }
}

void put_pixel(Tensor& image, int x, int y, const Rgb& c) {
  image(0, y, x) = std::clamp(c.r, 0.0, 1.0);
  image(1, y, x) = std::clamp(c.g, 0.0, 1.0);
  image(2, y, x) = std::clamp(c.b, 0.0, 1.0);
}

// Renders the object with the given body tint; texture noise optional.
void render_parts(const SyntheticImageSpec& s, int label, int ox, int oy, const Rgb& tint,
                  Rng* texture_rng, Tensor& image, std::vector<std::uint8_t>* part_mask) {
  const ObjectGeometry g = geometry(s);
  auto mark = [&](int x, int y, std::uint8_t kind) {
    if (part_mask) (*part_mask)[static_cast<std::size_t>(y) * s.size + x] = kind;
  };
  auto body_texel = [&](Rng* rng) {
    Rgb c{kBodyBase.r + tint.r, kBodyBase.g + tint.g, kBodyBase.b + tint.b};
    if (rng) {
      c.r += rng->uniform(-s.texture_noise, s.texture_noise);
      c.g += rng->uniform(-s.texture_noise, s.texture_noise);
      c.b += rng->uniform(-s.texture_noise, s.texture_noise);
    }
    return c;
  };

  // Tail (ellipse), then body (rectangle), then head (textured square).
  for (int ly = 0; ly < s.body_h; ++ly)
    for (int lx = 0; lx < s.tail_w; ++lx)
      if (in_tail_ellipse(s, lx, ly)) {
        put_pixel(image, ox + lx, oy + ly, body_texel(texture_rng));
        mark(ox + lx, oy + ly, kMaskBody);
      }
  for (int ly = 0; ly < s.body_h; ++ly)
    for (int lx = 0; lx < s.body_w; ++lx) {
      put_pixel(image, ox + g.body_x + lx, oy + ly, body_texel(texture_rng));
      mark(ox + g.body_x + lx, oy + ly, kMaskBody);
    }
  for (int ly = 0; ly < s.head_size; ++ly)
    for (int lx = 0; lx < s.head_size; ++lx) {
      put_pixel(image, ox + g.head_x + lx, oy + g.head_y + ly, head_texel(label, lx, ly));
      mark(ox + g.head_x + lx, oy + g.head_y + ly, kMaskDiscriminative);
    }
}

int count_object_pixels(const SyntheticImageSpec& s, std::uint8_t kind) {
  Tensor scratch({s.channels, s.size, s.size});
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(s.size) * s.size, kMaskBackground);
  render_parts(s, 0, 0, 0, Rgb{0, 0, 0}, nullptr, scratch, &mask);
  int n = 0;
  for (auto v : mask) n += v == kind;
  return n;
}

}  // namespace

void SyntheticImageSpec::validate() const {
  if (size < 16 || channels != 3) throw std::invalid_argument("image spec: need size>=16, 3 channels");
  if (classes < 2) throw std::invalid_argument("image spec: classes must be >= 2");
  if (head_size < 3 || body_w < head_size || body_h < head_size || tail_w < 2 || tail_h < 2)
    throw std::invalid_argument("image spec: degenerate part sizes");
  if (body_h > size || tail_w + body_w + head_size > size)
    throw std::invalid_argument("image spec: object exceeds image bounds");
  const int disc = count_object_pixels(*this, kMaskDiscriminative);
  const int body = count_object_pixels(*this, kMaskBody);
  if (disc * 4 >= disc + body)
    throw std::invalid_argument("image spec: discriminative part must stay under 25% of object");
}

void render_object_clean(const SyntheticImageSpec& spec, int label, int ox, int oy, Tensor& image,
                         std::vector<std::uint8_t>* part_mask) {
  const Rgb dir = kTintTable[label % 8];
  const Rgb tint{spec.body_signal * dir.r, spec.body_signal * dir.g, spec.body_signal * dir.b};
  render_parts(spec, label, ox, oy, tint, nullptr, image, part_mask);
}

Dataset generate_image_dataset(const SyntheticImageSpec& spec, int n_train, int n_val,
                               std::uint64_t seed) {
  spec.validate();
  if (n_train < 1 || n_val < 1)
    throw std::invalid_argument("generate_image_dataset: need n_train, n_val >= 1");

  const ObjectGeometry g = geometry(spec);
  const int base_x = (spec.size - g.total_w) / 2;
  const int base_y = (spec.size - g.total_h) / 2;

  Dataset ds;
  ds.modality = Modality::kImage;
  ds.classes = spec.classes;

  const int total = n_train + n_val;
  ds.images.reserve(static_cast<std::size_t>(total));
  for (int id = 0; id < total; ++id) {
    const bool train = id < n_train;
    const int within = train ? id : id - n_train;
    ImageSample sample;
    sample.id = id;
    sample.train = train;
    sample.label = within % spec.classes;

    Rng rng(derive_seed(seed, seed_tag::kSample, static_cast<std::uint64_t>(id)));

    // Per-sample body tint: class direction plus sample-level jitter. The
    // jitter caps how reliable the body is as a class cue.
    const Rgb dir = kTintTable[sample.label % 8];
    Rgb tint{dir.r, dir.g, dir.b};
    const double jr = rng.normal(), jg = rng.normal(), jb = rng.normal();
    tint.r = spec.body_signal * (tint.r + spec.body_noise * jr);
    tint.g = spec.body_signal * (tint.g + spec.body_noise * jg);
    tint.b = spec.body_signal * (tint.b + spec.body_noise * jb);

    // Placement.
    int ox = base_x, oy = base_y;
    if (spec.jitter > 0) {
      bool placed = false;
      for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
        ox = base_x + rng.uniform_int(2 * spec.jitter + 1) - spec.jitter;
        oy = base_y + rng.uniform_int(2 * spec.jitter + 1) - spec.jitter;
        if (ox >= 0 && oy >= 0 && ox + g.total_w <= spec.size && oy + g.total_h <= spec.size) {
          placed = true;
          break;
        }
      }
      if (!placed)
        throw std::runtime_error("generate_image_dataset: object placement failed after " +
                                 std::to_string(spec.max_retries) + " retries");
    }

    // Background, then the object on top.
    sample.image = Tensor({spec.channels, spec.size, spec.size});
    for (int c = 0; c < spec.channels; ++c)
      for (int y = 0; y < spec.size; ++y)
        for (int x = 0; x < spec.size; ++x)
          sample.image(c, y, x) = std::clamp(
              spec.background_level + rng.uniform(-spec.background_noise, spec.background_noise),
              0.0, 1.0);
    sample.part_mask.assign(static_cast<std::size_t>(spec.size) * spec.size, kMaskBackground);
    render_parts(spec, sample.label, ox, oy, tint, &rng, sample.image, &sample.part_mask);

    BBox box;
    box.x0 = ox;
    box.y0 = oy;
    box.x1 = ox + g.total_w;
    box.y1 = oy + g.total_h;
    sample.gt_boxes.push_back(box);
    ds.images.push_back(std::move(sample));
  }

  json cfg;
  cfg["kind"] = "image";
  cfg["seed"] = seed;
  cfg["n_train"] = n_train;
  cfg["n_val"] = n_val;
  cfg["size"] = spec.size;
  cfg["classes"] = spec.classes;
  cfg["background_level"] = spec.background_level;
  cfg["background_noise"] = spec.background_noise;
  cfg["body_signal"] = spec.body_signal;
  cfg["body_noise"] = spec.body_noise;
  cfg["texture_noise"] = spec.texture_noise;
  cfg["head_size"] = spec.head_size;
  cfg["body_w"] = spec.body_w;
  cfg["body_h"] = spec.body_h;
  cfg["tail_w"] = spec.tail_w;
  cfg["tail_h"] = spec.tail_h;
  cfg["jitter"] = spec.jitter;
  ds.generator_config_json = cfg.dump();
  return ds;
}

// ---------------------------------------------------------------------------
// Sequence generation
// ---------------------------------------------------------------------------

void SyntheticSequenceSpec::validate() const {
  if (length < 20 || dim < 4 * classes)
    throw std::invalid_argument("sequence spec: need length >= 20 and dim >= 4*classes");
  if (classes < 2) throw std::invalid_argument("sequence spec: classes must be >= 2");
  if (min_extent < key_len || max_extent < min_extent || max_extent > length / 2)
    throw std::invalid_argument("sequence spec: bad extent bounds");
  if (key_len < 1) throw std::invalid_argument("sequence spec: key_len must be >= 1");
  if (two_instance_prob < 0.0 || two_instance_prob > 1.0)
    throw std::invalid_argument("sequence spec: two_instance_prob must be in [0,1]");
}

namespace {
std::vector<double> basis_pair(int dim, int first) {
  std::vector<double> v(static_cast<std::size_t>(dim), 0.0);
  const double inv = 1.0 / std::sqrt(2.0);
  v[static_cast<std::size_t>(first)] = inv;
  v[static_cast<std::size_t>(first + 1)] = inv;
  return v;
}
}  // namespace

std::vector<double> sequence_weak_direction(const SyntheticSequenceSpec& spec, int label) {
  return basis_pair(spec.dim, 2 * label);
}

std::vector<double> sequence_key_direction(const SyntheticSequenceSpec& spec, int label) {
  return basis_pair(spec.dim, 2 * spec.classes + 2 * label);
}

Dataset generate_sequence_dataset(const SyntheticSequenceSpec& spec, int n_train, int n_val,
                                  std::uint64_t seed) {
  spec.validate();
  if (n_train < 1 || n_val < 1)
    throw std::invalid_argument("generate_sequence_dataset: need n_train, n_val >= 1");

  Dataset ds;
  ds.modality = Modality::kSequence;
  ds.classes = spec.classes;

  const int total = n_train + n_val;
  for (int id = 0; id < total; ++id) {
    const bool train = id < n_train;
    const int within = train ? id : id - n_train;
    SequenceSample sample;
    sample.id = id;
    sample.train = train;
    sample.label = within % spec.classes;

    Rng rng(derive_seed(seed, seed_tag::kSample, static_cast<std::uint64_t>(id) | (1ULL << 40)));

    const int instances = 1 + (rng.uniform() < spec.two_instance_prob ? 1 : 0);
    std::vector<Interval> extents;
    for (int k = 0; k < instances; ++k) {
      bool placed = false;
      for (int attempt = 0; attempt < spec.max_retries && !placed; ++attempt) {
        const int len = spec.min_extent + rng.uniform_int(spec.max_extent - spec.min_extent + 1);
        const int start = rng.uniform_int(spec.length - len + 1);
        Interval cand{start, start + len, 0.0};
        bool overlaps = false;
        for (const auto& e : extents)
          if (cand.start < e.end + 3 && e.start < cand.end + 3) overlaps = true;
        if (!overlaps) {
          extents.push_back(cand);
          placed = true;
        }
      }
      // A failed second draw just leaves one instance.
    }
    std::sort(extents.begin(), extents.end(),
              [](const Interval& a, const Interval& b) { return a.start < b.start; });

    const auto weak_dir = sequence_weak_direction(spec, sample.label);
    const auto key_dir = sequence_key_direction(spec, sample.label);
    const double weak_amp = spec.weak_signal * (1.0 + spec.weak_noise * rng.normal());

    sample.features = Tensor({spec.length, spec.dim});
    for (int f = 0; f < spec.length; ++f)
      for (int d = 0; d < spec.dim; ++d)
        sample.features(f, d) = spec.background_noise * rng.normal();

    for (const auto& e : extents) {
      const int key_len = std::min(spec.key_len, e.length());
      const int key_start = e.start + rng.uniform_int(e.length() - key_len + 1);
      for (int f = e.start; f < e.end; ++f)
        for (int d = 0; d < spec.dim; ++d)
          sample.features(f, d) += weak_amp * weak_dir[static_cast<std::size_t>(d)];
      for (int f = key_start; f < key_start + key_len; ++f)
        for (int d = 0; d < spec.dim; ++d)
          sample.features(f, d) += spec.key_signal * key_dir[static_cast<std::size_t>(d)];
    }
    sample.gt_intervals = std::move(extents);
    ds.sequences.push_back(std::move(sample));
  }

  json cfg;
  cfg["kind"] = "sequence";
  cfg["seed"] = seed;
  cfg["n_train"] = n_train;
  cfg["n_val"] = n_val;
  cfg["length"] = spec.length;
  cfg["dim"] = spec.dim;
  cfg["classes"] = spec.classes;
  cfg["background_noise"] = spec.background_noise;
  cfg["weak_signal"] = spec.weak_signal;
  cfg["weak_noise"] = spec.weak_noise;
  cfg["key_signal"] = spec.key_signal;
  cfg["key_len"] = spec.key_len;
  cfg["min_extent"] = spec.min_extent;
  cfg["max_extent"] = spec.max_extent;
  cfg["two_instance_prob"] = spec.two_instance_prob;
  ds.generator_config_json = cfg.dump();
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset views + persistence
// ---------------------------------------------------------------------------

std::vector<const ImageSample*> Dataset::train_images() const {
  std::vector<const ImageSample*> v;
  for (const auto& s : images)
    if (s.train) v.push_back(&s);
  return v;
}

std::vector<const ImageSample*> Dataset::val_images() const {
  std::vector<const ImageSample*> v;
  for (const auto& s : images)
    if (!s.train) v.push_back(&s);
  return v;
}

std::vector<const SequenceSample*> Dataset::train_sequences() const {
  std::vector<const SequenceSample*> v;
  for (const auto& s : sequences)
    if (s.train) v.push_back(&s);
  return v;
}

std::vector<const SequenceSample*> Dataset::val_sequences() const {
  std::vector<const SequenceSample*> v;
  for (const auto& s : sequences)
    if (!s.train) v.push_back(&s);
  return v;
}

namespace {
std::string sample_name(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", id);
  return buf;
}
}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "tensors");
  if (ds.modality == Modality::kImage) fs::create_directories(fs::path(dir) / "masks");

  std::ofstream manifest(fs::path(dir) / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("cannot write manifest in " + dir);

  if (ds.modality == Modality::kImage) {
    for (const auto& s : ds.images) {
      const std::string stem = sample_name(s.id);
      const std::string tensor_rel = "tensors/" + stem + ".ten";
      const std::string mask_rel = "masks/" + stem + ".pgm";
      save_tensor(s.image, (fs::path(dir) / tensor_rel).string());
      const int h = s.image.dim(1), w = s.image.dim(2);
      write_pgm(s.part_mask, h, w, (fs::path(dir) / mask_rel).string());
      json rec;
      rec["id"] = s.id;
      rec["label"] = s.label;
      rec["split"] = s.train ? "train" : "val";
      rec["tensor"] = tensor_rel;
      rec["mask"] = mask_rel;
      json boxes = json::array();
      for (const auto& b : s.gt_boxes) boxes.push_back({b.x0, b.y0, b.x1, b.y1});
      rec["boxes"] = boxes;
      manifest << rec.dump() << "\n";
    }
  } else {
    for (const auto& s : ds.sequences) {
      const std::string stem = sample_name(s.id);
      const std::string tensor_rel = "tensors/" + stem + ".ten";
      save_tensor(s.features, (fs::path(dir) / tensor_rel).string());
      json rec;
      rec["id"] = s.id;
      rec["label"] = s.label;
      rec["split"] = s.train ? "train" : "val";
      rec["tensor"] = tensor_rel;
      json ivs = json::array();
      for (const auto& iv : s.gt_intervals) ivs.push_back({iv.start, iv.end});
      rec["intervals"] = ivs;
      manifest << rec.dump() << "\n";
    }
  }
  manifest.close();

  json meta;
  meta["kind"] = ds.modality == Modality::kImage ? "image" : "sequence";
  meta["classes"] = ds.classes;
  meta["generator"] = json::parse(ds.generator_config_json.empty() ? "{}"
                                                                   : ds.generator_config_json);
  write_text_file((fs::path(dir) / "dataset.json").string(), meta.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::exists(root / "dataset.json"))
    throw std::runtime_error("not a dataset directory (missing dataset.json): " + dir);
  const json meta = json::parse(read_text_file((root / "dataset.json").string()));

  Dataset ds;
  ds.modality = meta.at("kind") == "sequence" ? Modality::kSequence : Modality::kImage;
  ds.classes = meta.at("classes").get<int>();
  ds.generator_config_json = meta.at("generator").dump();

  std::ifstream manifest(root / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("missing manifest.jsonl in " + dir);
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    if (ds.modality == Modality::kImage) {
      ImageSample s;
      s.id = rec.at("id").get<int>();
      s.label = rec.at("label").get<int>();
      s.train = rec.at("split") == "train";
      s.image = load_tensor((root / rec.at("tensor").get<std::string>()).string());
      int h = 0, w = 0;
      s.part_mask = read_pgm((root / rec.at("mask").get<std::string>()).string(), &h, &w);
      for (const auto& b : rec.at("boxes"))
        s.gt_boxes.push_back(BBox{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(),
                                  b.at(3).get<int>(), std::nullopt});
      ds.images.push_back(std::move(s));
    } else {
      SequenceSample s;
      s.id = rec.at("id").get<int>();
      s.label = rec.at("label").get<int>();
      s.train = rec.at("split") == "train";
      s.features = load_tensor((root / rec.at("tensor").get<std::string>()).string());
      for (const auto& iv : rec.at("intervals"))
        s.gt_intervals.push_back(Interval{iv.at(0).get<int>(), iv.at(1).get<int>(), 0.0});
      ds.sequences.push_back(std::move(s));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Discriminativity report
// ---------------------------------------------------------------------------

DiscriminativityReport discriminativity_report(const std::vector<const ImageSample*>& samples,
                                               const std::vector<Cam>& cams,
                                               double threshold_fraction) {
  if (samples.size() != cams.size())
    throw std::invalid_argument("discriminativity_report: sample/CAM count mismatch");
  DiscriminativityReport rep;
  double acc_disc = 0.0, acc_body = 0.0, acc_bg = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Cam& cam = cams[i];
    const ImageSample& s = *samples[i];
    double maxv = cam.values[0];
    for (std::int64_t j = 1; j < cam.values.size(); ++j) maxv = std::max(maxv, cam.values[j]);
    if (maxv <= 0.0) {
      ++rep.samples_skipped;
      continue;
    }
    const double cut = threshold_fraction * maxv;
    const int img_h = cam.input_h, img_w = cam.input_w;
    const int cam_h = cam.values.dim(0), cam_w = cam.values.dim(1);
    double mass_disc = 0.0, mass_body = 0.0, mass_bg = 0.0;
    for (int y = 0; y < img_h; ++y) {
      const int cy = std::min(static_cast<int>((static_cast<std::int64_t>(y) * cam_h) / img_h),
                              cam_h - 1);
      for (int x = 0; x < img_w; ++x) {
        const int cx = std::min(static_cast<int>((static_cast<std::int64_t>(x) * cam_w) / img_w),
                                cam_w - 1);
        const double v = cam.values(cy, cx);
        if (v < cut) continue;
        switch (s.part_mask[static_cast<std::size_t>(y) * img_w + x]) {
          case kMaskDiscriminative: mass_disc += v; break;
          case kMaskBody: mass_body += v; break;
          default: mass_bg += v; break;
        }
      }
    }
    const double total = mass_disc + mass_body + mass_bg;
    if (total <= 0.0) {
      ++rep.samples_skipped;
      continue;
    }
    acc_disc += mass_disc / total;
    acc_body += mass_body / total;
    acc_bg += mass_bg / total;
    ++rep.samples_used;
  }
  if (rep.samples_used > 0) {
    rep.frac_discriminative = acc_disc / rep.samples_used;
    rep.frac_body = acc_body / rep.samples_used;
    rep.frac_background = acc_bg / rep.samples_used;
  }
  return rep;
}

}  // namespace camloc
