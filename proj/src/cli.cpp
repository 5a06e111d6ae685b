#include "camloc/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>

#include <json.hpp>

#include "camloc/analyzer.hpp"
#include "camloc/io.hpp"
#include "camloc/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace camloc::cli {

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::uint64_t effective_seed(const CommonArgs& args, std::uint64_t config_seed) {
  if (const char* env = std::getenv("CAMLOC_SEED")) return std::strtoull(env, nullptr, 10);
  if (args.seed_override) return *args.seed_override;
  return config_seed;
}

std::string effective_backend(const std::string& configured) {
  if (const char* env = std::getenv("CAMLOC_BACKEND")) return env;
  return configured;
}

// Artifact commands refuse to overwrite a previous run without --force.
void prepare_out_dir(const CommonArgs& args) {
  if (args.out_dir.empty()) throw UsageError("missing --out directory");
  fs::create_directories(args.out_dir);
  const fs::path marker = fs::path(args.out_dir) / "resolved_config.json";
  if (fs::exists(marker) && !args.force)
    throw UsageError("output directory already contains results: " + args.out_dir +
                     " (pass --force to overwrite)");
}

void write_resolved_config(const std::string& out_dir, const json& resolved) {
  write_text_file((fs::path(out_dir) / "resolved_config.json").string(), resolved.dump(2) + "\n");
}

json load_config_json(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw UsageError("config parse error in " + path + ": " + e.what());
  }
}

int fail_code(const std::exception&) { return kRuntimeError; }

template <typename Fn>
int guarded(int verbosity, Fn&& fn) {
  try {
    return fn();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    (void)verbosity;
    return fail_code(e);
  }
}

// -------------------------------------------------------------------------
// gen-data
// -------------------------------------------------------------------------

SyntheticImageSpec image_spec_from_json(const json& j) {
  SyntheticImageSpec s;
  if (j.contains("size")) s.size = j.at("size").get<int>();
  if (j.contains("classes")) s.classes = j.at("classes").get<int>();
  if (j.contains("background_level")) s.background_level = j.at("background_level").get<double>();
  if (j.contains("background_noise")) s.background_noise = j.at("background_noise").get<double>();
  if (j.contains("body_signal")) s.body_signal = j.at("body_signal").get<double>();
  if (j.contains("body_noise")) s.body_noise = j.at("body_noise").get<double>();
  if (j.contains("texture_noise")) s.texture_noise = j.at("texture_noise").get<double>();
  if (j.contains("head_size")) s.head_size = j.at("head_size").get<int>();
  if (j.contains("body_w")) s.body_w = j.at("body_w").get<int>();
  if (j.contains("body_h")) s.body_h = j.at("body_h").get<int>();
  if (j.contains("tail_w")) s.tail_w = j.at("tail_w").get<int>();
  if (j.contains("tail_h")) s.tail_h = j.at("tail_h").get<int>();
  if (j.contains("jitter")) s.jitter = j.at("jitter").get<int>();
  return s;
}

SyntheticSequenceSpec sequence_spec_from_json(const json& j) {
  SyntheticSequenceSpec s;
  if (j.contains("length")) s.length = j.at("length").get<int>();
  if (j.contains("dim")) s.dim = j.at("dim").get<int>();
  if (j.contains("classes")) s.classes = j.at("classes").get<int>();
  if (j.contains("background_noise")) s.background_noise = j.at("background_noise").get<double>();
  if (j.contains("weak_signal")) s.weak_signal = j.at("weak_signal").get<double>();
  if (j.contains("weak_noise")) s.weak_noise = j.at("weak_noise").get<double>();
  if (j.contains("key_signal")) s.key_signal = j.at("key_signal").get<double>();
  if (j.contains("key_len")) s.key_len = j.at("key_len").get<int>();
  if (j.contains("min_extent")) s.min_extent = j.at("min_extent").get<int>();
  if (j.contains("max_extent")) s.max_extent = j.at("max_extent").get<int>();
  if (j.contains("two_instance_prob")) s.two_instance_prob = j.at("two_instance_prob").get<double>();
  return s;
}

}  // namespace

int cmd_gen_data(const GenDataArgs& args) {
  return guarded(args.verbosity, [&]() -> int {
    json cfg;
    if (!args.config_path.empty()) cfg = load_config_json(args.config_path);

    std::string kind = args.kind;
    if (cfg.contains("kind")) kind = cfg.at("kind").get<std::string>();
    int n_train = args.n_train > 0 ? args.n_train
                                   : (cfg.contains("n_train") ? cfg.at("n_train").get<int>() : 0);
    int n_val =
        args.n_val > 0 ? args.n_val : (cfg.contains("n_val") ? cfg.at("n_val").get<int>() : 0);
    std::uint64_t seed =
        effective_seed(args, cfg.contains("seed") ? cfg.at("seed").get<std::uint64_t>() : 1);
    const json spec_json = cfg.contains("spec") ? cfg.at("spec") : cfg;

    prepare_out_dir(args);
    Dataset ds;
    if (kind == "image") {
      if (n_train <= 0) n_train = 2000;
      if (n_val <= 0) n_val = 500;
      ds = generate_image_dataset(image_spec_from_json(spec_json), n_train, n_val, seed);
    } else if (kind == "sequence") {
      if (n_train <= 0) n_train = 600;
      if (n_val <= 0) n_val = 200;
      ds = generate_sequence_dataset(sequence_spec_from_json(spec_json), n_train, n_val, seed);
    } else {
      throw UsageError("unknown dataset kind '" + kind + "' (expected image or sequence)");
    }
    save_dataset(ds, args.out_dir);
    write_resolved_config(args.out_dir, json::parse(ds.generator_config_json));
    if (args.verbosity > 0)
      std::cout << "generated " << kind << " dataset: " << n_train << " train / " << n_val
                << " val in " << args.out_dir << "\n";
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

namespace {

ExperimentConfig load_experiment(const CommonArgs& args, const std::string& dataset_override,
                                 const Dataset* peeked) {
  ExperimentConfig cfg;
  if (!args.config_path.empty()) {
    cfg = ExperimentConfig::from_json(load_config_json(args.config_path).dump());
  } else if (peeked && peeked->modality == Modality::kSequence) {
    cfg = default_sequence_experiment();
  } else {
    cfg = default_image_experiment();
  }
  if (!dataset_override.empty()) cfg.dataset = dataset_override;
  cfg.seed = effective_seed(args, cfg.seed);
  cfg.backend = effective_backend(cfg.backend);
  return cfg;
}

}  // namespace

int cmd_train(const TrainArgs& args) {
  return guarded(args.verbosity, [&]() -> int {
    std::string dataset_dir = args.dataset;
    if (dataset_dir.empty() && !args.config_path.empty()) {
      const json j = load_config_json(args.config_path);
      if (j.contains("dataset")) dataset_dir = j.at("dataset").get<std::string>();
    }
    if (dataset_dir.empty()) throw UsageError("no dataset given (--dataset or config.dataset)");
    const Dataset data = load_dataset(dataset_dir);

    ExperimentConfig cfg = load_experiment(args, dataset_dir, &data);
    cfg.validate();

    prepare_out_dir(args);
    const TrainResult res = train(cfg, data);

    const fs::path out(args.out_dir);
    save_model_checkpoint((out / "checkpoint.ckpt").string(), cfg, res.net_config, res.params,
                          res.epochs_completed);
    write_text_file((out / "train_log.csv").string(), res.log_csv());
    write_resolved_config(args.out_dir, json::parse(cfg.to_json()));
    if (args.verbosity > 0) {
      std::cout << "trained " << res.epochs_completed << " epochs"
                << (res.diverged ? " (diverged; last finite checkpoint kept)" : "") << "\n";
    }
    if (res.diverged) {
      std::cerr << "warning: training diverged after " << res.epochs_completed << " epochs\n";
      return kRuntimeError;
    }
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const EvalArgs& args) {
  return guarded(args.verbosity, [&]() -> int {
    if (args.checkpoint.empty()) throw UsageError("missing --checkpoint");
    if (!fs::exists(args.checkpoint)) throw UsageError("checkpoint not found: " + args.checkpoint);
    LoadedModel model = load_model_checkpoint(args.checkpoint);
    if (!args.dataset.empty()) model.config.dataset = args.dataset;
    if (args.threshold) model.config.eval.cam_threshold = *args.threshold;
    model.config.backend = effective_backend(model.config.backend);
    if (model.config.dataset.empty()) throw UsageError("checkpoint has no dataset; pass --data");

    const Dataset data = load_dataset(model.config.dataset);
    prepare_out_dir(args);

    const EvaluationResult ev = evaluate(model.net_config, model.params, model.config, data);
    const std::string cfg_text = model.config.to_json();
    const std::string hash = hex_u64(fnv1a64(cfg_text.data(), cfg_text.size()));

    const fs::path out(args.out_dir);
    write_text_file((out / "metrics.json").string(),
                    ev.metrics_json(hash, {model.config.seed}) + "\n");
    write_text_file((out / "records.jsonl").string(), ev.records_jsonl());
    write_resolved_config(args.out_dir, json::parse(cfg_text));
    if (args.verbosity > 0) {
      if (ev.modality == Modality::kImage) {
        std::cout << "gt_known_loc=" << ev.image.gt_known_loc << " top1_loc=" << ev.image.top1_loc
                  << " top1_clas=" << ev.image.top1_clas << "\n";
      } else {
        for (const auto& [th, v] : ev.temporal.map_at)
          std::cout << "mAP@" << th << "=" << v << "\n";
      }
    }
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// suite
// ---------------------------------------------------------------------------

int cmd_suite(const SuiteArgs& args) {
  return guarded(args.verbosity, [&]() -> int {
    SuiteConfig cfg;
    if (!args.config_path.empty()) {
      cfg = SuiteConfig::from_json(load_config_json(args.config_path).dump());
    } else {
      cfg.base = default_image_experiment();
      SuiteVariant baseline;
      baseline.name = "baseline";
      baseline.hide.mode = HideVariant::kNone;
      SuiteVariant has;
      has.name = "has-16";
      has.hide = cfg.base.hide;
      cfg.variants = {baseline, has};
    }
    if (!args.dataset.empty()) cfg.base.dataset = args.dataset;
    if (cfg.base.dataset.empty()) throw UsageError("no dataset given (--dataset or base.dataset)");
    if (args.quick) cfg.quick = true;
    cfg.base.seed = effective_seed(args, cfg.base.seed);
    cfg.base.backend = effective_backend(cfg.base.backend);

    const Dataset data = load_dataset(cfg.base.dataset);
    prepare_out_dir(args);

    const SuiteResult res = run_ablation_suite(cfg, data, std::max(1, args.jobs));

    json rows = json::array();
    for (const auto& r : res.rows) {
      json jr;
      jr["variant"] = r.variant;
      jr["runs"] = r.runs;
      jr["gt_known_loc"] = {{"mean", r.gt_known_mean}, {"sd", r.gt_known_sd}};
      jr["top1_loc"] = {{"mean", r.top1_loc_mean}, {"sd", r.top1_loc_sd}};
      jr["top1_clas"] = {{"mean", r.top1_clas_mean}, {"sd", r.top1_clas_sd}};
      jr["failures"] = r.failures;
      rows.push_back(jr);
    }
    const fs::path out(args.out_dir);
    write_text_file((out / "table.csv").string(), res.table_csv());
    write_text_file((out / "suite_metrics.json").string(), rows.dump(2) + "\n");
    write_resolved_config(args.out_dir, json::parse(cfg.to_json()));
    if (args.verbosity > 0) std::cout << res.table_csv();
    for (const auto& r : res.rows)
      for (const auto& f : r.failures)
        std::cerr << "variant " << r.variant << " failed: " << f << "\n";
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

int cmd_analyze(const AnalyzeArgs& args) {
  return guarded(args.verbosity, [&]() -> int {
    if (args.dataset.empty()) throw UsageError("missing --data");
    const Dataset data = load_dataset(args.dataset);
    if (data.modality != Modality::kImage)
      throw UsageError("analyze expects an image dataset");

    json cfg;
    if (!args.config_path.empty()) cfg = load_config_json(args.config_path);
    const int patch = cfg.value("patch_size", 16);
    const double prob = cfg.value("hide_prob", 0.5);
    const int kernel = cfg.value("kernel", 5);
    const int nfilters = cfg.value("filters", 8);
    const int masks_per_image = cfg.value("masks_per_image", 2);
    const int max_images = cfg.value("images", 64);
    const std::uint64_t seed = effective_seed(args, cfg.value("seed", std::uint64_t{1}));

    const auto train_split = data.train_images();
    if (train_split.empty()) throw UsageError("dataset has no training images");
    std::vector<const Tensor*> images;
    for (const auto* s : train_split) {
      images.push_back(&s->image);
      if (static_cast<int>(images.size()) >= max_images) break;
    }
    const int channels = images[0]->dim(0);

    // Random first-layer filters for the distribution analysis.
    Rng rng(derive_seed(seed, seed_tag::kInit, 0xa11a));
    Tensor filters({nfilters, channels, kernel, kernel});
    const double bound = std::sqrt(6.0 / (static_cast<double>(channels) * kernel * kernel));
    for (std::int64_t i = 0; i < filters.size(); ++i) filters[i] = rng.uniform(-bound, bound);
    Tensor bias({nfilters});
    for (int f = 0; f < nfilters; ++f) bias[f] = rng.uniform(-0.1, 0.1);

    HideSpec spec;
    spec.patch_size = patch;
    spec.hide_prob = prob;
    spec.seed = seed;

    const ExpectationGapReport rep = expectation_gap_report(
        images, filters, bias, spec, masks_per_image, seed, /*stride=*/1, /*pad=*/0);

    // Hidden-case exactness for every filter against the dataset mean.
    const std::vector<double> mu = dataset_mean_images(images);
    double max_residual = 0.0;
    for (int f = 0; f < nfilters; ++f) {
      Tensor one({channels, kernel, kernel});
      for (int c = 0; c < channels; ++c)
        for (int ky = 0; ky < kernel; ++ky)
          for (int kx = 0; kx < kernel; ++kx) one(c, ky, kx) = filters(f, c, ky, kx);
      max_residual = std::max(max_residual, hidden_case_exactness(one, bias[f], mu));
    }

    prepare_out_dir(args);
    const fs::path out(args.out_dir);
    json report = json::parse(rep.to_json());
    report["hidden_case_max_residual"] = max_residual;
    report["dataset_mean"] = mu;
    write_text_file((out / "report.json").string(), report.dump(2) + "\n");
    write_text_file((out / "report.txt").string(),
                    rep.to_text_table() + "hidden-case max residual: " +
                        std::to_string(max_residual) + "\n");
    write_text_file((out / "histogram.csv").string(), rep.histogram_csv());

    if (!args.dump_mask.empty()) {
      const auto [unused, mask] = hide_patches_image(
          *images[0],
          [&] {
            HideSpec s2 = spec;
            s2.fill = mu;
            return s2;
          }(),
          derive_seed(seed, seed_tag::kMask, 0));
      write_mask_pgm(mask, args.dump_mask);
    }

    json resolved;
    resolved["patch_size"] = patch;
    resolved["hide_prob"] = prob;
    resolved["kernel"] = kernel;
    resolved["filters"] = nfilters;
    resolved["masks_per_image"] = masks_per_image;
    resolved["images"] = static_cast<int>(images.size());
    resolved["seed"] = seed;
    write_resolved_config(args.out_dir, resolved);
    if (args.verbosity > 0) std::cout << rep.to_text_table();
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// visualize
// ---------------------------------------------------------------------------

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void draw_box(std::vector<std::uint8_t>& rgb, int h, int w, const BBox& box, std::uint8_t r,
              std::uint8_t g, std::uint8_t b) {
  const int x0 = std::clamp(box.x0, 0, w - 1), x1 = std::clamp(box.x1 - 1, 0, w - 1);
  const int y0 = std::clamp(box.y0, 0, h - 1), y1 = std::clamp(box.y1 - 1, 0, h - 1);
  auto put = [&](int y, int x) {
    const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
  };
  for (int x = x0; x <= x1; ++x) {
    put(y0, x);
    put(y1, x);
  }
  for (int y = y0; y <= y1; ++y) {
    put(y, x0);
    put(y, x1);
  }
}

}  // namespace

int cmd_visualize(const VisualizeArgs& args) {
  return guarded(args.verbosity, [&]() -> int {
    if (args.checkpoint.empty()) throw UsageError("missing --checkpoint");
    if (!fs::exists(args.checkpoint)) throw UsageError("checkpoint not found: " + args.checkpoint);
    LoadedModel model = load_model_checkpoint(args.checkpoint);
    if (!args.dataset.empty()) model.config.dataset = args.dataset;
    if (model.config.dataset.empty()) throw UsageError("checkpoint has no dataset; pass --data");
    model.config.backend = effective_backend(model.config.backend);

    const Dataset data = load_dataset(model.config.dataset);
    if (data.modality != Modality::kImage)
      throw UsageError("visualize expects an image dataset");
    prepare_out_dir(args);

    std::map<int, const ImageSample*> by_id;
    for (const auto& s : data.images) by_id[s.id] = &s;

    const kernels::Backend& backend = kernels::select_backend(model.config.backend);
    ConvNet net(model.net_config, model.params, backend);
    const int m = model.net_config.feature_channels();

    int written = 0, skipped = 0;
    for (int id : args.ids) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) {
        std::cerr << "warning: unknown sample id " << id << ", skipped\n";
        ++skipped;
        continue;
      }
      const ImageSample& s = *it->second;
      const SampleCache fc = net.forward_one(s.image);
      const auto probs = [&] {
        std::vector<double> p = fc.logits;
        const double maxv = *std::max_element(p.begin(), p.end());
        double denom = 0.0;
        for (double& v : p) {
          v = std::exp(v - maxv);
          denom += v;
        }
        for (double& v : p) v /= denom;
        return p;
      }();
      int top1 = 0;
      for (int i = 1; i < static_cast<int>(probs.size()); ++i)
        if (probs[static_cast<std::size_t>(i)] > probs[static_cast<std::size_t>(top1)]) top1 = i;

      const std::span<const double> row{
          net.params().classifier_w.data() + static_cast<std::size_t>(top1) * m,
          static_cast<std::size_t>(m)};
      const Cam cam = compute_cam(fc.features(), row, top1, s.id, model.net_config.in_h,
                                  model.net_config.in_w);
      const auto box = localize_bbox(cam, model.config.eval.cam_threshold);

      const int h = s.image.dim(1), w = s.image.dim(2);
      std::vector<std::uint8_t> rgb(static_cast<std::size_t>(h) * w * 3);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < 3; ++c)
            rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(s.image(c, y, x));
      for (const BBox& gt : s.gt_boxes) draw_box(rgb, h, w, gt, 255, 40, 40);
      if (box) draw_box(rgb, h, w, *box, 40, 255, 40);

      // Min-max normalized heatmap at input resolution (nearest neighbor).
      double lo = cam.values[0], hi = cam.values[0];
      for (std::int64_t i = 1; i < cam.values.size(); ++i) {
        lo = std::min(lo, cam.values[i]);
        hi = std::max(hi, cam.values[i]);
      }
      const double span = hi > lo ? hi - lo : 1.0;
      const int ch = cam.values.dim(0), cw = cam.values.dim(1);
      std::vector<std::uint8_t> heat(static_cast<std::size_t>(h) * w);
      for (int y = 0; y < h; ++y) {
        const int cy = std::min(static_cast<int>((static_cast<std::int64_t>(y) * ch) / h), ch - 1);
        for (int x = 0; x < w; ++x) {
          const int cx = std::min(static_cast<int>((static_cast<std::int64_t>(x) * cw) / w), cw - 1);
          heat[static_cast<std::size_t>(y) * w + x] = to_byte((cam.values(cy, cx) - lo) / span);
        }
      }

      const std::string stem = std::to_string(s.id) + "_" + std::to_string(top1);
      write_ppm(rgb, h, w, (fs::path(args.out_dir) / (stem + "_overlay.ppm")).string());
      write_pgm(heat, h, w, (fs::path(args.out_dir) / (stem + "_cam.pgm")).string());
      ++written;
    }

    json resolved;
    resolved["checkpoint"] = args.checkpoint;
    resolved["dataset"] = model.config.dataset;
    resolved["cam_threshold"] = model.config.eval.cam_threshold;
    resolved["ids"] = args.ids;
    write_resolved_config(args.out_dir, resolved);

    if (!args.ids.empty() && written == 0) {
      std::cerr << "error: all requested sample ids were unknown\n";
      return kRuntimeError;
    }
    if (args.verbosity > 0) std::cout << "wrote " << 2 * written << " files\n";
    return kOk;
  });
}

}  // namespace camloc::cli
