#include <CLI11.hpp>

#include "camloc/cli.hpp"

namespace camloc::cli {

namespace {

void add_common(CLI::App* cmd, CommonArgs& args, bool with_config = true) {
  if (with_config) cmd->add_option("--config,-c", args.config_path, "JSON config file");
  cmd->add_option("--out,-o", args.out_dir, "output directory");
  std::function<void(std::uint64_t)> setter = [&args](std::uint64_t v) {
    args.seed_override = v;
  };
  cmd->add_option_function<std::uint64_t>("--seed", setter, "seed override");
  cmd->add_flag("--force", args.force, "overwrite existing outputs");
  cmd->add_flag("-v,--verbose", [&args](std::int64_t n) { args.verbosity = static_cast<int>(n); },
               "verbose output");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Weakly-supervised localization via random patch hiding"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(cmd_gen, gen);
  cmd_gen->add_option("--kind", gen.kind, "image | sequence");
  cmd_gen->add_option("--n-train", gen.n_train, "training samples");
  cmd_gen->add_option("--n-val", gen.n_val, "validation samples");

  TrainArgs train;
  auto* cmd_tr = app.add_subcommand("train", "train a model");
  add_common(cmd_tr, train);
  cmd_tr->add_option("--data", train.dataset, "dataset directory");

  EvalArgs eval;
  auto* cmd_ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(cmd_ev, eval);
  cmd_ev->add_option("--checkpoint", eval.checkpoint, "model checkpoint")->required();
  cmd_ev->add_option("--data", eval.dataset, "dataset directory");
  std::function<void(double)> thr = [&eval](double v) { eval.threshold = v; };
  cmd_ev->add_option_function<double>("--threshold", thr, "CAM threshold fraction");

  SuiteArgs suite;
  auto* cmd_su = app.add_subcommand("suite", "run the ablation suite");
  add_common(cmd_su, suite);
  cmd_su->add_option("--data", suite.dataset, "dataset directory");
  cmd_su->add_option("--jobs,-j", suite.jobs, "parallel runs");
  cmd_su->add_flag("--quick", suite.quick, "reduced epochs");

  AnalyzeArgs analyze;
  auto* cmd_an = app.add_subcommand("analyze", "activation distribution analysis");
  add_common(cmd_an, analyze);
  cmd_an->add_option("--data", analyze.dataset, "dataset directory");
  cmd_an->add_option("--dump-mask", analyze.dump_mask, "write an example hide mask PGM");

  VisualizeArgs viz;
  auto* cmd_vi = app.add_subcommand("visualize", "export CAM heatmaps and box overlays");
  add_common(cmd_vi, viz, /*with_config=*/false);
  cmd_vi->add_option("--checkpoint", viz.checkpoint, "model checkpoint")->required();
  cmd_vi->add_option("--data", viz.dataset, "dataset directory");
  cmd_vi->add_option("--ids", viz.ids, "sample ids")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  if (cmd_gen->parsed()) return cmd_gen_data(gen);
  if (cmd_tr->parsed()) return cmd_train(train);
  if (cmd_ev->parsed()) return cmd_eval(eval);
  if (cmd_su->parsed()) return cmd_suite(suite);
  if (cmd_an->parsed()) return cmd_analyze(analyze);
  if (cmd_vi->parsed()) return cmd_visualize(viz);
  return kUsageError;
}

}  // namespace camloc::cli
