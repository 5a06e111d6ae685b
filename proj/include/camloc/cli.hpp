#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace camloc::cli {

// Exit codes: 0 success, 1 runtime error, 2 usage/config error.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kUsageError = 2;

struct CommonArgs {
  std::string config_path;  // empty = built-in defaults
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  bool force = false;
  int verbosity = 0;
};

struct GenDataArgs : CommonArgs {
  std::string kind = "image";  // image | sequence
  int n_train = -1;            // -1 = config/default
  int n_val = -1;
};

struct TrainArgs : CommonArgs {
  std::string dataset;  // overrides config.dataset when set
};

struct EvalArgs : CommonArgs {
  std::string checkpoint;
  std::string dataset;
  std::optional<double> threshold;
};

struct SuiteArgs : CommonArgs {
  std::string dataset;
  int jobs = 1;
  bool quick = false;
};

struct AnalyzeArgs : CommonArgs {
  std::string dataset;
  std::string dump_mask;  // optional PGM path for an example hide mask
};

struct VisualizeArgs : CommonArgs {
  std::string checkpoint;
  std::string dataset;
  std::vector<int> ids;
};

int cmd_gen_data(const GenDataArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_suite(const SuiteArgs& args);
int cmd_analyze(const AnalyzeArgs& args);
int cmd_visualize(const VisualizeArgs& args);

/// Full argv entry point (CLI11 parsing + dispatch).
int run_cli(int argc, const char* const* argv);

}  // namespace camloc::cli
