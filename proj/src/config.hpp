#pragma once

// Sectioned key=value run configuration. Parsing collects every syntax and
// semantic issue with its line number before reporting, and validation never
// touches model code: a bad file fails before anything is allocated.

#include <cstdint>
#include <string>
#include <vector>

#include "harness.hpp"
#include "orchestrator.hpp"
#include "tasks.hpp"

namespace rmas {

struct VerifyConfig {
  int text_trials = 200;
  int link_trials = 200;
  std::vector<double> entropy_levels = {0.001, 0.01, 0.05};
  std::vector<int> link_widths = {64, 256};
  double delta = 0.01;
  std::uint64_t seed = 7;
};

struct RunConfig {
  BuildConfig system;   // [system]
  TrainPlan plan;       // [train]
  TaskSpec task;        // [task]
  int train_size = 64;
  int test_size = 32;
  std::uint64_t data_seed = 1;
  int decode_budget = 8;
  std::vector<int> train_rounds = {1, 2, 3};
  std::vector<int> infer_rounds = {1, 2, 3};
  std::vector<int> m_values = {0, 2, 4, 8};
  int export_sample = 16;
  std::string out_dir;     // [io]; empty defers to the caller's default
  std::string checkpoint;  // load path for inference workflows
  int workers = 1;
  VerifyConfig verify;  // [verify]
};

// Parses and fully validates a config document. On any problem throws one
// config error whose message carries every issue, one "line N: ..." per row.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::string& path);

}  // namespace rmas
