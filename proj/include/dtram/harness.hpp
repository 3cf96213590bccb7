#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "dtram/run_config.hpp"

namespace dtram {

struct TrainArtifacts {
  std::vector<std::pair<int, std::string>> stage_checkpoints;  // (steps, path)
  std::string final_checkpoint;
  std::string metrics_csv;
  std::string config_echo;
};

// Runs a full training job described by the config: curriculum RAM training
// or DT-RAM fine-tuning. Writes per-stage checkpoints, a per-epoch metrics
// CSV and the resolved config into the output directory.
TrainArtifacts run_training(const RunConfig& cfg, std::ostream* log = nullptr);

// Loads the dataset split. "test" and "train" are the official files;
// "val" is the last 5000 training images (the training default hold-out).
LabeledDataset load_split(const std::string& data_dir, const std::string& split);

// JSON evaluation report: error %, average steps and the stop-time
// histogram. avg_steps is the mean of the histogram.
std::string eval_report_json(const std::string& checkpoint, const std::string& data_dir,
                             const std::string& split, const std::string& rollout,
                             std::uint64_t seed, int threads);

// CSV threshold sweep (tau, avg_steps, accuracy_pct), one row per threshold
// in the given order.
std::string sweep_csv(const std::string& checkpoint, const std::string& data_dir,
                      const std::string& split, const std::vector<double>& thresholds,
                      int threads);

// JSON trajectory dump for one image: per-step location (normalized and
// pixel), stop probability and top-3 class probabilities.
std::string trace_json(const std::string& checkpoint, const std::string& data_dir,
                       const std::string& split, long index);

// Runs the built-in verification suites, printing one line per check.
// Returns the number of failures.
int run_verify(std::ostream& out);

}  // namespace dtram
