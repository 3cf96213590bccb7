#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtram/model.hpp"
#include "dtram/training.hpp"

namespace dtram {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Small self-contained task used by the gradient oracles: 4x4 image, 2x2
// glimpse, 8 hidden units, 2 classes.
struct ToyTask {
  ModelConfig cfg;
  ImageGray image;
  int label = 1;
  RamParams params;
};

ToyTask make_toy_task(std::uint64_t seed, double sigma, bool dynamic, int max_steps);

// Recomputes the supervised loss of an episode with the fed locations and
// the stop time pinned, so it is a deterministic function of the parameter
// values and can be finite-differenced.
double replay_supervised_loss(const RamParams& params, const ModelConfig& cfg,
                              const ImageGray& image, const std::vector<Location>& locs_fed,
                              int label, bool intermediate_supervision);

// log P(S) of a recorded trajectory with the actions held fixed.
double replay_structure_logprob(const RamParams& params, const ModelConfig& cfg,
                                const ImageGray& image, const Trajectory& traj);

// Max relative finite-difference error of the full supervised-model
// gradient on a toy task with pinned actions.
double supervised_gradient_fd_error(std::uint64_t seed);

// Max relative finite-difference error of structure_logprob_grads on a toy
// task with pinned actions.
double structure_logprob_fd_error(std::uint64_t seed);

struct UnbiasednessReport {
  long samples = 0;
  double worst_abs_dev = 0.0;  // worst |mean - exact| over coordinates
  double worst_z = 0.0;        // worst deviation in standard-error units
  bool pass = false;
};

// Compares the mean of sampled episode gradients against the enumeration
// oracle on a toy task with deterministic locations (sigma = 0), requiring
// every coordinate within 3 estimated standard errors. The baseline, when
// enabled, is frozen at 0.5 for the whole estimate.
UnbiasednessReport check_estimator_unbiasedness(long num_samples, bool with_baseline,
                                                std::uint64_t seed);

// The built-in verification suites: finite differences (including a
// negative control), estimator unbiasedness, glimpse conventions, reward
// closed forms, and checkpoint round-trip.
std::vector<CheckResult> verify_all();

}  // namespace dtram
