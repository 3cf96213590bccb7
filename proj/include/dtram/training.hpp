#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dtram/data.hpp"
#include "dtram/model.hpp"

namespace dtram {

struct TrainConfig {
  double lr = 0.01;
  double lr_decay = 0.3;    // multiplied into lr every lr_decay_every epochs
  int lr_decay_every = 30;  // 0 disables the decay
  double momentum = 0.9;
  int batch_size = 20;
  double gamma = 0.99;        // reward discount
  int samples_per_image = 1;  // Monte Carlo samples per image (M)
  int epochs = 25;
  bool baseline_enabled = true;
  bool intermediate_supervision = true;
  // Weight of the score-function term relative to the supervised term in
  // the applied update (a per-head learning rate in disguise). At 1 the
  // policy heads drift into tanh saturation within an epoch on a 256-dim
  // state; the estimator itself always uses 1.
  double reinforce_scale = 0.02;
  // Max per-parameter-group gradient norm applied to the averaged batch
  // gradient before the optimizer step; 0 disables clipping.
  double grad_clip = 0.0;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

// Moving average of batch rewards, subtracted from R inside the REINFORCE
// term. Constant within a batch, so the estimator's expectation is
// unchanged.
struct BaselineState {
  double value = 0.0;
  double rate = 0.9;

  void update(double batch_mean_reward) {
    value = rate * value + (1.0 - rate) * batch_mean_reward;
  }
};

struct CurriculumStage {
  int num_steps;
  int epochs;
};
using CurriculumSchedule = std::vector<CurriculumStage>;

struct EpochMetrics {
  double loss = 0.0;         // mean per-episode training loss
  double reward_mean = 0.0;  // mean discounted reward
  double steps_mean = 0.0;
  double accuracy = 0.0;  // fraction correct over sampled episodes
};

// Learning rate for a (0-based) epoch under the step-decay schedule.
double scheduled_lr(const TrainConfig& cfg, int epoch);

// gamma^T(n) when the final prediction is correct, else 0. The only reward
// is at the terminal step, so longer episodes earn strictly less.
double discounted_reward(const Trajectory& traj, int label, double gamma);

// Training loss of one episode: cross-entropy summed over all executed
// steps under intermediate supervision, or at the final step only.
double episode_loss(const Trajectory& traj, int label, bool intermediate_supervision);

// Shared backward pass. Policy score terms (stop and location chains,
// including their paths into the core) are scaled by score_coeff; the
// per-step cross-entropy terms by supervised_weight. The supervised part
// touches only the classification head and the core; the score part only
// the policy heads and the core.
void accumulate_episode_backward(const Trajectory& traj, const RamParams& params,
                                 double score_coeff, double supervised_weight, int label,
                                 bool intermediate_supervision, RamGrads& out);

// d log P(S) / d theta for the sampled structure, accumulated into out.
void structure_logprob_grads(const Trajectory& traj, const RamParams& params,
                             RamGrads& out);

// One episode's estimator term: -(R - baseline) * dlogP(S)/dtheta plus the
// supervised gradient, accumulated into out. reinforce_scale multiplies the
// score term only (1 gives the plain estimator).
void episode_gradient(const Trajectory& traj, int label, double reward, double baseline,
                      const RamParams& params, bool intermediate_supervision,
                      RamGrads& out, double reinforce_scale = 1.0);

// Exact gradient of sum_S P(S) * (-R_S) + sum_S P(S) * L_S by enumerating
// stop times. Requires sigma == 0 so locations are deterministic and the
// structures differ only in when they stop.
void exact_expected_gradient(const RamParams& params, const ImageGray& image, int label,
                             const ModelConfig& cfg, double gamma,
                             bool intermediate_supervision, RamGrads& out);

// One pass over the shuffled dataset: per image, M sampled episodes
// accumulate into a private buffer; buffers merge in batch order, the
// gradient is averaged over batch*M episodes, and one SGD step runs per
// batch. Identical bits for any thread count.
EpochMetrics train_epoch(const LabeledDataset& data, RamParams& params,
                         const ModelConfig& mcfg, const TrainConfig& tcfg,
                         BaselineState& baseline, int epoch, double lr);

using EpochCallback = std::function<void(int stage_steps, int epoch, const EpochMetrics&,
                                         const RamParams&, const ModelConfig&)>;
using StageCallback =
    std::function<void(int stage_steps, const RamParams&, const ModelConfig&)>;

// Fixed-length RAM trained at increasing step counts; every stage continues
// from the previous stage's parameters (the shapes are step-count
// independent, so the transplant is a plain copy).
RamParams train_ram_curriculum(const LabeledDataset& train, const CurriculumSchedule& schedule,
                               ModelConfig base, const TrainConfig& tcfg,
                               const EpochCallback& on_epoch = nullptr,
                               const StageCallback& on_stage = nullptr);

// DT-RAM fine-tuning: transplants a trained RAM, re-initializes the
// stopping head, and trains with dynamic stopping enabled.
RamParams finetune_dtram(const RamParams& ram, const LabeledDataset& train, ModelConfig cfg,
                         const TrainConfig& tcfg, const EpochCallback& on_epoch = nullptr);

struct EvalReport {
  long n = 0;
  double error_pct = 0.0;
  double avg_steps = 0.0;    // computed from the histogram
  double mean_loss = 0.0;    // mean final-step cross-entropy
  double mean_reward = 0.0;  // mean gamma^T for correct episodes
  std::vector<long> step_histogram;  // index t-1 holds the count of episodes stopping at t

  double accuracy_pct() const { return 100.0 - error_pct; }
};

EvalReport evaluate(const LabeledDataset& data, const RamParams& params,
                    const ModelConfig& cfg, ActionMode mode, std::uint64_t seed = 0,
                    int threads = 1, double gamma = 1.0);

EvalReport evaluate_threshold(const LabeledDataset& data, const RamParams& params,
                              const ModelConfig& cfg, double tau, int threads = 1,
                              double gamma = 1.0);

}  // namespace dtram
