#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dtram/glimpse.hpp"
#include "dtram/nn.hpp"
#include "dtram/rng.hpp"

namespace dtram {

struct ModelConfig {
  int glimpse_size = 8;
  int hidden_dim = 256;
  int num_classes = 10;
  int max_steps = 5;
  double location_sigma = 0.25;  // std of the Gaussian location policy, normalized units
  bool dynamic = false;          // learned stopping on/off

  int glimpse_input_dim() const { return glimpse_size * glimpse_size + 2; }
  void validate() const;
};

// Index of each parameter in RamParams::all() and RamGrads::g.
enum ParamIndex {
  kWGlimpse = 0,
  kBGlimpse,
  kWCore,
  kBCore,
  kWLoc,
  kBLoc,
  kWCls,
  kBCls,
  kWStop,
  kBStop,
  kNumParams
};

// The four parameter groups: glimpse encoder + recurrent update (core),
// location head, classification head, stopping head. The stop distribution
// is a 2-way softmax; unit 0 is "continue", unit 1 is "stop".
struct RamParams {
  Parameter w_glimpse, b_glimpse;
  Parameter w_core, b_core;
  Parameter w_loc, b_loc;
  Parameter w_cls, b_cls;
  Parameter w_stop, b_stop;

  explicit RamParams(const ModelConfig& cfg);

  std::array<Parameter*, kNumParams> all();
  std::array<const Parameter*, kNumParams> all() const;
  void zero_grads();
};

// Gradient accumulation buffer mirroring RamParams shapes. Episodes write
// into private buffers so a batch can be evaluated by independent workers
// and merged in a fixed order afterwards.
struct RamGrads {
  std::array<MatrixXd, kNumParams> g;

  explicit RamGrads(const RamParams& params);
  void set_zero();
};

// grad += buf for every parameter, in the fixed RamParams::all() order.
void merge_grads(const RamGrads& buf, RamParams& params);
// grad *= scale for every parameter.
void scale_grads(RamParams& params, double scale);

enum class ActionMode { kSample, kGreedy };

// Everything one time step produces, cached for the backward pass.
struct StepRecord {
  Location loc_in;      // location the glimpse was taken at (l_{t-1})
  VectorXd glimpse_in;  // [patch row-major; loc_in.y; loc_in.x]
  VectorXd g_pre, g_act;
  VectorXd core_in;  // [h_prev; g_act]
  VectorXd h_pre, h;
  VectorXd class_probs;
  Eigen::Vector2d stop_probs = Eigen::Vector2d::Zero();  // {continue, stop}

  bool has_stop_action = false;  // a_t was sampled here (counts toward log P(S))
  int stop_action = 0;           // 0 continue, 1 stop
  bool stop_forced = false;      // episode hit max_steps

  bool has_loc_action = false;  // l_t was sampled here (counts toward log P(S))
  Eigen::Vector2d loc_mean = Eigen::Vector2d::Zero();
  Eigen::Vector2d loc_raw = Eigen::Vector2d::Zero();  // pre-clamp sample
  Location loc_next;                                  // clamped sample (mean when greedy)
  Eigen::Vector2d loc_score = Eigen::Vector2d::Zero();  // (loc_raw - loc_mean)/sigma^2

  double stop_prob() const { return stop_probs(1); }
};

struct Trajectory {
  std::vector<StepRecord> steps;
  bool forced_stop = false;
  int prediction = -1;  // argmax of final class_probs

  int stop_time() const { return static_cast<int>(steps.size()); }
};

// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero except
// the stop-head bias, which starts the stop probability near 0.05.
RamParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// h_t = relu(W_core [h_prev; relu(W_glimpse [patch; l] + b_glimpse)] + b_core).
// When `cache` is given, all intermediate activations are recorded in it.
VectorXd core_step(ConstVecRef h_prev, const GlimpsePatch& patch, const Location& l_prev,
                   const RamParams& params, StepRecord* cache = nullptr);

// softmax(W_cls h + b_cls)
VectorXd classify(ConstVecRef h, const RamParams& params);

// tanh(W_loc h + b_loc); the policy mean always lies in [-1, 1]^2
Eigen::Vector2d location_mean(ConstVecRef h, const RamParams& params);

// softmax(W_stop h + b_stop) over {continue, stop}
Eigen::Vector2d stop_distribution(ConstVecRef h, const RamParams& params);

// Next location. Sample mode draws N(mean, sigma^2 I) and clamps into
// [-1,1]^2; greedy mode returns the mean. The score written to *score_out
// is (sample - mean)/sigma^2 from the pre-clamp sample (zero in greedy
// mode, and zero when sigma == 0, where the policy is deterministic).
Location locate(ConstVecRef h, const RamParams& params, double sigma, ActionMode mode,
                Rng& rng, Eigen::Vector2d* mean_out = nullptr,
                Eigen::Vector2d* raw_out = nullptr, Eigen::Vector2d* score_out = nullptr);

// (a_t, stop_prob). Sample mode draws Bernoulli(stop_prob); greedy mode
// stops iff stop_prob >= 0.5.
std::pair<int, double> stop_decision(ConstVecRef h, const RamParams& params,
                                     ActionMode mode, Rng& rng);

// Rolls one episode. Starts at the image center with h_0 = 0; each step
// crops, updates the state, classifies, then (dynamic only) decides whether
// to stop, and samples the next location only when continuing. Ends on a
// stop action or at max_steps (forced). At the forced step nothing is
// sampled, so the stop time's probability is the product of the earlier
// continue probabilities alone.
Trajectory run_episode(const ImageGray& image, const RamParams& params,
                       const ModelConfig& cfg, ActionMode mode, Rng& rng);

// Greedy rollout that ignores the stopping head and stops at the first step
// whose max class probability reaches tau (else at max_steps).
Trajectory threshold_policy_episode(const ImageGray& image, const RamParams& params,
                                    const ModelConfig& cfg, double tau);

// Flat binary checkpoint: magic "DTRAM1", u32 parameter count, then per
// parameter u32 name length, name bytes, u32 rank, u32 dims, 64-bit
// little-endian values in row-major order; followed by the model config as
// a key=value text block. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const RamParams& params,
                     const ModelConfig& cfg);

struct Checkpoint {
  ModelConfig config;
  RamParams params;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace dtram
