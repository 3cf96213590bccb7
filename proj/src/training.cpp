#include "dtram/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <thread>

#include "dtram/errors.hpp"

namespace dtram {

namespace {

constexpr std::uint64_t kEpisodeSalt = 0x45505349ULL;  // training episodes
constexpr std::uint64_t kEvalSalt = 0x4556414cULL;     // sampled evaluation
constexpr std::uint64_t kStopReinitSalt = 0x53544f50ULL;

int argmax(ConstVecRef v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

// Runs fn(lo, hi) over contiguous chunks of [0, n), possibly on extra
// threads. Chunking is by index, so results stored per index are identical
// for any thread count.
void parallel_chunks(std::size_t n, int threads,
                     const std::function<void(std::size_t, std::size_t)>& fn) {
  const int t = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (t == 1) {
    fn(0, n);
    return;
  }
  const std::size_t chunk = (n + t - 1) / t;
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(t);
  for (int k = 0; k < t; ++k) {
    const std::size_t lo = k * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, k, lo, hi] {
      try {
        fn(lo, hi);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(gamma > 0.0) || gamma > 1.0) {
    throw ConfigError("gamma must be in (0, 1], got " + std::to_string(gamma));
  }
  if (samples_per_image < 1) throw ConfigError("samples_per_image must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(reinforce_scale > 0.0)) throw ConfigError("reinforce_scale must be > 0");
  if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
  if (!(momentum >= 0.0) || momentum >= 1.0) {
    throw ConfigError("momentum must be in [0, 1), got " + std::to_string(momentum));
  }
}

double scheduled_lr(const TrainConfig& cfg, int epoch) {
  if (cfg.lr_decay_every <= 0) return cfg.lr;
  return cfg.lr * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every);
}

double discounted_reward(const Trajectory& traj, int label, double gamma) {
  if (traj.stop_time() < 1) {
    throw std::invalid_argument("discounted_reward: empty trajectory");
  }
  return traj.prediction == label ? std::pow(gamma, traj.stop_time()) : 0.0;
}

double episode_loss(const Trajectory& traj, int label, bool intermediate_supervision) {
  if (!intermediate_supervision) {
    return cross_entropy_loss(traj.steps.back().class_probs, label);
  }
  double loss = 0.0;
  for (const StepRecord& rec : traj.steps) {
    loss += cross_entropy_loss(rec.class_probs, label);
  }
  return loss;
}

void accumulate_episode_backward(const Trajectory& traj, const RamParams& params,
                                 double score_coeff, double supervised_weight, int label,
                                 bool intermediate_supervision, RamGrads& out) {
  const int T = traj.stop_time();
  if (T == 0) return;
  const long hidden = params.w_core.value.rows();
  VectorXd dh = VectorXd::Zero(hidden);

  for (int t = T - 1; t >= 0; --t) {
    const StepRecord& rec = traj.steps[t];

    if (supervised_weight != 0.0 && (intermediate_supervision || t == T - 1)) {
      const VectorXd dlogits =
          supervised_weight * cross_entropy_backward_logits(rec.class_probs, label);
      dh += affine_backward(rec.h, params.w_cls.value, dlogits, out.g[kWCls], out.g[kBCls]);
    }
    if (score_coeff != 0.0 && rec.has_stop_action) {
      // d log softmax(logits)[a] / d logits = onehot(a) - p
      Eigen::Vector2d dlogits = -rec.stop_probs;
      dlogits(rec.stop_action) += 1.0;
      dlogits *= score_coeff;
      dh += affine_backward(rec.h, params.w_stop.value, dlogits, out.g[kWStop],
                            out.g[kBStop]);
    }
    if (score_coeff != 0.0 && rec.has_loc_action) {
      // mean = tanh(u): d logN / du = score * (1 - mean^2)
      const Eigen::Vector2d du =
          score_coeff *
          rec.loc_score.cwiseProduct((1.0 - rec.loc_mean.array().square()).matrix());
      dh += affine_backward(rec.h, params.w_loc.value, du, out.g[kWLoc], out.g[kBLoc]);
    }

    const VectorXd dh_pre = relu_backward(rec.h_pre, dh);
    const VectorXd dcore_in = affine_backward(rec.core_in, params.w_core.value, dh_pre,
                                              out.g[kWCore], out.g[kBCore]);
    const VectorXd dg_pre = relu_backward(rec.g_pre, dcore_in.tail(hidden));
    affine_backward(rec.glimpse_in, params.w_glimpse.value, dg_pre, out.g[kWGlimpse],
                    out.g[kBGlimpse]);
    // The gradient into the patch and the fed-in location stops here: the
    // crop is hard attention, and location learning is carried by the
    // score terms above.
    dh = dcore_in.head(hidden);
  }
}

void structure_logprob_grads(const Trajectory& traj, const RamParams& params,
                             RamGrads& out) {
  accumulate_episode_backward(traj, params, 1.0, 0.0, 0, false, out);
}

void episode_gradient(const Trajectory& traj, int label, double reward, double baseline,
                      const RamParams& params, bool intermediate_supervision,
                      RamGrads& out, double reinforce_scale) {
  accumulate_episode_backward(traj, params, -reinforce_scale * (reward - baseline), 1.0,
                              label, intermediate_supervision, out);
}

void exact_expected_gradient(const RamParams& params, const ImageGray& image, int label,
                             const ModelConfig& cfg, double gamma,
                             bool intermediate_supervision, RamGrads& out) {
  if (cfg.location_sigma != 0.0) {
    throw std::invalid_argument(
        "exact_expected_gradient: requires sigma == 0 (deterministic locations); "
        "enumeration over continuous actions is undefined");
  }
  // Stop decisions do not change earlier computation, so one full-length
  // deterministic rollout carries every stopping structure as a prefix.
  ModelConfig full = cfg;
  full.dynamic = false;
  Rng unused(0);
  const Trajectory roll = run_episode(image, params, full, ActionMode::kGreedy, unused);
  const int T = roll.stop_time();

  double cont = 1.0;  // probability of having continued past steps 1..tau-1
  for (int tau = 1; tau <= T; ++tau) {
    const double p_stop = roll.steps[tau - 1].stop_prob();
    const double prob = tau < T ? cont * p_stop : cont;

    Trajectory prefix;
    prefix.steps.assign(roll.steps.begin(), roll.steps.begin() + tau);
    for (int t = 0; t < tau; ++t) {
      StepRecord& rec = prefix.steps[t];
      rec.has_loc_action = false;
      if (t < tau - 1) {
        rec.has_stop_action = true;
        rec.stop_action = 0;
      } else if (tau < T) {
        rec.has_stop_action = true;
        rec.stop_action = 1;
      } else {
        rec.has_stop_action = false;  // forced stop carries no policy factor
        rec.stop_action = 1;
        rec.stop_forced = true;
      }
    }
    prefix.prediction = argmax(prefix.steps.back().class_probs);
    const double reward =
        prefix.prediction == label ? std::pow(gamma, tau) : 0.0;

    accumulate_episode_backward(prefix, params, prob * (-reward), prob, label,
                                intermediate_supervision, out);
    cont *= 1.0 - p_stop;
  }
}

EpochMetrics train_epoch(const LabeledDataset& data, RamParams& params,
                         const ModelConfig& mcfg, const TrainConfig& tcfg,
                         BaselineState& baseline, int epoch, double lr) {
  mcfg.validate();
  tcfg.validate();
  const int M = tcfg.samples_per_image;
  const auto batches = batch_iterator(data.size(), tcfg.batch_size, tcfg.seed, epoch);

  struct SlotStats {
    double loss = 0.0, reward = 0.0;
    long steps = 0, correct = 0;
  };
  std::vector<RamGrads> buffers(tcfg.batch_size, RamGrads(params));
  std::vector<SlotStats> stats(tcfg.batch_size);

  EpochMetrics totals;
  long episodes_total = 0;
  long steps_total = 0;
  long correct_total = 0;
  double loss_total = 0.0, reward_total = 0.0;

  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    const auto& batch = batches[bi];
    const double b_used = tcfg.baseline_enabled ? baseline.value : 0.0;

    parallel_chunks(batch.size(), tcfg.threads, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t s = lo; s < hi; ++s) {
        const std::size_t idx = batch[s];
        buffers[s].set_zero();
        SlotStats st;
        for (int m = 0; m < M; ++m) {
          Rng rng = Rng::stream(tcfg.seed ^ kEpisodeSalt, static_cast<std::uint64_t>(epoch),
                                idx, static_cast<std::uint64_t>(m));
          const Trajectory traj =
              run_episode(data.images[idx], params, mcfg, ActionMode::kSample, rng);
          const int label = data.labels[idx];
          const double reward = discounted_reward(traj, label, tcfg.gamma);
          episode_gradient(traj, label, reward, b_used, params,
                           tcfg.intermediate_supervision, buffers[s],
                           tcfg.reinforce_scale);
          st.loss += episode_loss(traj, label, tcfg.intermediate_supervision);
          st.reward += reward;
          st.steps += traj.stop_time();
          st.correct += traj.prediction == label ? 1 : 0;
        }
        stats[s] = st;
      }
    });

    double batch_loss = 0.0, batch_reward = 0.0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
      merge_grads(buffers[s], params);
      batch_loss += stats[s].loss;
      batch_reward += stats[s].reward;
      steps_total += stats[s].steps;
      correct_total += stats[s].correct;
    }
    const long batch_episodes = static_cast<long>(batch.size()) * M;
    if (!std::isfinite(batch_loss)) {
      throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(bi));
    }
    loss_total += batch_loss;
    reward_total += batch_reward;
    episodes_total += batch_episodes;

    scale_grads(params, 1.0 / batch_episodes);
    if (tcfg.grad_clip > 0.0) {
      for (Parameter* p : params.all()) {
        const double norm = p->grad.norm();
        if (norm > tcfg.grad_clip) p->grad *= tcfg.grad_clip / norm;
      }
    }
    auto ptrs = params.all();
    sgd_momentum_step(std::vector<Parameter*>(ptrs.begin(), ptrs.end()), lr,
                      tcfg.momentum);
    params.zero_grads();
    baseline.update(batch_reward / batch_episodes);
  }

  totals.loss = loss_total / episodes_total;
  totals.reward_mean = reward_total / episodes_total;
  totals.steps_mean = static_cast<double>(steps_total) / episodes_total;
  totals.accuracy = static_cast<double>(correct_total) / episodes_total;
  return totals;
}

RamParams train_ram_curriculum(const LabeledDataset& train, const CurriculumSchedule& schedule,
                               ModelConfig base, const TrainConfig& tcfg,
                               const EpochCallback& on_epoch, const StageCallback& on_stage) {
  if (schedule.empty()) throw ConfigError("curriculum schedule is empty");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i].num_steps < 1) throw ConfigError("curriculum step counts must be >= 1");
    if (i > 0 && schedule[i].num_steps <= schedule[i - 1].num_steps) {
      throw ConfigError("curriculum step counts must be strictly increasing");
    }
  }

  base.dynamic = false;
  ModelConfig cfg = base;
  cfg.max_steps = schedule.front().num_steps;
  RamParams params = init_params(cfg, tcfg.seed);
  BaselineState baseline;

  int epoch_global = 0;
  for (const CurriculumStage& stage : schedule) {
    cfg.max_steps = stage.num_steps;
    for (int e = 0; e < stage.epochs; ++e, ++epoch_global) {
      const double lr = scheduled_lr(tcfg, e);
      const EpochMetrics metrics =
          train_epoch(train, params, cfg, tcfg, baseline, epoch_global, lr);
      if (on_epoch) on_epoch(stage.num_steps, epoch_global, metrics, params, cfg);
    }
    if (on_stage) on_stage(stage.num_steps, params, cfg);
  }
  return params;
}

RamParams finetune_dtram(const RamParams& ram, const LabeledDataset& train, ModelConfig cfg,
                         const TrainConfig& tcfg, const EpochCallback& on_epoch) {
  cfg.dynamic = true;
  cfg.validate();

  RamParams params = ram;
  {
    const RamParams expected(cfg);
    const auto have = params.all();
    const auto want = expected.all();
    for (int i = 0; i < kNumParams; ++i) {
      if (have[i]->value.rows() != want[i]->value.rows() ||
          have[i]->value.cols() != want[i]->value.cols()) {
        throw ConfigError("finetune_dtram: parameter " + want[i]->name +
                          " does not match the model config");
      }
    }
  }

  // Fresh stopping head (initial stop probability ~0.05); everything else
  // transplants from the trained RAM. Optimizer state starts clean.
  const RamParams fresh = init_params(cfg, splitmix64(tcfg.seed ^ kStopReinitSalt));
  params.w_stop.value = fresh.w_stop.value;
  params.b_stop.value = fresh.b_stop.value;
  for (Parameter* p : params.all()) {
    p->velocity.setZero();
    p->grad.setZero();
  }

  BaselineState baseline;
  for (int e = 0; e < tcfg.epochs; ++e) {
    const double lr = scheduled_lr(tcfg, e);
    const EpochMetrics metrics = train_epoch(train, params, cfg, tcfg, baseline, e, lr);
    if (on_epoch) on_epoch(cfg.max_steps, e, metrics, params, cfg);
  }
  return params;
}

namespace {

EvalReport evaluate_impl(const LabeledDataset& data, const ModelConfig& cfg,
                         int threads, double gamma,
                         const std::function<Trajectory(std::size_t)>& rollout) {
  const std::size_t n = data.size();
  struct Part {
    long correct = 0;
    double loss = 0.0;
    double reward = 0.0;
    std::vector<long> hist;
  };
  const int t = std::max(1, threads);
  std::vector<Part> parts(t);
  for (auto& p : parts) p.hist.assign(cfg.max_steps, 0);

  const std::size_t chunk = (n + t - 1) / t;
  parallel_chunks(n, t, [&](std::size_t lo, std::size_t hi) {
    Part& part = parts[lo / chunk];
    for (std::size_t i = lo; i < hi; ++i) {
      const Trajectory traj = rollout(i);
      part.hist[traj.stop_time() - 1] += 1;
      part.correct += traj.prediction == data.labels[i] ? 1 : 0;
      part.reward += discounted_reward(traj, data.labels[i], gamma);
      part.loss += cross_entropy_loss(traj.steps.back().class_probs, data.labels[i]);
    }
  });

  EvalReport report;
  report.n = static_cast<long>(n);
  report.step_histogram.assign(cfg.max_steps, 0);
  long correct = 0;
  double loss = 0.0, reward = 0.0;
  for (const Part& p : parts) {
    correct += p.correct;
    loss += p.loss;
    reward += p.reward;
    for (int k = 0; k < cfg.max_steps; ++k) report.step_histogram[k] += p.hist[k];
  }
  long weighted = 0;
  for (int k = 0; k < cfg.max_steps; ++k) {
    weighted += static_cast<long>(k + 1) * report.step_histogram[k];
  }
  report.error_pct = 100.0 * (1.0 - static_cast<double>(correct) / n);
  report.avg_steps = static_cast<double>(weighted) / n;
  report.mean_loss = loss / n;
  report.mean_reward = reward / n;
  return report;
}

}  // namespace

EvalReport evaluate(const LabeledDataset& data, const RamParams& params,
                    const ModelConfig& cfg, ActionMode mode, std::uint64_t seed,
                    int threads, double gamma) {
  return evaluate_impl(data, cfg, threads, gamma, [&](std::size_t i) {
    Rng rng = Rng::stream(seed ^ kEvalSalt, i);
    return run_episode(data.images[i], params, cfg, mode, rng);
  });
}

EvalReport evaluate_threshold(const LabeledDataset& data, const RamParams& params,
                              const ModelConfig& cfg, double tau, int threads,
                              double gamma) {
  return evaluate_impl(data, cfg, threads, gamma, [&](std::size_t i) {
    return threshold_policy_episode(data.images[i], params, cfg, tau);
  });
}

}  // namespace dtram
