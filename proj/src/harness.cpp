#include "dtram/harness.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include <json.hpp>

#include "dtram/errors.hpp"
#include "dtram/verify.hpp"

namespace dtram {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr int kValSize = 5000;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void write_metrics_row(std::ostream& out, int epoch, const std::string& split,
                       double loss, double reward, double steps, double accuracy,
                       double wallclock) {
  out << epoch << ',' << split << ',' << std::setprecision(6) << loss << ',' << reward
      << ',' << steps << ',' << accuracy << ',' << std::setprecision(1) << std::fixed
      << wallclock << std::defaultfloat << '\n';
  out.flush();
}

ActionMode parse_rollout(const std::string& rollout) {
  if (rollout == "greedy") return ActionMode::kGreedy;
  if (rollout == "sample") return ActionMode::kSample;
  throw ConfigError("rollout must be 'greedy' or 'sample', got '" + rollout + "'");
}

}  // namespace

LabeledDataset load_split(const std::string& data_dir, const std::string& split) {
  if (split == "test") return load_mnist_split(data_dir, "t10k");
  if (split == "train" || split == "val") {
    LabeledDataset full = load_mnist_split(data_dir, "train");
    if (split == "train") return full;
    if (full.size() <= kValSize) {
      throw DataError("training set too small for the " + std::to_string(kValSize) +
                      "-image validation hold-out");
    }
    return full.subset(full.size() - kValSize, kValSize);
  }
  throw ConfigError("split must be test, train or val, got '" + split + "'");
}

TrainArtifacts run_training(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);

  LabeledDataset full = load_mnist_split(cfg.data_dir, "train");
  if (cfg.val_size >= static_cast<int>(full.size())) {
    throw ConfigError("val_size exceeds the training set");
  }
  const LabeledDataset train = full.subset(0, full.size() - cfg.val_size);
  const LabeledDataset val =
      cfg.val_size > 0 ? full.subset(full.size() - cfg.val_size, cfg.val_size)
                       : LabeledDataset{};

  TrainArtifacts artifacts;
  artifacts.config_echo = cfg.out_dir + "/config.txt";
  artifacts.metrics_csv = cfg.out_dir + "/metrics.csv";
  {
    std::ofstream echo(artifacts.config_echo);
    echo << cfg.to_text();
  }
  std::ofstream metrics(artifacts.metrics_csv);
  metrics << "epoch,split,loss,reward_mean,steps_mean,accuracy,wallclock_s\n";

  const Clock::time_point start = Clock::now();
  const TrainConfig tcfg = cfg.train_config();

  const auto on_epoch = [&](int stage_steps, int epoch, const EpochMetrics& m,
                            const RamParams& params, const ModelConfig& mcfg) {
    write_metrics_row(metrics, epoch + 1, "train", m.loss, m.reward_mean, m.steps_mean,
                      m.accuracy, seconds_since(start));
    if (val.size() > 0) {
      const EvalReport rep = evaluate(val, params, mcfg, ActionMode::kGreedy, 0,
                                      tcfg.threads, tcfg.gamma);
      write_metrics_row(metrics, epoch + 1, "val", rep.mean_loss, rep.mean_reward,
                        rep.avg_steps, 1.0 - rep.error_pct / 100.0,
                        seconds_since(start));
    }
    if (log) {
      *log << "epoch " << epoch + 1 << " (T=" << stage_steps << "): loss " << m.loss
           << ", acc " << m.accuracy << ", steps " << m.steps_mean << "\n";
      log->flush();
    }
  };

  if (cfg.mode == "ram") {
    ModelConfig base = cfg.model_config();
    const auto on_stage = [&](int stage_steps, const RamParams& params,
                              const ModelConfig& mcfg) {
      const std::string path =
          cfg.out_dir + "/ram_T" + std::to_string(stage_steps) + ".ckpt";
      save_checkpoint(path, params, mcfg);
      artifacts.stage_checkpoints.emplace_back(stage_steps, path);
      artifacts.final_checkpoint = path;
    };
    train_ram_curriculum(train, cfg.curriculum(), base, tcfg, on_epoch, on_stage);
  } else {
    const Checkpoint init = load_checkpoint(cfg.init_checkpoint);
    ModelConfig mcfg = init.config;  // geometry comes from the trained weights
    mcfg.max_steps = cfg.max_steps;
    mcfg.location_sigma = cfg.sigma;
    mcfg.dynamic = true;
    const RamParams params = finetune_dtram(init.params, train, mcfg, tcfg, on_epoch);
    const std::string path = cfg.out_dir + "/dtram.ckpt";
    save_checkpoint(path, params, mcfg);
    artifacts.final_checkpoint = path;
  }
  return artifacts;
}

std::string eval_report_json(const std::string& checkpoint, const std::string& data_dir,
                             const std::string& split, const std::string& rollout,
                             std::uint64_t seed, int threads) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const LabeledDataset data = load_split(data_dir, split);
  const EvalReport rep =
      evaluate(data, ck.params, ck.config, parse_rollout(rollout), seed, threads);

  json j;
  j["checkpoint"] = checkpoint;
  j["split"] = split;
  j["rollout"] = rollout;
  j["n"] = rep.n;
  j["error_pct"] = rep.error_pct;
  j["avg_steps"] = rep.avg_steps;
  j["mean_loss"] = rep.mean_loss;
  j["max_steps"] = ck.config.max_steps;
  j["step_histogram"] = rep.step_histogram;  // index t-1 = episodes stopping at t
  return j.dump(2);
}

std::string sweep_csv(const std::string& checkpoint, const std::string& data_dir,
                      const std::string& split, const std::vector<double>& thresholds,
                      int threads) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const LabeledDataset data = load_split(data_dir, split);

  std::ostringstream os;
  os << "tau,avg_steps,accuracy_pct\n";
  for (const double tau : thresholds) {
    const EvalReport rep = evaluate_threshold(data, ck.params, ck.config, tau, threads);
    os << tau << ',' << std::setprecision(10) << rep.avg_steps << ','
       << rep.accuracy_pct() << '\n';
  }
  return os.str();
}

std::string trace_json(const std::string& checkpoint, const std::string& data_dir,
                       const std::string& split, long index) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const LabeledDataset data = load_split(data_dir, split);
  if (index < 0 || index >= static_cast<long>(data.size())) {
    throw ConfigError("index " + std::to_string(index) + " out of range [0, " +
                      std::to_string(data.size()) + ")");
  }

  Rng rng(0);
  const Trajectory traj =
      run_episode(data.images[index], ck.params, ck.config, ActionMode::kGreedy, rng);

  json steps = json::array();
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const StepRecord& rec = traj.steps[t];
    const auto [row, col] = location_to_pixel(rec.loc_in, data.images[index].height(),
                                              data.images[index].width());
    // top-3 classes by probability
    std::vector<int> order(rec.class_probs.size());
    std::iota(order.begin(), order.end(), 0);
    const int top_k = std::min<int>(3, static_cast<int>(order.size()));
    std::partial_sort(order.begin(), order.begin() + top_k, order.end(),
                      [&](int a, int b) { return rec.class_probs(a) > rec.class_probs(b); });
    json top3 = json::array();
    for (int k = 0; k < top_k; ++k) {
      top3.push_back({{"class", order[k]}, {"prob", rec.class_probs(order[k])}});
    }
    steps.push_back({{"step", t + 1},
                     {"loc", {{"y", rec.loc_in.y}, {"x", rec.loc_in.x}}},
                     {"pixel", {{"row", row}, {"col", col}}},
                     {"stop_prob", rec.stop_prob()},
                     {"top3", top3}});
  }

  json j;
  j["checkpoint"] = checkpoint;
  j["split"] = split;
  j["index"] = index;
  j["label"] = data.labels[index];
  j["prediction"] = traj.prediction;
  j["num_steps"] = traj.stop_time();
  j["steps"] = steps;
  return j.dump(2);
}

int run_verify(std::ostream& out) {
  const std::vector<CheckResult> results = verify_all();
  int failures = 0;
  for (const CheckResult& r : results) {
    out << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  (" << r.detail << ")\n";
    if (!r.pass) ++failures;
  }
  out << (failures == 0 ? "all checks passed" : std::to_string(failures) + " check(s) failed")
      << "\n";
  return failures;
}

}  // namespace dtram
