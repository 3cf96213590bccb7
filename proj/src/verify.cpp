#include "dtram/verify.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dtram/errors.hpp"

namespace dtram {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

ImageGray random_image(int h, int w, Rng& rng) {
  ImageGray img;
  img.pixels.resize(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      img.pixels(r, c) = rng.uniform();
    }
  }
  return img;
}

// Copies accumulated buffer gradients into the Parameter.grad fields so
// finite_difference_check can compare them.
void install_grads(RamParams& params, const RamGrads& buf) {
  auto ps = params.all();
  for (int i = 0; i < kNumParams; ++i) ps[i]->grad = buf.g[i];
}

std::vector<Parameter*> param_vector(RamParams& params) {
  auto ps = params.all();
  return {ps.begin(), ps.end()};
}

}  // namespace

ToyTask make_toy_task(std::uint64_t seed, double sigma, bool dynamic, int max_steps) {
  ModelConfig cfg;
  cfg.glimpse_size = 2;
  cfg.hidden_dim = 8;
  cfg.num_classes = 2;
  cfg.max_steps = max_steps;
  cfg.location_sigma = sigma;
  cfg.dynamic = dynamic;

  Rng rng = Rng::stream(seed, 0x544f59ULL);
  ToyTask toy{cfg, random_image(4, 4, rng), 1, init_params(cfg, seed)};
  // Neutral stop head: stop probabilities near 0.5 exercise every stopping
  // structure instead of concentrating on the longest one.
  toy.params.b_stop.value.setZero();
  return toy;
}

double replay_supervised_loss(const RamParams& params, const ModelConfig& cfg,
                              const ImageGray& image, const std::vector<Location>& locs_fed,
                              int label, bool intermediate_supervision) {
  VectorXd h = VectorXd::Zero(cfg.hidden_dim);
  double loss = 0.0;
  const int T = static_cast<int>(locs_fed.size());
  for (int t = 0; t < T; ++t) {
    const GlimpsePatch patch = extract_glimpse(image, locs_fed[t], cfg.glimpse_size);
    h = core_step(h, patch, locs_fed[t], params);
    if (intermediate_supervision || t == T - 1) {
      loss += cross_entropy_loss(classify(h, params), label);
    }
  }
  return loss;
}

double replay_structure_logprob(const RamParams& params, const ModelConfig& cfg,
                                const ImageGray& image, const Trajectory& traj) {
  VectorXd h = VectorXd::Zero(cfg.hidden_dim);
  double logprob = 0.0;
  const double sigma = cfg.location_sigma;
  for (const StepRecord& rec : traj.steps) {
    const GlimpsePatch patch = extract_glimpse(image, rec.loc_in, cfg.glimpse_size);
    h = core_step(h, patch, rec.loc_in, params);
    if (rec.has_stop_action) {
      logprob += std::log(stop_distribution(h, params)(rec.stop_action));
    }
    if (rec.has_loc_action && sigma > 0.0) {
      const Eigen::Vector2d mean = location_mean(h, params);
      const Eigen::Vector2d d = rec.loc_raw - mean;
      logprob += -0.5 * d.squaredNorm() / (sigma * sigma) -
                 std::log(2.0 * M_PI * sigma * sigma);
    }
  }
  return logprob;
}

double supervised_gradient_fd_error(std::uint64_t seed) {
  ToyTask toy = make_toy_task(seed, 0.2, false, 3);
  Rng rng = Rng::stream(seed, 0x464453ULL);
  const Trajectory traj =
      run_episode(toy.image, toy.params, toy.cfg, ActionMode::kSample, rng);

  std::vector<Location> locs_fed;
  for (const StepRecord& rec : traj.steps) locs_fed.push_back(rec.loc_in);

  RamGrads buf(toy.params);
  buf.set_zero();
  accumulate_episode_backward(traj, toy.params, 0.0, 1.0, toy.label, true, buf);
  install_grads(toy.params, buf);

  auto loss_fn = [&] {
    return replay_supervised_loss(toy.params, toy.cfg, toy.image, locs_fed, toy.label, true);
  };
  return finite_difference_check(loss_fn, param_vector(toy.params));
}

double structure_logprob_fd_error(std::uint64_t seed) {
  ToyTask toy = make_toy_task(seed, 0.2, true, 4);
  Rng rng = Rng::stream(seed, 0x464454ULL);
  const Trajectory traj =
      run_episode(toy.image, toy.params, toy.cfg, ActionMode::kSample, rng);

  RamGrads buf(toy.params);
  buf.set_zero();
  structure_logprob_grads(traj, toy.params, buf);
  install_grads(toy.params, buf);

  auto loss_fn = [&] {
    return replay_structure_logprob(toy.params, toy.cfg, toy.image, traj);
  };
  return finite_difference_check(loss_fn, param_vector(toy.params));
}

UnbiasednessReport check_estimator_unbiasedness(long num_samples, bool with_baseline,
                                                std::uint64_t seed) {
  ToyTask toy = make_toy_task(seed, 0.0, true, 3);
  const double gamma = 0.98;
  const double baseline = with_baseline ? 0.5 : 0.0;

  RamGrads exact(toy.params);
  exact.set_zero();
  exact_expected_gradient(toy.params, toy.image, toy.label, toy.cfg, gamma, true, exact);

  RamGrads mean(toy.params), m2(toy.params), sample(toy.params);
  mean.set_zero();
  m2.set_zero();
  for (long i = 0; i < num_samples; ++i) {
    sample.set_zero();
    Rng rng = Rng::stream(seed ^ 0x554e42ULL, static_cast<std::uint64_t>(i),
                          with_baseline ? 1 : 0);
    const Trajectory traj =
        run_episode(toy.image, toy.params, toy.cfg, ActionMode::kSample, rng);
    const double reward = discounted_reward(traj, toy.label, gamma);
    episode_gradient(traj, toy.label, reward, baseline, toy.params, true, sample);
    for (int k = 0; k < kNumParams; ++k) {
      const MatrixXd delta = sample.g[k] - mean.g[k];
      mean.g[k] += delta / static_cast<double>(i + 1);
      m2.g[k] += delta.cwiseProduct(sample.g[k] - mean.g[k]);
    }
  }

  UnbiasednessReport report;
  report.samples = num_samples;
  report.pass = true;
  const double n = static_cast<double>(num_samples);
  for (int k = 0; k < kNumParams; ++k) {
    for (long j = 0; j < mean.g[k].cols(); ++j) {
      for (long i = 0; i < mean.g[k].rows(); ++i) {
        const double dev = std::abs(mean.g[k](i, j) - exact.g[k](i, j));
        const double se = std::sqrt(std::max(0.0, m2.g[k](i, j)) / ((n - 1.0) * n));
        report.worst_abs_dev = std::max(report.worst_abs_dev, dev);
        if (se > 0.0) {
          report.worst_z = std::max(report.worst_z, dev / se);
        }
        if (dev > 3.0 * se + 1e-12) report.pass = false;
      }
    }
  }
  return report;
}

namespace {

CheckResult check_fd_affine(std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 1);
  const int in = 5, out = 4;
  ModelConfig unused;
  Parameter W("W", out, in), b("b", out);
  for (long i = 0; i < out; ++i) {
    for (long j = 0; j < in; ++j) W.value(i, j) = rng.uniform(-1, 1);
  }
  VectorXd x(in), c(out);
  for (int i = 0; i < in; ++i) x(i) = rng.uniform(-1, 1);
  for (int i = 0; i < out; ++i) c(i) = rng.uniform(-1, 1);

  // loss = c . (W x + b); analytic grads via affine_backward with dy = c
  affine_backward(x, W.value, c, W.grad, b.grad);
  auto loss_fn = [&] { return c.dot(affine_forward(x, W.value, b.value.col(0))); };
  const double err = finite_difference_check(loss_fn, {&W, &b});
  return {"fd_affine", err <= 1e-6, "max rel err " + fmt(err)};
}

CheckResult check_fd_relu(std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 2);
  const int n = 8;
  Parameter x("x", n);
  for (int i = 0; i < n; ++i) {
    double v = rng.uniform(-1, 1);
    if (std::abs(v) < 0.05) v += 0.1;  // keep away from the kink
    x.value(i, 0) = v;
  }
  VectorXd c(n);
  for (int i = 0; i < n; ++i) c(i) = rng.uniform(-1, 1);

  x.grad.col(0) = relu_backward(x.value.col(0), c);
  auto loss_fn = [&] { return c.dot(relu_forward(x.value.col(0))); };
  const double err = finite_difference_check(loss_fn, {&x});
  return {"fd_relu", err <= 1e-6, "max rel err " + fmt(err)};
}

CheckResult check_fd_cross_entropy(std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 3);
  const int k = 6, label = 2;
  Parameter logits("logits", k);
  for (int i = 0; i < k; ++i) logits.value(i, 0) = rng.uniform(-2, 2);

  logits.grad.col(0) =
      cross_entropy_backward_logits(softmax(logits.value.col(0)), label);
  auto loss_fn = [&] {
    return cross_entropy_loss(softmax(logits.value.col(0)), label);
  };
  const double err = finite_difference_check(loss_fn, {&logits});
  return {"fd_cross_entropy", err <= 1e-6, "max rel err " + fmt(err)};
}

CheckResult check_fd_gaussian(std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 4);
  const double sigma = 0.3;
  Parameter mean("mean", 2);
  mean.value(0, 0) = rng.uniform(-0.5, 0.5);
  mean.value(1, 0) = rng.uniform(-0.5, 0.5);
  const Eigen::Vector2d sample(rng.uniform(-1, 1), rng.uniform(-1, 1));

  mean.grad.col(0) = gaussian_logprob_grad(sample, mean.value.col(0), sigma);
  auto loss_fn = [&] {
    const Eigen::Vector2d d = sample - Eigen::Vector2d(mean.value.col(0));
    return -0.5 * d.squaredNorm() / (sigma * sigma) -
           std::log(2.0 * M_PI * sigma * sigma);
  };
  const double err = finite_difference_check(loss_fn, {&mean});
  return {"fd_gaussian_logprob", err <= 1e-6, "max rel err " + fmt(err)};
}

CheckResult check_fd_negative_control(std::uint64_t seed) {
  // A deliberately corrupted gradient must be caught by the checker.
  Rng rng = Rng::stream(seed, 5);
  const int in = 4, out = 3;
  Parameter W("W", out, in), b("b", out);
  for (long i = 0; i < out; ++i) {
    for (long j = 0; j < in; ++j) W.value(i, j) = rng.uniform(-1, 1);
  }
  VectorXd x(in), c(out);
  for (int i = 0; i < in; ++i) x(i) = rng.uniform(-1, 1);
  for (int i = 0; i < out; ++i) c(i) = rng.uniform(-1, 1);

  affine_backward(x, W.value, c, W.grad, b.grad);
  W.grad(0, 0) += 0.5;  // inject a wrong gradient
  auto loss_fn = [&] { return c.dot(affine_forward(x, W.value, b.value.col(0))); };
  const double err = finite_difference_check(loss_fn, {&W, &b});
  return {"fd_negative_control", err > 1e-2,
          "checker reported " + fmt(err) + " on a corrupted gradient"};
}

CheckResult check_glimpse_convention() {
  const auto [rc, cc] = location_to_pixel({0.0, 0.0}, 28, 28);
  const auto [r0, c0] = location_to_pixel({-1.0, -1.0}, 28, 28);
  const auto [re, ce] = location_to_pixel({1.0, 0.0}, 28, 28);
  const bool ok = rc == 13.5 && cc == 13.5 && r0 == 0.0 && c0 == 0.0 && re == 27.0 &&
                  ce == 13.5;
  return {"glimpse_center_convention", ok,
          "center=(" + fmt(rc) + "," + fmt(cc) + ") corner=(" + fmt(r0) + "," + fmt(c0) +
              ")"};
}

CheckResult check_glimpse_ramp() {
  ImageGray img;
  img.pixels.resize(28, 28);
  for (int r = 0; r < 28; ++r) {
    for (int c = 0; c < 28; ++c) img.pixels(r, c) = (r * 28.0 + c) / 1000.0;
  }
  const GlimpsePatch patch = extract_glimpse(img, {0.0, 0.0}, 2);
  bool ok = true;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      ok = ok && patch(i, j) == img.pixels(13 + i, 13 + j);
    }
  }
  return {"glimpse_ramp_oracle", ok, "2x2 center crop indexes rows/cols {13,14}"};
}

CheckResult check_glimpse_padding(std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 6);
  ImageGray img = random_image(28, 28, rng);

  const GlimpsePatch corner = extract_glimpse(img, {-1.0, -1.0}, 8);
  bool ok = true;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) ok = ok && corner(i, j) == 0.0;
  }
  // clamping: out-of-range locations behave like their projection
  const GlimpsePatch far = extract_glimpse(img, {-3.0, -9.0}, 8);
  ok = ok && far == corner;
  // translation consistency on an interior window
  const GlimpsePatch a = extract_glimpse(img, {0.0, 0.0}, 4);
  ImageGray shifted;
  shifted.pixels = MatrixXd::Zero(28, 28);
  shifted.pixels.block(2, 0, 26, 28) = img.pixels.block(0, 0, 26, 28);
  const GlimpsePatch b =
      extract_glimpse(shifted, {2.0 * 2.0 / 27.0, 0.0}, 4);
  ok = ok && a == b;
  return {"glimpse_padding_and_clamp", ok, "zero fill, clamping, translation"};
}

CheckResult check_reward_units() {
  Trajectory traj;
  traj.steps.resize(5);
  traj.prediction = 3;
  const double r1 = discounted_reward(traj, 3, 0.99);
  const double r2 = discounted_reward(traj, 4, 0.99);
  const double r3 = discounted_reward(traj, 3, 1.0);
  const bool ok = std::abs(r1 - 0.9509900499) < 1e-10 && r2 == 0.0 && r3 == 1.0;
  return {"reward_closed_forms", ok,
          "0.99^5=" + fmt(r1) + ", incorrect=" + fmt(r2) + ", gamma=1 -> " + fmt(r3)};
}

CheckResult check_checkpoint_roundtrip(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.glimpse_size = 3;
  cfg.hidden_dim = 6;
  cfg.num_classes = 4;
  cfg.max_steps = 2;
  cfg.location_sigma = 0.15;
  cfg.dynamic = true;
  RamParams params = init_params(cfg, seed);

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path();
  const std::string p1 = (dir / "dtram_verify_a.ckpt").string();
  const std::string p2 = (dir / "dtram_verify_b.ckpt").string();

  save_checkpoint(p1, params, cfg);
  Checkpoint loaded = load_checkpoint(p1);
  save_checkpoint(p2, loaded.params, loaded.config);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  bool ok = !s1.empty() && s1 == s2;

  // corruption must be detected
  std::string corrupted = s1;
  corrupted[2] ^= 0x40;  // damage the magic
  {
    std::ofstream out(p2, std::ios::binary);
    out.write(corrupted.data(), static_cast<std::streamsize>(corrupted.size()));
  }
  bool detected = false;
  try {
    load_checkpoint(p2);
  } catch (const DataError&) {
    detected = true;
  }
  fs::remove(p1);
  fs::remove(p2);
  return {"checkpoint_roundtrip", ok && detected,
          ok ? "bit-exact round-trip, corruption detected" : "round-trip mismatch"};
}

}  // namespace

std::vector<CheckResult> verify_all() {
  const std::uint64_t seed = 20240901;
  std::vector<CheckResult> results;
  results.push_back(check_fd_affine(seed));
  results.push_back(check_fd_relu(seed));
  results.push_back(check_fd_cross_entropy(seed));
  results.push_back(check_fd_gaussian(seed));
  {
    const double err = supervised_gradient_fd_error(seed);
    results.push_back(
        {"fd_supervised_full_model", err <= 1e-4, "max rel err " + fmt(err)});
  }
  {
    const double err = structure_logprob_fd_error(seed);
    results.push_back({"fd_structure_logprob", err <= 1e-5, "max rel err " + fmt(err)});
  }
  results.push_back(check_fd_negative_control(seed));
  for (const bool with_baseline : {false, true}) {
    const UnbiasednessReport rep = check_estimator_unbiasedness(10000, with_baseline, seed);
    results.push_back({with_baseline ? "unbiasedness_with_baseline"
                                     : "unbiasedness_no_baseline",
                       rep.pass,
                       "worst dev " + fmt(rep.worst_abs_dev) + " (" + fmt(rep.worst_z) +
                           " se) over " + std::to_string(rep.samples) + " episodes"});
  }
  results.push_back(check_glimpse_convention());
  results.push_back(check_glimpse_ramp());
  results.push_back(check_glimpse_padding(seed));
  results.push_back(check_reward_units());
  results.push_back(check_checkpoint_roundtrip(seed));
  return results;
}

}  // namespace dtram
