#include "dtram/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "dtram/errors.hpp"

namespace dtram {

namespace {

constexpr char kCheckpointMagic[6] = {'D', 'T', 'R', 'A', 'M', '1'};

// Initial stop probability; keeps early episodes long so training explores
// full trajectories before learning to stop.
constexpr double kInitStopProb = 0.05;

int argmax(ConstVecRef v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

}  // namespace

void ModelConfig::validate() const {
  if (glimpse_size < 1) throw ConfigError("glimpse_size must be >= 1");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
  if (location_sigma < 0.0) throw ConfigError("sigma must be >= 0");
}

RamParams::RamParams(const ModelConfig& cfg)
    : w_glimpse("w_glimpse", cfg.hidden_dim, cfg.glimpse_input_dim()),
      b_glimpse("b_glimpse", cfg.hidden_dim),
      w_core("w_core", cfg.hidden_dim, 2 * cfg.hidden_dim),
      b_core("b_core", cfg.hidden_dim),
      w_loc("w_loc", 2, cfg.hidden_dim),
      b_loc("b_loc", 2),
      w_cls("w_cls", cfg.num_classes, cfg.hidden_dim),
      b_cls("b_cls", cfg.num_classes),
      w_stop("w_stop", 2, cfg.hidden_dim),
      b_stop("b_stop", 2) {}

std::array<Parameter*, kNumParams> RamParams::all() {
  return {&w_glimpse, &b_glimpse, &w_core, &b_core, &w_loc,
          &b_loc,     &w_cls,     &b_cls,  &w_stop, &b_stop};
}

std::array<const Parameter*, kNumParams> RamParams::all() const {
  return {&w_glimpse, &b_glimpse, &w_core, &b_core, &w_loc,
          &b_loc,     &w_cls,     &b_cls,  &w_stop, &b_stop};
}

void RamParams::zero_grads() {
  for (Parameter* p : all()) p->zero_grad();
}

RamGrads::RamGrads(const RamParams& params) {
  const auto ps = params.all();
  for (int i = 0; i < kNumParams; ++i) {
    g[i] = MatrixXd::Zero(ps[i]->value.rows(), ps[i]->value.cols());
  }
}

void RamGrads::set_zero() {
  for (auto& m : g) m.setZero();
}

void merge_grads(const RamGrads& buf, RamParams& params) {
  const auto ps = params.all();
  for (int i = 0; i < kNumParams; ++i) {
    ps[i]->grad += buf.g[i];
  }
}

void scale_grads(RamParams& params, double scale) {
  for (Parameter* p : params.all()) p->grad *= scale;
}

RamParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RamParams params(cfg);
  Rng rng = Rng::stream(seed, 0x1a2b3c4dULL);
  for (Parameter* p : params.all()) {
    if (p->rank != 2) continue;  // biases stay zero
    const double bound = 1.0 / std::sqrt(static_cast<double>(p->value.cols()));
    for (long i = 0; i < p->value.rows(); ++i) {
      for (long j = 0; j < p->value.cols(); ++j) {
        p->value(i, j) = rng.uniform(-bound, bound);
      }
    }
  }
  params.b_stop.value(1, 0) = std::log(kInitStopProb / (1.0 - kInitStopProb));
  return params;
}

VectorXd core_step(ConstVecRef h_prev, const GlimpsePatch& patch, const Location& l_prev,
                   const RamParams& params, StepRecord* cache) {
  const long g = patch.rows();
  VectorXd glimpse_in(g * g + 2);
  glimpse_in.head(g * g) = patch.transpose().reshaped();  // row-major flatten
  glimpse_in(g * g) = l_prev.y;
  glimpse_in(g * g + 1) = l_prev.x;

  VectorXd g_pre = affine_forward(glimpse_in, params.w_glimpse.value, params.b_glimpse.value.col(0));
  VectorXd g_act = relu_forward(g_pre);

  VectorXd core_in(h_prev.size() + g_act.size());
  core_in << h_prev, g_act;
  VectorXd h_pre = affine_forward(core_in, params.w_core.value, params.b_core.value.col(0));
  VectorXd h = relu_forward(h_pre);

  if (cache) {
    cache->loc_in = l_prev;
    cache->glimpse_in = std::move(glimpse_in);
    cache->g_pre = std::move(g_pre);
    cache->g_act = std::move(g_act);
    cache->core_in = std::move(core_in);
    cache->h_pre = std::move(h_pre);
    cache->h = h;
  }
  return h;
}

VectorXd classify(ConstVecRef h, const RamParams& params) {
  return softmax(affine_forward(h, params.w_cls.value, params.b_cls.value.col(0)));
}

Eigen::Vector2d location_mean(ConstVecRef h, const RamParams& params) {
  VectorXd u = affine_forward(h, params.w_loc.value, params.b_loc.value.col(0));
  return Eigen::Vector2d(std::tanh(u(0)), std::tanh(u(1)));
}

Eigen::Vector2d stop_distribution(ConstVecRef h, const RamParams& params) {
  return softmax(affine_forward(h, params.w_stop.value, params.b_stop.value.col(0)));
}

Location locate(ConstVecRef h, const RamParams& params, double sigma, ActionMode mode,
                Rng& rng, Eigen::Vector2d* mean_out, Eigen::Vector2d* raw_out,
                Eigen::Vector2d* score_out) {
  const Eigen::Vector2d mean = location_mean(h, params);
  Eigen::Vector2d raw = mean;
  Eigen::Vector2d score = Eigen::Vector2d::Zero();
  if (mode == ActionMode::kSample && sigma > 0.0) {
    raw(0) = mean(0) + sigma * rng.normal();
    raw(1) = mean(1) + sigma * rng.normal();
    score = gaussian_logprob_grad(raw, mean, sigma);
  }
  if (mean_out) *mean_out = mean;
  if (raw_out) *raw_out = raw;
  if (score_out) *score_out = score;
  return Location{raw(0), raw(1)}.clamped();
}

std::pair<int, double> stop_decision(ConstVecRef h, const RamParams& params,
                                     ActionMode mode, Rng& rng) {
  const double p = stop_distribution(h, params)(1);
  int action;
  if (mode == ActionMode::kSample) {
    action = rng.uniform() < p ? 1 : 0;
  } else {
    action = p >= 0.5 ? 1 : 0;
  }
  return {action, p};
}

Trajectory run_episode(const ImageGray& image, const RamParams& params,
                       const ModelConfig& cfg, ActionMode mode, Rng& rng) {
  Trajectory traj;
  traj.steps.reserve(cfg.max_steps);
  VectorXd h = VectorXd::Zero(cfg.hidden_dim);
  Location l = {0.0, 0.0};  // first glimpse at the image center

  for (int t = 1; t <= cfg.max_steps; ++t) {
    StepRecord rec;
    const GlimpsePatch patch = extract_glimpse(image, l, cfg.glimpse_size);
    h = core_step(h, patch, l, params, &rec);
    rec.class_probs = classify(h, params);
    rec.stop_probs = stop_distribution(h, params);

    bool stop;
    if (cfg.dynamic) {
      if (t == cfg.max_steps) {
        // Forced stop: no action is sampled, so this step contributes no
        // stop-policy factor to P(S).
        rec.stop_action = 1;
        rec.stop_forced = true;
        stop = true;
      } else {
        rec.stop_action = mode == ActionMode::kSample
                              ? (rng.uniform() < rec.stop_prob() ? 1 : 0)
                              : (rec.stop_prob() >= 0.5 ? 1 : 0);
        rec.has_stop_action = mode == ActionMode::kSample;
        stop = rec.stop_action == 1;
      }
    } else {
      stop = t == cfg.max_steps;
    }

    if (!stop) {
      rec.loc_next = locate(h, params, cfg.location_sigma, mode, rng, &rec.loc_mean,
                            &rec.loc_raw, &rec.loc_score);
      rec.has_loc_action = mode == ActionMode::kSample;
      l = rec.loc_next;
    } else {
      traj.forced_stop = cfg.dynamic && rec.stop_forced;
    }

    traj.steps.push_back(std::move(rec));
    if (stop) break;
  }
  traj.prediction = argmax(traj.steps.back().class_probs);
  return traj;
}

Trajectory threshold_policy_episode(const ImageGray& image, const RamParams& params,
                                    const ModelConfig& cfg, double tau) {
  Trajectory traj;
  traj.steps.reserve(cfg.max_steps);
  VectorXd h = VectorXd::Zero(cfg.hidden_dim);
  Location l = {0.0, 0.0};

  for (int t = 1; t <= cfg.max_steps; ++t) {
    StepRecord rec;
    const GlimpsePatch patch = extract_glimpse(image, l, cfg.glimpse_size);
    h = core_step(h, patch, l, params, &rec);
    rec.class_probs = classify(h, params);
    rec.stop_probs = stop_distribution(h, params);

    const bool confident = rec.class_probs.maxCoeff() >= tau;
    const bool stop = confident || t == cfg.max_steps;
    if (!stop) {
      Rng unused(0);
      rec.loc_next = locate(h, params, cfg.location_sigma, ActionMode::kGreedy, unused,
                            &rec.loc_mean);
      l = rec.loc_next;
    } else {
      traj.forced_stop = !confident;
    }
    traj.steps.push_back(std::move(rec));
    if (stop) break;
  }
  traj.prediction = argmax(traj.steps.back().class_probs);
  return traj;
}

// --- checkpoint serialization ---

namespace {

void write_u32_le(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError(path + ": truncated checkpoint");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

void write_f64_le(std::ostream& out, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64_le(std::istream& in, const std::string& path) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw DataError(path + ": truncated checkpoint");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string config_text(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "glimpse_size=" << cfg.glimpse_size << "\n"
     << "hidden_dim=" << cfg.hidden_dim << "\n"
     << "num_classes=" << cfg.num_classes << "\n"
     << "max_steps=" << cfg.max_steps << "\n"
     << "sigma=" << format_double(cfg.location_sigma) << "\n"
     << "dynamic=" << (cfg.dynamic ? 1 : 0) << "\n";
  return os.str();
}

ModelConfig parse_config_text(const std::string& text, const std::string& path) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError(path + ": malformed config line '" + line + "'");
    }
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "glimpse_size") cfg.glimpse_size = std::stoi(val);
    else if (key == "hidden_dim") cfg.hidden_dim = std::stoi(val);
    else if (key == "num_classes") cfg.num_classes = std::stoi(val);
    else if (key == "max_steps") cfg.max_steps = std::stoi(val);
    else if (key == "sigma") cfg.location_sigma = std::stod(val);
    else if (key == "dynamic") cfg.dynamic = std::stoi(val) != 0;
    else throw DataError(path + ": unknown config key '" + key + "'");
  }
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const RamParams& params,
                     const ModelConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open file for writing");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const auto ps = params.all();
  write_u32_le(out, static_cast<std::uint32_t>(ps.size()));
  for (const Parameter* p : ps) {
    write_u32_le(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_u32_le(out, static_cast<std::uint32_t>(p->rank));
    write_u32_le(out, static_cast<std::uint32_t>(p->value.rows()));
    if (p->rank == 2) write_u32_le(out, static_cast<std::uint32_t>(p->value.cols()));
    for (long i = 0; i < p->value.rows(); ++i) {
      for (long j = 0; j < p->value.cols(); ++j) {
        write_f64_le(out, p->value(i, j));
      }
    }
  }
  const std::string text = config_text(cfg);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError(path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open checkpoint");
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, kCheckpointMagic, 6) != 0) {
    throw DataError(path + ": not a DTRAM1 checkpoint");
  }

  struct Entry {
    int rank;
    std::uint32_t rows, cols;
    MatrixXd value;
  };
  std::map<std::string, Entry> entries;
  const std::uint32_t count = read_u32_le(in, path);
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t name_len = read_u32_le(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw DataError(path + ": truncated checkpoint");
    const std::uint32_t rank = read_u32_le(in, path);
    if (rank != 1 && rank != 2) {
      throw DataError(path + ": parameter '" + name + "' has unsupported rank " +
                      std::to_string(rank));
    }
    const std::uint32_t rows = read_u32_le(in, path);
    const std::uint32_t cols = rank == 2 ? read_u32_le(in, path) : 1;
    Entry e{static_cast<int>(rank), rows, cols, MatrixXd(rows, cols)};
    for (std::uint32_t i = 0; i < rows; ++i) {
      for (std::uint32_t j = 0; j < cols; ++j) {
        e.value(i, j) = read_f64_le(in, path);
      }
    }
    entries.emplace(std::move(name), std::move(e));
  }

  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const ModelConfig cfg = parse_config_text(text, path);
  cfg.validate();

  Checkpoint ckpt{cfg, RamParams(cfg)};
  for (Parameter* p : ckpt.params.all()) {
    const auto it = entries.find(p->name);
    if (it == entries.end()) {
      throw DataError(path + ": missing parameter '" + p->name + "'");
    }
    const Entry& e = it->second;
    if (e.rank != p->rank || e.value.rows() != p->value.rows() ||
        e.value.cols() != p->value.cols()) {
      throw DataError(path + ": parameter '" + p->name + "' is " +
                      std::to_string(e.value.rows()) + "x" + std::to_string(e.value.cols()) +
                      " but the config implies " + std::to_string(p->value.rows()) + "x" +
                      std::to_string(p->value.cols()));
    }
    p->value = e.value;
    entries.erase(it);
  }
  if (!entries.empty()) {
    throw DataError(path + ": unexpected parameter '" + entries.begin()->first + "'");
  }
  return ckpt;
}

}  // namespace dtram
