#include "dtram/run_config.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "dtram/errors.hpp"

namespace dtram {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("invalid integer for '" + key + "': '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("invalid number for '" + key + "': '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("invalid boolean for '" + key + "': '" + v + "' (use 0/1/true/false)");
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("invalid integer for '" + key + "': '" + v + "'");
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key=value, got '" + line + "'");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "mode") mode = value;
  else if (key == "data_dir") data_dir = value;
  else if (key == "out_dir") out_dir = value;
  else if (key == "seed") seed = parse_u64(key, value);
  else if (key == "threads") threads = parse_int(key, value);
  else if (key == "glimpse_size") glimpse_size = parse_int(key, value);
  else if (key == "hidden_dim") hidden_dim = parse_int(key, value);
  else if (key == "num_classes") num_classes = parse_int(key, value);
  else if (key == "sigma") sigma = parse_double(key, value);
  else if (key == "max_steps") max_steps = parse_int(key, value);
  else if (key == "lr") lr = parse_double(key, value);
  else if (key == "lr_decay") lr_decay = parse_double(key, value);
  else if (key == "lr_decay_every") lr_decay_every = parse_int(key, value);
  else if (key == "momentum") momentum = parse_double(key, value);
  else if (key == "batch_size") batch_size = parse_int(key, value);
  else if (key == "gamma") gamma = parse_double(key, value);
  else if (key == "samples_per_image") samples_per_image = parse_int(key, value);
  else if (key == "reinforce_scale") reinforce_scale = parse_double(key, value);
  else if (key == "grad_clip") grad_clip = parse_double(key, value);
  else if (key == "epochs") epochs = parse_int(key, value);
  else if (key == "baseline") baseline = parse_bool(key, value);
  else if (key == "intermediate_supervision") intermediate_supervision = parse_bool(key, value);
  else if (key == "schedule") schedule = value;
  else if (key == "init_checkpoint") init_checkpoint = value;
  else if (key == "val_size") val_size = parse_int(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "mode=" << mode << "\n"
     << "data_dir=" << data_dir << "\n"
     << "out_dir=" << out_dir << "\n"
     << "seed=" << seed << "\n"
     << "threads=" << threads << "\n"
     << "glimpse_size=" << glimpse_size << "\n"
     << "hidden_dim=" << hidden_dim << "\n"
     << "num_classes=" << num_classes << "\n"
     << "sigma=" << format_double(sigma) << "\n"
     << "max_steps=" << max_steps << "\n"
     << "lr=" << format_double(lr) << "\n"
     << "lr_decay=" << format_double(lr_decay) << "\n"
     << "lr_decay_every=" << lr_decay_every << "\n"
     << "momentum=" << format_double(momentum) << "\n"
     << "batch_size=" << batch_size << "\n"
     << "gamma=" << format_double(gamma) << "\n"
     << "samples_per_image=" << samples_per_image << "\n"
     << "reinforce_scale=" << format_double(reinforce_scale) << "\n"
     << "grad_clip=" << format_double(grad_clip) << "\n"
     << "epochs=" << epochs << "\n"
     << "baseline=" << (baseline ? 1 : 0) << "\n"
     << "intermediate_supervision=" << (intermediate_supervision ? 1 : 0) << "\n"
     << "schedule=" << schedule << "\n"
     << "init_checkpoint=" << init_checkpoint << "\n"
     << "val_size=" << val_size << "\n";
  return os.str();
}

ModelConfig RunConfig::model_config() const {
  ModelConfig cfg;
  cfg.glimpse_size = glimpse_size;
  cfg.hidden_dim = hidden_dim;
  cfg.num_classes = num_classes;
  cfg.max_steps = max_steps;
  cfg.location_sigma = sigma;
  cfg.dynamic = mode == "dtram";
  return cfg;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig cfg;
  cfg.lr = lr;
  cfg.lr_decay = lr_decay;
  cfg.lr_decay_every = lr_decay_every;
  cfg.momentum = momentum;
  cfg.batch_size = batch_size;
  cfg.gamma = gamma;
  cfg.samples_per_image = samples_per_image;
  cfg.reinforce_scale = reinforce_scale;
  cfg.grad_clip = grad_clip;
  cfg.epochs = epochs;
  cfg.baseline_enabled = baseline;
  cfg.intermediate_supervision = intermediate_supervision;
  cfg.seed = seed;
  cfg.threads = threads;
  return cfg;
}

CurriculumSchedule RunConfig::curriculum() const {
  CurriculumSchedule stages;
  std::istringstream is(schedule);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("schedule entries are T:epochs, got '" + item + "'");
    }
    stages.push_back({parse_int("schedule", trim(item.substr(0, colon))),
                      parse_int("schedule", trim(item.substr(colon + 1)))});
  }
  if (stages.empty()) throw ConfigError("schedule is empty");
  return stages;
}

void RunConfig::validate() const {
  if (mode != "ram" && mode != "dtram") {
    throw ConfigError("mode must be 'ram' or 'dtram', got '" + mode + "'");
  }
  if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0 for training runs");
  if (val_size < 0) throw ConfigError("val_size must be >= 0");
  model_config().validate();
  train_config().validate();
  if (mode == "ram") {
    curriculum();
    if (!init_checkpoint.empty()) {
      throw ConfigError("init_checkpoint is only used in dtram mode");
    }
  } else if (init_checkpoint.empty()) {
    throw ConfigError("dtram mode requires init_checkpoint (a trained ram checkpoint)");
  }
}

}  // namespace dtram
