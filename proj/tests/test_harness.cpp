#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dtram/errors.hpp"
#include "dtram/harness.hpp"

using namespace dtram;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempTree {
  fs::path root;
  TempTree() : root(fs::temp_directory_path() / "dtram_harness_test") {
    fs::remove_all(root);
    fs::create_directories(root / "data");
    fs::create_directories(root / "out");
  }
  ~TempTree() { fs::remove_all(root); }
  std::string data_dir() const { return (root / "data").string(); }
  std::string out_dir() const { return (root / "out").string(); }
  std::string file(const std::string& name) const { return (root / name).string(); }
};

// Writes a small fake MNIST pair (28x28, labels 0/1) under dir.
void write_fixture_dataset(const std::string& dir, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ImageGray> images;
  std::vector<int> labels;
  for (int k = 0; k < n; ++k) {
    const int label = k % 2;
    ImageGray img;
    img.pixels = Eigen::MatrixXd::Zero(28, 28);
    for (int r = 10; r < 18; ++r) {
      for (int c = 10; c < 18; ++c) {
        img.pixels(r, c) = label == 0 ? 0.9 : 0.1;
      }
    }
    img.pixels(0, 0) = rng.uniform();
    images.push_back(img);
    labels.push_back(label);
  }
  save_idx_images(dir + "/train-images-idx3-ubyte", images);
  save_idx_labels(dir + "/train-labels-idx1-ubyte", labels);
  save_idx_images(dir + "/t10k-images-idx3-ubyte", images);
  save_idx_labels(dir + "/t10k-labels-idx1-ubyte", labels);
}

}  // namespace

TEST_CASE("RunConfig: file parsing, comments, overrides, unknown keys") {
  TempTree tmp;
  {
    std::ofstream out(tmp.file("cfg"));
    out << "# a comment\n"
        << "mode = ram\n"
        << "lr = 0.02   # trailing comment\n"
        << "schedule = 1:2,3:4\n"
        << "\n";
  }
  const RunConfig cfg = RunConfig::load(tmp.file("cfg"));
  CHECK(cfg.mode == "ram");
  CHECK(cfg.lr == 0.02);
  const CurriculumSchedule sched = cfg.curriculum();
  REQUIRE(sched.size() == 2);
  CHECK(sched[0].num_steps == 1);
  CHECK(sched[0].epochs == 2);
  CHECK(sched[1].num_steps == 3);
  CHECK(sched[1].epochs == 4);

  {
    std::ofstream out(tmp.file("bad"));
    out << "not_a_key = 1\n";
  }
  CHECK_THROWS_WITH_AS(RunConfig::load(tmp.file("bad")), doctest::Contains("not_a_key"),
                       ConfigError);
  {
    std::ofstream out(tmp.file("badval"));
    out << "batch_size = banana\n";
  }
  CHECK_THROWS_AS(RunConfig::load(tmp.file("badval")), ConfigError);
}

TEST_CASE("RunConfig: echo text reparses to the same configuration") {
  RunConfig cfg;
  cfg.mode = "dtram";
  cfg.init_checkpoint = "x.ckpt";
  cfg.gamma = 0.98;
  cfg.seed = 123;
  const std::string text = cfg.to_text();

  RunConfig reparsed;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    REQUIRE(eq != std::string::npos);
    reparsed.set(line.substr(0, eq), line.substr(eq + 1));
  }
  CHECK(reparsed.to_text() == text);
}

TEST_CASE("RunConfig: mode requirements") {
  RunConfig ram;
  ram.mode = "ram";
  ram.init_checkpoint = "x.ckpt";
  CHECK_THROWS_AS(ram.validate(), ConfigError);

  RunConfig dt;
  dt.mode = "dtram";
  CHECK_THROWS_WITH_AS(dt.validate(), doctest::Contains("init_checkpoint"), ConfigError);

  RunConfig bad;
  bad.mode = "both";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("run_training: one-step schedule writes a checkpoint, metrics and config echo") {
  TempTree tmp;
  write_fixture_dataset(tmp.data_dir(), 40, 91);

  RunConfig cfg;
  cfg.mode = "ram";
  cfg.data_dir = tmp.data_dir();
  cfg.out_dir = tmp.out_dir();
  cfg.schedule = "1:1";
  cfg.hidden_dim = 16;
  cfg.num_classes = 2;
  cfg.batch_size = 10;
  cfg.val_size = 10;
  cfg.seed = 91;

  std::ostringstream log;
  const TrainArtifacts artifacts = run_training(cfg, &log);
  REQUIRE(artifacts.stage_checkpoints.size() == 1);
  CHECK(artifacts.stage_checkpoints[0].first == 1);
  CHECK(fs::exists(artifacts.final_checkpoint));
  CHECK(fs::exists(artifacts.metrics_csv));
  CHECK(fs::exists(artifacts.config_echo));

  const Checkpoint ck = load_checkpoint(artifacts.final_checkpoint);
  CHECK(ck.config.max_steps == 1);
  CHECK_FALSE(ck.config.dynamic);

  std::ifstream metrics(artifacts.metrics_csv);
  std::string header;
  std::getline(metrics, header);
  CHECK(header == "epoch,split,loss,reward_mean,steps_mean,accuracy,wallclock_s");
  std::string row;
  int rows = 0;
  while (std::getline(metrics, row)) ++rows;
  CHECK(rows == 2);  // one train row + one val row

  std::ifstream echo(artifacts.config_echo);
  const std::string echo_text((std::istreambuf_iterator<char>(echo)),
                              std::istreambuf_iterator<char>());
  CHECK(echo_text == cfg.to_text());
}

TEST_CASE("eval json: fixed-length histogram is degenerate and avg matches") {
  TempTree tmp;
  write_fixture_dataset(tmp.data_dir(), 30, 92);

  // untrained 5-step checkpoint via a zero-epoch stage
  RunConfig cfg;
  cfg.mode = "ram";
  cfg.data_dir = tmp.data_dir();
  cfg.out_dir = tmp.out_dir();
  cfg.schedule = "5:0";
  cfg.hidden_dim = 16;
  cfg.num_classes = 2;
  cfg.val_size = 5;
  const TrainArtifacts artifacts = run_training(cfg, nullptr);

  const std::string text =
      eval_report_json(artifacts.final_checkpoint, tmp.data_dir(), "test", "greedy", 0, 1);
  const json j = json::parse(text);
  CHECK(j["n"] == 30);
  CHECK(j["avg_steps"] == 5.0);
  CHECK(j["step_histogram"][4] == 30);
  double weighted = 0.0;
  for (std::size_t k = 0; k < j["step_histogram"].size(); ++k) {
    weighted += (k + 1) * j["step_histogram"][k].get<double>();
  }
  CHECK(j["avg_steps"].get<double>() == doctest::Approx(weighted / 30.0));
}

TEST_CASE("eval json: an always-stop dynamic model averages one step") {
  TempTree tmp;
  write_fixture_dataset(tmp.data_dir(), 20, 93);

  ModelConfig mcfg;
  mcfg.glimpse_size = 8;
  mcfg.hidden_dim = 16;
  mcfg.num_classes = 2;
  mcfg.max_steps = 6;
  mcfg.dynamic = true;
  RamParams params = init_params(mcfg, 93);
  params.b_stop.value(1, 0) = 50.0;
  const std::string ckpt = tmp.file("stop.ckpt");
  save_checkpoint(ckpt, params, mcfg);

  const json j = json::parse(eval_report_json(ckpt, tmp.data_dir(), "test", "greedy", 0, 1));
  CHECK(j["avg_steps"] == 1.0);
  CHECK(j["step_histogram"][0] == 20);
}

TEST_CASE("sweep csv: extreme thresholds and row format") {
  TempTree tmp;
  write_fixture_dataset(tmp.data_dir(), 20, 94);

  ModelConfig mcfg;
  mcfg.glimpse_size = 8;
  mcfg.hidden_dim = 16;
  mcfg.num_classes = 2;
  mcfg.max_steps = 3;
  RamParams params = init_params(mcfg, 94);
  const std::string ckpt = tmp.file("ram.ckpt");
  save_checkpoint(ckpt, params, mcfg);

  const std::string csv = sweep_csv(ckpt, tmp.data_dir(), "test", {0.0, 1.0, 1.1}, 1);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == "tau,avg_steps,accuracy_pct");
  std::getline(is, line);
  CHECK(line.rfind("0,1,", 0) == 0);  // tau=0 stops at step 1 exactly
  std::getline(is, line);
  CHECK(line.rfind("1,3,", 0) == 0);  // untrained probs stay below 1.0
  std::getline(is, line);
  CHECK(line.rfind("1.1,3,", 0) == 0);
}

TEST_CASE("trace json: single-entry trace, deterministic, locations in range") {
  TempTree tmp;
  write_fixture_dataset(tmp.data_dir(), 10, 95);

  ModelConfig mcfg;
  mcfg.glimpse_size = 8;
  mcfg.hidden_dim = 16;
  mcfg.num_classes = 2;
  mcfg.max_steps = 1;
  RamParams params = init_params(mcfg, 95);
  const std::string ckpt = tmp.file("one.ckpt");
  save_checkpoint(ckpt, params, mcfg);

  const std::string a = trace_json(ckpt, tmp.data_dir(), "test", 3);
  const std::string b = trace_json(ckpt, tmp.data_dir(), "test", 3);
  CHECK(a == b);
  const json j = json::parse(a);
  CHECK(j["num_steps"] == 1);
  REQUIRE(j["steps"].size() == 1);
  CHECK(j["steps"][0]["step"] == 1);
  CHECK(j["steps"][0]["top3"].size() == 2);  // top-3 capped at num_classes

  CHECK_THROWS_AS(trace_json(ckpt, tmp.data_dir(), "test", 10), ConfigError);

  // multi-step trace keeps locations in the unit square
  mcfg.max_steps = 4;
  const std::string ckpt4 = tmp.file("four.ckpt");
  save_checkpoint(ckpt4, params, mcfg);
  const json j4 = json::parse(trace_json(ckpt4, tmp.data_dir(), "test", 0));
  for (const auto& step : j4["steps"]) {
    CHECK(std::abs(step["loc"]["y"].get<double>()) <= 1.0);
    CHECK(std::abs(step["loc"]["x"].get<double>()) <= 1.0);
  }
}

TEST_CASE("verify: the built-in suites pass on a fresh build") {
  std::ostringstream out;
  CHECK(run_verify(out) == 0);
  CHECK(out.str().find("FAIL") == std::string::npos);
}
