#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dtram/errors.hpp"
#include "dtram/harness.hpp"

namespace {

// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
int dispatch(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const dtram::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const dtram::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dtram::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent visual attention classifier with learned dynamic stopping"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, data_dir = "data/mnist", out_dir, mode, split = "test";
  std::string rollout = "greedy", thresholds_arg = "0,0.4,0.5,0.6,0.7,0.8,0.9,0.95,0.99,1.1";
  std::uint64_t seed = 0;
  bool seed_set = false, mode_set = false, out_set = false, data_set = false;
  int threads = 1;
  long index = 0;

  CLI::App* train = app.add_subcommand("train", "Train a model and write checkpoints");
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--data-dir", data_dir, "directory with the IDX files")
      ->each([&](const std::string&) { data_set = true; });
  train->add_option("--out", out_dir, "output directory")
      ->each([&](const std::string&) { out_set = true; });
  train->add_option("--seed", seed, "RNG seed")
      ->each([&](const std::string&) { seed_set = true; });
  train->add_option("--mode", mode, "ram | dtram")
      ->each([&](const std::string&) { mode_set = true; });

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--data-dir", data_dir, "directory with the IDX files");
  eval->add_option("--split", split, "test | train | val");
  eval->add_option("--rollout", rollout, "greedy | sample");
  eval->add_option("--seed", seed, "RNG seed for sampled rollouts");
  eval->add_option("--threads", threads, "worker threads");

  CLI::App* sweep = app.add_subcommand("sweep-threshold",
                                       "Average steps and accuracy per stop threshold");
  sweep->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  sweep->add_option("--data-dir", data_dir, "directory with the IDX files");
  sweep->add_option("--split", split, "test | train | val");
  sweep->add_option("--thresholds", thresholds_arg, "comma-separated threshold list");
  sweep->add_option("--threads", threads, "worker threads");

  CLI::App* verify = app.add_subcommand("verify", "Run the built-in verification suites");
  (void)verify;

  CLI::App* trace = app.add_subcommand("trace", "Dump one greedy trajectory as JSON");
  trace->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  trace->add_option("--data-dir", data_dir, "directory with the IDX files");
  trace->add_option("--split", split, "test | train | val");
  trace->add_option("--index", index, "image index")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (train->parsed()) {
    return dispatch([&] {
      dtram::RunConfig cfg = config_path.empty() ? dtram::RunConfig{}
                                                 : dtram::RunConfig::load(config_path);
      if (data_set) cfg.data_dir = data_dir;
      if (out_set) cfg.out_dir = out_dir;
      if (seed_set) cfg.seed = seed;
      if (mode_set) cfg.mode = mode;
      const dtram::TrainArtifacts artifacts = dtram::run_training(cfg, &std::cout);
      std::cout << "final checkpoint: " << artifacts.final_checkpoint << "\n";
      return 0;
    });
  }
  if (eval->parsed()) {
    return dispatch([&] {
      std::cout << dtram::eval_report_json(checkpoint, data_dir, split, rollout, seed,
                                           threads)
                << "\n";
      return 0;
    });
  }
  if (sweep->parsed()) {
    return dispatch([&] {
      std::vector<double> taus;
      std::size_t at = 0;
      while (at <= thresholds_arg.size() && !thresholds_arg.empty()) {
        const std::size_t comma = thresholds_arg.find(',', at);
        const std::string item = thresholds_arg.substr(
            at, comma == std::string::npos ? std::string::npos : comma - at);
        if (!item.empty()) {
          try {
            taus.push_back(std::stod(item));
          } catch (const std::exception&) {
            throw dtram::ConfigError("invalid threshold '" + item + "'");
          }
        }
        if (comma == std::string::npos) break;
        at = comma + 1;
      }
      if (taus.empty()) throw dtram::ConfigError("no thresholds given");
      std::cout << dtram::sweep_csv(checkpoint, data_dir, split, taus, threads);
      return 0;
    });
  }
  if (verify->parsed()) {
    return dispatch([&] { return dtram::run_verify(std::cout) == 0 ? 0 : 3; });
  }
  if (trace->parsed()) {
    return dispatch([&] {
      std::cout << dtram::trace_json(checkpoint, data_dir, split, index) << "\n";
      return 0;
    });
  }
  return 1;
}
