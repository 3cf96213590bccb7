#pragma once

#include <cstdint>
#include <string>

#include "dtram/model.hpp"
#include "dtram/training.hpp"

namespace dtram {

// Textual key=value run configuration. Every key has a default; unknown
// keys are rejected; the fully resolved config is echoed into the output
// directory of a training run.
struct RunConfig {
  std::string mode = "ram";  // ram | dtram
  std::string data_dir = "data/mnist";
  std::string out_dir = "runs/run";
  std::uint64_t seed = 1;
  int threads = 1;

  // model
  int glimpse_size = 8;
  int hidden_dim = 256;
  int num_classes = 10;
  double sigma = 0.25;
  int max_steps = 7;  // rollout cap for dtram; ram stages take theirs from the schedule

  // training
  double lr = 0.01;
  double lr_decay = 0.3;
  int lr_decay_every = 30;
  double momentum = 0.9;
  int batch_size = 20;
  double gamma = 0.99;
  int samples_per_image = 1;
  double reinforce_scale = 0.02;
  double grad_clip = 0.0;
  int epochs = 25;  // dtram fine-tune epochs
  bool baseline = true;
  bool intermediate_supervision = true;
  std::string schedule = "1:12,3:18,5:26,7:30";  // ram curriculum, T:epochs pairs
  std::string init_checkpoint;                   // dtram: trained ram checkpoint
  int val_size = 5000;

  // Parses a config file ('#' comments, blank lines allowed) on top of the
  // defaults. Unknown keys raise ConfigError.
  static RunConfig load(const std::string& path);
  // Applies one key=value assignment.
  void set(const std::string& key, const std::string& value);
  // Canonical echo of the resolved configuration.
  std::string to_text() const;

  ModelConfig model_config() const;
  TrainConfig train_config() const;
  CurriculumSchedule curriculum() const;
  void validate() const;
};

}  // namespace dtram
