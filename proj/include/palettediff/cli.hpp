#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "palettediff/config.hpp"
#include "palettediff/eval.hpp"

namespace palettediff {

/// args[0] is the program name. Returns 0 on success, 1 on usage errors and
/// 2 on runtime failures; messages go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct BaseTrainingJob {
  ModelConfig model;
  NoiseSchedule schedule;
  TrainOptions options;
  std::string data_dir;  // empty: procedural images
  std::string loss_csv;
};

struct ControlTrainingJob {
  std::string base_checkpoint;
  Variant variant = Variant::T;
  TaskMix mix;
  TextureDropout dropout;
  TrainOptions options;
  std::string data_dir;
  std::string loss_csv;
};

BaseTrainingJob base_job_from(const KeyValueConfig& cfg);
ControlTrainingJob control_job_from(const KeyValueConfig& cfg);
/// `experiment` selects per-experiment defaults (transfer runs N in {8, 32},
/// augmentation uses 300 images) that explicit keys override.
ExperimentConfig experiment_config_from(const KeyValueConfig& cfg, const std::string& experiment);

}  // namespace palettediff
