#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "efgan/critics.hpp"
#include "efgan/generator.hpp"
#include "efgan/interpolator.hpp"
#include "efgan/losses.hpp"
#include "efgan/regions.hpp"

namespace efgan {

/// Everything needed to rebuild a (cascade) model's modules.
struct ModelConfig {
  GeneratorConfig generator;
  CriticConfig critic;
  InterpolatorConfig interp;
  RegionLayout layout;
  int n_stages = 1;

  bool operator==(const ModelConfig&) const = default;
};

void validate(const ModelConfig& config);

/// Optimization settings. Epoch-based schedules; `steps_per_epoch == 0`
/// means one pass over the training records per epoch.
struct TrainConfig {
  int n_stages = 3;
  int batch_size = 2;
  int epochs = 100;
  double lr = 1e-4;
  int lr_decay_start_epoch = 50;
  int finetune_epochs = 10;
  double finetune_lr = 1e-5;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int critic_steps_per_gen = 1;
  std::uint64_t seed = 0;
  LossWeights weights;
  int steps_per_epoch = 0;
  int checkpoint_every = 0;  ///< steps between last-good snapshots; 0 = only at the end

  bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& config);

/// Run configuration file: {"model": {...}, "train": {...}}. Absent fields
/// keep their defaults; the layout is optional (computed from data when absent).
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  bool has_layout = false;
};

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

std::string to_json_string(const ModelConfig& config);
ModelConfig model_config_from_json_string(const std::string& text);
std::string to_json_string(const TrainConfig& config);
std::string to_json_string(const RegionLayout& layout);

}  // namespace efgan
