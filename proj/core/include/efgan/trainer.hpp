#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <torch/optim/adam.h>

#include "efgan/config.hpp"
#include "efgan/losses.hpp"
#include "efgan/manifest.hpp"
#include "efgan/model.hpp"

namespace efgan {

/// Pretraining schedule: `lr` until `lr_decay_start_epoch`, then linear to 0 at `epochs`.
double lr_at(double epoch, const TrainConfig& config);
/// Cascade fine-tuning schedule: `finetune_lr` decaying linearly to 0 at `finetune_epochs`.
double finetune_lr_at(double epoch, const TrainConfig& config);

struct Batch {
  torch::Tensor source;      ///< [B,3,S,S]
  torch::Tensor source_aus;  ///< [B,c]
  torch::Tensor target_aus;  ///< [B,c]
  torch::Tensor target;      ///< [B,3,S,S] ground truth at target_aus (same identity)
  std::vector<int64_t> source_index;
  std::vector<int64_t> target_index;
};

Batch make_batch(const Dataset& data, const std::vector<int64_t>& sources, const std::vector<int64_t>& targets);

/// Draws (source, target) record pairs of the same identity with distinct AU
/// settings, deterministically from a seed.
class PairSampler {
 public:
  PairSampler(const Dataset& data, std::uint64_t seed);
  Batch next(int batch_size);

 private:
  const Dataset* data_;
  std::vector<std::vector<int64_t>> by_identity_;
  std::vector<int64_t> pairable_;  ///< records whose identity has >= 2 records
  std::mt19937_64 rng_;
};

struct CriticReport {
  double total = 0.0;  ///< image critics, including the weighted AU-regression term
  double au = 0.0;     ///< AU critic
  std::map<std::string, double> per_critic;
};

struct StepReport {
  int64_t step = 0;
  double epoch = 0.0;
  double lr = 0.0;
  std::vector<LossReport> stages;
  double cascade_total = 0.0;
  CriticReport critic;
};

std::string to_json_line(const StepReport& report);

/// Generator-side loss terms of every stage for one batch. Intermediate
/// stages are conditioned on detached interpolator outputs; the last stage on
/// the true target. The content term is attached to the last stage; the
/// interpolation term to intermediate stages (or, for a single stage model, to
/// that stage using `interp_stages` pseudo-targets).
std::vector<LossTerms> generator_loss_terms(CascadeModel& model, const Batch& batch, const LossWeights& weights,
                                            int interp_stages);

/// Loss reports on a batch without touching parameters (evaluation mode).
std::vector<LossReport> probe_losses(CascadeModel& model, const Batch& batch, const TrainConfig& config);

/// Alternating critic / generator Adam updates on a model.
class Trainer {
 public:
  Trainer(CascadeModel model, const TrainConfig& config, const std::vector<torch::Tensor>& natural_aus);

  /// critic_steps_per_gen critic updates followed by one generator update.
  /// Throws DivergenceError if a loss or parameter becomes non-finite.
  StepReport step(const Batch& batch);

  void set_lr(double lr);
  CascadeModel& model() { return model_; }
  int64_t steps_done() const { return steps_; }

 private:
  CriticReport critic_step(const Batch& batch);
  torch::Tensor sample_natural_aus(int64_t n);

  CascadeModel model_;
  TrainConfig config_;
  torch::Tensor natural_aus_;
  torch::optim::Adam generator_opt_;
  torch::optim::Adam interp_opt_;
  torch::optim::Adam critic_opt_;
  std::mt19937_64 rng_;
  int64_t steps_ = 0;
  double lr_ = 0.0;
};

struct TrainOptions {
  std::filesystem::path out_dir;  ///< empty: no files written
  std::function<void(const StepReport&, CascadeModel&)> on_step;
  int64_t max_steps = -1;  ///< overrides epochs * steps_per_epoch when >= 0
};

struct TrainResult {
  CascadeModel model{nullptr};
  int64_t steps = 0;
  std::vector<StepReport> log;
};

int64_t steps_per_epoch(const Dataset& data, const TrainConfig& config);

/// Train one EF-GAN (n_stages == 1) from scratch. The interpolator is trained
/// alongside on `config.n_stages` pseudo-targets. Writes `checkpoint/`,
/// `train_log.jsonl` and `config.json` under `out_dir` when set.
TrainResult train_single_efgan(const Dataset& train, const ModelConfig& model_config, const TrainConfig& config,
                               const TrainOptions& options = {});

/// Fine-tune a cascade end-to-end with the fine-tuning schedule.
TrainResult train_cascade(CascadeModel cascade, const Dataset& train, const TrainConfig& config,
                          const TrainOptions& options = {});

/// Check that a dataset matches a model's AU dimension and resolution.
void check_compatible(const ModelConfig& model, const Dataset& data);

}  // namespace efgan
