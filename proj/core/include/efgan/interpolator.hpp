#pragma once

#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/sequential.h>
#include <torch/nn/pimpl.h>

#include "efgan/manifest.hpp"

namespace efgan {

struct InterpolatorConfig {
  int au_dim = kDefaultAuDim;
  int hidden = 64;

  bool operator==(const InterpolatorConfig&) const = default;
};

/// Linear pseudo-targets y_x + (k/n)(y_z - y_x), k = 1..n. Works on [c] or
/// [N, c] tensors; the last element is y_z itself.
std::vector<torch::Tensor> pseudo_targets(const torch::Tensor& source, const torch::Tensor& target, int n_stages);

/// r = y_p - y_x.
torch::Tensor residual(const torch::Tensor& pseudo, const torch::Tensor& source);

/// Learned map (y_x, r) -> intermediate AUs. Three fully connected layers on
/// [y_x, r]; the network predicts a correction to the linear pseudo-target
/// y_x + r, so an untrained interpolator starts near linear interpolation.
class InterpolatorImpl : public torch::nn::Module {
 public:
  explicit InterpolatorImpl(const InterpolatorConfig& config);

  torch::Tensor forward(const torch::Tensor& source, const torch::Tensor& residual);

  const InterpolatorConfig& config() const { return config_; }

 private:
  InterpolatorConfig config_;
  torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(Interpolator);

/// Supervision for each of n stages: the interpolator's output for stages
/// 1..n-1 and the true target for stage n (the interpolator is not called
/// when n == 1).
std::vector<torch::Tensor> stage_targets(const torch::Tensor& source, const torch::Tensor& target, int n_stages,
                                         Interpolator& interp);

}  // namespace efgan
