#pragma once

#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/sequential.h>
#include <torch/nn/pimpl.h>

namespace efgan {

enum class LayerKind { conv, conv_transpose, dense };

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  int64_t in = 1;
  int64_t out = 1;
  int64_t kernel = 3;
  int64_t stride = 1;
  int64_t padding = 0;
  /// Output layers keep the framework's default init and skip spectral
  /// normalization; every other layer is orthogonally initialized and
  /// spectrally normalized.
  bool output = false;
};

/// Convolution, transposed convolution or fully connected layer whose weight
/// is orthogonally initialized and divided by a power-iteration estimate of
/// its spectral norm (non-output layers only).
///
/// The weight is viewed as a matrix [out, fan_in] for both purposes. In
/// training mode each forward runs one power-iteration step and stores the
/// updated left singular vector `u`; evaluation mode reuses `u` unchanged, so
/// evaluation forwards are deterministic.
class WeightLayerImpl : public torch::nn::Module {
 public:
  explicit WeightLayerImpl(const LayerSpec& spec);

  torch::Tensor forward(const torch::Tensor& x);

  const LayerSpec& spec() const { return spec_; }
  bool spectral() const { return !spec_.output; }

  /// Raw weight as a [out, fan_in] matrix (a copy for transposed convs).
  torch::Tensor weight_matrix() const;
  /// Weight actually applied in the forward pass, as a [out, fan_in] matrix.
  torch::Tensor effective_weight_matrix() const;
  /// Current spectral norm estimate sigma = u^T W v.
  torch::Tensor sigma() const;

  /// Re-run orthogonal/default initialization and converge `u`.
  void reset_parameters();
  /// Extra power-iteration steps on the current weight.
  void refine_power_iteration(int steps);

  torch::Tensor weight;
  torch::Tensor bias;
  torch::Tensor u;

 private:
  torch::Tensor effective_weight() const;
  void set_weight_matrix(const torch::Tensor& m);

  LayerSpec spec_;
};
TORCH_MODULE(WeightLayer);

/// All weight layers reachable from `module`, in registration order.
std::vector<WeightLayerImpl*> weight_layers(torch::nn::Module& module);

/// conv -> instance norm (affine) -> ReLU
torch::nn::Sequential conv_norm_relu(const LayerSpec& spec);

/// x + IN(conv(ReLU(IN(conv(x))))), 3x3 convs preserving shape.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Max over entries of |G - I|, with G the Gram matrix on the smaller side of `m`.
double orthogonality_defect(const torch::Tensor& m);

/// Spectral norm of `m` by `iterations` rounds of power iteration from a
/// fixed start vector (independent of any layer state), stopping early once
/// the estimate is stable to 1e-12 relative.
double power_iteration_norm(const torch::Tensor& m, int iterations = 200);

}  // namespace efgan
