#include "efgan/interpolator.hpp"

#include <string>

#include <torch/torch.h>

#include "efgan/errors.hpp"
#include "efgan/layers.hpp"

namespace efgan {

namespace {

void check_pair(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) throw_shape(what, "AU tensors differ in shape");
  if (a.dim() < 1 || a.dim() > 2) throw_shape(what, "AU tensors must be [c] or [N, c]");
}

}  // namespace

std::vector<torch::Tensor> pseudo_targets(const torch::Tensor& source, const torch::Tensor& target, int n_stages) {
  check_pair(source, target, "pseudo_targets");
  if (n_stages < 1) throw ConfigError("pseudo_targets: n_stages must be >= 1");
  std::vector<torch::Tensor> out;
  out.reserve(n_stages);
  const auto gap = target - source;
  for (int k = 1; k < n_stages; ++k) {
    out.push_back(source + gap * (static_cast<double>(k) / n_stages));
  }
  out.push_back(target.clone());
  return out;
}

torch::Tensor residual(const torch::Tensor& pseudo, const torch::Tensor& source) {
  check_pair(pseudo, source, "residual");
  return pseudo - source;
}

InterpolatorImpl::InterpolatorImpl(const InterpolatorConfig& config) : config_(config) {
  if (config.au_dim < 1 || config.hidden < 1) throw ConfigError("InterpolatorConfig: sizes must be positive");
  const int64_t c = config.au_dim;
  const int64_t h = config.hidden;
  net_ = register_module(
      "net", torch::nn::Sequential(WeightLayer(LayerSpec{LayerKind::dense, 2 * c, h}), torch::nn::ReLU(),
                                   WeightLayer(LayerSpec{LayerKind::dense, h, h}), torch::nn::ReLU(),
                                   WeightLayer(LayerSpec{LayerKind::dense, h, c, 1, 1, 0, true})));
}

torch::Tensor InterpolatorImpl::forward(const torch::Tensor& source, const torch::Tensor& r) {
  check_pair(source, r, "interpolate_aus");
  if (source.size(-1) != config_.au_dim) {
    throw_shape("interpolate_aus", "expected AU length " + std::to_string(config_.au_dim));
  }
  const bool single = source.dim() == 1;
  const auto x = single ? source.unsqueeze(0) : source;
  const auto rr = single ? r.unsqueeze(0) : r;
  auto out = x + rr + net_->forward(torch::cat({x, rr}, 1));
  return single ? out.squeeze(0) : out;
}

std::vector<torch::Tensor> stage_targets(const torch::Tensor& source, const torch::Tensor& target, int n_stages,
                                         Interpolator& interp) {
  auto pseudo = pseudo_targets(source, target, n_stages);
  for (int k = 0; k + 1 < n_stages; ++k) {
    pseudo[k] = interp->forward(source, residual(pseudo[k], source));
  }
  return pseudo;
}

}  // namespace efgan
