#include "efgan/layers.hpp"

#include <cmath>

#include <torch/torch.h>

#include "efgan/errors.hpp"

namespace efgan {

namespace {

constexpr double kNormEps = 1e-12;
constexpr int kInitPowerIterations = 50;

torch::Tensor unit(const torch::Tensor& v) { return v / (v.norm() + kNormEps); }

std::vector<int64_t> weight_shape(const LayerSpec& s) {
  switch (s.kind) {
    case LayerKind::conv:
      return {s.out, s.in, s.kernel, s.kernel};
    case LayerKind::conv_transpose:
      return {s.in, s.out, s.kernel, s.kernel};
    case LayerKind::dense:
      return {s.out, s.in};
  }
  return {};
}

int64_t fan_in(const LayerSpec& s) { return s.kind == LayerKind::dense ? s.in : s.in * s.kernel * s.kernel; }

}  // namespace

WeightLayerImpl::WeightLayerImpl(const LayerSpec& spec) : spec_(spec) {
  if (spec.in < 1 || spec.out < 1 || spec.kernel < 1 || spec.stride < 1 || spec.padding < 0) {
    throw ConfigError("WeightLayer: invalid layer geometry");
  }
  weight = register_parameter("weight", torch::empty(weight_shape(spec)));
  bias = register_parameter("bias", torch::zeros({spec.out}));
  u = register_buffer("u", torch::zeros({spec.out}));
  reset_parameters();
}

void WeightLayerImpl::reset_parameters() {
  torch::NoGradGuard no_grad;
  if (spec_.output) {
    torch::nn::init::kaiming_uniform_(weight, std::sqrt(5.0));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(spec_)));
    bias.uniform_(-bound, bound);
    u.zero_();
    return;
  }
  auto m = torch::empty({spec_.out, fan_in(spec_)}, weight.options());
  torch::nn::init::orthogonal_(m);
  set_weight_matrix(m);
  bias.zero_();
  u.copy_(unit(torch::randn({spec_.out}, u.options())));
  refine_power_iteration(kInitPowerIterations);
}

torch::Tensor WeightLayerImpl::weight_matrix() const {
  if (spec_.kind == LayerKind::conv_transpose) return weight.transpose(0, 1).reshape({spec_.out, -1});
  return weight.reshape({spec_.out, -1});
}

void WeightLayerImpl::set_weight_matrix(const torch::Tensor& m) {
  if (spec_.kind == LayerKind::conv_transpose) {
    weight.copy_(m.reshape({spec_.out, spec_.in, spec_.kernel, spec_.kernel}).transpose(0, 1));
  } else {
    weight.copy_(m.reshape(weight.sizes()));
  }
}

void WeightLayerImpl::refine_power_iteration(int steps) {
  if (!spectral()) return;
  torch::NoGradGuard no_grad;
  const auto m = weight_matrix();
  auto cur = u.clone();
  for (int i = 0; i < steps; ++i) {
    const auto v = unit(m.t().mv(cur));
    cur = unit(m.mv(v));
  }
  u.copy_(cur);
}

torch::Tensor WeightLayerImpl::sigma() const {
  const auto m = weight_matrix();
  torch::Tensor v, left;
  {
    torch::NoGradGuard no_grad;
    left = u.clone();
    v = unit(m.t().mv(left));
  }
  return left.dot(m.mv(v));
}

torch::Tensor WeightLayerImpl::effective_weight() const {
  if (!spectral()) return weight;
  return weight / sigma();
}

torch::Tensor WeightLayerImpl::effective_weight_matrix() const {
  if (!spectral()) return weight_matrix();
  return weight_matrix() / sigma();
}

torch::Tensor WeightLayerImpl::forward(const torch::Tensor& x) {
  if (spectral() && is_training()) refine_power_iteration(1);
  const auto w = effective_weight();
  switch (spec_.kind) {
    case LayerKind::conv:
      return torch::conv2d(x, w, bias, spec_.stride, spec_.padding);
    case LayerKind::conv_transpose:
      return torch::conv_transpose2d(x, w, bias, spec_.stride, spec_.padding);
    case LayerKind::dense:
      return torch::linear(x, w, bias);
  }
  return x;
}

std::vector<WeightLayerImpl*> weight_layers(torch::nn::Module& module) {
  std::vector<WeightLayerImpl*> out;
  for (const auto& m : module.modules(/*include_self=*/true)) {
    if (auto* layer = m->as<WeightLayerImpl>()) out.push_back(layer);
  }
  return out;
}

torch::nn::Sequential conv_norm_relu(const LayerSpec& spec) {
  return torch::nn::Sequential(WeightLayer(spec),
                               torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(spec.out).affine(true)),
                               torch::nn::ReLU());
}

ResidualBlockImpl::ResidualBlockImpl(int64_t channels) {
  const LayerSpec spec{LayerKind::conv, channels, channels, 3, 1, 1};
  body_ = register_module(
      "body", torch::nn::Sequential(
                  WeightLayer(spec), torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(channels).affine(true)),
                  torch::nn::ReLU(), WeightLayer(spec),
                  torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(channels).affine(true))));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + body_->forward(x); }

double orthogonality_defect(const torch::Tensor& m) {
  const auto md = m.detach().to(torch::kFloat64);
  const auto gram = md.size(0) <= md.size(1) ? md.mm(md.t()) : md.t().mm(md);
  const auto eye = torch::eye(gram.size(0), gram.options());
  return (gram - eye).abs().max().item<double>();
}

double power_iteration_norm(const torch::Tensor& m, int iterations) {
  const auto md = m.detach().to(torch::kFloat64);
  auto v = torch::ones({md.size(1)}, md.options()) / std::sqrt(static_cast<double>(md.size(1)));
  double sigma = 0.0;
  for (int i = 0; i < iterations; ++i) {
    auto w = md.mv(v);
    auto back = md.t().mv(w);
    const double n = back.norm().item<double>();
    if (n == 0.0) return 0.0;
    v = back / n;
    const double next = md.mv(v).norm().item<double>();
    const bool settled = i > 0 && std::abs(next - sigma) <= 1e-12 * next;
    sigma = next;
    if (settled) break;
  }
  return sigma;
}

}  // namespace efgan
