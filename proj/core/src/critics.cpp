#include "efgan/critics.hpp"

#include <algorithm>
#include <string>

#include <torch/torch.h>

#include "efgan/errors.hpp"
#include "efgan/layers.hpp"

namespace efgan {

namespace {

torch::nn::LeakyReLU leaky() {
  return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kCriticLeakySlope));
}

int64_t strided(int64_t n) { return n + 2 < 4 ? 0 : (n + 2 - 4) / 2 + 1; }

}  // namespace

void validate(const CriticConfig& c) {
  if (c.au_dim < 1) throw ConfigError("CriticConfig: au_dim must be positive");
  if (c.base_channels < 1 || c.au_hidden < 1) throw ConfigError("CriticConfig: widths must be positive");
  if (c.face_depth < 1 || c.local_depth < 1) throw ConfigError("CriticConfig: depths must be >= 1");
}

std::string_view critic_name(CriticId id) {
  switch (id) {
    case CriticId::final:
      return "final";
    case CriticId::face:
      return "face";
    case CriticId::eyes:
      return "eyes";
    case CriticId::nose:
      return "nose";
    case CriticId::mouth:
      return "mouth";
  }
  return "?";
}

ImageCriticImpl::ImageCriticImpl(int64_t height, int64_t width, int base_channels, int depth, int au_dim)
    : height_(height), width_(width) {
  trunk_ = torch::nn::Sequential();
  int64_t ch_in = 3;
  int64_t ch = base_channels;
  int64_t h = height;
  int64_t w = width;
  for (int i = 0; i < depth; ++i) {
    trunk_->push_back(WeightLayer(LayerSpec{LayerKind::conv, ch_in, ch, 4, 2, 1}));
    trunk_->push_back(leaky());
    h = strided(h);
    w = strided(w);
    ch_in = ch;
    ch *= 2;
  }
  if (h < 1 || w < 1) {
    throw ConfigError("ImageCritic: " + std::to_string(depth) + " stride-2 layers collapse a " +
                      std::to_string(height) + "x" + std::to_string(width) + " input");
  }
  register_module("trunk", trunk_);
  realness_head_ = register_module(
      "realness", torch::nn::Sequential(WeightLayer(LayerSpec{LayerKind::conv, ch_in, 1, 3, 1, 1, true})));
  if (au_dim > 0) {
    au_head_ = register_module(
        "au", torch::nn::Sequential(WeightLayer(LayerSpec{LayerKind::conv, ch_in, au_dim, 3, 1, 1, true})));
  }
}

CriticOutput ImageCriticImpl::forward(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3 || image.size(2) != height_ || image.size(3) != width_) {
    throw_shape("critic_forward", "expected [N,3," + std::to_string(height_) + "," + std::to_string(width_) + "]");
  }
  const auto features = trunk_->forward(image);
  CriticOutput out;
  out.realness = realness_head_->forward(features).mean({1, 2, 3});
  if (au_head_) out.au_pred = au_head_->forward(features).mean({2, 3});
  return out;
}

AuCriticImpl::AuCriticImpl(int au_dim, int hidden) : au_dim_(au_dim) {
  net_ = register_module(
      "net", torch::nn::Sequential(WeightLayer(LayerSpec{LayerKind::dense, au_dim, hidden}), leaky(),
                                   WeightLayer(LayerSpec{LayerKind::dense, hidden, hidden}), leaky(),
                                   WeightLayer(LayerSpec{LayerKind::dense, hidden, 1, 1, 1, 0, true})));
}

torch::Tensor AuCriticImpl::forward(const torch::Tensor& aus) {
  if (aus.dim() != 2 || aus.size(1) != au_dim_) {
    throw_shape("au_critic_forward", "expected [N," + std::to_string(au_dim_) + "]");
  }
  return net_->forward(aus).squeeze(1);
}

CriticSetImpl::CriticSetImpl(const CriticConfig& config, const RegionLayout& layout) : config_(config) {
  validate(config);
  const int s = layout.image_size;
  for (CriticId id : kCriticIds) {
    int64_t h = s;
    int64_t w = s;
    int depth = config.face_depth;
    if (id != CriticId::final && id != CriticId::face) {
      const Rect& r = layout[id == CriticId::eyes ? Region::eyes : id == CriticId::nose ? Region::nose : Region::mouth];
      h = r.height;
      w = r.width;
      depth = config.local_depth;
    }
    const int au = id == CriticId::final ? config.au_dim : 0;
    critics_[static_cast<size_t>(id)] =
        register_module(std::string(critic_name(id)), ImageCritic(h, w, config.base_channels, depth, au));
  }
}

CriticOutput CriticSetImpl::forward(CriticId which, const torch::Tensor& image) {
  return critics_[static_cast<size_t>(which)]->forward(image);
}

ImageCritic CriticSetImpl::critic(CriticId which) const { return critics_[static_cast<size_t>(which)]; }

}  // namespace efgan
