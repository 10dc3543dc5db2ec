#include "efgan/generator.hpp"

#include <string>

#include <torch/torch.h>

#include "efgan/errors.hpp"
#include "efgan/layers.hpp"

namespace efgan {

namespace {

/// Encoder (stem + n_down stride-2 convs), residual bottleneck, decoder.
torch::nn::Sequential encoder_decoder(int64_t in_channels, int base, int n_down, int blocks, int stem_kernel) {
  torch::nn::Sequential seq;
  seq->extend(*conv_norm_relu({LayerKind::conv, in_channels, base, stem_kernel, 1, stem_kernel / 2}));
  int64_t ch = base;
  for (int i = 0; i < n_down; ++i) {
    seq->extend(*conv_norm_relu({LayerKind::conv, ch, ch * 2, 4, 2, 1}));
    ch *= 2;
  }
  for (int i = 0; i < blocks; ++i) seq->push_back(ResidualBlock(ch));
  for (int i = 0; i < n_down; ++i) {
    seq->extend(*conv_norm_relu({LayerKind::conv_transpose, ch, ch / 2, 4, 2, 1}));
    ch /= 2;
  }
  return seq;
}

torch::Tensor pad_to_multiple(const torch::Tensor& x, int n_down) {
  const int64_t m = int64_t{1} << n_down;
  const int64_t ph = (m - x.size(-2) % m) % m;
  const int64_t pw = (m - x.size(-1) % m) % m;
  if (ph == 0 && pw == 0) return x;
  return torch::nn::functional::pad(x, torch::nn::functional::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
}

void check_batch(const torch::Tensor& x, int64_t channels, int64_t h, int64_t w, const char* what) {
  if (x.dim() != 4 || x.size(1) != channels || x.size(2) != h || x.size(3) != w) {
    std::string got = "[";
    for (int64_t i = 0; i < x.dim(); ++i) got += (i ? "," : "") + std::to_string(x.size(i));
    got += "]";
    throw_shape(what, "expected [N," + std::to_string(channels) + "," + std::to_string(h) + "," + std::to_string(w) +
                          "], got " + got);
  }
}

}  // namespace

void validate(const GeneratorConfig& c) {
  if (c.au_dim < 1) throw ConfigError("GeneratorConfig: au_dim must be positive");
  if (c.image_size < 8) throw ConfigError("GeneratorConfig: image_size too small");
  if (c.base_channels < 1) throw ConfigError("GeneratorConfig: base_channels must be positive");
  if (c.n_down < 0 || c.n_down > 4) throw ConfigError("GeneratorConfig: n_down must be in [0, 4]");
  if (c.global_blocks < 0 || c.local_blocks < 0 || c.refiner_blocks < 0) {
    throw ConfigError("GeneratorConfig: block counts must be non-negative");
  }
  if (c.stem_kernel < 1 || c.stem_kernel % 2 == 0 || c.head_kernel < 1 || c.head_kernel % 2 == 0) {
    throw ConfigError("GeneratorConfig: stem/head kernels must be odd");
  }
}

std::string_view branch_name(Branch b) {
  switch (b) {
    case Branch::face:
      return "face";
    case Branch::eyes:
      return "eyes";
    case Branch::nose:
      return "nose";
    case Branch::mouth:
      return "mouth";
  }
  return "?";
}

torch::Tensor attention_blend(const BranchOutput& out, const torch::Tensor& input) {
  if (out.color.sizes() != input.sizes()) throw_shape("attention_blend", "color map and input differ in shape");
  const auto& a = out.attention;
  if (a.dim() != input.dim() || a.size(-1) != input.size(-1) || a.size(-2) != input.size(-2) ||
      (a.size(-3) != 1 && a.size(-3) != input.size(-3))) {
    throw_shape("attention_blend", "attention map does not broadcast over the input");
  }
  return a * out.color + (1 - a) * input;
}

Focuses<torch::Tensor> split_focuses(const torch::Tensor& faces, const RegionLayout& layout) {
  const auto p = crop_regions(faces, layout);
  return {faces, p.eyes, p.nose, p.mouth};
}

BranchNetImpl::BranchNetImpl(const GeneratorConfig& c, int blocks, int64_t height, int64_t width)
    : height_(height), width_(width), au_dim_(c.au_dim), n_down_(c.n_down) {
  body_ = register_module("body", encoder_decoder(3 + c.au_dim, c.base_channels, c.n_down, blocks, c.stem_kernel));
  const int64_t pad = c.head_kernel / 2;
  color_head_ = register_module(
      "color", torch::nn::Sequential(
                   WeightLayer(LayerSpec{LayerKind::conv, c.base_channels, 3, c.head_kernel, 1, pad, true}),
                   torch::nn::Tanh()));
  attention_head_ = register_module(
      "attention", torch::nn::Sequential(
                       WeightLayer(LayerSpec{LayerKind::conv, c.base_channels, 1, c.head_kernel, 1, pad, true}),
                       torch::nn::Sigmoid()));
}

BranchOutput BranchNetImpl::forward(const torch::Tensor& input, const torch::Tensor& aus) {
  check_batch(input, 3, height_, width_, "branch_forward");
  if (aus.dim() != 2 || aus.size(0) != input.size(0) || aus.size(1) != au_dim_) {
    throw_shape("branch_forward", "AU batch must be [N," + std::to_string(au_dim_) + "]");
  }
  const auto tiled = aus.to(input.dtype()).view({aus.size(0), au_dim_, 1, 1}).expand({-1, -1, height_, width_});
  auto x = pad_to_multiple(torch::cat({input, tiled}, 1), n_down_);
  x = body_->forward(x);
  BranchOutput out;
  out.color = color_head_->forward(x).narrow(2, 0, height_).narrow(3, 0, width_);
  if (forced_attention_) {
    out.attention = torch::full({input.size(0), 1, height_, width_}, *forced_attention_, input.options());
  } else {
    out.attention = attention_head_->forward(x).narrow(2, 0, height_).narrow(3, 0, width_);
  }
  return out;
}

RefinerImpl::RefinerImpl(const GeneratorConfig& c) : n_down_(c.n_down) {
  body_ = encoder_decoder(kInputChannels, c.base_channels, c.n_down, c.refiner_blocks, c.stem_kernel);
  body_->push_back(WeightLayer(LayerSpec{LayerKind::conv, c.base_channels, 3, c.head_kernel, 1, c.head_kernel / 2, true}));
  body_->push_back(torch::nn::Tanh());
  register_module("body", body_);
}

torch::Tensor RefinerImpl::forward(const torch::Tensor& stitched_local, const torch::Tensor& global) {
  if (stitched_local.sizes() != global.sizes()) throw_shape("refine", "stitched and global outputs differ in shape");
  auto x = torch::cat({stitched_local, global}, 1);
  const auto h = x.size(2);
  const auto w = x.size(3);
  return body_->forward(pad_to_multiple(x, n_down_)).narrow(2, 0, h).narrow(3, 0, w);
}

EfGanImpl::EfGanImpl(const GeneratorConfig& config, const RegionLayout& layout) : config_(config), layout_(layout) {
  validate(config);
  if (layout.image_size != config.image_size) {
    throw ConfigError("EfGan: layout is for " + std::to_string(layout.image_size) + " px, generator for " +
                      std::to_string(config.image_size) + " px");
  }
  const int s = config.image_size;
  branches_.face = register_module("face", BranchNet(config, config.global_blocks, s, s));
  for (Region r : kRegions) {
    const Rect& rect = layout[r];
    const Branch b = r == Region::eyes ? Branch::eyes : r == Region::nose ? Branch::nose : Branch::mouth;
    branches_[b] = register_module(std::string(branch_name(b)),
                                   BranchNet(config, config.local_blocks, rect.height, rect.width));
  }
  refiner_ = register_module("refiner", Refiner(config));
}

BranchNet EfGanImpl::branch(Branch b) const { return branches_[b]; }

void EfGanImpl::force_attention(std::optional<double> value) {
  for (Branch b : kBranches) branches_[b]->force_attention(value);
}

StageOutput EfGanImpl::expression_transform(const Focuses<torch::Tensor>& inputs, const torch::Tensor& aus) {
  StageOutput out;
  for (Branch b : kBranches) {
    out.branch_raw[b] = branches_[b]->forward(inputs[b], aus);
    out.init[b] = attention_blend(out.branch_raw[b], inputs[b]);
  }
  return out;
}

torch::Tensor EfGanImpl::refine(const Focuses<torch::Tensor>& init) {
  const auto stitched = stitch_regions({init.eyes, init.nose, init.mouth}, layout_);
  return refiner_->forward(stitched, init.face);
}

StageOutput EfGanImpl::forward(const torch::Tensor& face, const torch::Tensor& aus) {
  check_batch(face, 3, config_.image_size, config_.image_size, "efgan_forward");
  StageOutput out = expression_transform(split_focuses(face, layout_), aus);
  out.refined = refine(out.init);
  return out;
}

}  // namespace efgan
