#pragma once

#include <array>
#include <optional>
#include <string_view>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/sequential.h>
#include <torch/nn/pimpl.h>

#include "efgan/generator.hpp"
#include "efgan/regions.hpp"

namespace efgan {

struct CriticConfig {
  int au_dim = kDefaultAuDim;
  int image_size = 128;
  int base_channels = 64;
  int face_depth = 5;   ///< stride-2 layers of the face-sized critics
  int local_depth = 3;  ///< stride-2 layers of the eyes/nose/mouth critics
  int au_hidden = 64;   ///< width of the AU critic's hidden layers

  bool operator==(const CriticConfig&) const = default;
};

void validate(const CriticConfig& config);

inline constexpr double kCriticLeakySlope = 0.01;

enum class CriticId { final, face, eyes, nose, mouth };
inline constexpr std::array<CriticId, 5> kCriticIds = {CriticId::final, CriticId::face, CriticId::eyes, CriticId::nose,
                                                       CriticId::mouth};
std::string_view critic_name(CriticId id);

/// Unbounded realness score per sample; `au_pred` only from the final-output critic.
struct CriticOutput {
  torch::Tensor realness;               ///< [N]
  std::optional<torch::Tensor> au_pred;  ///< [N, c]
};

/// Strided conv stack with leaky ReLU, a 3x3 realness head averaged to one
/// score, and optionally a 3x3 AU-regression head averaged to c values.
class ImageCriticImpl : public torch::nn::Module {
 public:
  ImageCriticImpl(int64_t height, int64_t width, int base_channels, int depth, int au_dim);

  CriticOutput forward(const torch::Tensor& image);

  int64_t height() const { return height_; }
  int64_t width() const { return width_; }
  bool has_au_head() const { return static_cast<bool>(au_head_); }

 private:
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Sequential realness_head_{nullptr};
  torch::nn::Sequential au_head_{nullptr};
  int64_t height_;
  int64_t width_;
};
TORCH_MODULE(ImageCritic);

/// D_interp: fully connected critic on AU vectors (three layers).
class AuCriticImpl : public torch::nn::Module {
 public:
  AuCriticImpl(int au_dim, int hidden);
  torch::Tensor forward(const torch::Tensor& aus);
  int au_dim() const { return au_dim_; }

 private:
  torch::nn::Sequential net_{nullptr};
  int au_dim_;
};
TORCH_MODULE(AuCritic);

/// Hierarchical critic set {final, face, eyes, nose, mouth}; no weight sharing.
class CriticSetImpl : public torch::nn::Module {
 public:
  CriticSetImpl(const CriticConfig& config, const RegionLayout& layout);

  CriticOutput forward(CriticId which, const torch::Tensor& image);
  ImageCritic critic(CriticId which) const;
  const CriticConfig& config() const { return config_; }

 private:
  CriticConfig config_;
  std::array<ImageCritic, 5> critics_{nullptr, nullptr, nullptr, nullptr, nullptr};
};
TORCH_MODULE(CriticSet);

}  // namespace efgan
