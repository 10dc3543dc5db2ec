#pragma once

#include <array>
#include <optional>
#include <string_view>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/sequential.h>
#include <torch/nn/pimpl.h>

#include "efgan/manifest.hpp"
#include "efgan/regions.hpp"

namespace efgan {

/// Architecture of one EF-GAN generator (Expression Transformer + Refiner).
struct GeneratorConfig {
  int au_dim = kDefaultAuDim;
  int image_size = 128;
  int base_channels = 64;
  int n_down = 2;          ///< stride-2 encoder stages per branch
  int global_blocks = 6;   ///< residual bottleneck blocks, face branch
  int local_blocks = 4;    ///< residual bottleneck blocks, eyes/nose/mouth branches
  int refiner_blocks = 4;
  int stem_kernel = 7;
  int head_kernel = 7;

  bool operator==(const GeneratorConfig&) const = default;
};

void validate(const GeneratorConfig& config);

enum class Branch { face, eyes, nose, mouth };
inline constexpr std::array<Branch, 4> kBranches = {Branch::face, Branch::eyes, Branch::nose, Branch::mouth};
std::string_view branch_name(Branch b);

template <class T>
struct Focuses {
  T face;
  T eyes;
  T nose;
  T mouth;

  T& operator[](Branch b) {
    switch (b) {
      case Branch::face:
        return face;
      case Branch::eyes:
        return eyes;
      case Branch::nose:
        return nose;
      default:
        return mouth;
    }
  }
  const T& operator[](Branch b) const { return const_cast<Focuses&>(*this)[b]; }
};

/// Color map M_C ([N,3,H,W], tanh range) and attention map M_A ([N,1,H,W], in [0,1]).
struct BranchOutput {
  torch::Tensor color;
  torch::Tensor attention;
};

struct StageOutput {
  Focuses<torch::Tensor> init;  ///< attention-blended branch outputs
  torch::Tensor refined;        ///< final face of the stage
  Focuses<BranchOutput> branch_raw;
};

/// M_A * M_C + (1 - M_A) * input, attention broadcast over channels.
torch::Tensor attention_blend(const BranchOutput& out, const torch::Tensor& input);

/// Face, eyes, nose and mouth crops of a batch of faces.
Focuses<torch::Tensor> split_focuses(const torch::Tensor& faces, const RegionLayout& layout);

/// One Expression Transformer branch: AU-conditioned encoder / residual
/// bottleneck / decoder with color and attention heads. Inputs whose sides
/// are not multiples of 2^n_down are edge-padded and the outputs cropped back.
class BranchNetImpl : public torch::nn::Module {
 public:
  BranchNetImpl(const GeneratorConfig& config, int blocks, int64_t height, int64_t width);

  BranchOutput forward(const torch::Tensor& input, const torch::Tensor& aus);

  int64_t height() const { return height_; }
  int64_t width() const { return width_; }

  /// Test hook: replace M_A with a constant (nullopt restores the network).
  void force_attention(std::optional<double> value) { forced_attention_ = value; }

 private:
  torch::nn::Sequential body_{nullptr};
  torch::nn::Sequential color_head_{nullptr};
  torch::nn::Sequential attention_head_{nullptr};
  int64_t height_;
  int64_t width_;
  int64_t au_dim_;
  int n_down_;
  std::optional<double> forced_attention_;
};
TORCH_MODULE(BranchNet);

/// Fuses the stitched local outputs with the global output (6 input channels).
class RefinerImpl : public torch::nn::Module {
 public:
  explicit RefinerImpl(const GeneratorConfig& config);

  torch::Tensor forward(const torch::Tensor& stitched_local, const torch::Tensor& global);

  static constexpr int64_t kInputChannels = 6;

 private:
  torch::nn::Sequential body_{nullptr};
  int n_down_;
};
TORCH_MODULE(Refiner);

/// One EF-GAN generator: four unshared branches plus the Refiner.
/// Parameter names are `{face,eyes,nose,mouth,refiner}.body.<i>...`.
class EfGanImpl : public torch::nn::Module {
 public:
  EfGanImpl(const GeneratorConfig& config, const RegionLayout& layout);

  /// crop -> expression transform -> refine.
  StageOutput forward(const torch::Tensor& face, const torch::Tensor& aus);

  /// Run the four branches on matching inputs; fills `init` and `branch_raw`.
  StageOutput expression_transform(const Focuses<torch::Tensor>& inputs, const torch::Tensor& aus);

  /// Stitch local initial outputs onto zeros, concatenate with the global one, refine.
  torch::Tensor refine(const Focuses<torch::Tensor>& init);

  BranchNet branch(Branch b) const;
  Refiner refiner() const { return refiner_; }
  const GeneratorConfig& config() const { return config_; }
  const RegionLayout& layout() const { return layout_; }

  void force_attention(std::optional<double> value);

 private:
  GeneratorConfig config_;
  RegionLayout layout_;
  Focuses<BranchNet> branches_{nullptr, nullptr, nullptr, nullptr};
  Refiner refiner_{nullptr};
};
TORCH_MODULE(EfGan);

}  // namespace efgan
