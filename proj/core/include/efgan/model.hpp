#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/moduledict.h>
#include <torch/nn/pimpl.h>

#include "efgan/config.hpp"
#include "efgan/critics.hpp"
#include "efgan/generator.hpp"
#include "efgan/interpolator.hpp"

namespace efgan {

/// A chain of EF-GAN stages with per-stage critic sets, one shared AU
/// interpolator and one AU critic. A single EF-GAN is the n_stages == 1 case.
///
/// Parameter names: `stage{k}.{face,eyes,nose,mouth,refiner}.*`,
/// `critic.stage{k}.{final,face,eyes,nose,mouth}.*`, `critic.au.*`, `interp.*`
/// with k counted from 1.
class CascadeModelImpl : public torch::nn::Module {
 public:
  explicit CascadeModelImpl(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  int n_stages() const { return config_.n_stages; }

  EfGan stage(int k) const { return stages_.at(k); }        ///< 0-based
  CriticSet critics(int k) const { return critics_.at(k); }  ///< 0-based
  Interpolator interp() const { return interp_; }
  AuCritic au_critic() const { return au_critic_; }

  std::vector<torch::Tensor> generator_parameters();
  std::vector<torch::Tensor> critic_parameters();  ///< image critics and AU critic
  std::vector<torch::Tensor> interp_parameters();

  /// Every parameter and buffer by its checkpoint name.
  std::map<std::string, torch::Tensor> state();

 private:
  ModelConfig config_;
  std::vector<EfGan> stages_;
  std::vector<CriticSet> critics_;
  Interpolator interp_{nullptr};
  AuCritic au_critic_{nullptr};
};
TORCH_MODULE(CascadeModel);

/// Build a model with freshly initialized parameters from the global torch RNG.
CascadeModel make_model(const ModelConfig& config, std::uint64_t seed);

/// Copy every same-named, same-shaped entry of `from` into `to`.
void copy_state(CascadeModel& from, CascadeModel& to);

/// Forward pass through all stages. Stage k is conditioned on `targets[k]`
/// and fed the refined output of stage k-1 (the source for k = 0).
std::vector<StageOutput> cascade_forward(CascadeModel& model, const torch::Tensor& faces,
                                         const std::vector<torch::Tensor>& targets);

struct EditResult {
  std::vector<torch::Tensor> intermediates;  ///< refined outputs of stages 1..n-1, [N,3,S,S]
  torch::Tensor final;                       ///< [N,3,S,S]
  std::vector<torch::Tensor> targets;        ///< the AU vector each stage was conditioned on
};

/// Evaluation-mode edit from `source_aus` to `target_aus` using the
/// interpolator's stage targets. Accepts [3,S,S] or [N,3,S,S] faces and [c] or
/// [N,c] AUs; outputs are batched.
EditResult edit(CascadeModel& model, const torch::Tensor& faces, const torch::Tensor& source_aus,
                const torch::Tensor& target_aus);

/// Frames k = 1..n_frames, each an edit toward the k-th stage target of
/// (source_aus -> target_aus) split into n_frames steps. The last frame
/// targets `target_aus` and equals edit(...).final.
std::vector<torch::Tensor> continuous_edit(CascadeModel& model, const torch::Tensor& face,
                                           const torch::Tensor& source_aus, const torch::Tensor& target_aus,
                                           int n_frames);

/// Cascade of `n_stages` whose every stage (generator and critic set) is a
/// copy of stage 1 of `pretrained`; interpolator and AU critic carried over.
CascadeModel init_cascade_from_pretrained(CascadeModel& pretrained, int n_stages);

// Checkpoints are directories holding `model.json` (format version, model
// config, tensor index, free-form metadata) and `tensors.bin` (raw
// little-endian tensor data in index order).
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(CascadeModel& model, const std::filesystem::path& dir, const std::string& metadata_json = "{}");
CascadeModel load_checkpoint(const std::filesystem::path& dir);
/// The metadata object stored with a checkpoint, as JSON text.
std::string checkpoint_metadata(const std::filesystem::path& dir);

}  // namespace efgan
