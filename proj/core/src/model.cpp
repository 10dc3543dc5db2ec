#include "efgan/model.hpp"

#include <string>

#include <torch/torch.h>

#include "efgan/errors.hpp"

namespace efgan {

namespace {

class Container : public torch::nn::Module {
 public:
  using torch::nn::Module::register_module;
};

std::string stage_key(int k) { return "stage" + std::to_string(k + 1); }

torch::Tensor batch_aus(const torch::Tensor& aus, int64_t n) {
  if (aus.dim() == 1) return aus.unsqueeze(0).expand({n, aus.size(0)});
  if (aus.dim() == 2 && aus.size(0) == n) return aus;
  throw_shape("edit", "AU tensor must be [c] or [N, c] matching the image batch");
}

class EvalScope {
 public:
  explicit EvalScope(torch::nn::Module& m) : module_(m), was_training_(m.is_training()) { m.eval(); }
  ~EvalScope() { module_.train(was_training_); }
  EvalScope(const EvalScope&) = delete;
  EvalScope& operator=(const EvalScope&) = delete;

 private:
  torch::nn::Module& module_;
  bool was_training_;
};

}  // namespace

CascadeModelImpl::CascadeModelImpl(const ModelConfig& config) : config_(config) {
  validate(config);
  auto critic_root = std::make_shared<Container>();
  for (int k = 0; k < config.n_stages; ++k) {
    stages_.push_back(register_module(stage_key(k), EfGan(config.generator, config.layout)));
    critics_.push_back(critic_root->register_module(stage_key(k), CriticSet(config.critic, config.layout)));
  }
  au_critic_ = critic_root->register_module("au", AuCritic(config.critic.au_dim, config.critic.au_hidden));
  register_module("critic", critic_root);
  interp_ = register_module("interp", Interpolator(config.interp));
}

std::vector<torch::Tensor> CascadeModelImpl::generator_parameters() {
  std::vector<torch::Tensor> out;
  for (auto& s : stages_) {
    auto p = s->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<torch::Tensor> CascadeModelImpl::critic_parameters() {
  std::vector<torch::Tensor> out;
  for (auto& c : critics_) {
    auto p = c->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  auto p = au_critic_->parameters();
  out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::vector<torch::Tensor> CascadeModelImpl::interp_parameters() { return interp_->parameters(); }

std::map<std::string, torch::Tensor> CascadeModelImpl::state() {
  std::map<std::string, torch::Tensor> out;
  for (const auto& item : named_parameters()) out[item.key()] = item.value();
  for (const auto& item : named_buffers()) out[item.key()] = item.value();
  return out;
}

CascadeModel make_model(const ModelConfig& config, std::uint64_t seed) {
  torch::manual_seed(seed);
  return CascadeModel(config);
}

void copy_state(CascadeModel& from, CascadeModel& to) {
  torch::NoGradGuard no_grad;
  auto src = from->state();
  for (auto& [name, dst] : to->state()) {
    auto it = src.find(name);
    if (it != src.end() && it->second.sizes() == dst.sizes()) dst.copy_(it->second);
  }
}

std::vector<StageOutput> cascade_forward(CascadeModel& model, const torch::Tensor& faces,
                                         const std::vector<torch::Tensor>& targets) {
  if (static_cast<int>(targets.size()) != model->n_stages()) {
    throw ConfigError("cascade_forward: need one target per stage");
  }
  std::vector<StageOutput> outs;
  outs.reserve(targets.size());
  torch::Tensor x = faces;
  for (int k = 0; k < model->n_stages(); ++k) {
    outs.push_back(model->stage(k)->forward(x, targets[k]));
    x = outs.back().refined;
  }
  return outs;
}

EditResult edit(CascadeModel& model, const torch::Tensor& faces, const torch::Tensor& source_aus,
                const torch::Tensor& target_aus) {
  const auto batch = faces.dim() == 3 ? faces.unsqueeze(0) : faces;
  const int c = model->config().generator.au_dim;
  if (source_aus.size(-1) != c || target_aus.size(-1) != c) {
    throw_shape("edit", "AU vectors must have length " + std::to_string(c));
  }
  torch::NoGradGuard no_grad;
  EvalScope eval(*model);
  const auto n = batch.size(0);
  const auto y_x = batch_aus(source_aus.to(batch.dtype()), n);
  const auto y_z = batch_aus(target_aus.to(batch.dtype()), n);
  auto interp = model->interp();
  EditResult out;
  out.targets = stage_targets(y_x, y_z, model->n_stages(), interp);
  auto stages = cascade_forward(model, batch, out.targets);
  for (size_t k = 0; k + 1 < stages.size(); ++k) out.intermediates.push_back(stages[k].refined);
  out.final = stages.back().refined;
  return out;
}

std::vector<torch::Tensor> continuous_edit(CascadeModel& model, const torch::Tensor& face,
                                           const torch::Tensor& source_aus, const torch::Tensor& target_aus,
                                           int n_frames) {
  if (n_frames < 2) throw ConfigError("continuous_edit: n_frames must be >= 2");
  std::vector<torch::Tensor> frame_targets;
  {
    torch::NoGradGuard no_grad;
    EvalScope eval(*model);
    auto interp = model->interp();
    frame_targets = stage_targets(source_aus, target_aus, n_frames, interp);
  }
  std::vector<torch::Tensor> frames;
  for (const auto& t : frame_targets) frames.push_back(edit(model, face, source_aus, t).final);
  return frames;
}

CascadeModel init_cascade_from_pretrained(CascadeModel& pretrained, int n_stages) {
  if (n_stages < 1) throw ConfigError("init_cascade_from_pretrained: n_stages must be >= 1");
  ModelConfig cfg = pretrained->config();
  cfg.n_stages = n_stages;
  CascadeModel cascade(cfg);
  torch::NoGradGuard no_grad;
  auto src = pretrained->state();
  const std::string first = stage_key(0) + ".";
  const std::string first_critic = "critic." + stage_key(0) + ".";
  for (auto& [name, dst] : cascade->state()) {
    std::string from = name;
    if (name.rfind("stage", 0) == 0) {
      from = first + name.substr(name.find('.') + 1);
    } else if (name.rfind("critic.stage", 0) == 0) {
      const auto rest = name.substr(std::string("critic.").size());
      from = first_critic + rest.substr(rest.find('.') + 1);
    }
    auto it = src.find(from);
    if (it == src.end() || it->second.sizes() != dst.sizes()) {
      throw ConfigError("init_cascade_from_pretrained: pretrained model lacks " + from);
    }
    dst.copy_(it->second);
  }
  cascade->train(pretrained->is_training());
  return cascade;
}

}  // namespace efgan
