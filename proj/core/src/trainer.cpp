#include "efgan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include <torch/torch.h>

#include "efgan/errors.hpp"

namespace efgan {

using torch::Tensor;

double lr_at(double epoch, const TrainConfig& c) {
  if (!(epoch >= 0.0 && epoch <= c.epochs)) {
    throw ConfigError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(c.epochs) + "]");
  }
  if (epoch <= c.lr_decay_start_epoch) return c.lr;
  if (epoch == c.epochs) return 0.0;
  return c.lr * ((c.epochs - epoch) / double(c.epochs - c.lr_decay_start_epoch));
}

double finetune_lr_at(double epoch, const TrainConfig& c) {
  if (!(epoch >= 0.0 && epoch <= c.finetune_epochs)) {
    throw ConfigError("finetune_lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                      std::to_string(c.finetune_epochs) + "]");
  }
  if (epoch == c.finetune_epochs) return 0.0;
  return c.finetune_lr * ((c.finetune_epochs - epoch) / double(c.finetune_epochs));
}

Batch make_batch(const Dataset& data, const std::vector<int64_t>& sources, const std::vector<int64_t>& targets) {
  if (sources.size() != targets.size() || sources.empty()) {
    throw ValidationError("make_batch: need equally many (>= 1) sources and targets");
  }
  auto src = torch::tensor(sources, torch::kLong);
  auto dst = torch::tensor(targets, torch::kLong);
  Batch b;
  b.source = data.images.index_select(0, src);
  b.target = data.images.index_select(0, dst);
  b.source_aus = data.aus.index_select(0, src);
  b.target_aus = data.aus.index_select(0, dst);
  b.source_index = sources;
  b.target_index = targets;
  return b;
}

PairSampler::PairSampler(const Dataset& data, std::uint64_t seed) : data_(&data), rng_(seed) {
  by_identity_.resize(data.identity_names.size());
  for (size_t i = 0; i < data.identity.size(); ++i) by_identity_.at(data.identity[i]).push_back(int64_t(i));
  for (const auto& group : by_identity_) {
    if (group.size() >= 2) pairable_.insert(pairable_.end(), group.begin(), group.end());
  }
  if (pairable_.empty()) throw ValidationError("PairSampler: no identity has two or more records");
}

Batch PairSampler::next(int batch_size) {
  if (batch_size < 1) throw ConfigError("PairSampler: batch_size must be >= 1");
  std::vector<int64_t> sources, targets;
  for (int i = 0; i < batch_size; ++i) {
    const int64_t s = pairable_[std::uniform_int_distribution<size_t>(0, pairable_.size() - 1)(rng_)];
    const auto& group = by_identity_[data_->identity[s]];
    int64_t t = s;
    while (t == s) t = group[std::uniform_int_distribution<size_t>(0, group.size() - 1)(rng_)];
    sources.push_back(s);
    targets.push_back(t);
  }
  return make_batch(*data_, sources, targets);
}

namespace {

nlohmann::json report_json(const LossReport& r) {
  return {{"adv", r.adv},   {"cond", r.cond},   {"cont", r.cont},
          {"attn", r.attn}, {"interp", r.interp}, {"total", r.total}, {"per_critic", r.per_critic}};
}

double scalar(const Tensor& t) { return t.defined() ? t.detach().item<double>() : 0.0; }

Tensor zero_like_loss(const Tensor& ref) { return torch::zeros({}, ref.options()); }

struct InterpTargets {
  std::vector<Tensor> pseudo;        ///< k = 1..m-1
  std::vector<Tensor> interpolated;  ///< with graph into the interpolator
};

InterpTargets interp_targets(CascadeModel& model, const Tensor& y_x, const Tensor& y_z, int m) {
  InterpTargets out;
  if (m < 2) return out;
  auto pseudo = pseudo_targets(y_x, y_z, m);
  auto interp = model->interp();
  for (int k = 0; k + 1 < m; ++k) {
    out.pseudo.push_back(pseudo[k]);
    out.interpolated.push_back(interp->forward(y_x, residual(pseudo[k], y_x)));
  }
  return out;
}

std::vector<Tensor> conditioning_targets(const InterpTargets& it, const Tensor& y_z, int n) {
  std::vector<Tensor> targets;
  for (int k = 0; k + 1 < n; ++k) targets.push_back(it.interpolated.at(k).detach());
  targets.push_back(y_z);
  return targets;
}

void set_requires_grad(const std::vector<Tensor>& params, bool on) {
  for (auto p : params) p.requires_grad_(on);
}

bool all_finite(const std::vector<Tensor>& params) {
  for (const auto& p : params) {
    if (!torch::isfinite(p).all().item<bool>()) return false;
  }
  return true;
}

class SetTraining {
 public:
  SetTraining(torch::nn::Module& m, bool on) : module_(m), was_(m.is_training()) { m.train(on); }
  ~SetTraining() { module_.train(was_); }
  SetTraining(const SetTraining&) = delete;
  SetTraining& operator=(const SetTraining&) = delete;

 private:
  torch::nn::Module& module_;
  bool was_;
};

}  // namespace

std::string to_json_line(const StepReport& r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  j["stages"] = nlohmann::json::array();
  for (const auto& s : r.stages) j["stages"].push_back(report_json(s));
  j["cascade_total"] = r.cascade_total;
  j["critic"] = {{"total", r.critic.total}, {"au", r.critic.au}, {"per_critic", r.critic.per_critic}};
  return j.dump();
}

std::vector<LossTerms> generator_loss_terms(CascadeModel& model, const Batch& batch, const LossWeights& weights,
                                            int interp_stages) {
  const int n = model->n_stages();
  const int m = n > 1 ? n : interp_stages;
  const auto& x = batch.source;
  const auto& y_x = batch.source_aus;
  const auto& y_z = batch.target_aus;

  auto it = interp_targets(model, y_x, y_z, std::max(m, n));
  const auto targets = conditioning_targets(it, y_z, n);
  auto outs = cascade_forward(model, x, targets);

  auto au_critic = model->au_critic();
  ScoreFn au_score = [&au_critic](const Tensor& a) { return au_critic->forward(a); };

  std::vector<LossTerms> terms(n);
  for (int k = 0; k < n; ++k) {
    auto critics = model->critics(k);
    auto& t = terms[k];
    t.adv = generator_adv_loss(critics, outs[k], &t.per_critic);
    auto au_fake = critics->forward(CriticId::final, outs[k].refined).au_pred.value();
    t.cond = (au_fake - targets[k]).pow(2).mean();
    t.attn = attention_sparsity_loss(outs[k].branch_raw);
    t.cont = zero_like_loss(t.adv);
    t.interp = zero_like_loss(t.adv);
  }

  // Reconstruction back to the source expression through the same stages.
  std::vector<Tensor> reverse;
  {
    torch::NoGradGuard no_grad;
    auto interp = model->interp();
    reverse = stage_targets(y_z, y_x, n, interp);
  }
  auto recon = cascade_forward(model, outs.back().refined, reverse).back().refined;
  terms.back().cont = content_loss(recon, x);

  if (!it.interpolated.empty()) {
    if (n > 1) {
      for (int k = 0; k + 1 < n; ++k) {
        terms[k].interp = interpolation_loss(it.interpolated[k], it.pseudo[k], au_score, weights.interp_adv);
      }
    } else {
      Tensor sum;
      for (size_t k = 0; k < it.interpolated.size(); ++k) {
        auto l = interpolation_loss(it.interpolated[k], it.pseudo[k], au_score, weights.interp_adv);
        sum = sum.defined() ? sum + l : l;
      }
      terms[0].interp = sum / double(it.interpolated.size());
    }
  }
  return terms;
}

std::vector<LossReport> probe_losses(CascadeModel& model, const Batch& batch, const TrainConfig& config) {
  SetTraining eval(*model, false);
  torch::NoGradGuard no_grad;
  auto terms = generator_loss_terms(model, batch, config.weights, config.n_stages);
  std::vector<LossReport> out;
  for (const auto& t : terms) out.push_back(total_loss(t, config.weights));
  return out;
}

Trainer::Trainer(CascadeModel model, const TrainConfig& config, const std::vector<Tensor>& natural_aus)
    : model_(std::move(model)),
      config_(config),
      generator_opt_(model_->generator_parameters(),
                     torch::optim::AdamOptions(config.lr).betas({config.adam_beta1, config.adam_beta2})),
      interp_opt_(model_->interp_parameters(),
                  torch::optim::AdamOptions(config.lr).betas({config.adam_beta1, config.adam_beta2})),
      critic_opt_(model_->critic_parameters(),
                  torch::optim::AdamOptions(config.lr).betas({config.adam_beta1, config.adam_beta2})),
      rng_(config.seed ^ 0x9e3779b97f4a7c15ULL),
      lr_(config.lr) {
  validate(config);
  if (natural_aus.empty()) throw ValidationError("Trainer: need at least one natural AU vector");
  natural_aus_ = torch::stack(natural_aus);
}

void Trainer::set_lr(double lr) {
  lr_ = lr;
  for (auto* opt : {&generator_opt_, &interp_opt_, &critic_opt_}) {
    for (auto& group : opt->param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

Tensor Trainer::sample_natural_aus(int64_t n) {
  std::vector<int64_t> idx;
  std::uniform_int_distribution<int64_t> pick(0, natural_aus_.size(0) - 1);
  for (int64_t i = 0; i < n; ++i) idx.push_back(pick(rng_));
  return natural_aus_.index_select(0, torch::tensor(idx, torch::kLong));
}

CriticReport Trainer::critic_step(const Batch& batch) {
  const int n = model_->n_stages();
  const int m = n > 1 ? n : config_.n_stages;
  const auto& w = config_.weights;

  std::vector<StageOutput> outs;
  std::vector<Tensor> fake_aus;
  {
    torch::NoGradGuard no_grad;
    auto it = interp_targets(model_, batch.source_aus, batch.target_aus, std::max(m, n));
    outs = cascade_forward(model_, batch.source, conditioning_targets(it, batch.target_aus, n));
    fake_aus = it.interpolated;
  }
  const auto reals = split_focuses(batch.source, model_->config().layout);

  critic_opt_.zero_grad();
  CriticReport report;
  Tensor total;
  for (int k = 0; k < n; ++k) {
    auto critics = model_->critics(k);
    auto terms = critic_terms(critics, reals, outs[k]);
    auto loss = critic_loss(terms, w.gp);
    auto au_real = critics->forward(CriticId::final, batch.source).au_pred.value();
    auto d_term = (au_real - batch.source_aus).pow(2).mean();
    auto stage_total = loss.total + w.cond * d_term;
    for (const auto& [name, v] : loss.per_critic) {
      report.per_critic["stage" + std::to_string(k + 1) + "." + name] = scalar(v);
    }
    total = total.defined() ? total + stage_total : stage_total;
  }
  report.total = scalar(total);

  Tensor au_loss;
  if (!fake_aus.empty()) {
    auto fakes = torch::cat(fake_aus, 0);
    auto au_critic = model_->au_critic();
    ScoreFn score = [&au_critic](const Tensor& a) { return au_critic->forward(a); };
    au_loss = au_critic_loss(score, sample_natural_aus(fakes.size(0)).to(fakes.dtype()), fakes, w.gp);
    report.au = scalar(au_loss);
    total = total + au_loss;
  }
  if (!std::isfinite(report.total) || !std::isfinite(report.au)) {
    throw DivergenceError("critic loss became non-finite", "");
  }
  total.backward();
  critic_opt_.step();
  return report;
}

StepReport Trainer::step(const Batch& batch) {
  SetTraining train(*model_, true);
  StepReport report;
  for (int i = 0; i < config_.critic_steps_per_gen; ++i) report.critic = critic_step(batch);

  auto critic_params = model_->critic_parameters();
  set_requires_grad(critic_params, false);
  generator_opt_.zero_grad();
  interp_opt_.zero_grad();
  std::vector<LossTerms> terms;
  Tensor total;
  try {
    terms = generator_loss_terms(model_, batch, config_.weights, config_.n_stages);
    for (const auto& t : terms) {
      auto wt = weighted_total(t, config_.weights);
      total = total.defined() ? total + wt : wt;
    }
    for (const auto& t : terms) report.stages.push_back(total_loss(t, config_.weights));
  } catch (const ValidationError& e) {
    set_requires_grad(critic_params, true);
    throw DivergenceError(std::string("generator loss: ") + e.what(), "");
  }
  total.backward();
  set_requires_grad(critic_params, true);
  generator_opt_.step();
  interp_opt_.step();

  if (!all_finite(model_->parameters())) throw DivergenceError("parameters became non-finite", "");
  report.cascade_total = cascade_total_loss(report.stages);
  report.lr = lr_;
  report.step = ++steps_;
  return report;
}

int64_t steps_per_epoch(const Dataset& data, const TrainConfig& config) {
  if (config.steps_per_epoch > 0) return config.steps_per_epoch;
  const int64_t n = data.images.size(0);
  return std::max<int64_t>(1, (n + config.batch_size - 1) / config.batch_size);
}

void check_compatible(const ModelConfig& model, const Dataset& data) {
  if (data.manifest.au_dim != model.generator.au_dim) {
    throw ConfigError("dataset AU dimension " + std::to_string(data.manifest.au_dim) + " does not match model (" +
                      std::to_string(model.generator.au_dim) + ")");
  }
  if (data.manifest.image_size != model.generator.image_size) {
    throw ConfigError("dataset image size " + std::to_string(data.manifest.image_size) + " does not match model (" +
                      std::to_string(model.generator.image_size) + ")");
  }
}

namespace {

using Schedule = double (*)(double, const TrainConfig&);

TrainResult run_training(CascadeModel model, const Dataset& train, const TrainConfig& config, int epochs,
                         Schedule schedule, const TrainOptions& options, const char* phase) {
  validate(config);
  check_compatible(model->config(), train);
  std::set<int64_t> ids(train.identity.begin(), train.identity.end());
  if (ids.size() < 2) throw ValidationError(std::string(phase) + ": training data needs >= 2 identities");

  torch::manual_seed(config.seed);
  PairSampler sampler(train, config.seed);
  std::vector<Tensor> natural;
  for (int64_t i = 0; i < train.aus.size(0); ++i) natural.push_back(train.aus[i]);
  Trainer trainer(model, config, natural);

  const int64_t spe = steps_per_epoch(train, config);
  const int64_t total = options.max_steps >= 0 ? options.max_steps : spe * epochs;

  std::ofstream log;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    save_run_config({model->config(), config, true}, options.out_dir / "config.json");
    log.open(options.out_dir / "train_log.jsonl");
    if (!log) throw IoError("cannot write " + (options.out_dir / "train_log.jsonl").string());
  }

  CascadeModel last_good(model->config());
  copy_state(model, last_good);
  auto dump_last_good = [&]() -> std::string {
    if (options.out_dir.empty()) return "";
    auto dir = options.out_dir / "last_good";
    save_checkpoint(last_good, dir, nlohmann::json{{"phase", phase}}.dump());
    return dir.string();
  };

  TrainResult result;
  for (int64_t s = 0; s < total; ++s) {
    const double epoch = std::min(double(s) / double(spe), double(epochs));
    trainer.set_lr(schedule(epoch, config));
    StepReport report;
    try {
      report = trainer.step(sampler.next(config.batch_size));
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(phase) + " step " + std::to_string(s + 1) + ": " + e.what(),
                            dump_last_good());
    }
    report.epoch = epoch;
    if (log) log << to_json_line(report) << '\n';
    if (options.on_step) options.on_step(report, model);
    result.log.push_back(std::move(report));
    if (config.checkpoint_every > 0 && (s + 1) % config.checkpoint_every == 0) copy_state(model, last_good);
  }
  result.steps = total;
  result.model = model;
  if (!options.out_dir.empty()) {
    nlohmann::json meta{{"phase", phase}, {"steps", total}, {"seed", config.seed}};
    save_checkpoint(model, options.out_dir / "checkpoint", meta.dump());
  }
  return result;
}

}  // namespace

TrainResult train_single_efgan(const Dataset& train, const ModelConfig& model_config, const TrainConfig& config,
                               const TrainOptions& options) {
  ModelConfig cfg = model_config;
  cfg.n_stages = 1;
  auto model = make_model(cfg, config.seed);
  return run_training(model, train, config, config.epochs, &lr_at, options, "pretrain");
}

TrainResult train_cascade(CascadeModel cascade, const Dataset& train, const TrainConfig& config,
                          const TrainOptions& options) {
  return run_training(cascade, train, config, config.finetune_epochs, &finetune_lr_at, options, "finetune");
}

}  // namespace efgan
