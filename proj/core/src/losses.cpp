#include "efgan/losses.hpp"

#include <cmath>

#include <torch/torch.h>

#include "efgan/errors.hpp"

namespace efgan {

void validate(const LossWeights& w) {
  for (double v : {w.cond, w.cont, w.attn, w.interp, w.gp, w.interp_adv}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("LossWeights: weights must be finite and >= 0");
  }
}

torch::Tensor gradient_penalty(const ScoreFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               double lambda_gp) {
  if (real.dim() < 1) throw_shape("gradient_penalty", "samples need a batch dimension");
  const auto eps = torch::rand({real.size(0)}, real.options().requires_grad(false));
  return gradient_penalty(critic, real, fake, lambda_gp, eps);
}

torch::Tensor gradient_penalty(const ScoreFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               double lambda_gp, const torch::Tensor& epsilon) {
  if (real.sizes() != fake.sizes()) throw_shape("gradient_penalty", "real and fake differ in shape");
  if (epsilon.dim() != 1 || epsilon.size(0) != real.size(0)) {
    throw_shape("gradient_penalty", "epsilon must be [N]");
  }
  std::vector<int64_t> bshape(real.dim(), 1);
  bshape[0] = real.size(0);
  const auto e = epsilon.to(real.dtype()).view(bshape);
  auto mixed = (e * real.detach() + (1 - e) * fake.detach()).requires_grad_(true);
  const auto scores = critic(mixed);
  if (!scores.requires_grad()) {
    throw ValidationError("gradient_penalty: critic output is not differentiable w.r.t. its input");
  }
  const auto grad = torch::autograd::grad({scores.sum()}, {mixed}, {}, /*retain_graph=*/true,
                                          /*create_graph=*/true, /*allow_unused=*/true)[0];
  if (!grad.defined()) throw ValidationError("gradient_penalty: critic output does not depend on its input");
  const auto norms = grad.reshape({grad.size(0), -1}).norm(2, 1);
  return lambda_gp * (norms - 1).pow(2).mean();
}

CriticLoss critic_loss(std::span<const CriticTerm> terms, double lambda_gp) {
  CriticLoss out;
  for (const auto& t : terms) {
    auto term = -t.critic(t.real).mean() + t.critic(t.fake.detach()).mean();
    if (lambda_gp > 0.0) term = term + gradient_penalty(t.critic, t.real, t.fake, lambda_gp);
    out.total = out.total.defined() ? out.total + term : term;
    out.per_critic[t.name] = term;
  }
  if (!out.total.defined()) out.total = torch::zeros({});
  return out;
}

std::vector<CriticTerm> critic_terms(CriticSet& critics, const Focuses<torch::Tensor>& reals,
                                     const StageOutput& fakes) {
  std::vector<CriticTerm> terms;
  for (CriticId id : kCriticIds) {
    ScoreFn fn = [critics, id](const torch::Tensor& x) mutable { return critics->forward(id, x).realness; };
    torch::Tensor real;
    torch::Tensor fake;
    switch (id) {
      case CriticId::final:
        real = reals.face;
        fake = fakes.refined;
        break;
      case CriticId::face:
        real = reals.face;
        fake = fakes.init.face;
        break;
      case CriticId::eyes:
        real = reals.eyes;
        fake = fakes.init.eyes;
        break;
      case CriticId::nose:
        real = reals.nose;
        fake = fakes.init.nose;
        break;
      case CriticId::mouth:
        real = reals.mouth;
        fake = fakes.init.mouth;
        break;
    }
    terms.push_back({std::string(critic_name(id)), std::move(fn), real, fake});
  }
  return terms;
}

torch::Tensor generator_adv_loss(CriticSet& critics, const StageOutput& fakes,
                                 std::map<std::string, torch::Tensor>* per_critic) {
  torch::Tensor total;
  for (CriticId id : kCriticIds) {
    const torch::Tensor& fake = id == CriticId::final  ? fakes.refined
                                : id == CriticId::face ? fakes.init.face
                                : id == CriticId::eyes ? fakes.init.eyes
                                : id == CriticId::nose ? fakes.init.nose
                                                       : fakes.init.mouth;
    auto term = -critics->forward(id, fake).realness.mean();
    if (per_critic) (*per_critic)[std::string(critic_name(id))] = term;
    total = total.defined() ? total + term : term;
  }
  return total;
}

ConditionalTerms conditional_expression_loss(const torch::Tensor& au_pred_real, const torch::Tensor& source_aus,
                                             const torch::Tensor& au_pred_fake, const torch::Tensor& target_aus) {
  if (au_pred_real.sizes() != source_aus.sizes() || au_pred_fake.sizes() != target_aus.sizes()) {
    throw_shape("conditional_expression_loss", "AU prediction and label lengths differ");
  }
  return {(au_pred_real - source_aus).pow(2).mean(), (au_pred_fake - target_aus).pow(2).mean()};
}

torch::Tensor content_loss(const torch::Tensor& reconstruction, const torch::Tensor& original) {
  if (reconstruction.sizes() != original.sizes()) throw_shape("content_loss", "images differ in shape");
  return (reconstruction - original).abs().mean();
}

torch::Tensor attention_sparsity_loss(const Focuses<BranchOutput>& raw) {
  torch::Tensor total;
  for (Branch b : kBranches) {
    auto term = raw[b].attention.pow(2).mean();
    total = total.defined() ? total + term : term;
  }
  return total;
}

torch::Tensor interpolation_loss(const torch::Tensor& interpolated, const torch::Tensor& pseudo,
                                 const ScoreFn& au_critic, double lambda_int) {
  if (interpolated.sizes() != pseudo.sizes() || interpolated.dim() != 2) {
    throw_shape("interpolation_loss", "expected matching [N, c] AU batches");
  }
  auto regression = torch::linalg_vector_norm(interpolated - pseudo, 2, {1}).mean();
  if (lambda_int == 0.0) return regression;
  return regression + lambda_int * (-au_critic(interpolated).mean());
}

torch::Tensor au_critic_loss(const ScoreFn& au_critic, const torch::Tensor& real_aus, const torch::Tensor& fake_aus,
                             double lambda_gp) {
  auto loss = -au_critic(real_aus).mean() + au_critic(fake_aus.detach()).mean();
  if (lambda_gp > 0.0) loss = loss + gradient_penalty(au_critic, real_aus, fake_aus, lambda_gp);
  return loss;
}

torch::Tensor weighted_total(const LossTerms& t, const LossWeights& w) {
  return t.adv + w.cond * t.cond + w.cont * t.cont + w.attn * t.attn + w.interp * t.interp;
}

LossReport total_loss(LossReport c, const LossWeights& w) {
  const std::pair<const char*, double> named[] = {
      {"adv", c.adv}, {"cond", c.cond}, {"cont", c.cont}, {"attn", c.attn}, {"interp", c.interp}};
  for (const auto& [name, v] : named) {
    if (!std::isfinite(v)) throw ValidationError(std::string("total_loss: non-finite ") + name + " term");
  }
  c.total = c.adv + w.cond * c.cond + w.cont * c.cont + w.attn * c.attn + w.interp * c.interp;
  return c;
}

LossReport total_loss(const LossTerms& t, const LossWeights& w) {
  auto value = [](const torch::Tensor& x) { return x.defined() ? x.detach().item<double>() : 0.0; };
  LossReport r;
  r.adv = value(t.adv);
  r.cond = value(t.cond);
  r.cont = value(t.cont);
  r.attn = value(t.attn);
  r.interp = value(t.interp);
  for (const auto& [name, v] : t.per_critic) r.per_critic[name] = value(v);
  return total_loss(r, w);
}

double cascade_total_loss(std::span<const LossReport> reports) {
  double sum = 0.0;
  for (const auto& r : reports) sum += r.total;
  return sum;
}

}  // namespace efgan
