#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <torch/types.h>

#include "efgan/critics.hpp"
#include "efgan/generator.hpp"

namespace efgan {

/// Weights of the overall objective. `cond`, `cont`, `attn`, `interp` are
/// lambda_1..lambda_4; `gp` weights every gradient penalty; `interp_adv`
/// weights the AU critic term inside the interpolation loss.
struct LossWeights {
  double cond = 3000.0;
  double cont = 10.0;
  double attn = 0.1;
  double interp = 1.0;
  double gp = 10.0;
  double interp_adv = 0.1;

  bool operator==(const LossWeights&) const = default;
};

void validate(const LossWeights& weights);

/// Unweighted scalar loss components of one EF-GAN stage (generator side).
struct LossTerms {
  torch::Tensor adv;
  torch::Tensor cond;
  torch::Tensor cont;
  torch::Tensor attn;
  torch::Tensor interp;
  std::map<std::string, torch::Tensor> per_critic;  ///< generator-side adversarial term per critic
};

struct LossReport {
  double adv = 0.0;
  double cond = 0.0;
  double cont = 0.0;
  double attn = 0.0;
  double interp = 0.0;
  double total = 0.0;
  std::map<std::string, double> per_critic;
};

/// Scalar score per sample, [N] from [N, ...].
using ScoreFn = std::function<torch::Tensor(const torch::Tensor&)>;

/// lambda_gp * mean_n (||grad D(x~_n)||_2 - 1)^2 with x~ = eps*real + (1-eps)*fake,
/// eps ~ U[0,1] per sample. The graph is kept so the penalty can be
/// back-propagated into the critic.
torch::Tensor gradient_penalty(const ScoreFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               double lambda_gp);
/// Same with caller-chosen interpolation coefficients ([N]).
torch::Tensor gradient_penalty(const ScoreFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               double lambda_gp, const torch::Tensor& epsilon);

struct CriticTerm {
  std::string name;
  ScoreFn critic;
  torch::Tensor real;
  torch::Tensor fake;
};

struct CriticLoss {
  torch::Tensor total;
  std::map<std::string, torch::Tensor> per_critic;
};

/// sum_i [ -E D_i(real_i) + E D_i(fake_i) + GP_i ], minimized by the critics.
CriticLoss critic_loss(std::span<const CriticTerm> terms, double lambda_gp);

/// The five image critics against real faces/crops and a stage's synthesized
/// outputs: final <-> refined, face/eyes/nose/mouth <-> initial outputs.
std::vector<CriticTerm> critic_terms(CriticSet& critics, const Focuses<torch::Tensor>& reals,
                                     const StageOutput& fakes);

/// -sum_i E D_i(fake_i), the generator side of the adversarial game.
torch::Tensor generator_adv_loss(CriticSet& critics, const StageOutput& fakes,
                                 std::map<std::string, torch::Tensor>* per_critic = nullptr);

struct ConditionalTerms {
  torch::Tensor d_term;  ///< mean ||D_final(I_x) - y_x||^2, trains D_final
  torch::Tensor g_term;  ///< mean ||D_final(I_z) - y_z||^2, trains the generator
};

/// Squared AU-regression errors, averaged over batch and AU dimensions.
ConditionalTerms conditional_expression_loss(const torch::Tensor& au_pred_real, const torch::Tensor& source_aus,
                                             const torch::Tensor& au_pred_fake, const torch::Tensor& target_aus);

/// Mean absolute difference between reconstruction and original.
torch::Tensor content_loss(const torch::Tensor& reconstruction, const torch::Tensor& original);

/// Sum over the four branches of the mean squared attention value.
torch::Tensor attention_sparsity_loss(const Focuses<BranchOutput>& branch_raw);

/// Batch mean of ||y_hat - y_p||_2 plus lambda_int * (-E D_interp(y_hat)).
torch::Tensor interpolation_loss(const torch::Tensor& interpolated, const torch::Tensor& pseudo,
                                 const ScoreFn& au_critic, double lambda_int);

/// Critic side of the AU adversary: -E D(real) + E D(fake) + GP.
torch::Tensor au_critic_loss(const ScoreFn& au_critic, const torch::Tensor& real_aus, const torch::Tensor& fake_aus,
                             double lambda_gp);

/// adv + w.cond*cond + w.cont*cont + w.attn*attn + w.interp*interp as a tensor.
torch::Tensor weighted_total(const LossTerms& terms, const LossWeights& weights);

/// Evaluate the components and assemble a report; throws ValidationError
/// naming the first non-finite component.
LossReport total_loss(const LossTerms& terms, const LossWeights& weights);
LossReport total_loss(LossReport components, const LossWeights& weights);

/// Equal-weight sum of stage totals.
double cascade_total_loss(std::span<const LossReport> reports);

}  // namespace efgan
