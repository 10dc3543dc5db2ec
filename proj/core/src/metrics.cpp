#include "efgan/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <torch/torch.h>

#include "efgan/errors.hpp"

namespace efgan {

double psnr(const torch::Tensor& a, const torch::Tensor& b, double max_value, double cap) {
  if (a.sizes() != b.sizes()) throw_shape("psnr", "images must have the same shape");
  if (!(max_value > 0.0)) throw ValidationError("psnr: max_value must be positive");
  const double mse = (a.to(torch::kDouble) - b.to(torch::kDouble)).pow(2).mean().item<double>();
  if (mse == 0.0) return cap;
  return std::min(cap, 10.0 * std::log10(max_value * max_value / mse));
}

namespace {

void check_stats(const GaussianStats& s, const char* which) {
  if (s.mean.dim() != 1 || s.cov.dim() != 2 || s.cov.size(0) != s.mean.size(0) || s.cov.size(1) != s.mean.size(0)) {
    throw_shape("frechet_distance", std::string(which) + ": expected mean [D] and covariance [D, D]");
  }
}

torch::Tensor symmetric_eigenvalues(const torch::Tensor& m, const char* which) {
  auto sym = 0.5 * (m + m.transpose(0, 1));
  auto evals = torch::linalg_eigvalsh(sym);
  const double top = std::max(1.0, evals.abs().max().item<double>());
  if (evals.min().item<double>() < -kPsdTolerance * top) {
    throw ValidationError(std::string("frechet_distance: ") + which + " covariance is not positive semidefinite");
  }
  return evals.clamp_min(0.0);
}

torch::Tensor psd_sqrt(const torch::Tensor& m) {
  auto [evals, evecs] = torch::linalg_eigh(0.5 * (m + m.transpose(0, 1)));
  return evecs.matmul(torch::diag(evals.clamp_min(0.0).sqrt())).matmul(evecs.transpose(0, 1));
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  check_stats(a, "first");
  check_stats(b, "second");
  if (a.mean.size(0) != b.mean.size(0)) throw_shape("frechet_distance", "feature dimensions differ");
  const auto mu_a = a.mean.to(torch::kDouble), mu_b = b.mean.to(torch::kDouble);
  const auto s_a = a.cov.to(torch::kDouble), s_b = b.cov.to(torch::kDouble);
  symmetric_eigenvalues(s_a, "first");
  symmetric_eigenvalues(s_b, "second");

  const auto root_a = psd_sqrt(s_a);
  const auto product = root_a.matmul(s_b).matmul(root_a);
  const double cross = symmetric_eigenvalues(product, "product").sqrt().sum().item<double>();
  const double mean_term = (mu_a - mu_b).pow(2).sum().item<double>();
  const double d = mean_term + s_a.trace().item<double>() + s_b.trace().item<double>() - 2.0 * cross;
  return d;
}

GaussianStats stats_from_features(const torch::Tensor& features) {
  if (features.dim() != 2) throw_shape("feature_stats", "features must be [N, D]");
  if (features.size(0) < 2) throw ValidationError("feature_stats: need at least 2 images");
  const auto f = features.to(torch::kDouble);
  GaussianStats s;
  s.mean = f.mean(0);
  const auto centered = f - s.mean;
  s.cov = centered.transpose(0, 1).matmul(centered) / double(f.size(0) - 1);
  return s;
}

GaussianStats feature_stats(const torch::Tensor& images, const FeatureExtractor& extractor) {
  if (images.dim() != 4) throw_shape("feature_stats", "images must be [N, C, H, W]");
  if (images.size(0) < 2) throw ValidationError("feature_stats: need at least 2 images");
  torch::NoGradGuard no_grad;
  return stats_from_features(extractor(images));
}

}  // namespace efgan
