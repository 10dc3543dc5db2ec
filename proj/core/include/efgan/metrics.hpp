#pragma once

#include <functional>

#include <torch/types.h>

namespace efgan {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(max_value^2 / MSE) in dB, capped at `cap` (identical inputs give `cap`).
double psnr(const torch::Tensor& a, const torch::Tensor& b, double max_value, double cap = kPsnrCap);

/// Mean and covariance of a feature distribution (double precision).
struct GaussianStats {
  torch::Tensor mean;  ///< [D]
  torch::Tensor cov;   ///< [D, D]
};

/// Negative eigenvalues of the covariances down to -kPsdTolerance * max(1, |lambda_max|)
/// are treated as rounding noise; anything below is rejected.
inline constexpr double kPsdTolerance = 1e-6;

/// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)). The square-root
/// trace is taken from the eigenvalues of sqrt(S_a) S_b sqrt(S_a), clipped at 0.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// Maps a batch of images [N,3,H,W] to feature vectors [N,D].
using FeatureExtractor = std::function<torch::Tensor(const torch::Tensor&)>;

/// Sample mean and unbiased covariance of feature rows [N, D], N >= 2.
GaussianStats stats_from_features(const torch::Tensor& features);
GaussianStats feature_stats(const torch::Tensor& images, const FeatureExtractor& extractor);

}  // namespace efgan
