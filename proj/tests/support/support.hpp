#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "efgan/config.hpp"
#include "efgan/model.hpp"
#include "efgan/regions.hpp"

namespace efgan::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("efgan_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline RegionLayout centered_layout(int size) {
  RegionCenters c;
  c.eyes = {size * 0.5, size * 0.40};
  c.nose = {size * 0.5, size * 0.56};
  c.mouth = {size * 0.5, size * 0.74};
  return layout_from_centers(size, c);
}

/// Small enough that every parameter group stays under 1k entries.
inline ModelConfig tiny_config(int au_dim = 2, int size = 32, int n_stages = 1) {
  ModelConfig m;
  m.generator.au_dim = au_dim;
  m.generator.image_size = size;
  m.generator.base_channels = 2;
  m.generator.n_down = 0;
  m.generator.global_blocks = 0;
  m.generator.local_blocks = 0;
  m.generator.refiner_blocks = 0;
  m.generator.stem_kernel = 3;
  m.generator.head_kernel = 3;
  m.critic.au_dim = au_dim;
  m.critic.image_size = size;
  m.critic.base_channels = 2;
  m.critic.face_depth = 1;
  m.critic.local_depth = 1;
  m.critic.au_hidden = 8;
  m.interp.au_dim = au_dim;
  m.interp.hidden = 8;
  m.layout = centered_layout(size);
  m.n_stages = n_stages;
  return m;
}

/// The reduced architecture used for the synthetic end-to-end runs.
inline ModelConfig toy_config(const RegionLayout& layout, int au_dim = 4) {
  ModelConfig m;
  m.generator.au_dim = m.critic.au_dim = m.interp.au_dim = au_dim;
  m.generator.image_size = m.critic.image_size = layout.image_size;
  m.generator.base_channels = 8;
  m.generator.n_down = 2;
  m.generator.global_blocks = 2;
  m.generator.local_blocks = 1;
  m.generator.refiner_blocks = 1;
  m.critic.base_channels = 8;
  m.critic.face_depth = 4;
  m.critic.local_depth = 2;
  m.critic.au_hidden = 32;
  m.interp.hidden = 32;
  m.layout = layout;
  return m;
}

inline torch::Tensor random_faces(int64_t n, int64_t size, torch::Dtype dtype = torch::kFloat) {
  return torch::rand({n, 3, size, size}, torch::TensorOptions().dtype(dtype)) * 2 - 1;
}

struct GradCheck {
  double relative_error = 0.0;  ///< ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||)
  double analytic_norm = 0.0;
  int64_t n_params = 0;
};

/// Central differences of a scalar function of `params` (double tensors,
/// perturbed in place) against autograd.
inline GradCheck grad_check(const std::function<torch::Tensor()>& f, const std::vector<torch::Tensor>& params,
                            double h = 1e-6) {
  GradCheck out;
  auto value = f();
  auto grads = torch::autograd::grad({value}, params, {}, false, false, /*allow_unused=*/true);
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  torch::NoGradGuard no_grad;
  for (size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i].defined() ? grads[i] : torch::zeros_like(p);
    auto flat = p.view(-1);
    auto gflat = g.reshape(-1);
    for (int64_t j = 0; j < flat.numel(); ++j) {
      const double orig = flat[j].item<double>();
      flat[j] = orig + h;
      const double up = f().item<double>();
      flat[j] = orig - h;
      const double down = f().item<double>();
      flat[j] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = gflat[j].item<double>();
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    out.n_params += flat.numel();
  }
  const double denom = std::sqrt(std::max(a2, n2));
  out.relative_error = denom > 0 ? std::sqrt(diff2) / denom : 0.0;
  out.analytic_norm = std::sqrt(a2);
  return out;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace efgan::testing
