#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "efgan/classifier.hpp"
#include "efgan/manifest.hpp"
#include "efgan/model.hpp"

namespace efgan {

/// Every ordered (source, target) record pair of the same identity with source != target.
std::vector<std::pair<int64_t, int64_t>> same_identity_pairs(const Dataset& data);

/// Cascade edits of each pair's source toward its target's AUs, [P, 3, S, S].
torch::Tensor generate_edits(CascadeModel& model, const Dataset& data,
                             const std::vector<std::pair<int64_t, int64_t>>& pairs, int batch_size = 16);

/// Mean absolute error between edits and ground-truth target images.
double paired_l1(CascadeModel& model, const Dataset& data, const std::vector<std::pair<int64_t, int64_t>>& pairs);

struct EvalOptions {
  bool psnr = true;
  bool fid = true;
  bool cls = true;
  int holdout_identities = 1;  ///< identities forming the classification test split
  ClassifierConfig classifier;
};

struct EvalReport {
  int64_t n_pairs = 0;
  std::optional<double> psnr;  ///< mean over same-identity pairs, dB on [-1, 1] images
  std::optional<double> fid;
  std::optional<double> acc_r;
  std::optional<double> acc_g;
  std::optional<double> acc_rg;
  int n_classes = 0;
};

/// PSNR against same-identity ground truth; Frechet distance between real
/// images and edits in classifier feature space; R / G / R+G accuracies with
/// the last `holdout_identities` identities as the real test split and the
/// edits of those identities as the generated set.
EvalReport evaluate(CascadeModel& model, const Dataset& data, const EvalOptions& options);

std::string to_json_string(const EvalReport& report);

}  // namespace efgan
