#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/sequential.h>
#include <torch/nn/modules/linear.h>
#include <torch/nn/pimpl.h>

#include "efgan/manifest.hpp"
#include "efgan/metrics.hpp"

namespace efgan {

struct ClassifierConfig {
  int base_channels = 16;
  int epochs = 20;
  int batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Four conv blocks (conv 3x3, leaky ReLU, 2x2 average pool), global average
/// pooling and a linear softmax head.
class ExpressionClassifierImpl : public torch::nn::Module {
 public:
  ExpressionClassifierImpl(int n_classes, int base_channels);

  torch::Tensor forward(const torch::Tensor& images);   ///< logits [N, n_classes]
  torch::Tensor features(const torch::Tensor& images);  ///< penultimate features [N, 8 * base]
  int n_classes() const { return n_classes_; }

 private:
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Linear head_{nullptr};
  int n_classes_;
};
TORCH_MODULE(ExpressionClassifier);

struct LabeledImages {
  torch::Tensor images;  ///< [N, 3, H, W]
  std::vector<int64_t> labels;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
};

LabeledImages concat(const LabeledImages& a, const LabeledImages& b);

/// Sorted distinct expression labels; ValidationError if any record lacks one.
std::vector<std::string> label_names(const Dataset& data);
LabeledImages labeled_images(const Dataset& data, const std::vector<std::string>& names);

/// Cross-entropy training with Adam. Samples are put in a content-defined
/// order before the seeded per-epoch shuffle, so the result does not depend
/// on the order of the input records.
ExpressionClassifier train_classifier(const LabeledImages& train, int n_classes, const ClassifierConfig& config);

double classification_accuracy(ExpressionClassifier& classifier, const LabeledImages& test);

FeatureExtractor feature_extractor(ExpressionClassifier classifier);

enum class ProtocolMode { real, generated, real_plus_generated };

/// R: train on real_train, test on real_test. G: the same classifier tested on
/// `generated`. R+G: train on real_train + generated, test on real_test.
double classification_protocol(const LabeledImages& real_train, const LabeledImages& real_test,
                               const LabeledImages& generated, ProtocolMode mode, int n_classes,
                               const ClassifierConfig& config);

}  // namespace efgan
