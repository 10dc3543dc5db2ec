#include "efgan/classifier.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string_view>

#include <torch/torch.h>

#include "efgan/errors.hpp"

namespace efgan {

namespace {

inline constexpr int kBlocks = 4;

}  // namespace

ExpressionClassifierImpl::ExpressionClassifierImpl(int n_classes, int base_channels) : n_classes_(n_classes) {
  if (n_classes < 1 || base_channels < 1) throw ConfigError("classifier: n_classes and base_channels must be >= 1");
  torch::nn::Sequential trunk;
  int64_t in = 3;
  for (int i = 0; i < kBlocks; ++i) {
    const int64_t out = int64_t(base_channels) << i;
    trunk->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)));
    trunk->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
    trunk->push_back(torch::nn::AvgPool2d(torch::nn::AvgPool2dOptions(2).ceil_mode(true)));
    in = out;
  }
  trunk->push_back(torch::nn::AdaptiveAvgPool2d(torch::nn::AdaptiveAvgPool2dOptions(1)));
  trunk->push_back(torch::nn::Flatten());
  trunk_ = register_module("trunk", trunk);
  head_ = register_module("head", torch::nn::Linear(in, n_classes));
}

torch::Tensor ExpressionClassifierImpl::features(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) throw_shape("classifier", "expected [N, 3, H, W] images");
  return trunk_->forward(images);
}

torch::Tensor ExpressionClassifierImpl::forward(const torch::Tensor& images) { return head_(features(images)); }

LabeledImages concat(const LabeledImages& a, const LabeledImages& b) {
  LabeledImages out;
  out.images = torch::cat({a.images, b.images}, 0);
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

std::vector<std::string> label_names(const Dataset& data) {
  std::set<std::string> names;
  for (size_t i = 0; i < data.manifest.records.size(); ++i) {
    const auto& label = data.manifest.records[i].expression_label;
    if (!label) throw ValidationError("record " + std::to_string(i) + " has no expression_label");
    names.insert(*label);
  }
  return {names.begin(), names.end()};
}

LabeledImages labeled_images(const Dataset& data, const std::vector<std::string>& names) {
  LabeledImages out;
  out.images = data.images;
  for (size_t i = 0; i < data.manifest.records.size(); ++i) {
    const auto& label = data.manifest.records[i].expression_label;
    if (!label) throw ValidationError("record " + std::to_string(i) + " has no expression_label");
    auto it = std::find(names.begin(), names.end(), *label);
    if (it == names.end()) throw ValidationError("record " + std::to_string(i) + ": unknown label " + *label);
    out.labels.push_back(it - names.begin());
  }
  return out;
}

namespace {

void check_labeled(const LabeledImages& d, int n_classes, const char* what) {
  if (!d.images.defined() || d.images.dim() != 4 || d.images.size(0) != d.size()) {
    throw_shape("classifier", std::string(what) + ": images and labels disagree");
  }
  for (auto l : d.labels) {
    if (l < 0 || l >= n_classes) throw ValidationError(std::string(what) + ": label out of range");
  }
}

std::vector<int64_t> canonical_order(const LabeledImages& d) {
  const auto images = d.images.to(torch::kFloat).contiguous();
  const int64_t stride = images[0].numel();
  const float* data = images.data_ptr<float>();
  std::vector<std::pair<std::size_t, int64_t>> keyed;
  for (int64_t i = 0; i < d.size(); ++i) {
    std::string_view bytes(reinterpret_cast<const char*>(data + i * stride), stride * sizeof(float));
    keyed.emplace_back(std::hash<std::string_view>{}(bytes) ^ (std::size_t(d.labels[i]) * 0x9e3779b97f4a7c15ULL), i);
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<int64_t> order;
  for (const auto& [key, i] : keyed) order.push_back(i);
  return order;
}

}  // namespace

ExpressionClassifier train_classifier(const LabeledImages& train, int n_classes, const ClassifierConfig& config) {
  check_labeled(train, n_classes, "train_classifier");
  if (train.size() == 0) throw ValidationError("train_classifier: empty training set");
  torch::manual_seed(config.seed);
  ExpressionClassifier model(n_classes, config.base_channels);
  torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(config.lr));
  std::mt19937_64 rng(config.seed);

  auto order = canonical_order(train);
  const auto labels = torch::tensor(train.labels, torch::kLong);
  const auto images = train.images.to(torch::kFloat);
  model->train();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t end = std::min(order.size(), start + size_t(config.batch_size));
      auto idx = torch::tensor(std::vector<int64_t>(order.begin() + start, order.begin() + end), torch::kLong);
      opt.zero_grad();
      auto loss = torch::nn::functional::cross_entropy(model->forward(images.index_select(0, idx)),
                                                       labels.index_select(0, idx));
      loss.backward();
      opt.step();
    }
  }
  model->eval();
  return model;
}

double classification_accuracy(ExpressionClassifier& classifier, const LabeledImages& test) {
  check_labeled(test, classifier->n_classes(), "classification_accuracy");
  if (test.size() == 0) throw ValidationError("classification_accuracy: empty test set");
  torch::NoGradGuard no_grad;
  classifier->eval();
  auto pred = classifier->forward(test.images.to(torch::kFloat)).argmax(1);
  auto truth = torch::tensor(test.labels, torch::kLong);
  return pred.eq(truth).to(torch::kDouble).mean().item<double>();
}

FeatureExtractor feature_extractor(ExpressionClassifier classifier) {
  return [classifier](const torch::Tensor& images) mutable {
    torch::NoGradGuard no_grad;
    classifier->eval();
    return classifier->features(images.to(torch::kFloat));
  };
}

double classification_protocol(const LabeledImages& real_train, const LabeledImages& real_test,
                               const LabeledImages& generated, ProtocolMode mode, int n_classes,
                               const ClassifierConfig& config) {
  switch (mode) {
    case ProtocolMode::real: {
      auto clf = train_classifier(real_train, n_classes, config);
      return classification_accuracy(clf, real_test);
    }
    case ProtocolMode::generated: {
      auto clf = train_classifier(real_train, n_classes, config);
      return classification_accuracy(clf, generated);
    }
    case ProtocolMode::real_plus_generated: {
      auto clf = train_classifier(concat(real_train, generated), n_classes, config);
      return classification_accuracy(clf, real_test);
    }
  }
  throw ConfigError("classification_protocol: unknown mode");
}

}  // namespace efgan
