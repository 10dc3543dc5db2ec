#include "efgan/evaluation.hpp"

#include <algorithm>
#include <set>

#include <torch/torch.h>

#include "efgan/errors.hpp"
#include "efgan/metrics.hpp"
#include "efgan/trainer.hpp"
#include "json.hpp"

namespace efgan {

std::vector<std::pair<int64_t, int64_t>> same_identity_pairs(const Dataset& data) {
  std::vector<std::pair<int64_t, int64_t>> pairs;
  for (int64_t s = 0; s < data.size(); ++s) {
    for (int64_t t = 0; t < data.size(); ++t) {
      if (s != t && data.identity[s] == data.identity[t]) pairs.emplace_back(s, t);
    }
  }
  return pairs;
}

torch::Tensor generate_edits(CascadeModel& model, const Dataset& data,
                             const std::vector<std::pair<int64_t, int64_t>>& pairs, int batch_size) {
  if (pairs.empty()) throw ValidationError("generate_edits: no pairs");
  std::vector<torch::Tensor> out;
  for (size_t start = 0; start < pairs.size(); start += batch_size) {
    std::vector<int64_t> src, dst;
    for (size_t i = start; i < std::min(pairs.size(), start + size_t(batch_size)); ++i) {
      src.push_back(pairs[i].first);
      dst.push_back(pairs[i].second);
    }
    auto b = make_batch(data, src, dst);
    out.push_back(edit(model, b.source, b.source_aus, b.target_aus).final);
  }
  return torch::cat(out, 0);
}

double paired_l1(CascadeModel& model, const Dataset& data, const std::vector<std::pair<int64_t, int64_t>>& pairs) {
  auto edits = generate_edits(model, data, pairs);
  std::vector<int64_t> dst;
  for (const auto& p : pairs) dst.push_back(p.second);
  auto truth = data.images.index_select(0, torch::tensor(dst, torch::kLong));
  return (edits - truth).abs().mean().item<double>();
}

EvalReport evaluate(CascadeModel& model, const Dataset& data, const EvalOptions& options) {
  check_compatible(model->config(), data);
  EvalReport report;
  const auto pairs = same_identity_pairs(data);
  report.n_pairs = int64_t(pairs.size());
  if (pairs.empty()) throw ValidationError("evaluate: no identity has two or more records");
  const auto edits = generate_edits(model, data, pairs);

  if (options.psnr) {
    double sum = 0.0;
    for (size_t i = 0; i < pairs.size(); ++i) sum += psnr(edits[i], data.images[pairs[i].second], 2.0);
    report.psnr = sum / double(pairs.size());
  }

  std::vector<std::string> names;
  std::optional<ExpressionClassifier> all_real;
  if (options.cls || options.fid) {
    bool labeled = true;
    for (const auto& r : data.manifest.records) labeled = labeled && r.expression_label.has_value();
    if (options.cls && !labeled) throw ValidationError("evaluate: classification needs expression_label on every record");
    if (labeled) {
      names = label_names(data);
      report.n_classes = int(names.size());
      all_real = train_classifier(labeled_images(data, names), report.n_classes, options.classifier);
    }
  }

  if (options.fid) {
    ExpressionClassifier extractor_net = all_real ? *all_real : ExpressionClassifier(1, options.classifier.base_channels);
    auto extractor = feature_extractor(extractor_net);
    report.fid = frechet_distance(feature_stats(data.images, extractor), feature_stats(edits, extractor));
  }

  if (options.cls) {
    auto [train, test] = split_by_identity(data, options.holdout_identities);
    std::set<int> held;
    for (const auto& n : test.identity_names) {
      for (size_t k = 0; k < data.identity_names.size(); ++k) {
        if (data.identity_names[k] == n) held.insert(int(k));
      }
    }
    LabeledImages generated;
    std::vector<int64_t> rows;
    for (size_t i = 0; i < pairs.size(); ++i) {
      if (!held.count(data.identity[pairs[i].first])) continue;
      rows.push_back(int64_t(i));
      const auto& label = *data.manifest.records[pairs[i].second].expression_label;
      generated.labels.push_back(std::find(names.begin(), names.end(), label) - names.begin());
    }
    generated.images = edits.index_select(0, torch::tensor(rows, torch::kLong));
    const auto real_train = labeled_images(train, names);
    const auto real_test = labeled_images(test, names);
    const int k = report.n_classes;
    report.acc_r = classification_protocol(real_train, real_test, generated, ProtocolMode::real, k, options.classifier);
    report.acc_g =
        classification_protocol(real_train, real_test, generated, ProtocolMode::generated, k, options.classifier);
    report.acc_rg = classification_protocol(real_train, real_test, generated, ProtocolMode::real_plus_generated, k,
                                            options.classifier);
  }
  return report;
}

std::string to_json_string(const EvalReport& r) {
  nlohmann::json j;
  j["pairs"] = r.n_pairs;
  auto put = [&j](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("psnr_db", r.psnr);
  put("fid", r.fid);
  if (r.acc_r) {
    j["classification"] = {{"classes", r.n_classes}, {"R", *r.acc_r}, {"G", *r.acc_g}, {"R+G", *r.acc_rg}};
  }
  return j.dump(2);
}

}  // namespace efgan
