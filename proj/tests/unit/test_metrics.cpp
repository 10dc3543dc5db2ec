#include <cmath>

#include "doctest.h"
#include "efgan/classifier.hpp"
#include "efgan/errors.hpp"
#include "efgan/metrics.hpp"
#include "efgan/synth.hpp"
#include "support.hpp"

using namespace efgan;

namespace {

GaussianStats diag(std::vector<double> mean, std::vector<double> var) {
  return {torch::tensor(mean, torch::kDouble), torch::diag(torch::tensor(var, torch::kDouble))};
}

LabeledImages blobs(int n_per_class, int n_classes, std::uint64_t seed) {
  torch::manual_seed(seed);
  LabeledImages out;
  std::vector<torch::Tensor> imgs;
  for (int c = 0; c < n_classes; ++c) {
    for (int i = 0; i < n_per_class; ++i) {
      imgs.push_back(torch::full({3, 16, 16}, -0.8 + 1.6 * c / std::max(1, n_classes - 1)) +
                     0.05 * torch::randn({3, 16, 16}));
      out.labels.push_back(c);
    }
  }
  out.images = torch::stack(imgs);
  return out;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("psnr") {
    auto a = torch::rand({2, 3, 8, 8}, torch::kDouble);
    CHECK(psnr(a, a, 1.0) == kPsnrCap);
    CHECK(psnr(a, a + 0.1, 1.0) == doctest::Approx(20.0));
    auto b = torch::rand({2, 3, 8, 8}, torch::kDouble);
    auto aa = a.flatten(), bb = b.flatten();
    double mse = 0;
    for (int64_t i = 0; i < aa.numel(); ++i) mse += std::pow(aa[i].item<double>() - bb[i].item<double>(), 2);
    mse /= aa.numel();
    CHECK(psnr(a, b, 2.0) == doctest::Approx(10 * std::log10(4.0 / mse)).epsilon(1e-12));
    CHECK(psnr(a, b, 2.0) == psnr(b, a, 2.0));
    CHECK_THROWS_AS(psnr(a, torch::rand({2, 3, 8, 7}), 1.0), ShapeError);
  }

  TEST_CASE("frechet distance") {
    auto s = diag({0, 0}, {1, 1});
    CHECK(std::abs(frechet_distance(s, s)) < 1e-10);
    auto t = diag({1, 2}, {4, 9});
    // diagonal oracle: |dmu|^2 + sum (sqrt(a) - sqrt(b))^2
    CHECK(frechet_distance(s, t) == doctest::Approx(5.0 + 1.0 + 4.0).epsilon(1e-9));
    CHECK(frechet_distance(s, t) == doctest::Approx(frechet_distance(t, s)).epsilon(1e-9));
    auto bad = diag({0, 0}, {1, -1});
    CHECK_THROWS_AS(frechet_distance(bad, s), ValidationError);
    CHECK_THROWS_AS(frechet_distance(s, diag({0, 0, 0}, {1, 1, 1})), ShapeError);
  }

  TEST_CASE("feature statistics") {
    auto rows = torch::randn({6, 3}, torch::kDouble);
    auto st = stats_from_features(rows);
    for (int d = 0; d < 3; ++d) {
      double m = 0;
      for (int i = 0; i < 6; ++i) m += rows[i][d].item<double>();
      m /= 6;
      CHECK(st.mean[d].item<double>() == doctest::Approx(m).epsilon(1e-12));
      for (int e = 0; e < 3; ++e) {
        double me = 0;
        for (int i = 0; i < 6; ++i) me += rows[i][e].item<double>();
        me /= 6;
        double c = 0;
        for (int i = 0; i < 6; ++i) c += (rows[i][d].item<double>() - m) * (rows[i][e].item<double>() - me);
        CHECK(st.cov[d][e].item<double>() == doctest::Approx(c / 5).epsilon(1e-12));
      }
    }
    CHECK_THROWS_AS(stats_from_features(rows.narrow(0, 0, 1)), ValidationError);

    FeatureExtractor mean_pixels = [](const torch::Tensor& x) { return x.flatten(2).mean(2); };
    auto imgs = testing::random_faces(4, 16);
    auto twice = feature_stats(torch::cat({imgs, imgs}), mean_pixels);
    auto once = feature_stats(imgs, mean_pixels);
    CHECK(torch::allclose(twice.mean, once.mean));
    FeatureExtractor constant = [](const torch::Tensor& x) { return torch::ones({x.size(0), 2}); };
    auto cs = feature_stats(imgs, constant);
    CHECK(cs.cov.abs().max().item<double>() == 0.0);
    CHECK(std::abs(frechet_distance(cs, cs)) < 1e-12);
  }

  TEST_CASE("classification protocol") {
    ClassifierConfig cfg;
    cfg.epochs = 5;
    cfg.base_channels = 4;
    auto one = blobs(4, 1, 1);
    CHECK(classification_protocol(one, one, one, ProtocolMode::real, 1, cfg) == 1.0);

    auto train = blobs(6, 2, 2), test = blobs(3, 2, 3);
    const double r = classification_protocol(train, test, test, ProtocolMode::real, 2, cfg);
    const double g = classification_protocol(train, test, test, ProtocolMode::generated, 2, cfg);
    CHECK(r == g);
    CHECK(r >= 0.5);

    auto perm = torch::randperm(train.size());
    LabeledImages shuffled;
    shuffled.images = train.images.index_select(0, perm);
    for (int64_t i = 0; i < train.size(); ++i) shuffled.labels.push_back(train.labels[perm[i].item<int64_t>()]);
    CHECK(classification_protocol(shuffled, test, test, ProtocolMode::real, 2, cfg) == r);

    auto rg = classification_protocol(train, test, test, ProtocolMode::real_plus_generated, 2, cfg);
    CHECK(rg >= 0.0);
    CHECK(rg <= 1.0);
  }

  TEST_CASE("labels are required") {
    testing::TempDir dir("labels");
    auto m = synth_dataset_generate(1, 2, 4, dir.path(), 1, 32);
    auto data = load_dataset(m);
    auto names = label_names(data);
    CHECK(!names.empty());
    CHECK(labeled_images(data, names).size() == 2);
    data.manifest.records[1].expression_label.reset();
    CHECK_THROWS_AS(label_names(data), ValidationError);
  }
}
