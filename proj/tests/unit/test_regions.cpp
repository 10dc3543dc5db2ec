#include <algorithm>
#include <random>

#include "doctest.h"
#include "efgan/errors.hpp"
#include "efgan/regions.hpp"
#include "efgan/synth.hpp"
#include "support.hpp"

using namespace efgan;

namespace {

SampleRecord record_with_centroids(Point eyes, Point nose, Point mouth) {
  SampleRecord r;
  r.identity_id = "a";
  for (auto k : kEyeLandmarks) r.landmarks[std::string(k)] = eyes;
  for (auto k : kNoseLandmarks) r.landmarks[std::string(k)] = nose;
  for (auto k : kMouthLandmarks) r.landmarks[std::string(k)] = mouth;
  r.aus = {0, 0};
  return r;
}

DatasetManifest manifest_of(std::vector<SampleRecord> records) {
  DatasetManifest m;
  m.au_dim = 2;
  m.image_size = 128;
  m.records = std::move(records);
  return m;
}

}  // namespace

TEST_SUITE("region_ops") {
  TEST_CASE("region sizes") {
    CHECK(region_size(Region::eyes, 128).height == 40);
    CHECK(region_size(Region::eyes, 128).width == 92);
    CHECK(region_size(Region::nose, 128).width == 48);
    CHECK(region_size(Region::mouth, 128).width == 60);
    for (int s : {32, 64, 96, 256}) {
      for (Region r : {Region::eyes, Region::nose, Region::mouth}) {
        CHECK(region_size(r, s).height % 2 == 0);
        CHECK(region_size(r, s).width % 2 == 0);
      }
    }
    CHECK(region_size(Region::eyes, 64).height == 20);
    CHECK(region_size(Region::eyes, 64).width == 46);
  }

  TEST_CASE("mean of two centroids") {
    auto m = manifest_of({record_with_centroids({30, 40}, {60, 70}, {64, 95}),
                          record_with_centroids({34, 44}, {62, 72}, {64, 97})});
    auto c = average_region_centers(m);
    CHECK(c.eyes.x == doctest::Approx(32));
    CHECK(c.eyes.y == doctest::Approx(42));
    auto layout = compute_region_centers(m);
    CHECK(layout.eyes.top + layout.eyes.height / 2 == 42);
  }

  TEST_CASE("one sample gives its own centroids") {
    auto m = manifest_of({record_with_centroids({50, 45}, {64, 70}, {64, 95})});
    auto c = average_region_centers(m);
    CHECK(c.nose.x == 64);
    CHECK(c.nose.y == 70);
  }

  TEST_CASE("centers match a brute-force re-average") {
    testing::TempDir dir("regions");
    auto m = synth_dataset_generate(10, 5, 4, dir.path(), 3, 64);
    auto c = average_region_centers(m);
    double ex = 0, ey = 0;
    for (const auto& r : m.records) {
      double x = 0, y = 0;
      for (auto k : kEyeLandmarks) x += r.landmarks.at(std::string(k)).x, y += r.landmarks.at(std::string(k)).y;
      ex += x / kEyeLandmarks.size();
      ey += y / kEyeLandmarks.size();
    }
    CHECK(c.eyes.x == doctest::Approx(ex / m.records.size()).epsilon(1e-12));
    CHECK(c.eyes.y == doctest::Approx(ey / m.records.size()).epsilon(1e-12));
  }

  TEST_CASE("centers are permutation invariant") {
    testing::TempDir dir("regions");
    auto m = synth_dataset_generate(6, 3, 4, dir.path(), 5, 64);
    auto shuffled = m;
    std::mt19937 rng(1);
    std::shuffle(shuffled.records.begin(), shuffled.records.end(), rng);
    auto a = average_region_centers(m), b = average_region_centers(shuffled);
    CHECK(a.eyes.x == b.eyes.x);
    CHECK(a.mouth.y == b.mouth.y);
    CHECK(compute_region_centers(m) == compute_region_centers(shuffled));
  }

  TEST_CASE("center errors") {
    CHECK_THROWS_AS(average_region_centers(manifest_of({})), ValidationError);
    auto bad = manifest_of({record_with_centroids({200, 40}, {60, 70}, {64, 95})});
    CHECK_THROWS_AS(average_region_centers(bad), ValidationError);
  }

  TEST_CASE("rectangles clamp inward") {
    RegionCenters c{{3, 3}, {125, 125}, {64, 127}};
    auto l = layout_from_centers(128, c);
    for (Region r : {Region::eyes, Region::nose, Region::mouth}) {
      CHECK(l[r].top >= 0);
      CHECK(l[r].left >= 0);
      CHECK(l[r].top + l[r].height <= 128);
      CHECK(l[r].left + l[r].width <= 128);
    }
    CHECK(l.eyes.width == 92);
  }

  TEST_CASE("crop sizes and pixels") {
    auto layout = testing::centered_layout(128);
    auto face = testing::random_faces(1, 128)[0];
    auto p = crop_regions(face, layout);
    CHECK(p.eyes.size(1) == 40);
    CHECK(p.eyes.size(2) == 92);
    for (Region r : {Region::eyes, Region::nose, Region::mouth}) {
      const Rect& rect = layout[r];
      auto acc = face.accessor<float, 3>();
      auto pa = p[r].accessor<float, 3>();
      bool same = true;
      for (int c = 0; c < 3; ++c)
        for (int i = 0; i < rect.height; ++i)
          for (int j = 0; j < rect.width; ++j) same = same && pa[c][i][j] == acc[c][rect.top + i][rect.left + j];
      CHECK(same);
    }
    auto zeros = crop_regions(torch::zeros({3, 128, 128}), layout);
    CHECK(zeros.mouth.abs().sum().item<float>() == 0.0f);
    CHECK_THROWS_AS(crop_regions(torch::zeros({3, 64, 64}), layout), ShapeError);
  }

  TEST_CASE("stitch round trip and support") {
    auto layout = testing::centered_layout(64);
    auto face = testing::random_faces(2, 64);
    CHECK(torch::equal(stitch_regions(crop_regions(face, layout), layout, face), face));
    auto ones = torch::ones({3, 64, 64});
    auto on_zero = stitch_regions(crop_regions(ones, layout), layout);
    auto mask = torch::zeros({64, 64});
    for (Region r : {Region::eyes, Region::nose, Region::mouth}) {
      const Rect& q = layout[r];
      mask.narrow(0, q.top, q.height).narrow(1, q.left, q.width).fill_(1);
    }
    CHECK(torch::equal(on_zero[0], mask));
  }

  TEST_CASE("overlap order matches a sequential-write oracle") {
    RegionLayout l;
    l.image_size = 128;
    l.eyes = {30, 18, 40, 92};
    l.nose = {55, 40, 40, 48};
    l.mouth = {70, 34, 40, 60};
    Patches<torch::Tensor> p{torch::full({3, 40, 92}, 0.1), torch::full({3, 40, 48}, 0.2), torch::full({3, 40, 60}, 0.3)};
    auto out = stitch_regions(p, l);
    auto oracle = torch::zeros({3, 128, 128});
    for (Region r : {Region::eyes, Region::nose, Region::mouth}) {
      const Rect& q = l[r];
      for (int y = q.top; y < q.top + q.height; ++y)
        for (int x = q.left; x < q.left + q.width; ++x)
          for (int c = 0; c < 3; ++c) oracle[c][y][x] = p[r][c][y - q.top][x - q.left];
    }
    CHECK(torch::equal(out, oracle));
    CHECK(out[0][72][50].item<float>() == doctest::Approx(0.3));
  }

  TEST_CASE("stitch size mismatch") {
    auto layout = testing::centered_layout(64);
    Patches<torch::Tensor> p{torch::zeros({3, 4, 4}), torch::zeros({3, 4, 4}), torch::zeros({3, 4, 4})};
    CHECK_THROWS_AS(stitch_regions(p, layout), ShapeError);
  }
}
