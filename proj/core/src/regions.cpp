#include "efgan/regions.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "efgan/errors.hpp"

namespace efgan {

namespace {

constexpr int kReferenceSize = 128;

RegionSize reference_size(Region r) {
  switch (r) {
    case Region::eyes:
      return {40, 92};
    case Region::nose:
      return {40, 48};
    case Region::mouth:
      return {40, 60};
  }
  return {};
}

int scaled_even(int reference, int image_size) {
  const double v = static_cast<double>(reference) * image_size / kReferenceSize;
  return 2 * static_cast<int>(std::lround(v / 2.0));
}

Rect place(Region r, int image_size, Point center) {
  const RegionSize size = region_size(r, image_size);
  if (size.height > image_size || size.width > image_size) {
    throw ConfigError("region " + std::string(region_name(r)) + " does not fit a " + std::to_string(image_size) +
                      " px image");
  }
  const int cx = static_cast<int>(std::lround(center.x));
  const int cy = static_cast<int>(std::lround(center.y));
  Rect rect;
  rect.height = size.height;
  rect.width = size.width;
  rect.top = std::clamp(cy - size.height / 2, 0, image_size - size.height);
  rect.left = std::clamp(cx - size.width / 2, 0, image_size - size.width);
  return rect;
}

std::span<const std::string_view> group(Region r) {
  switch (r) {
    case Region::eyes:
      return kEyeLandmarks;
    case Region::nose:
      return kNoseLandmarks;
    case Region::mouth:
      return kMouthLandmarks;
  }
  return {};
}

void check_layout_input(const torch::Tensor& t, const RegionLayout& layout, const char* what) {
  if (t.dim() < 2 || t.size(-1) != layout.image_size || t.size(-2) != layout.image_size) {
    throw_shape(what, "face must be " + std::to_string(layout.image_size) + "x" + std::to_string(layout.image_size) +
                          ", got " + std::to_string(t.dim() >= 2 ? t.size(-2) : 0) + "x" +
                          std::to_string(t.dim() >= 1 ? t.size(-1) : 0));
  }
}

}  // namespace

std::string_view region_name(Region r) {
  switch (r) {
    case Region::eyes:
      return "eyes";
    case Region::nose:
      return "nose";
    case Region::mouth:
      return "mouth";
  }
  return "?";
}

RegionSize region_size(Region region, int image_size) {
  if (image_size == kReferenceSize) return reference_size(region);
  const RegionSize ref = reference_size(region);
  return {scaled_even(ref.height, image_size), scaled_even(ref.width, image_size)};
}

const Rect& RegionLayout::operator[](Region r) const {
  return r == Region::eyes ? eyes : r == Region::nose ? nose : mouth;
}
Rect& RegionLayout::operator[](Region r) { return r == Region::eyes ? eyes : r == Region::nose ? nose : mouth; }

RegionLayout layout_from_centers(int image_size, const RegionCenters& centers) {
  RegionLayout layout;
  layout.image_size = image_size;
  layout.eyes = place(Region::eyes, image_size, centers.eyes);
  layout.nose = place(Region::nose, image_size, centers.nose);
  layout.mouth = place(Region::mouth, image_size, centers.mouth);
  return layout;
}

RegionCenters average_region_centers(const DatasetManifest& manifest) {
  if (manifest.records.empty()) throw ValidationError("compute_region_centers: manifest has no records");
  RegionCenters out;
  for (Region r : kRegions) {
    std::vector<Point> centroids;
    centroids.reserve(manifest.records.size());
    for (size_t i = 0; i < manifest.records.size(); ++i) {
      const auto& rec = manifest.records[i];
      Point c;
      for (auto key : group(r)) {
        auto it = rec.landmarks.find(std::string(key));
        if (it == rec.landmarks.end()) {
          throw ValidationError("record " + std::to_string(i) + ": missing landmark '" + std::string(key) + "'");
        }
        const Point p = it->second;
        if (!(p.x >= 0 && p.y >= 0 && p.x <= manifest.image_size - 1 && p.y <= manifest.image_size - 1)) {
          throw ValidationError("record " + std::to_string(i) + ": landmark '" + std::string(key) +
                                "' outside image bounds");
        }
        c.x += p.x;
        c.y += p.y;
      }
      c.x /= static_cast<double>(group(r).size());
      c.y /= static_cast<double>(group(r).size());
      centroids.push_back(c);
    }
    // Summation order fixed by value so the result is independent of record order.
    std::sort(centroids.begin(), centroids.end(),
              [](const Point& a, const Point& b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
    Point mean;
    for (const auto& c : centroids) {
      mean.x += c.x;
      mean.y += c.y;
    }
    mean.x /= static_cast<double>(centroids.size());
    mean.y /= static_cast<double>(centroids.size());
    (r == Region::eyes ? out.eyes : r == Region::nose ? out.nose : out.mouth) = mean;
  }
  return out;
}

RegionLayout compute_region_centers(const DatasetManifest& manifest) {
  return layout_from_centers(manifest.image_size, average_region_centers(manifest));
}

RegionLayout rescale_layout(const RegionLayout& layout, int image_size) {
  const double f = static_cast<double>(image_size) / layout.image_size;
  auto center = [&](const Rect& r) { return Point{(r.left + r.width / 2.0) * f, (r.top + r.height / 2.0) * f}; };
  return layout_from_centers(image_size, {center(layout.eyes), center(layout.nose), center(layout.mouth)});
}

Patches<torch::Tensor> crop_regions(const torch::Tensor& face, const RegionLayout& layout) {
  check_layout_input(face, layout, "crop_regions");
  Patches<torch::Tensor> out;
  for (Region r : kRegions) {
    const Rect& rect = layout[r];
    out[r] = face.narrow(-2, rect.top, rect.height).narrow(-1, rect.left, rect.width);
  }
  return out;
}

torch::Tensor stitch_regions(const Patches<torch::Tensor>& patches, const RegionLayout& layout,
                             const torch::Tensor& background) {
  check_layout_input(background, layout, "stitch_regions");
  auto out = background.clone();
  for (Region r : kRegions) {
    const Rect& rect = layout[r];
    const auto& patch = patches[r];
    if (patch.dim() != background.dim() || patch.size(-2) != rect.height || patch.size(-1) != rect.width) {
      throw_shape("stitch_regions", std::string(region_name(r)) + " patch must be " + std::to_string(rect.height) +
                                        "x" + std::to_string(rect.width));
    }
    out.narrow(-2, rect.top, rect.height).narrow(-1, rect.left, rect.width).copy_(patch);
  }
  return out;
}

torch::Tensor stitch_regions(const Patches<torch::Tensor>& patches, const RegionLayout& layout) {
  auto shape = patches.eyes.sizes().vec();
  if (shape.size() < 2) throw_shape("stitch_regions", "patches must have spatial dims");
  shape[shape.size() - 2] = layout.image_size;
  shape[shape.size() - 1] = layout.image_size;
  return stitch_regions(patches, layout, torch::zeros(shape, patches.eyes.options()));
}

}  // namespace efgan
