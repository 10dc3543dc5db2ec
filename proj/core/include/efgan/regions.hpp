#pragma once

#include <array>
#include <string_view>

#include <torch/types.h>

#include "efgan/manifest.hpp"

namespace efgan {

enum class Region { eyes, nose, mouth };

inline constexpr std::array<Region, 3> kRegions = {Region::eyes, Region::nose, Region::mouth};

std::string_view region_name(Region r);

struct RegionSize {
  int height = 0;
  int width = 0;
};

/// Patch size of a region: 40x92 / 40x48 / 40x60 at 128 px, scaled
/// proportionally and rounded to the nearest even size otherwise.
RegionSize region_size(Region region, int image_size);

/// Integer rectangle, `top`/`left` inclusive.
struct Rect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  bool operator==(const Rect&) const = default;
};

struct RegionLayout {
  int image_size = 128;
  Rect eyes;
  Rect nose;
  Rect mouth;

  const Rect& operator[](Region r) const;
  Rect& operator[](Region r);
  bool operator==(const RegionLayout&) const = default;
};

struct RegionCenters {
  Point eyes;
  Point nose;
  Point mouth;
};

/// Place fixed-size rectangles at the rounded centers; rectangles that would
/// leave the image are shifted inward.
RegionLayout layout_from_centers(int image_size, const RegionCenters& centers);

/// Per-record centroid of each landmark group, averaged over all records.
RegionCenters average_region_centers(const DatasetManifest& manifest);

/// Layout from dataset-averaged landmark centroids (eyes: corners and pupils,
/// nose: bridge and tip, mouth: corners and lip midpoints).
RegionLayout compute_region_centers(const DatasetManifest& manifest);

/// Scale a layout authored for one resolution to another, keeping rectangle
/// centers proportional.
RegionLayout rescale_layout(const RegionLayout& layout, int image_size);

template <class T>
struct Patches {
  T eyes;
  T nose;
  T mouth;

  T& operator[](Region r) { return r == Region::eyes ? eyes : r == Region::nose ? nose : mouth; }
  const T& operator[](Region r) const { return r == Region::eyes ? eyes : r == Region::nose ? nose : mouth; }
};

/// Crop the three patches out of `face` ([..., C, S, S]). Patches are views.
Patches<torch::Tensor> crop_regions(const torch::Tensor& face, const RegionLayout& layout);

/// Write patches into a copy of `background` in the order eyes, nose, mouth;
/// later regions overwrite earlier ones where rectangles overlap.
/// Differentiable with respect to both patches and background.
torch::Tensor stitch_regions(const Patches<torch::Tensor>& patches, const RegionLayout& layout,
                             const torch::Tensor& background);

/// Stitch onto a zero background shaped like a face of the layout's size.
torch::Tensor stitch_regions(const Patches<torch::Tensor>& patches, const RegionLayout& layout);

}  // namespace efgan
