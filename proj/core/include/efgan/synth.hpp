#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "efgan/image.hpp"
#include "efgan/manifest.hpp"

namespace efgan {

/// Expression controls of the parametric face, each in [0, 1]:
/// index 0 brow raise, 1 eye openness, 2 mouth curve (0 frown, 1 smile),
/// 3 mouth openness. Components past index 3 do not affect rendering;
/// missing components default to 0.5.
struct SyntheticFaceParams {
  std::vector<double> au_like = {0.5, 0.5, 0.5, 0.5};
  std::uint64_t identity_seed = 0;
  int canvas = 64;
};

inline constexpr int kMinSyntheticCanvas = 32;
inline constexpr int kSyntheticAuDim = 4;

/// Half-open pixel box [x0, x1) x [y0, y1).
struct PixelBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

struct SyntheticFace {
  ImageTensor image;
  LandmarkSet landmarks;
  /// Boxes bounding every pixel that the eyes/nose/mouth controls can touch
  /// for this identity, over the whole [0,1] control range.
  std::map<std::string, PixelBox> regions;
};

SyntheticFace synth_face_render(const SyntheticFaceParams& params);

/// Four-way expression class of a control vector, from the mouth controls.
std::string synthetic_expression_label(std::span<const double> au_like);

/// The AU settings shared by every identity of a generated corpus.
std::vector<std::vector<double>> synthetic_au_settings(int count, int au_dim, std::uint64_t seed);

/// Render `n_identities x aus_per_identity` faces to `out_dir/images/` and
/// write `out_dir/manifest.jsonl`. Every identity is rendered at every AU
/// setting, so each (identity, target AU) pair has a ground-truth image.
DatasetManifest synth_dataset_generate(int n_identities, int aus_per_identity, int au_dim,
                                       const std::filesystem::path& out_dir, std::uint64_t seed, int canvas = 64);

}  // namespace efgan
