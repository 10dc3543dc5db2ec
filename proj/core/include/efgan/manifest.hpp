#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/types.h>

namespace efgan {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Named facial key points in pixel coordinates.
using LandmarkSet = std::map<std::string, Point>;

inline constexpr std::array<std::string_view, 6> kEyeLandmarks = {
    "left_eye_outer", "left_eye_inner", "left_pupil", "right_eye_inner", "right_eye_outer", "right_pupil"};
inline constexpr std::array<std::string_view, 2> kNoseLandmarks = {"nose_bridge", "nose_tip"};
inline constexpr std::array<std::string_view, 4> kMouthLandmarks = {"mouth_left", "mouth_right", "mouth_top",
                                                                    "mouth_bottom"};

/// Default AU dimensionality (OpenFace intensity AUs).
inline constexpr int kDefaultAuDim = 17;
inline constexpr double kDefaultMaxAuIntensity = 5.0;

struct SampleRecord {
  std::string image_path;  ///< relative to the manifest directory unless absolute
  std::vector<float> aus;
  LandmarkSet landmarks;
  std::string identity_id;
  std::optional<std::string> expression_label;
};

struct DatasetManifest {
  int version = 1;
  int au_dim = kDefaultAuDim;
  int image_size = 128;
  double max_au_intensity = kDefaultMaxAuIntensity;  ///< natural AUs lie in [0, max_au_intensity]
  std::vector<SampleRecord> records;
  std::filesystem::path base_dir;  ///< directory that relative image paths resolve against
};

inline constexpr int kManifestVersion = 1;

/// Parse and validate a JSON-lines manifest. The first line is the header
/// {version, au_dim, image_size}; each further non-empty line is one record.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Write `manifest` as JSON lines. Image paths are written verbatim.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Check every record invariant. `check_files` also decodes each PNG header.
void validate_manifest(const DatasetManifest& manifest, bool check_files = true);

std::filesystem::path resolve_image_path(const DatasetManifest& manifest, const SampleRecord& record);

/// Images and labels decoded into memory, ready for batching.
struct Dataset {
  DatasetManifest manifest;
  torch::Tensor images;                 ///< [N, 3, S, S] float in [-1, 1]
  torch::Tensor aus;                    ///< [N, c] float
  std::vector<int> identity;            ///< index into identity_names per record
  std::vector<std::string> identity_names;

  int64_t size() const { return static_cast<int64_t>(manifest.records.size()); }
};

Dataset load_dataset(const DatasetManifest& manifest);
Dataset subset(const Dataset& data, const std::vector<int64_t>& indices);

/// Split off the last `holdout_identities` identities (in order of first appearance).
std::pair<Dataset, Dataset> split_by_identity(const Dataset& data, int holdout_identities);

}  // namespace efgan
