#include "efgan/manifest.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <span>
#include <sstream>

#include <torch/torch.h>

#include "efgan/errors.hpp"
#include "efgan/image.hpp"
#include "json.hpp"

namespace efgan {

namespace {

using nlohmann::json;

std::string record_context(size_t index, int line) {
  std::ostringstream os;
  os << "record " << index << " (line " << line << ")";
  return os.str();
}

SampleRecord parse_record(const json& j) {
  SampleRecord r;
  r.image_path = j.at("image_path").get<std::string>();
  r.aus = j.at("aus").get<std::vector<float>>();
  for (const auto& [name, pt] : j.at("landmarks").items()) {
    if (!pt.is_array() || pt.size() != 2) throw FormatError("landmark '" + name + "' must be [x, y]");
    r.landmarks[name] = Point{pt[0].get<double>(), pt[1].get<double>()};
  }
  r.identity_id = j.at("identity_id").get<std::string>();
  if (j.contains("expression_label") && !j["expression_label"].is_null()) {
    r.expression_label = j["expression_label"].get<std::string>();
  }
  return r;
}

json record_to_json(const SampleRecord& r) {
  json lm = json::object();
  for (const auto& [name, p] : r.landmarks) lm[name] = {p.x, p.y};
  json j = {{"image_path", r.image_path}, {"aus", r.aus}, {"landmarks", lm}, {"identity_id", r.identity_id}};
  if (r.expression_label) j["expression_label"] = *r.expression_label;
  return j;
}

void validate_record(const DatasetManifest& m, const SampleRecord& r, const std::string& where, bool check_files) {
  if (static_cast<int>(r.aus.size()) != m.au_dim) {
    throw ValidationError(where + ": aus has length " + std::to_string(r.aus.size()) + ", manifest au_dim is " +
                          std::to_string(m.au_dim));
  }
  for (float a : r.aus) {
    if (!std::isfinite(a)) throw ValidationError(where + ": non-finite AU intensity");
    if (a < 0.0 || a > m.max_au_intensity) {
      throw ValidationError(where + ": AU intensity " + std::to_string(a) + " outside [0, " +
                            std::to_string(m.max_au_intensity) + "]");
    }
  }
  if (r.identity_id.empty()) throw ValidationError(where + ": empty identity_id");
  for (const auto& group : {std::span<const std::string_view>(kEyeLandmarks),
                            std::span<const std::string_view>(kNoseLandmarks),
                            std::span<const std::string_view>(kMouthLandmarks)}) {
    for (auto key : group) {
      if (!r.landmarks.contains(std::string(key))) {
        throw ValidationError(where + ": missing landmark '" + std::string(key) + "'");
      }
    }
  }
  for (const auto& [name, p] : r.landmarks) {
    if (!(p.x >= 0 && p.y >= 0 && p.x <= m.image_size - 1 && p.y <= m.image_size - 1)) {
      throw ValidationError(where + ": landmark '" + name + "' outside image bounds");
    }
  }
  if (check_files) {
    const auto path = resolve_image_path(m, r);
    if (!std::filesystem::exists(path)) throw ValidationError(where + ": missing image " + path.string());
    const PngHeader h = read_png_header(path);
    if (h.width != m.image_size || h.height != m.image_size) {
      throw ValidationError(where + ": image " + path.string() + " is " + std::to_string(h.width) + "x" +
                            std::to_string(h.height) + ", expected " + std::to_string(m.image_size));
    }
  }
}

}  // namespace

std::filesystem::path resolve_image_path(const DatasetManifest& manifest, const SampleRecord& record) {
  std::filesystem::path p(record.image_path);
  return p.is_absolute() ? p : manifest.base_dir / p;
}

void validate_manifest(const DatasetManifest& manifest, bool check_files) {
  if (manifest.au_dim < 1) throw ValidationError("manifest: au_dim must be positive");
  if (manifest.image_size < 1) throw ValidationError("manifest: image_size must be positive");
  if (!(manifest.max_au_intensity > 0)) throw ValidationError("manifest: max_au_intensity must be positive");
  for (size_t i = 0; i < manifest.records.size(); ++i) {
    validate_record(manifest, manifest.records[i], "record " + std::to_string(i), check_files);
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());

  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!have_header) {
      try {
        m.version = j.at("version").get<int>();
        m.au_dim = j.at("au_dim").get<int>();
        m.image_size = j.value("image_size", 128);
        m.max_au_intensity = j.value("max_au_intensity", kDefaultMaxAuIntensity);
      } catch (const json::exception& e) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad header: " + e.what());
      }
      if (m.version != kManifestVersion) {
        throw FormatError(path.string() + ": unsupported manifest version " + std::to_string(m.version));
      }
      have_header = true;
      continue;
    }
    const std::string where = record_context(m.records.size(), line_no);
    try {
      m.records.push_back(parse_record(j));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": " + where + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ": " + where + ": " + e.what());
    }
    validate_record(m, m.records.back(), where, true);
  }
  if (!have_header) throw FormatError(path.string() + ": missing header line");
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << json{{"version", manifest.version}, {"au_dim", manifest.au_dim}, {"image_size", manifest.image_size},
              {"max_au_intensity", manifest.max_au_intensity}}.dump()
      << '\n';
  for (const auto& r : manifest.records) out << record_to_json(r).dump() << '\n';
  if (!out) throw IoError("failed writing manifest " + path.string());
}

Dataset load_dataset(const DatasetManifest& manifest) {
  Dataset d;
  d.manifest = manifest;
  const auto n = static_cast<int64_t>(manifest.records.size());
  d.images = torch::empty({n, 3, manifest.image_size, manifest.image_size});
  d.aus = torch::empty({n, manifest.au_dim});
  std::map<std::string, int> ids;
  for (int64_t i = 0; i < n; ++i) {
    const auto& r = manifest.records[i];
    const ImageTensor img = normalize_image(read_png(resolve_image_path(manifest, r)));
    if (img.height() != manifest.image_size || img.width() != manifest.image_size) {
      throw ValidationError("record " + std::to_string(i) + ": unexpected image resolution");
    }
    d.images[i].copy_(img.tensor());
    d.aus[i].copy_(torch::tensor(r.aus));
    auto [it, inserted] = ids.try_emplace(r.identity_id, static_cast<int>(d.identity_names.size()));
    if (inserted) d.identity_names.push_back(r.identity_id);
    d.identity.push_back(it->second);
  }
  return d;
}

Dataset subset(const Dataset& data, const std::vector<int64_t>& indices) {
  Dataset d;
  d.manifest = data.manifest;
  d.manifest.records.clear();
  std::map<int, int> remap;
  for (int64_t i : indices) {
    d.manifest.records.push_back(data.manifest.records.at(i));
    const int old = data.identity.at(i);
    auto [it, inserted] = remap.try_emplace(old, static_cast<int>(d.identity_names.size()));
    if (inserted) d.identity_names.push_back(data.identity_names[old]);
    d.identity.push_back(it->second);
  }
  auto idx = torch::tensor(indices, torch::kLong);
  d.images = data.images.index_select(0, idx);
  d.aus = data.aus.index_select(0, idx);
  return d;
}

std::pair<Dataset, Dataset> split_by_identity(const Dataset& data, int holdout_identities) {
  const int n_ids = static_cast<int>(data.identity_names.size());
  if (holdout_identities < 0 || holdout_identities >= n_ids) {
    throw ConfigError("split_by_identity: need at least one training identity");
  }
  std::vector<int64_t> train;
  std::vector<int64_t> held;
  for (int64_t i = 0; i < data.size(); ++i) {
    (data.identity[i] < n_ids - holdout_identities ? train : held).push_back(i);
  }
  return {subset(data, train), subset(data, held)};
}

}  // namespace efgan
