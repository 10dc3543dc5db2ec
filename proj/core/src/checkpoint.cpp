#include <fstream>

#include <torch/torch.h>

#include "efgan/errors.hpp"
#include "efgan/model.hpp"
#include "json.hpp"

namespace efgan {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "efgan-checkpoint";

std::string dtype_name(torch::ScalarType t) {
  if (t == torch::kFloat32) return "float32";
  if (t == torch::kFloat64) return "float64";
  throw ValidationError("checkpoint: unsupported dtype");
}

torch::ScalarType dtype_from(const std::string& s) {
  if (s == "float32") return torch::kFloat32;
  if (s == "float64") return torch::kFloat64;
  throw FormatError("checkpoint: unknown dtype " + s);
}

json read_index(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw IoError("cannot open checkpoint " + (dir / "model.json").string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError((dir / "model.json").string() + ": " + e.what());
  }
  if (j.value("format", "") != kFormat) throw FormatError(dir.string() + ": not an EF-GAN checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) {
    throw FormatError(dir.string() + ": unsupported checkpoint version");
  }
  return j;
}

}  // namespace

void save_checkpoint(CascadeModel& model, const std::filesystem::path& dir, const std::string& metadata_json) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint dir " + dir.string() + ": " + ec.message());

  json index = json::array();
  std::ofstream bin(dir / "tensors.bin", std::ios::binary);
  if (!bin) throw IoError("cannot write " + (dir / "tensors.bin").string());
  int64_t offset = 0;
  for (const auto& [name, t] : model->state()) {
    const auto c = t.detach().contiguous().cpu();
    const auto bytes = static_cast<int64_t>(c.numel() * c.element_size());
    bin.write(static_cast<const char*>(c.data_ptr()), bytes);
    index.push_back({{"name", name}, {"shape", c.sizes().vec()}, {"dtype", dtype_name(c.scalar_type())},
                     {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  if (!bin) throw IoError("failed writing " + (dir / "tensors.bin").string());

  json meta;
  try {
    meta = json::parse(metadata_json);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  json doc = {{"format", kFormat},
              {"version", kCheckpointVersion},
              {"model", json::parse(to_json_string(model->config()))},
              {"tensors", index},
              {"metadata", meta}};
  std::ofstream out(dir / "model.json");
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("failed writing " + (dir / "model.json").string());
}

CascadeModel load_checkpoint(const std::filesystem::path& dir) {
  const json doc = read_index(dir);
  const ModelConfig cfg = model_config_from_json_string(doc.at("model").dump());
  CascadeModel model(cfg);
  auto state = model->state();

  std::ifstream bin(dir / "tensors.bin", std::ios::binary);
  if (!bin) throw IoError("cannot open " + (dir / "tensors.bin").string());
  torch::NoGradGuard no_grad;
  size_t loaded = 0;
  for (const auto& entry : doc.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    auto it = state.find(name);
    if (it == state.end()) throw FormatError("checkpoint: unexpected tensor " + name);
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    if (it->second.sizes().vec() != shape) throw FormatError("checkpoint: shape mismatch for " + name);
    auto buf = torch::empty(shape, torch::TensorOptions().dtype(dtype_from(entry.at("dtype").get<std::string>())));
    const auto bytes = entry.at("bytes").get<int64_t>();
    if (bytes != static_cast<int64_t>(buf.numel() * buf.element_size())) {
      throw FormatError("checkpoint: byte count mismatch for " + name);
    }
    bin.seekg(entry.at("offset").get<int64_t>());
    bin.read(static_cast<char*>(buf.data_ptr()), bytes);
    if (!bin) throw FormatError("checkpoint: truncated tensor data for " + name);
    it->second.copy_(buf);
    ++loaded;
  }
  if (loaded != state.size()) throw FormatError("checkpoint: missing tensors");
  return model;
}

std::string checkpoint_metadata(const std::filesystem::path& dir) {
  return read_index(dir).value("metadata", json::object()).dump();
}

}  // namespace efgan
