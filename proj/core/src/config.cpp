#include "efgan/config.hpp"

#include <fstream>
#include <sstream>

#include "efgan/errors.hpp"
#include "json.hpp"

namespace efgan {

using nlohmann::json;

// Field tables shared by the readers and writers; missing keys keep defaults.
#define EFGAN_FIELD(obj, name) j[#name] = obj.name
#define EFGAN_READ(obj, name) \
  if (j.contains(#name)) obj.name = j.at(#name).get<decltype(obj.name)>()

void to_json(json& j, const Rect& r) { j = {r.top, r.left, r.height, r.width}; }
void from_json(const json& j, Rect& r) {
  if (!j.is_array() || j.size() != 4) throw FormatError("region rectangle must be [top, left, height, width]");
  r = {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

void to_json(json& j, const RegionLayout& l) {
  j = {{"image_size", l.image_size}, {"eyes", l.eyes}, {"nose", l.nose}, {"mouth", l.mouth}};
}
void from_json(const json& j, RegionLayout& l) {
  l.image_size = j.at("image_size").get<int>();
  l.eyes = j.at("eyes").get<Rect>();
  l.nose = j.at("nose").get<Rect>();
  l.mouth = j.at("mouth").get<Rect>();
}

void to_json(json& j, const GeneratorConfig& c) {
  j = json::object();
  EFGAN_FIELD(c, au_dim);
  EFGAN_FIELD(c, image_size);
  EFGAN_FIELD(c, base_channels);
  EFGAN_FIELD(c, n_down);
  EFGAN_FIELD(c, global_blocks);
  EFGAN_FIELD(c, local_blocks);
  EFGAN_FIELD(c, refiner_blocks);
  EFGAN_FIELD(c, stem_kernel);
  EFGAN_FIELD(c, head_kernel);
}
void from_json(const json& j, GeneratorConfig& c) {
  EFGAN_READ(c, au_dim);
  EFGAN_READ(c, image_size);
  EFGAN_READ(c, base_channels);
  EFGAN_READ(c, n_down);
  EFGAN_READ(c, global_blocks);
  EFGAN_READ(c, local_blocks);
  EFGAN_READ(c, refiner_blocks);
  EFGAN_READ(c, stem_kernel);
  EFGAN_READ(c, head_kernel);
}

void to_json(json& j, const CriticConfig& c) {
  j = json::object();
  EFGAN_FIELD(c, au_dim);
  EFGAN_FIELD(c, image_size);
  EFGAN_FIELD(c, base_channels);
  EFGAN_FIELD(c, face_depth);
  EFGAN_FIELD(c, local_depth);
  EFGAN_FIELD(c, au_hidden);
}
void from_json(const json& j, CriticConfig& c) {
  EFGAN_READ(c, au_dim);
  EFGAN_READ(c, image_size);
  EFGAN_READ(c, base_channels);
  EFGAN_READ(c, face_depth);
  EFGAN_READ(c, local_depth);
  EFGAN_READ(c, au_hidden);
}

void to_json(json& j, const InterpolatorConfig& c) { j = {{"au_dim", c.au_dim}, {"hidden", c.hidden}}; }
void from_json(const json& j, InterpolatorConfig& c) {
  EFGAN_READ(c, au_dim);
  EFGAN_READ(c, hidden);
}

void to_json(json& j, const LossWeights& w) {
  j = {{"lambda_cond", w.cond}, {"lambda_cont", w.cont},  {"lambda_attn", w.attn},
       {"lambda_interp", w.interp}, {"lambda_gp", w.gp}, {"lambda_int", w.interp_adv}};
}
void from_json(const json& j, LossWeights& w) {
  if (j.contains("lambda_cond")) w.cond = j["lambda_cond"].get<double>();
  if (j.contains("lambda_cont")) w.cont = j["lambda_cont"].get<double>();
  if (j.contains("lambda_attn")) w.attn = j["lambda_attn"].get<double>();
  if (j.contains("lambda_interp")) w.interp = j["lambda_interp"].get<double>();
  if (j.contains("lambda_gp")) w.gp = j["lambda_gp"].get<double>();
  if (j.contains("lambda_int")) w.interp_adv = j["lambda_int"].get<double>();
}

void to_json(json& j, const ModelConfig& c) {
  j = {{"generator", c.generator}, {"critic", c.critic}, {"interp", c.interp}, {"layout", c.layout},
       {"n_stages", c.n_stages}};
}
void from_json(const json& j, ModelConfig& c) {
  if (j.contains("generator")) c.generator = j["generator"].get<GeneratorConfig>();
  if (j.contains("critic")) c.critic = j["critic"].get<CriticConfig>();
  if (j.contains("interp")) c.interp = j["interp"].get<InterpolatorConfig>();
  if (j.contains("layout")) c.layout = j["layout"].get<RegionLayout>();
  EFGAN_READ(c, n_stages);
}

void to_json(json& j, const TrainConfig& c) {
  j = json::object();
  EFGAN_FIELD(c, n_stages);
  EFGAN_FIELD(c, batch_size);
  EFGAN_FIELD(c, epochs);
  EFGAN_FIELD(c, lr);
  EFGAN_FIELD(c, lr_decay_start_epoch);
  EFGAN_FIELD(c, finetune_epochs);
  EFGAN_FIELD(c, finetune_lr);
  EFGAN_FIELD(c, adam_beta1);
  EFGAN_FIELD(c, adam_beta2);
  EFGAN_FIELD(c, critic_steps_per_gen);
  EFGAN_FIELD(c, seed);
  EFGAN_FIELD(c, weights);
  EFGAN_FIELD(c, steps_per_epoch);
  EFGAN_FIELD(c, checkpoint_every);
}
void from_json(const json& j, TrainConfig& c) {
  EFGAN_READ(c, n_stages);
  EFGAN_READ(c, batch_size);
  EFGAN_READ(c, epochs);
  EFGAN_READ(c, lr);
  EFGAN_READ(c, lr_decay_start_epoch);
  EFGAN_READ(c, finetune_epochs);
  EFGAN_READ(c, finetune_lr);
  EFGAN_READ(c, adam_beta1);
  EFGAN_READ(c, adam_beta2);
  EFGAN_READ(c, critic_steps_per_gen);
  EFGAN_READ(c, seed);
  EFGAN_READ(c, weights);
  EFGAN_READ(c, steps_per_epoch);
  EFGAN_READ(c, checkpoint_every);
}

#undef EFGAN_FIELD
#undef EFGAN_READ

void validate(const ModelConfig& c) {
  validate(c.generator);
  validate(c.critic);
  if (c.n_stages < 1) throw ConfigError("ModelConfig: n_stages must be >= 1");
  if (c.generator.au_dim != c.critic.au_dim || c.generator.au_dim != c.interp.au_dim) {
    throw ConfigError("ModelConfig: generator, critic and interpolator disagree on au_dim");
  }
  if (c.generator.image_size != c.layout.image_size || c.critic.image_size != c.layout.image_size) {
    throw ConfigError("ModelConfig: image_size disagrees with the region layout");
  }
  for (Region r : kRegions) {
    const Rect& rect = c.layout[r];
    const RegionSize want = region_size(r, c.layout.image_size);
    if (rect.height != want.height || rect.width != want.width) {
      throw ConfigError("ModelConfig: " + std::string(region_name(r)) + " rectangle has the wrong size");
    }
    if (rect.top < 0 || rect.left < 0 || rect.top + rect.height > c.layout.image_size ||
        rect.left + rect.width > c.layout.image_size) {
      throw ConfigError("ModelConfig: " + std::string(region_name(r)) + " rectangle leaves the image");
    }
  }
}

void validate(const TrainConfig& c) {
  if (c.n_stages < 1 || c.batch_size < 1 || c.epochs < 1 || c.finetune_epochs < 1 || c.critic_steps_per_gen < 1) {
    throw ConfigError("TrainConfig: counts must be positive");
  }
  if (!(c.lr > 0) || !(c.finetune_lr > 0)) throw ConfigError("TrainConfig: learning rates must be > 0");
  if (c.lr_decay_start_epoch < 0 || c.lr_decay_start_epoch > c.epochs) {
    throw ConfigError("TrainConfig: lr_decay_start_epoch must lie in [0, epochs]");
  }
  if (c.steps_per_epoch < 0 || c.checkpoint_every < 0) throw ConfigError("TrainConfig: negative step count");
  validate(c.weights);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  RunConfig rc;
  try {
    const json j = json::parse(in);
    if (j.contains("model")) {
      rc.model = j["model"].get<ModelConfig>();
      rc.has_layout = j["model"].contains("layout");
    }
    if (j.contains("train")) rc.train = j["train"].get<TrainConfig>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  validate(rc.train);
  return rc;
}

void save_run_config(const RunConfig& rc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  json m = rc.model;
  if (!rc.has_layout) m.erase("layout");
  out << json{{"model", m}, {"train", rc.train}}.dump(2) << '\n';
}

std::string to_json_string(const ModelConfig& c) { return json(c).dump(); }
std::string to_json_string(const TrainConfig& c) { return json(c).dump(); }
std::string to_json_string(const RegionLayout& l) { return json(l).dump(); }

ModelConfig model_config_from_json_string(const std::string& text) {
  try {
    return json::parse(text).get<ModelConfig>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
}

}  // namespace efgan
