#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "efgan/errors.hpp"
#include "efgan/evaluation.hpp"
#include "efgan/image.hpp"
#include "efgan/manifest.hpp"
#include "efgan/model.hpp"
#include "efgan/synth.hpp"
#include "efgan/trainer.hpp"

namespace fs = std::filesystem;
using namespace efgan;

namespace {

std::vector<float> parse_aus(const std::string& text) {
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream in(s);
  std::vector<float> out;
  float v;
  while (in >> v) out.push_back(v);
  if (!in.eof()) throw ConfigError("cannot parse AU list '" + text + "'");
  if (out.empty()) throw ConfigError("empty AU list");
  return out;
}

torch::Tensor au_tensor(const std::vector<float>& v, int au_dim, const char* what) {
  if (int(v.size()) != au_dim) {
    throw ConfigError(std::string(what) + ": expected " + std::to_string(au_dim) + " values, got " +
                      std::to_string(v.size()));
  }
  return torch::tensor(v, torch::kFloat);
}

Dataset open_dataset(const fs::path& manifest_path) {
  auto manifest = load_manifest(manifest_path);
  validate_manifest(manifest, true);
  return load_dataset(manifest);
}

/// The manifest header fixes AU dimension and resolution; the layout comes
/// from the config when given, otherwise from the averaged landmarks.
ModelConfig model_config_for(const RunConfig& rc, const Dataset& data) {
  ModelConfig m = rc.model;
  m.generator.au_dim = m.critic.au_dim = m.interp.au_dim = data.manifest.au_dim;
  m.generator.image_size = m.critic.image_size = data.manifest.image_size;
  if (rc.has_layout) {
    if (m.layout.image_size != data.manifest.image_size) {
      m.layout = rescale_layout(m.layout, data.manifest.image_size);
    }
  } else {
    m.layout = compute_region_centers(data.manifest);
  }
  m.n_stages = 1;
  return m;
}

void write_image(const fs::path& path, const torch::Tensor& chw) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_png(path, denormalize_image(chw));
}

torch::Tensor read_face(const fs::path& path, int image_size) {
  auto img = normalize_image(read_png(path));
  if (img.height() != image_size || img.width() != image_size) {
    throw ValidationError(path.string() + ": expected " + std::to_string(image_size) + "x" +
                          std::to_string(image_size) + " image");
  }
  return img.tensor();
}

std::vector<float> source_aus_from_manifest(const fs::path& manifest_path, const fs::path& image) {
  auto manifest = load_manifest(manifest_path);
  const auto want = fs::weakly_canonical(image);
  for (const auto& r : manifest.records) {
    if (fs::weakly_canonical(resolve_image_path(manifest, r)) == want) return r.aus;
  }
  throw ValidationError(image.string() + " is not listed in " + manifest_path.string());
}

std::string svg_plot(const std::vector<std::vector<float>>& rows, const std::string& title) {
  const int w = 480, h = 300, m = 40;
  const size_t n = rows.size(), c = rows.front().size();
  float lo = 0.f, hi = 1.f;
  for (const auto& r : rows)
    for (float v : r) lo = std::min(lo, v), hi = std::max(hi, v);
  auto x = [&](size_t k) { return m + (w - 2 * m) * (n > 1 ? double(k) / double(n - 1) : 0.0); };
  auto y = [&](float v) { return h - m - (h - 2 * m) * (v - lo) / (hi - lo); };
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"};
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  s << "<text x=\"" << m << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
  s << "<line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << w - m << "\" y2=\"" << h - m
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << h - m << "\" stroke=\"black\"/>\n";
  for (size_t j = 0; j < c; ++j) {
    s << "<polyline fill=\"none\" stroke=\"" << colors[j % 7] << "\" points=\"";
    for (size_t k = 0; k < n; ++k) s << x(k) << ',' << y(rows[k][j]) << ' ';
    s << "\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<float> to_vector(const torch::Tensor& t) {
  auto f = t.to(torch::kFloat).contiguous().view(-1);
  return {f.data_ptr<float>(), f.data_ptr<float>() + f.numel()};
}

std::vector<double> rounded(const std::vector<float>& v) {
  std::vector<double> out;
  for (float x : v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.7g", x);
    out.push_back(std::strtod(buf, nullptr));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascade EF-GAN facial expression editing"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "Render a paired synthetic face corpus");
  int identities = 4, aus_per_id = 8, c = 4, size = 64;
  std::uint64_t seed = 0;
  fs::path out;
  synth->add_option("--identities", identities, "Number of identities")->required();
  synth->add_option("--aus-per-id", aus_per_id, "AU settings rendered per identity")->required();
  synth->add_option("--c", c, "AU dimension")->required();
  synth->add_option("--seed", seed, "Random seed")->required();
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--size", size, "Image size in pixels")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train a single EF-GAN");
  fs::path manifest_path, config_path;
  int64_t max_steps = -1;
  train->add_option("--manifest", manifest_path, "Dataset manifest")->required();
  train->add_option("--config", config_path, "Run configuration (JSON)");
  train->add_option("--out", out, "Output directory")->required();
  train->add_option("--steps", max_steps, "Stop after this many steps");

  // train-cascade
  auto* cascade = app.add_subcommand("train-cascade", "Build a cascade from a single EF-GAN and fine-tune it");
  fs::path init_ckpt;
  int stages = 3;
  cascade->add_option("--init", init_ckpt, "Pretrained single EF-GAN checkpoint")->required();
  cascade->add_option("--stages", stages, "Number of stages")->capture_default_str();
  cascade->add_option("--manifest", manifest_path, "Dataset manifest")->required();
  cascade->add_option("--config", config_path, "Run configuration (JSON); only the train section is used");
  cascade->add_option("--out", out, "Output directory")->required();
  cascade->add_option("--steps", max_steps, "Stop after this many steps");

  // edit
  auto* edit_cmd = app.add_subcommand("edit", "Edit the expression of a face image");
  fs::path ckpt, image, grid;
  std::string source_text, target_text;
  int frames = 0;
  edit_cmd->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  edit_cmd->add_option("--image", image, "Input PNG")->required();
  edit_cmd->add_option("--source-aus", source_text, "Source AUs, comma separated");
  edit_cmd->add_option("--manifest", manifest_path, "Manifest to look the source AUs up in");
  edit_cmd->add_option("--target-aus", target_text, "Target AUs, comma separated")->required();
  edit_cmd->add_option("--out", out, "Output PNG of the final edit")->required();
  edit_cmd->add_option("--frames", frames, "Continuous editing: number of frames");
  edit_cmd->add_option("--grid", grid, "Write input, intermediates/frames and final as a grid PNG");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Compute PSNR, Frechet distance and classification accuracies");
  std::string metrics = "psnr,fid,cls";
  fs::path report_path;
  int holdout = 1, cls_epochs = 20;
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  eval_cmd->add_option("--manifest", manifest_path, "Dataset manifest")->required();
  eval_cmd->add_option("--metrics", metrics, "Comma separated subset of psnr,fid,cls")->capture_default_str();
  eval_cmd->add_option("--report", report_path, "Write the JSON report here (stdout otherwise)");
  eval_cmd->add_option("--holdout", holdout, "Identities held out as the classification test split")
      ->capture_default_str();
  eval_cmd->add_option("--classifier-epochs", cls_epochs, "Classifier training epochs")->capture_default_str();
  eval_cmd->add_option("--seed", seed, "Classifier seed");

  // interp
  auto* interp_cmd = app.add_subcommand("interp", "Print the per-stage AU targets of an edit");
  std::string from_text, to_text;
  bool linear = false;
  fs::path plot;
  interp_cmd->add_option("--ckpt", ckpt, "Checkpoint directory (not needed with --linear)");
  interp_cmd->add_option("--from", from_text, "Source AUs")->required();
  interp_cmd->add_option("--to", to_text, "Target AUs")->required();
  interp_cmd->add_option("--stages", stages, "Number of stages")->capture_default_str();
  interp_cmd->add_flag("--linear", linear, "Linear pseudo-targets instead of the learned interpolator");
  interp_cmd->add_option("--plot", plot, "Write an SVG plot of the AU trajectories");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      auto m = synth_dataset_generate(identities, aus_per_id, c, out, seed, size);
      std::cout << "wrote " << m.records.size() << " records to " << (out / "manifest.jsonl").string() << '\n';
    } else if (*train) {
      auto data = open_dataset(manifest_path);
      RunConfig rc = config_path.empty() ? RunConfig{} : load_run_config(config_path);
      const auto model_cfg = model_config_for(rc, data);
      TrainOptions opts;
      opts.out_dir = out;
      opts.max_steps = max_steps;
      auto result = train_single_efgan(data, model_cfg, rc.train, opts);
      std::cout << "trained " << result.steps << " steps; checkpoint " << (out / "checkpoint").string() << '\n';
    } else if (*cascade) {
      auto data = open_dataset(manifest_path);
      auto single = load_checkpoint(init_ckpt);
      check_compatible(single->config(), data);
      auto model = init_cascade_from_pretrained(single, stages);
      RunConfig rc = config_path.empty() ? RunConfig{} : load_run_config(config_path);
      rc.train.n_stages = stages;
      TrainOptions opts;
      opts.out_dir = out;
      opts.max_steps = max_steps;
      auto result = train_cascade(model, data, rc.train, opts);
      std::cout << "fine-tuned " << result.steps << " steps; checkpoint " << (out / "checkpoint").string() << '\n';
    } else if (*edit_cmd) {
      auto model = load_checkpoint(ckpt);
      const int au_dim = model->config().generator.au_dim;
      std::vector<float> source;
      if (!source_text.empty()) {
        source = parse_aus(source_text);
      } else if (!manifest_path.empty()) {
        source = source_aus_from_manifest(manifest_path, image);
      } else {
        throw ConfigError("edit: give --source-aus or --manifest");
      }
      const auto y_x = au_tensor(source, au_dim, "--source-aus");
      const auto y_z = au_tensor(parse_aus(target_text), au_dim, "--target-aus");
      const auto face = read_face(image, model->config().generator.image_size);
      std::vector<torch::Tensor> tiles{face};
      torch::Tensor final;
      if (frames > 0) {
        auto seq = continuous_edit(model, face, y_x, y_z, frames);
        for (auto& f : seq) tiles.push_back(f[0]);
        final = seq.back()[0];
      } else {
        auto result = edit(model, face, y_x, y_z);
        for (auto& t : result.intermediates) tiles.push_back(t[0]);
        final = result.final[0];
        tiles.push_back(final);
      }
      write_image(out, final);
      if (!grid.empty()) {
        auto g = make_grid(tiles, int(tiles.size()));
        if (grid.has_parent_path()) fs::create_directories(grid.parent_path());
        write_png(grid, g);
      }
      std::cout << "wrote " << out.string() << '\n';
    } else if (*eval_cmd) {
      auto model = load_checkpoint(ckpt);
      auto data = open_dataset(manifest_path);
      EvalOptions opts;
      opts.psnr = opts.fid = opts.cls = false;
      std::string item;
      std::istringstream list(metrics);
      while (std::getline(list, item, ',')) {
        if (item == "psnr") opts.psnr = true;
        else if (item == "fid") opts.fid = true;
        else if (item == "cls") opts.cls = true;
        else throw ConfigError("eval: unknown metric '" + item + "'");
      }
      opts.holdout_identities = holdout;
      opts.classifier.epochs = cls_epochs;
      opts.classifier.seed = seed;
      const auto text = to_json_string(evaluate(model, data, opts));
      if (report_path.empty()) {
        std::cout << text << '\n';
      } else {
        if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
        std::ofstream(report_path) << text << '\n';
        std::cout << "wrote " << report_path.string() << '\n';
      }
    } else if (*interp_cmd) {
      const auto from = parse_aus(from_text);
      const auto to = parse_aus(to_text);
      if (from.size() != to.size()) throw ConfigError("interp: --from and --to differ in length");
      const auto y_x = torch::tensor(from, torch::kFloat), y_z = torch::tensor(to, torch::kFloat);
      std::vector<torch::Tensor> targets;
      if (linear) {
        targets = pseudo_targets(y_x, y_z, stages);
      } else {
        if (ckpt.empty()) throw ConfigError("interp: --ckpt is required unless --linear is given");
        auto model = load_checkpoint(ckpt);
        au_tensor(from, model->config().interp.au_dim, "--from");
        torch::NoGradGuard no_grad;
        model->eval();
        auto interp = model->interp();
        targets = stage_targets(y_x, y_z, stages, interp);
      }
      nlohmann::json j;
      j["from"] = rounded(from);
      j["to"] = rounded(to);
      j["mode"] = linear ? "linear" : "interpolator";
      std::vector<std::vector<float>> rows{from};
      for (const auto& t : targets) rows.push_back(to_vector(t));
      j["stages"] = nlohmann::json::array();
      for (size_t k = 1; k < rows.size(); ++k) j["stages"].push_back(rounded(rows[k]));
      std::cout << j.dump() << '\n';
      if (!plot.empty()) std::ofstream(plot) << svg_plot(rows, "stage AU targets");
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what();
    if (!e.last_good_checkpoint().empty()) std::cerr << " (last good checkpoint: " << e.last_good_checkpoint() << ")";
    std::cerr << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
