#include "efgan/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include <torch/torch.h>

#include "efgan/errors.hpp"

namespace efgan {

namespace {

using Rgb = std::array<double, 3>;

// Geometry is authored on a 64 px reference canvas and scaled.
constexpr double kReference = 64.0;

struct Identity {
  Rgb background;
  Rgb skin;
  Rgb iris;
  Rgb lip;
  double shade;  // horizontal skin gradient
  double face_cx, face_cy, face_rx, face_ry;
  double eye_dx, eye_y, eye_w;
  double brow_thickness;
  double nose_tip_y, nose_w;
  double mouth_y, mouth_w;
};

Identity make_identity(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0x5851F42D4C957F2DULL);
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  Identity id{};
  id.background = {u(0.1, 0.45), u(0.1, 0.45), u(0.1, 0.45)};
  const double tone = u(0.55, 0.88);
  id.skin = {tone, tone * u(0.74, 0.84), tone * u(0.6, 0.7)};
  id.iris = {u(0.05, 0.35), u(0.05, 0.3), u(0.05, 0.25)};
  const double lip = u(0.8, 1.05);
  id.lip = {0.72 * lip, 0.28 * lip, 0.32 * lip};
  id.shade = u(-0.08, 0.08);
  id.face_cx = 32.0 + u(-1.0, 1.0);
  id.face_cy = 34.0 + u(-1.0, 1.0);
  id.face_rx = u(21.0, 24.0);
  id.face_ry = u(26.0, 28.0);
  id.eye_dx = u(9.0, 10.5);
  id.eye_y = u(24.0, 26.0);
  id.eye_w = u(3.8, 4.6);
  id.brow_thickness = u(1.2, 1.8);
  id.nose_tip_y = id.eye_y + u(12.0, 14.0);
  id.nose_w = u(2.5, 3.5);
  id.mouth_y = id.nose_tip_y + u(7.0, 8.5);
  id.mouth_w = u(7.0, 8.5);
  return id;
}

// Expression-dependent geometry, reference units.
struct Pose {
  double brow_y;
  double eye_h;
  double curve;  // mouth-corner rise, positive = smile
  double gap;    // lip separation
};

Pose make_pose(const Identity& id, std::span<const double> a) {
  auto at = [&](size_t i) { return i < a.size() ? a[i] : 0.5; };
  Pose p{};
  p.brow_y = id.eye_y - 5.0 - 2.5 * at(0);
  p.eye_h = 0.5 + 2.3 * at(1);
  p.curve = (at(2) - 0.5) * 6.0;
  p.gap = 0.3 + 3.7 * at(3);
  return p;
}

constexpr double kLipThickness = 1.3;
constexpr double kIrisRadius = 1.7;

double smooth_coverage(double signed_distance, double aa) {
  // 1 inside, 0 outside, linear ramp of width `aa` centred on the boundary.
  return std::clamp(0.5 - signed_distance / aa, 0.0, 1.0);
}

double ellipse_sd(double x, double y, double cx, double cy, double rx, double ry) {
  // First-order distance to an ellipse boundary.
  const double dx = (x - cx) / rx;
  const double dy = (y - cy) / ry;
  const double f = std::sqrt(dx * dx + dy * dy);
  const double gx = dx / rx;
  const double gy = dy / ry;
  const double g = std::sqrt(gx * gx + gy * gy);
  return g > 0 ? (f - 1.0) * f / g : -std::min(rx, ry);
}

double segment_sd(double x, double y, double ax, double ay, double bx, double by, double radius) {
  const double px = x - ax;
  const double py = y - ay;
  const double vx = bx - ax;
  const double vy = by - ay;
  const double t = std::clamp((px * vx + py * vy) / (vx * vx + vy * vy), 0.0, 1.0);
  const double dx = px - t * vx;
  const double dy = py - t * vy;
  return std::sqrt(dx * dx + dy * dy) - radius;
}

void blend(Rgb& dst, const Rgb& src, double alpha) {
  if (alpha <= 0) return;
  for (int c = 0; c < 3; ++c) dst[c] += (src[c] - dst[c]) * alpha;
}

Rgb scale(const Rgb& c, double f) { return {c[0] * f, c[1] * f, c[2] * f}; }

void draw_eye(Rgb& px, double x, double y, double cx, const Identity& id, const Pose& pose, double aa) {
  const double outline = ellipse_sd(x, y, cx, id.eye_y, id.eye_w + 0.5, pose.eye_h + 0.5);
  blend(px, scale(id.skin, 0.45), smooth_coverage(outline, aa));
  const double white = ellipse_sd(x, y, cx, id.eye_y, id.eye_w, pose.eye_h);
  const double inside = smooth_coverage(white, aa);
  blend(px, {0.95, 0.95, 0.92}, inside);
  const double r = std::hypot(x - cx, y - id.eye_y) - kIrisRadius;
  blend(px, id.iris, std::min(inside, smooth_coverage(r, aa)));
}

void draw_brow(Rgb& px, double x, double y, double cx, double side, const Identity& id, const Pose& pose, double aa) {
  const double half = id.eye_w + 0.8;
  const double sd = segment_sd(x, y, cx - side * half, pose.brow_y + 0.6, cx + side * half, pose.brow_y - 0.3,
                               id.brow_thickness * 0.5);
  blend(px, scale(id.skin, 0.32), smooth_coverage(sd, aa));
}

void draw_nose(Rgb& px, double x, double y, const Identity& id, double aa) {
  const double ridge = segment_sd(x, y, id.face_cx, id.eye_y + 4.0, id.face_cx + 0.6, id.nose_tip_y - 0.5, 0.5);
  blend(px, scale(id.skin, 0.82), 0.7 * smooth_coverage(ridge, aa));
  for (double side : {-1.0, 1.0}) {
    const double r = std::hypot(x - (id.face_cx + side * id.nose_w * 0.6), y - id.nose_tip_y) - 0.9;
    blend(px, scale(id.skin, 0.45), smooth_coverage(r, aa));
  }
}

void draw_mouth(Rgb& px, double x, double y, const Identity& id, const Pose& pose, double aa) {
  const double u = (x - id.face_cx) / id.mouth_w;
  if (std::abs(u) > 1.0 + 2.0 / id.mouth_w) return;
  const double uc = std::clamp(u, -1.0, 1.0);
  const double centre = id.mouth_y - pose.curve * uc * uc;
  const double open = 0.5 * pose.gap * std::sqrt(std::max(0.0, 1.0 - uc * uc));
  const double upper = centre - open;
  const double lower = centre + open;
  // Horizontal extent handled by a soft cap on |u|.
  const double end_sd = (std::abs(u) - 1.0) * id.mouth_w;
  const double horizontal = smooth_coverage(end_sd, aa);
  if (lower > upper) {
    const double interior = std::max(upper - y, y - lower);
    blend(px, {0.22, 0.06, 0.07}, std::min(horizontal, smooth_coverage(interior, aa)));
  }
  for (double lip_y : {upper, lower}) {
    const double sd = std::abs(y - lip_y) - 0.5 * kLipThickness;
    blend(px, id.lip, std::min(horizontal, smooth_coverage(sd, aa)));
  }
}

PixelBox to_pixels(double x0, double y0, double x1, double y1, double s, int canvas) {
  PixelBox b;
  b.x0 = std::clamp(static_cast<int>(std::floor(x0 * s)), 0, canvas);
  b.y0 = std::clamp(static_cast<int>(std::floor(y0 * s)), 0, canvas);
  b.x1 = std::clamp(static_cast<int>(std::ceil(x1 * s)), 0, canvas);
  b.y1 = std::clamp(static_cast<int>(std::ceil(y1 * s)), 0, canvas);
  return b;
}

}  // namespace

SyntheticFace synth_face_render(const SyntheticFaceParams& params) {
  if (params.canvas < kMinSyntheticCanvas) {
    throw ConfigError("synth_face_render: canvas " + std::to_string(params.canvas) + " px is below the minimum of " +
                      std::to_string(kMinSyntheticCanvas));
  }
  for (double a : params.au_like) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("synth_face_render: au_like components must lie in [0, 1]");
  }
  const Identity id = make_identity(params.identity_seed);
  const Pose pose = make_pose(id, params.au_like);
  const int n = params.canvas;
  const double s = n / kReference;
  const double aa = 1.0 / s;  // one output pixel in reference units

  auto hwc = torch::empty({n, n, 3}, torch::kFloat32);
  auto acc = hwc.accessor<float, 3>();
  const double left_eye = id.face_cx - id.eye_dx;
  const double right_eye = id.face_cx + id.eye_dx;
  for (int py = 0; py < n; ++py) {
    for (int pxi = 0; pxi < n; ++pxi) {
      const double x = (pxi + 0.5) / s;
      const double y = (py + 0.5) / s;
      Rgb px = id.background;
      const double face = smooth_coverage(ellipse_sd(x, y, id.face_cx, id.face_cy, id.face_rx, id.face_ry), aa);
      const double shade = 1.0 + id.shade * (x - id.face_cx) / id.face_rx;
      blend(px, scale(id.skin, shade), face);
      draw_nose(px, x, y, id, aa);
      draw_eye(px, x, y, left_eye, id, pose, aa);
      draw_eye(px, x, y, right_eye, id, pose, aa);
      draw_brow(px, x, y, left_eye, -1.0, id, pose, aa);
      draw_brow(px, x, y, right_eye, 1.0, id, pose, aa);
      draw_mouth(px, x, y, id, pose, aa);
      for (int c = 0; c < 3; ++c) acc[py][pxi][c] = static_cast<float>(std::clamp(px[c], 0.0, 1.0) * 2.0 - 1.0);
    }
  }

  SyntheticFace out{ImageTensor(hwc.permute({2, 0, 1}).contiguous()), {}, {}};
  auto put = [&](const char* name, double x, double y) {
    out.landmarks[name] = Point{std::clamp(x * s, 0.0, n - 1.0), std::clamp(y * s, 0.0, n - 1.0)};
  };
  put("left_eye_outer", left_eye - id.eye_w, id.eye_y);
  put("left_eye_inner", left_eye + id.eye_w, id.eye_y);
  put("left_pupil", left_eye, id.eye_y);
  put("right_eye_inner", right_eye - id.eye_w, id.eye_y);
  put("right_eye_outer", right_eye + id.eye_w, id.eye_y);
  put("right_pupil", right_eye, id.eye_y);
  put("nose_bridge", id.face_cx, id.eye_y + 3.0);
  put("nose_tip", id.face_cx, id.nose_tip_y);
  put("mouth_left", id.face_cx - id.mouth_w, id.mouth_y - pose.curve);
  put("mouth_right", id.face_cx + id.mouth_w, id.mouth_y - pose.curve);
  put("mouth_top", id.face_cx, id.mouth_y - 0.5 * pose.gap - 0.5 * kLipThickness);
  put("mouth_bottom", id.face_cx, id.mouth_y + 0.5 * pose.gap + 0.5 * kLipThickness);

  // Extents over the full control range, plus the antialiasing ramp.
  const double pad = aa + 0.5;
  const double brow_top = id.eye_y - 7.5 - 0.3 - id.brow_thickness * 0.5;
  out.regions["eyes"] = to_pixels(left_eye - id.eye_w - 1.5 - pad, brow_top - pad, right_eye + id.eye_w + 1.5 + pad,
                                   id.eye_y + 2.8 + 0.5 + pad, s, n);
  out.regions["nose"] = to_pixels(id.face_cx - id.nose_w - 1.0 - pad, id.eye_y + 3.5 - pad,
                                  id.face_cx + id.nose_w + 1.0 + pad, id.nose_tip_y + 1.0 + pad, s, n);
  const double reach = 3.0 + 2.0 + kLipThickness;  // max curve + max half gap + lip
  out.regions["mouth"] = to_pixels(id.face_cx - id.mouth_w - pad, id.mouth_y - reach - pad,
                                   id.face_cx + id.mouth_w + pad, id.mouth_y + reach + pad, s, n);
  return out;
}

std::string synthetic_expression_label(std::span<const double> au_like) {
  auto at = [&](size_t i) { return i < au_like.size() ? au_like[i] : 0.5; };
  const bool smile = at(2) >= 0.5;
  const bool open = at(3) >= 0.5;
  if (smile) return open ? "happy" : "content";
  return open ? "shocked" : "sad";
}

std::vector<std::vector<double>> synthetic_au_settings(int count, int au_dim, std::uint64_t seed) {
  if (count < 1 || au_dim < 1) throw ConfigError("synthetic_au_settings: counts must be >= 1");
  std::mt19937_64 rng(seed ^ 0xA5A5A5A5DEADBEEFULL);
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  // Settings 0/1 are the all-low / all-high extremes; the rest cycle the
  // four mouth quadrants so expression classes stay balanced.
  constexpr std::array<std::array<bool, 2>, 4> kQuadrants = {{{true, false}, {false, true}, {false, false}, {true, true}}};
  std::vector<std::vector<double>> out;
  for (int j = 0; j < count; ++j) {
    std::vector<double> a(au_dim);
    if (j < 2) {
      std::fill(a.begin(), a.end(), j == 0 ? 0.0 : 1.0);
    } else {
      for (auto& v : a) v = u(0.0, 1.0);
      const auto& q = kQuadrants[(j - 2) % 4];
      for (int k = 0; k < 2; ++k) {
        if (2 + k < au_dim) a[2 + k] = q[k] ? u(0.6, 0.95) : u(0.05, 0.4);
      }
    }
    out.push_back(std::move(a));
  }
  return out;
}

DatasetManifest synth_dataset_generate(int n_identities, int aus_per_identity, int au_dim,
                                       const std::filesystem::path& out_dir, std::uint64_t seed, int canvas) {
  if (n_identities < 1 || aus_per_identity < 1) throw ConfigError("synth_dataset_generate: counts must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  const auto settings = synthetic_au_settings(aus_per_identity, au_dim, seed);
  std::mt19937_64 rng(seed);
  DatasetManifest m;
  m.version = kManifestVersion;
  m.au_dim = au_dim;
  m.image_size = canvas;
  m.base_dir = out_dir;
  for (int i = 0; i < n_identities; ++i) {
    const std::uint64_t identity_seed = rng();
    char id_name[32];
    std::snprintf(id_name, sizeof id_name, "id%03d", i);
    for (int j = 0; j < aus_per_identity; ++j) {
      const SyntheticFace face = synth_face_render({settings[j], identity_seed, canvas});
      char file[64];
      std::snprintf(file, sizeof file, "images/%s_%02d.png", id_name, j);
      write_png(out_dir / file, denormalize_image(face.image));
      SampleRecord r;
      r.image_path = file;
      r.aus.assign(settings[j].begin(), settings[j].end());
      r.landmarks = face.landmarks;
      r.identity_id = id_name;
      r.expression_label = synthetic_expression_label(settings[j]);
      m.records.push_back(std::move(r));
    }
  }
  save_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

}  // namespace efgan
