#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <string>

#include "ganilla/data.hpp"
#include "ganilla/image_io.hpp"
#include "ganilla/rng.hpp"

// Desk-scale stand-ins for the two domains: "natural" scenes with smooth
// gradients and textured objects over ten scene classes, and flat-palette
// "illustrations" with dark outlines whose palette identifies the style.
namespace ganilla {

struct SynthOptions {
  std::size_t image_size = 64;
  std::size_t n_test = 0;     // extra labeled natural images written to testA/
  std::size_t n_scenes = 10;
  std::size_t style = 0;      // illustration style used for trainB/
};

namespace synth_detail {

using Rgb = std::array<double, 3>;

inline Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
  v = std::clamp(v, 0.0, 1.0);
  s = std::clamp(s, 0.0, 1.0);
  const double c = v * s, x = c * (1 - std::abs(std::fmod(h, 2.0) - 1)), m = v - c;
  Rgb rgb{};
  switch (static_cast<int>(h)) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  return {rgb[0] + m, rgb[1] + m, rgb[2] + m};
}

inline std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L)); }

inline void put(RawImage& img, std::size_t y, std::size_t x, const Rgb& c) {
  for (std::size_t k = 0; k < 3; ++k) img.at(y, x, k) = to_byte(c[k]);
}

// Base palettes in [0,1]; styles beyond the table rotate hue.
inline const std::array<std::array<Rgb, 4>, 6>& palettes() {
  static const std::array<std::array<Rgb, 4>, 6> table{{
      {{{0.98, 0.85, 0.62}, {0.93, 0.45, 0.35}, {0.99, 0.75, 0.20}, {0.70, 0.25, 0.30}}},  // warm
      {{{0.70, 0.88, 0.98}, {0.15, 0.40, 0.80}, {0.40, 0.75, 0.90}, {0.10, 0.20, 0.45}}},  // cool
      {{{0.80, 0.93, 0.70}, {0.25, 0.55, 0.20}, {0.55, 0.80, 0.30}, {0.10, 0.35, 0.15}}},  // greens
      {{{0.93, 0.80, 0.95}, {0.60, 0.25, 0.65}, {0.85, 0.50, 0.80}, {0.35, 0.10, 0.40}}},  // violet
      {{{0.95, 0.95, 0.90}, {0.50, 0.50, 0.50}, {0.80, 0.80, 0.75}, {0.25, 0.25, 0.25}}},  // grey
      {{{1.00, 0.92, 0.40}, {0.90, 0.20, 0.10}, {0.20, 0.60, 0.95}, {0.10, 0.65, 0.35}}},  // primary
  }};
  return table;
}

}  // namespace synth_detail

/// One natural-like scene of class `scene`: a neutral sky-to-ground gradient
/// shared by all classes, with textured objects whose hue and texture
/// orientation are class-specific. Keeping the class colour local (rather
/// than tinting the whole frame) leaves it visible after instance
/// normalization, which removes per-image channel means.
inline RawImage synth_natural_image(std::size_t scene, std::size_t n_scenes, std::size_t size, Engine& rng) {
  using namespace synth_detail;
  const double hue = 360.0 * static_cast<double>(scene) / static_cast<double>(n_scenes) + 8.0 * (uniform01(rng) - 0.5);
  const double theta = std::numbers::pi * static_cast<double>(scene) / static_cast<double>(n_scenes);
  const double freq = 3.0 + static_cast<double>(scene % 3);
  const double phase = 2 * std::numbers::pi * uniform01(rng);
  const double horizon = 0.45 + 0.15 * uniform01(rng);
  struct Blob {
    double cy, cx, ry, rx;
  };
  std::array<Blob, 3> blobs{};
  for (auto& b : blobs)
    b = {0.2 + 0.6 * uniform01(rng), 0.2 + 0.6 * uniform01(rng), 0.12 + 0.14 * uniform01(rng),
         0.12 + 0.14 * uniform01(rng)};

  RawImage img(size, size);
  const double s = static_cast<double>(size);
  const Rgb sky_top{0.78, 0.84, 0.90}, sky_low{0.62, 0.66, 0.70}, ground{0.42, 0.40, 0.36};
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / s, v = (static_cast<double>(y) + 0.5) / s;
      Rgb c{};
      if (v < horizon) {
        const double t = v / horizon;
        for (std::size_t k = 0; k < 3; ++k) c[k] = (1 - t) * sky_top[k] + t * sky_low[k];
      } else {
        for (std::size_t k = 0; k < 3; ++k) c[k] = ground[k] * (1.1 - 0.3 * (v - horizon));
      }
      double cover = 0;
      for (const auto& b : blobs) {
        const double d2 = ((u - b.cx) * (u - b.cx)) / (b.rx * b.rx) + ((v - b.cy) * (v - b.cy)) / (b.ry * b.ry);
        cover = std::max(cover, std::clamp((1.0 - d2) * 4.0, 0.0, 1.0));  // soft edge
      }
      if (cover > 0) {
        const double tex = std::sin(2 * std::numbers::pi * freq * (u * std::cos(theta) + v * std::sin(theta)) + phase);
        const Rgb obj = hsv_to_rgb(hue, 0.75, 0.62 + 0.18 * tex);
        for (std::size_t k = 0; k < 3; ++k) c[k] = (1 - cover) * c[k] + cover * obj[k];
      }
      for (auto& ck : c) ck += 0.015 * standard_normal(rng);
      put(img, y, x, c);
    }
  }
  return img;
}

/// One illustration-like image in `style`: flat palette fills with dark
/// outlines whose thickness also depends on the style.
inline RawImage synth_illustration(std::size_t style, std::size_t size, Engine& rng) {
  using namespace synth_detail;
  auto palette = palettes()[style % palettes().size()];
  if (const std::size_t turn = style / palettes().size(); turn) {
    for (auto& c : palette) {
      const double shift = 0.17 * static_cast<double>(turn);
      c = {std::fmod(c[0] + shift, 1.0), std::fmod(c[1] + 2 * shift, 1.0), std::fmod(c[2] + 3 * shift, 1.0)};
    }
  }
  const long outline = 1 + static_cast<long>(style % 3);
  const Rgb ink{0.08, 0.07, 0.06};
  const auto n = static_cast<long>(size);

  RawImage img(size, size);
  std::vector<int> owner(size * size, -1);  // shape index per pixel, -1 = background
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) put(img, y, x, palette[0]);
  const int shapes = 4 + static_cast<int>(uniform_index(rng, 3));
  for (int k = 0; k < shapes; ++k) {
    const bool circle = uniform01(rng) < 0.5;
    const double cy = uniform01(rng) * n, cx = uniform01(rng) * n;
    const double ry = (0.10 + 0.18 * uniform01(rng)) * n, rx = (0.10 + 0.18 * uniform01(rng)) * n;
    for (long y = 0; y < n; ++y)
      for (long x = 0; x < n; ++x) {
        const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
        const bool inside = circle ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (inside) owner[static_cast<std::size_t>(y * n + x)] = k;
      }
  }
  for (long y = 0; y < n; ++y)
    for (long x = 0; x < n; ++x) {
      const int o = owner[static_cast<std::size_t>(y * n + x)];
      if (o >= 0) put(img, static_cast<std::size_t>(y), static_cast<std::size_t>(x), palette[1 + o % 3]);
    }
  // Outline every pixel within `outline` of a region boundary.
  for (long y = 0; y < n; ++y)
    for (long x = 0; x < n; ++x) {
      const int o = owner[static_cast<std::size_t>(y * n + x)];
      bool edge = false;
      for (long dy = -outline; dy <= outline && !edge; ++dy)
        for (long dx = -outline; dx <= outline && !edge; ++dx) {
          const long yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= n || xx >= n) continue;
          if (owner[static_cast<std::size_t>(yy * n + xx)] != o && std::max(std::abs(dy), std::abs(dx)) <= outline)
            edge = true;
        }
      if (edge) put(img, static_cast<std::size_t>(y), static_cast<std::size_t>(x), ink);
    }
  return img;
}

inline std::string style_name(std::size_t style) { return "S" + std::to_string(style); }

inline std::string numbered(const std::string& prefix, std::size_t i) {
  std::ostringstream os;
  os << prefix << std::setw(4) << std::setfill('0') << i << ".png";
  return os.str();
}

/// Writes trainA/ (n natural), trainB/ (n illustrations), testA/ (n_test
/// natural), labels.csv for all natural images and style_id.txt.
/// Scene classes cycle 0..n_scenes-1. Deterministic under `seed`.
inline fs::path synth_toy_domains(std::uint64_t seed, std::size_t n, const fs::path& out_root,
                                  const SynthOptions& opt = {}) {
  if (n == 0) throw DataError("synth_toy_domains: n must be positive");
  if (opt.n_scenes == 0 || opt.image_size < 8) throw DataError("synth_toy_domains: invalid options");
  std::error_code ec;
  for (const char* sub : {"trainA", "trainB", "testA"}) {
    fs::create_directories(out_root / sub, ec);
    if (ec) throw DataError("cannot create " + (out_root / sub).string() + ": " + ec.message());
  }
  Engine rng(seed);
  std::map<std::string, int> labels;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t scene = i % opt.n_scenes;
    const std::string name = numbered("nat_", i);
    write_png(out_root / "trainA" / name, synth_natural_image(scene, opt.n_scenes, opt.image_size, rng));
    labels["trainA/" + name] = static_cast<int>(scene);
  }
  for (std::size_t i = 0; i < n; ++i)
    write_png(out_root / "trainB" / numbered("ill_", i), synth_illustration(opt.style, opt.image_size, rng));
  for (std::size_t i = 0; i < opt.n_test; ++i) {
    const std::size_t scene = i % opt.n_scenes;
    const std::string name = numbered("test_", i);
    write_png(out_root / "testA" / name, synth_natural_image(scene, opt.n_scenes, opt.image_size, rng));
    labels["testA/" + name] = static_cast<int>(scene);
  }
  write_labels_csv(out_root / "labels.csv", labels);
  std::ofstream(out_root / "style_id.txt") << style_name(opt.style) << '\n';
  return out_root;
}

/// Writes out_root/S0 .. S{n_styles-1}/, n_per_style illustrations each.
inline fs::path synth_style_sets(std::uint64_t seed, std::size_t n_styles, std::size_t n_per_style,
                                 const fs::path& out_root, std::size_t image_size = 64) {
  if (n_styles == 0 || n_per_style == 0) throw DataError("synth_style_sets: counts must be positive");
  Engine rng(seed);
  for (std::size_t s = 0; s < n_styles; ++s) {
    const fs::path dir = out_root / style_name(s);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t i = 0; i < n_per_style; ++i)
      write_png(dir / numbered("ill_", i), synth_illustration(s, image_size, rng));
  }
  return out_root;
}

}  // namespace ganilla
