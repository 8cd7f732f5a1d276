#pragma once

// Procedural face-like images with known five-point landmarks. The images
// carry fine texture (skin grain, hair strands, fractal backgrounds, sensor
// noise) so that lossy coding leaves measurable damage.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "fcqc/geometry.hpp"
#include "fcqc/image.hpp"
#include "fcqc/nn.hpp"
#include "fcqc/random.hpp"

namespace fcqc::testing {

struct FaceGeneratorConfig {
  int width = 512;
  int height = 512;
  double min_ied = 170.0;
  double max_ied = 250.0;
  double max_angle_deg = 10.0;
  double noise_sigma = 2.5;
};

struct SyntheticFace {
  ImageBuffer image;
  LandmarkSet landmarks;
};

namespace detail {

using Rgb = std::array<double, 3>;

inline double lattice(std::uint64_t seed, long long ix, long long iy) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x9E3779B97F4A7C15ULL ^
                                                       static_cast<std::uint64_t>(iy)));
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

inline double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

/// Value noise in [-1, 1] with unit lattice spacing.
inline double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto ix = static_cast<long long>(fx);
  const auto iy = static_cast<long long>(fy);
  const double tx = smooth(x - fx);
  const double ty = smooth(y - fy);
  const double a = lattice(seed, ix, iy);
  const double b = lattice(seed, ix + 1, iy);
  const double c = lattice(seed, ix, iy + 1);
  const double d = lattice(seed, ix + 1, iy + 1);
  return (a + (b - a) * tx) + ((c + (d - c) * tx) - (a + (b - a) * tx)) * ty;
}

inline double fbm(std::uint64_t seed, double x, double y, int octaves) {
  double sum = 0.0;
  double amp = 0.5;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * value_noise(seed + static_cast<std::uint64_t>(o) * 7919, x, y);
    x *= 2.0;
    y *= 2.0;
    amp *= 0.5;
  }
  return sum;
}

/// 1 inside, 0 outside, linear over `soft` units across the boundary of the
/// ellipse with center (cx, cy) and radii (rx, ry).
inline double ellipse(double x, double y, double cx, double cy, double rx, double ry, double soft) {
  const double dx = (x - cx) / rx;
  const double dy = (y - cy) / ry;
  const double r = std::sqrt(dx * dx + dy * dy);
  const double dist = (r - 1.0) * std::min(rx, ry);
  return std::clamp(0.5 - dist / soft, 0.0, 1.0);
}

inline void blend(Rgb& dst, const Rgb& src, double alpha) {
  for (int c = 0; c < 3; ++c) dst[c] += (src[c] - dst[c]) * alpha;
}

inline Rgb random_color(std::mt19937_64& rng, double lo, double hi) {
  return {lo + (hi - lo) * unit(rng), lo + (hi - lo) * unit(rng), lo + (hi - lo) * unit(rng)};
}

}  // namespace detail

inline SyntheticFace generate_face(std::uint64_t seed, const FaceGeneratorConfig& config = {}) {
  using namespace detail;
  std::mt19937_64 rng(splitmix64(seed));
  nn::NormalSource normal(splitmix64(seed ^ 0xFACEULL));

  const double ied = config.min_ied + (config.max_ied - config.min_ied) * unit(rng);
  const double angle = (2.0 * unit(rng) - 1.0) * config.max_angle_deg * std::numbers::pi / 180.0;
  const double cx = config.width / 2.0 + (unit(rng) - 0.5) * 0.1 * config.width;
  const double cy = config.height * 0.42 + (unit(rng) - 0.5) * 0.08 * config.height;
  // Face frame: eyes at (-0.5, 0) and (0.5, 0), y grows towards the chin.
  const SimilarityTransform to_image{ied, angle, cx, cy};
  const SimilarityTransform to_face = to_image.inverse();

  const double eye_dy = (unit(rng) - 0.5) * 0.04;
  const double nose_y = 0.44 + 0.06 * unit(rng);
  const double mouth_y = 0.72 + 0.08 * unit(rng);
  const double mouth_half = 0.28 + 0.08 * unit(rng);
  const Point2 f_left{-0.5, eye_dy};
  const Point2 f_right{0.5, -eye_dy};
  const Point2 f_nose{(unit(rng) - 0.5) * 0.06, nose_y};
  const Point2 f_ml{-mouth_half, mouth_y};
  const Point2 f_mr{mouth_half, mouth_y};

  const Rgb skin = [&] {
    const double tone = unit(rng);
    return Rgb{90 + 150 * tone, 60 + 120 * tone, 45 + 100 * tone};
  }();
  const Rgb hair = random_color(rng, 10, 90);
  const Rgb bg_a = random_color(rng, 30, 230);
  const Rgb bg_b = random_color(rng, 30, 230);
  const Rgb iris = random_color(rng, 30, 140);
  const Rgb lips{skin[0] * 0.8 + 40, skin[1] * 0.55, skin[2] * 0.55};
  const double face_rx = 0.95 + 0.15 * unit(rng);
  const double face_ry = 1.25 + 0.2 * unit(rng);
  const double face_cy = 0.3;
  const double hair_line = -0.55 - 0.25 * unit(rng);
  const double bg_scale = 40.0 + 80.0 * unit(rng);
  const std::uint64_t ns = splitmix64(seed ^ 0xBADC0FFEEULL);
  const double px = 1.0 / ied;  // one image pixel in face units

  SyntheticFace out{ImageBuffer(config.width, config.height), {}};
  for (int y = 0; y < config.height; ++y) {
    for (int x = 0; x < config.width; ++x) {
      const Point2 f = to_face.apply({static_cast<double>(x), static_cast<double>(y)});
      // Background: two-color fractal field with fine grain.
      const double t = 0.5 + 0.5 * fbm(ns, x / bg_scale, y / bg_scale, 5);
      Rgb c{bg_a[0] + (bg_b[0] - bg_a[0]) * t, bg_a[1] + (bg_b[1] - bg_a[1]) * t,
            bg_a[2] + (bg_b[2] - bg_a[2]) * t};
      const double grain = 18.0 * value_noise(ns + 1, x / 2.3, y / 2.3);
      for (auto& v : c) v += grain;

      // Hair mass behind the head, with strand texture.
      const double hair_mask = ellipse(f.x, f.y, 0.0, face_cy - 0.15, face_rx * 1.12, face_ry * 1.05, 3 * px);
      if (hair_mask > 0.0) {
        const double strand = 35.0 * value_noise(ns + 2, f.x * 90.0, f.y * 6.0) +
                              15.0 * value_noise(ns + 3, x / 1.7, y / 1.7);
        blend(c, {hair[0] + strand, hair[1] + strand, hair[2] + strand}, hair_mask);
      }

      // Skin with directional shading and pores.
      const double face_mask = ellipse(f.x, f.y, 0.0, face_cy, face_rx, face_ry, 2 * px);
      if (face_mask > 0.0) {
        const double shade = 0.85 + 0.2 * (0.5 - 0.5 * f.x / face_rx) - 0.12 * std::max(0.0, f.y - 1.0);
        const double pores = 7.0 * value_noise(ns + 4, x / 1.5, y / 1.5) + 10.0 * fbm(ns + 5, f.x * 8, f.y * 8, 3);
        Rgb s{skin[0] * shade + pores, skin[1] * shade + pores, skin[2] * shade + pores};
        // Fringe over the forehead.
        const double fringe = std::clamp((hair_line - f.y) / (3 * px) + 0.5, 0.0, 1.0);
        if (fringe > 0.0) {
          const double strand = 35.0 * value_noise(ns + 2, f.x * 90.0, f.y * 6.0);
          blend(s, {hair[0] + strand, hair[1] + strand, hair[2] + strand}, fringe);
        }
        blend(c, s, face_mask);

        // Brows.
        for (const Point2& e : {f_left, f_right}) {
          const double brow = ellipse(f.x, f.y, e.x, e.y - 0.2, 0.22, 0.045, 2 * px);
          if (brow > 0.0) {
            const double strand = 25.0 * value_noise(ns + 6, f.x * 120.0, f.y * 30.0);
            blend(c, {hair[0] + strand, hair[1] + strand, hair[2] + strand}, brow);
          }
          // Eye: sclera, iris, pupil, highlight.
          const double sclera = ellipse(f.x, f.y, e.x, e.y, 0.17, 0.075, 1.5 * px);
          if (sclera > 0.0) {
            blend(c, {235, 232, 228}, sclera);
            const double ir = ellipse(f.x, f.y, e.x, e.y, 0.07, 0.07, 1.5 * px) * sclera;
            const double fibres = 20.0 * value_noise(ns + 7, f.x * 200.0, f.y * 200.0);
            blend(c, {iris[0] + fibres, iris[1] + fibres, iris[2] + fibres}, ir);
            blend(c, {12, 10, 10}, ellipse(f.x, f.y, e.x, e.y, 0.03, 0.03, 1.5 * px) * sclera);
            blend(c, {250, 250, 250}, ellipse(f.x, f.y, e.x + 0.025, e.y - 0.025, 0.012, 0.012, px));
          }
          // Lid line.
          const double lid = ellipse(f.x, f.y, e.x, e.y - 0.06, 0.19, 0.018, 1.5 * px);
          blend(c, {skin[0] * 0.4, skin[1] * 0.35, skin[2] * 0.35}, lid);
        }

        // Nose: shaded ridge and nostrils.
        const double ridge = ellipse(f.x, f.y, f_nose.x + 0.05, (f_nose.y + 0.05) / 2, 0.035, f_nose.y / 2, 6 * px);
        blend(c, {skin[0] * 0.72, skin[1] * 0.7, skin[2] * 0.7}, 0.5 * ridge);
        for (double side : {-1.0, 1.0}) {
          const double nostril = ellipse(f.x, f.y, f_nose.x + side * 0.07, f_nose.y + 0.02, 0.035, 0.02, 1.5 * px);
          blend(c, {skin[0] * 0.35, skin[1] * 0.3, skin[2] * 0.3}, nostril);
        }

        // Mouth.
        const Point2 mc{(f_ml.x + f_mr.x) / 2, (f_ml.y + f_mr.y) / 2};
        const double mouth = ellipse(f.x, f.y, mc.x, mc.y, mouth_half, 0.07, 1.5 * px);
        if (mouth > 0.0) {
          const double texture = 12.0 * value_noise(ns + 8, f.x * 150.0, f.y * 60.0);
          blend(c, {lips[0] + texture, lips[1] + texture, lips[2] + texture}, mouth);
          blend(c, {lips[0] * 0.4, lips[1] * 0.4, lips[2] * 0.4},
                ellipse(f.x, f.y, mc.x, mc.y, mouth_half * 0.95, 0.008, 1.5 * px));
        }
      }

      std::uint8_t* o = out.image.pixels.data() + (static_cast<std::size_t>(y) * config.width + x) * 3;
      for (int k = 0; k < 3; ++k) {
        const double v = c[static_cast<std::size_t>(k)] + config.noise_sigma * normal();
        o[k] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }

  out.landmarks = {to_image.apply(f_left), to_image.apply(f_right), to_image.apply(f_nose),
                   to_image.apply(f_ml), to_image.apply(f_mr)};
  return out;
}

}  // namespace fcqc::testing
