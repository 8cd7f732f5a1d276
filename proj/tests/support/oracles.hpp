#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. They favour the most literal formulation (direct sums, explicit
// counting) over speed and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fcqc/image.hpp"

namespace oracle {

inline fcqc::ImageBuffer random_image(std::mt19937_64& rng, int w, int h) {
  fcqc::ImageBuffer img(w, h);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(d(rng));
  return img;
}

/// Adds uniform noise in [-amp, amp] and clips.
inline fcqc::ImageBuffer perturb(const fcqc::ImageBuffer& img, std::mt19937_64& rng, int amp) {
  fcqc::ImageBuffer out = img;
  std::uniform_int_distribution<int> d(-amp, amp);
  for (auto& v : out.pixels) v = static_cast<std::uint8_t>(std::clamp(v + d(rng), 0, 255));
  return out;
}

/// Smooth gradient with a few blobs: enough structure for codecs and warps to
/// behave like they do on photographs.
inline fcqc::ImageBuffer smooth_image(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  fcqc::ImageBuffer img(w, h);
  double base[3], gx[3], gy[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = 40 + 150 * u(rng);
    gx[c] = (u(rng) - 0.5) * 100.0 / w;
    gy[c] = (u(rng) - 0.5) * 100.0 / h;
  }
  struct Blob {
    double x, y, r, a;
  };
  std::vector<Blob> blobs;
  for (int i = 0; i < 6; ++i) blobs.push_back({u(rng) * w, u(rng) * h, 0.05 * w + u(rng) * 0.2 * w, (u(rng) - 0.5) * 120});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double add = 0;
      for (const auto& b : blobs) {
        const double d2 = ((x - b.x) * (x - b.x) + (y - b.y) * (y - b.y)) / (b.r * b.r);
        add += b.a * std::exp(-d2);
      }
      for (int c = 0; c < 3; ++c) {
        const double v = base[c] + gx[c] * x + gy[c] * y + add * (0.6 + 0.2 * c);
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return img;
}

inline double mse(const fcqc::ImageBuffer& a, const fcqc::ImageBuffer& b) {
  double sum = 0;
  std::size_t n = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double d = double(a.at(x, y, c)) - double(b.at(x, y, c));
        sum += d * d;
        ++n;
      }
  return sum / double(n);
}

inline double psnr(const fcqc::ImageBuffer& a, const fcqc::ImageBuffer& b, double cap = 100.0) {
  const double e = oracle::mse(a, b);
  return e == 0 ? cap : 10.0 * std::log10(65025.0 / e);
}

/// Direct 2D-window SSIM: every window position, every weight, centred moments.
inline double ssim(const fcqc::ImageBuffer& a, const fcqc::ImageBuffer& b, int win = 11, double sigma = 1.5) {
  auto luma = [](const fcqc::ImageBuffer& img, int x, int y) {
    return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
  };
  const int r = win / 2;
  std::vector<double> w2(static_cast<std::size_t>(win * win));
  double wsum = 0;
  for (int j = 0; j < win; ++j)
    for (int i = 0; i < win; ++i) {
      const double v = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2 * sigma * sigma));
      w2[static_cast<std::size_t>(j * win + i)] = v;
      wsum += v;
    }
  for (auto& v : w2) v /= wsum;
  const double c1 = (0.01 * 255) * (0.01 * 255);
  const double c2 = (0.03 * 255) * (0.03 * 255);
  double total = 0;
  int count = 0;
  for (int y0 = 0; y0 + win <= a.height; ++y0) {
    for (int x0 = 0; x0 + win <= a.width; ++x0) {
      double mx = 0, my = 0;
      for (int j = 0; j < win; ++j)
        for (int i = 0; i < win; ++i) {
          const double w = w2[static_cast<std::size_t>(j * win + i)];
          mx += w * luma(a, x0 + i, y0 + j);
          my += w * luma(b, x0 + i, y0 + j);
        }
      double vx = 0, vy = 0, cxy = 0;
      for (int j = 0; j < win; ++j)
        for (int i = 0; i < win; ++i) {
          const double w = w2[static_cast<std::size_t>(j * win + i)];
          const double dx = luma(a, x0 + i, y0 + j) - mx;
          const double dy = luma(b, x0 + i, y0 + j) - my;
          vx += w * dx * dx;
          vy += w * dy * dy;
          cxy += w * dx * dy;
        }
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / count;
}

struct DetRow {
  double threshold, fpr, fnr;
};

/// Every score value plus both infinities, counted by brute force.
inline std::vector<DetRow> det(const std::vector<double>& u, const std::vector<double>& c) {
  std::set<double> t(u.begin(), u.end());
  t.insert(c.begin(), c.end());
  t.insert(-std::numeric_limits<double>::infinity());
  t.insert(std::numeric_limits<double>::infinity());
  std::vector<DetRow> rows;
  for (double th : t) {
    int fp = 0, fn = 0;
    for (double s : u) fp += s < th;
    for (double s : c) fn += !(s < th);
    rows.push_back({th, double(fp) / double(u.size()), double(fn) / double(c.size())});
  }
  return rows;
}

inline DetRow eer(const std::vector<double>& u, const std::vector<double>& c) {
  const auto rows = det(u, c);
  DetRow best = rows.front();
  for (const auto& r : rows)
    if (std::abs(r.fpr - r.fnr) < std::abs(best.fpr - best.fnr)) best = r;
  return best;
}

inline double f1(double th, const std::vector<double>& u, const std::vector<double>& c) {
  int tp = 0, fp = 0, fn = 0;
  for (double s : c) (s < th ? tp : fn)++;
  for (double s : u) fp += s < th;
  return 2.0 * tp / (2.0 * tp + fp + fn);
}

/// rank_i = 1 + #{j : v_j < v_i} + (#{j : v_j == v_i} - 1) / 2
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    int less = 0, equal = 0;
    for (double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = 1.0 + less + (equal - 1) / 2.0;
  }
  return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(ranks(x), ranks(y));
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fcqc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
