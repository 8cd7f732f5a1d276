#include "fcqc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "fcqc/errors.hpp"

namespace fcqc {

namespace {

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b) {
  validate(a);
  validate(b);
  if (a.width != b.width || a.height != b.height) {
    throw Error(Errc::DimensionMismatch, std::to_string(a.width) + "x" + std::to_string(a.height) +
                                             " vs " + std::to_string(b.width) + "x" +
                                             std::to_string(b.height));
  }
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const int r = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - r;
    k[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Valid-mode separable filtering: (h - k + 1) x (w - k + 1) output.
std::vector<double> filter_valid(const std::vector<double>& plane, int w, int h,
                                 const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1;
  const int oh = h - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    const double* in = plane.data() + static_cast<std::size_t>(y) * w;
    double* out = rows.data() + static_cast<std::size_t>(y) * ow;
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * in[x + i];
      out[x] = acc;
    }
  }
  std::vector<double> result(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    double* out = result.data() + static_cast<std::size_t>(y) * ow;
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[x] = acc;
    }
  }
  return result;
}

}  // namespace

void SsimParams::validate() const {
  if (window_size < 3 || window_size % 2 == 0) {
    throw Error(Errc::InvalidArgument, "SSIM window size must be odd and >= 3");
  }
  if (!(k1 > 0.0) || !(k2 > 0.0) || !(window_sigma > 0.0) || !(dynamic_range > 0.0)) {
    throw Error(Errc::InvalidArgument, "SSIM constants must be positive");
  }
}

std::string_view to_string(LabelKind kind) noexcept { return kind == LabelKind::Psnr ? "psnr" : "ssim"; }

LabelKind parse_label_kind(std::string_view text) {
  if (text == "psnr" || text == "PSNR") return LabelKind::Psnr;
  if (text == "ssim" || text == "SSIM") return LabelKind::Ssim;
  throw Error(Errc::InvalidArgument, "label kind must be psnr or ssim, got '" + std::string(text) + "'");
}

double mse(const ImageBuffer& ref, const ImageBuffer& test) {
  require_same_shape(ref, test);
  double sum = 0.0;
  for (std::size_t i = 0; i < ref.pixels.size(); ++i) {
    const double d = static_cast<double>(ref.pixels[i]) - static_cast<double>(test.pixels[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(ref.pixels.size());
}

double psnr(const ImageBuffer& ref, const ImageBuffer& test, double cap) {
  const double e = mse(ref, test);
  if (e == 0.0) return cap;
  return 10.0 * std::log10(255.0 * 255.0 / e);
}

std::vector<double> luma_plane(const ImageBuffer& img) {
  validate(img);
  std::vector<double> y(static_cast<std::size_t>(img.width) * img.height);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = 0.299 * img.pixels[3 * i] + 0.587 * img.pixels[3 * i + 1] + 0.114 * img.pixels[3 * i + 2];
  }
  return y;
}

double ssim_unclamped(const ImageBuffer& ref, const ImageBuffer& test, const SsimParams& params) {
  require_same_shape(ref, test);
  params.validate();
  const int w = ref.width;
  const int h = ref.height;
  if (w < params.window_size || h < params.window_size) {
    throw Error(Errc::ImageTooSmall, "image smaller than the SSIM window");
  }
  const auto x = luma_plane(ref);
  const auto y = luma_plane(test);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto k = gaussian_kernel(params.window_size, params.window_sigma);
  const auto mx = filter_valid(x, w, h, k);
  const auto my = filter_valid(y, w, h, k);
  const auto exx = filter_valid(xx, w, h, k);
  const auto eyy = filter_valid(yy, w, h, k);
  const auto exy = filter_valid(xy, w, h, k);
  const double c1 = (params.k1 * params.dynamic_range) * (params.k1 * params.dynamic_range);
  const double c2 = (params.k2 * params.dynamic_range) * (params.k2 * params.dynamic_range);
  double sum = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = exx[i] - mx[i] * mx[i];
    const double vy = eyy[i] - my[i] * my[i];
    const double cxy = exy[i] - mx[i] * my[i];
    const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    sum += num / den;
  }
  return sum / static_cast<double>(mx.size());
}

double ssim(const ImageBuffer& ref, const ImageBuffer& test, const SsimParams& params) {
  const double value = ssim_unclamped(ref, test, params);
  if (value < 0.0) {
    std::clog << "fcqc: warning: SSIM " << value << " clamped to 0\n";
    return 0.0;
  }
  return std::min(value, 1.0);
}

KeyValues LabelingConfig::to_key_values() const {
  KeyValues kv;
  kv["kind"] = std::string(to_string(kind));
  if (kind == LabelKind::Psnr) {
    kv["psnr_min"] = format_double(psnr_min);
    kv["psnr_max"] = format_double(psnr_max);
    kv["psnr_cap"] = format_double(psnr_cap);
  } else {
    kv["ssim_window_size"] = std::to_string(ssim.window_size);
    kv["ssim_window_sigma"] = format_double(ssim.window_sigma);
    kv["ssim_k1"] = format_double(ssim.k1);
    kv["ssim_k2"] = format_double(ssim.k2);
    kv["ssim_dynamic_range"] = format_double(ssim.dynamic_range);
  }
  return kv;
}

LabelingConfig LabelingConfig::from_key_values(const KeyValues& kv) {
  LabelingConfig cfg;
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto* v = get("kind")) cfg.kind = parse_label_kind(*v);
  if (auto* v = get("psnr_min")) cfg.psnr_min = parse_double(*v);
  if (auto* v = get("psnr_max")) cfg.psnr_max = parse_double(*v);
  if (auto* v = get("psnr_cap")) cfg.psnr_cap = parse_double(*v);
  if (auto* v = get("ssim_window_size")) cfg.ssim.window_size = static_cast<int>(parse_int(*v));
  if (auto* v = get("ssim_window_sigma")) cfg.ssim.window_sigma = parse_double(*v);
  if (auto* v = get("ssim_k1")) cfg.ssim.k1 = parse_double(*v);
  if (auto* v = get("ssim_k2")) cfg.ssim.k2 = parse_double(*v);
  if (auto* v = get("ssim_dynamic_range")) cfg.ssim.dynamic_range = parse_double(*v);
  return cfg;
}

std::vector<double> labels_from_metrics(const std::vector<MetricSample>& samples,
                                        LabelingConfig& config) {
  if (samples.empty()) throw Error(Errc::EmptyManifest, "no samples to label");
  std::vector<double> labels(samples.size(), 1.0);
  if (config.kind == LabelKind::Ssim) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].compressed) labels[i] = std::clamp(samples[i].value, 0.0, 1.0);
    }
    return labels;
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::size_t compressed = 0;
  for (const auto& s : samples) {
    if (!s.compressed) continue;
    ++compressed;
    lo = std::min(lo, s.value);
    hi = std::max(hi, s.value);
  }
  if (compressed == 0) {
    throw Error(Errc::DegenerateRange, "no compressed samples to derive PSNR bounds from");
  }
  if (!(hi > lo)) {
    throw Error(Errc::DegenerateRange, "all compressed samples share one PSNR value");
  }
  config.psnr_min = lo;
  config.psnr_max = hi;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].compressed) labels[i] = std::clamp((samples[i].value - lo) / (hi - lo), 0.0, 1.0);
  }
  return labels;
}

}  // namespace fcqc
