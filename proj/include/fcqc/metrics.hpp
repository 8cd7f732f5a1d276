#pragma once

#include <string_view>
#include <vector>

#include "fcqc/image.hpp"
#include "fcqc/io.hpp"

namespace fcqc {

struct SsimParams {
  int window_size = 11;
  double window_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 255.0;

  void validate() const;
};

enum class LabelKind { Psnr, Ssim };

std::string_view to_string(LabelKind kind) noexcept;
LabelKind parse_label_kind(std::string_view text);

double mse(const ImageBuffer& ref, const ImageBuffer& test);

/// 10 log10(255^2 / mse), or `cap` for identical images.
double psnr(const ImageBuffer& ref, const ImageBuffer& test, double cap = 100.0);

/// Mean Gaussian-windowed SSIM over all valid window positions of the BT.601
/// luma planes, clamped to [0, 1].
double ssim(const ImageBuffer& ref, const ImageBuffer& test, const SsimParams& params = {});

/// Same as ssim() but without the final clamp.
double ssim_unclamped(const ImageBuffer& ref, const ImageBuffer& test, const SsimParams& params = {});

/// BT.601 luma plane (0.299 R + 0.587 G + 0.114 B), row-major, unrounded.
std::vector<double> luma_plane(const ImageBuffer& img);

struct LabelingConfig {
  LabelKind kind = LabelKind::Psnr;
  double psnr_min = 0.0;
  double psnr_max = 0.0;
  double psnr_cap = 100.0;
  SsimParams ssim;

  [[nodiscard]] KeyValues to_key_values() const;
  static LabelingConfig from_key_values(const KeyValues& kv);
};

/// Metric value of one sample; `value` is ignored for uncompressed samples.
struct MetricSample {
  bool compressed = false;
  double value = 0.0;
};

/// Turns per-sample metric values into [0,1] labels. Uncompressed samples get
/// exactly 1. PSNR values are min-max normalized over the compressed samples
/// (DegenerateRange when they are all equal); SSIM values pass through.
/// `config` receives the bounds that were used.
std::vector<double> labels_from_metrics(const std::vector<MetricSample>& samples,
                                        LabelingConfig& config);

}  // namespace fcqc
