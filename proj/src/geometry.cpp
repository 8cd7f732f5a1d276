#include "fcqc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fcqc/errors.hpp"
#include "fcqc/io.hpp"

namespace fcqc {

namespace {

constexpr int kFracBits = 10;
constexpr int kFracOne = 1 << kFracBits;

double normalize_angle(double theta) {
  theta = std::remainder(theta, 2.0 * std::numbers::pi);
  if (theta <= -std::numbers::pi) theta += 2.0 * std::numbers::pi;
  return theta;
}

bool finite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

}  // namespace

void validate(const LandmarkSet& lm) {
  for (const auto& p : lm.points()) {
    if (!finite(p)) throw Error(Errc::InvalidArgument, "landmark coordinates must be finite");
  }
  if (!(lm.left_eye.x < lm.right_eye.x)) {
    throw Error(Errc::InvalidArgument, "left eye must have the smaller x coordinate");
  }
  if (!(inter_eye_distance(lm) > 0.0)) throw Error(Errc::InvalidArgument, "inter-eye distance is zero");
}

Point2 SimilarityTransform::apply(Point2 p) const {
  const double a = scale * std::cos(rotation);
  const double b = scale * std::sin(rotation);
  return {a * p.x - b * p.y + tx, b * p.x + a * p.y + ty};
}

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.scale = 1.0 / scale;
  inv.rotation = normalize_angle(-rotation);
  const Point2 t = inv.apply({tx, ty});
  inv.tx = -t.x;
  inv.ty = -t.y;
  return inv;
}

std::array<double, 6> SimilarityTransform::matrix() const {
  const double a = scale * std::cos(rotation);
  const double b = scale * std::sin(rotation);
  return {a, -b, tx, b, a, ty};
}

SimilarityTransform SimilarityTransform::about(Point2 pivot_in, Point2 pivot_out, double scale,
                                               double radians) {
  SimilarityTransform t{scale, radians, 0.0, 0.0};
  const Point2 moved = t.apply(pivot_in);
  t.tx = pivot_out.x - moved.x;
  t.ty = pivot_out.y - moved.y;
  return t;
}

SimilarityTransform compose(const SimilarityTransform& outer, const SimilarityTransform& inner) {
  SimilarityTransform t;
  t.scale = outer.scale * inner.scale;
  t.rotation = normalize_angle(outer.rotation + inner.rotation);
  const Point2 origin = outer.apply({inner.tx, inner.ty});
  t.tx = origin.x;
  t.ty = origin.y;
  return t;
}

AlignmentTemplate AlignmentTemplate::canonical() {
  AlignmentTemplate tpl;
  tpl.canvas_width = 520;
  tpl.canvas_height = 520;
  tpl.target = {{130.0, 208.0}, {390.0, 208.0}, {260.0, 330.0}, {180.0, 405.0}, {340.0, 405.0}};
  tpl.target_ied = 260.0;
  return tpl;
}

double inter_eye_distance(const LandmarkSet& lm) {
  return std::hypot(lm.right_eye.x - lm.left_eye.x, lm.right_eye.y - lm.left_eye.y);
}

SimilarityTransform fit_similarity(std::span<const Point2> src, std::span<const Point2> dst) {
  if (src.size() != dst.size()) {
    throw Error(Errc::InvalidArgument, "fit_similarity needs equally many source and target points");
  }
  if (src.size() < 2) throw Error(Errc::DegenerateConfiguration, "fit_similarity needs at least 2 points");
  const double n = static_cast<double>(src.size());
  Point2 ms;
  Point2 md;
  for (std::size_t i = 0; i < src.size(); ++i) {
    ms.x += src[i].x;
    ms.y += src[i].y;
    md.x += dst[i].x;
    md.y += dst[i].y;
  }
  ms = {ms.x / n, ms.y / n};
  md = {md.x / n, md.y / n};

  // In complex notation the optimum is c = sum(conj(s_i) d_i) / sum(|s_i|^2)
  // over centered points, which is a rotation-scale and never a reflection.
  double re = 0.0;
  double im = 0.0;
  double energy = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double sx = src[i].x - ms.x;
    const double sy = src[i].y - ms.y;
    const double dx = dst[i].x - md.x;
    const double dy = dst[i].y - md.y;
    re += sx * dx + sy * dy;
    im += sx * dy - sy * dx;
    energy += sx * sx + sy * sy;
  }
  if (!(energy > 0.0) || !std::isfinite(energy)) {
    throw Error(Errc::DegenerateConfiguration, "source points are coincident");
  }
  const double magnitude = std::hypot(re, im);
  if (!(magnitude > 0.0)) {
    throw Error(Errc::DegenerateConfiguration, "target points are coincident or uncorrelated");
  }
  SimilarityTransform t;
  t.scale = magnitude / energy;
  t.rotation = normalize_angle(std::atan2(im, re));
  const Point2 moved = SimilarityTransform{t.scale, t.rotation, 0.0, 0.0}.apply(ms);
  t.tx = md.x - moved.x;
  t.ty = md.y - moved.y;
  return t;
}

ImageBuffer warp_similarity(const ImageBuffer& img, const SimilarityTransform& transform,
                            int out_width, int out_height) {
  validate(img);
  if (out_width < 1 || out_height < 1) {
    throw Error(Errc::InvalidDimensions, "warp output must be at least 1x1");
  }
  if (!(transform.scale > 0.0) || !std::isfinite(transform.scale)) {
    throw Error(Errc::InvalidArgument, "similarity scale must be positive");
  }
  const SimilarityTransform inv = transform.inverse();
  const auto m = inv.matrix();
  // Sampling is expressed relative to both image centers so that mirror
  // symmetric transforms produce exactly mirrored sample positions.
  const Point2 c_in{(img.width - 1) / 2.0, (img.height - 1) / 2.0};
  const Point2 c_out{(out_width - 1) / 2.0, (out_height - 1) / 2.0};
  const Point2 mapped_center = inv.apply(c_out);
  double ex = mapped_center.x - c_in.x;
  double ey = mapped_center.y - c_in.y;
  if (std::abs(ex) < 1e-9) ex = 0.0;  // rounding residue of an exact cancellation
  if (std::abs(ey) < 1e-9) ey = 0.0;

  const auto to_fixed = [](double center, double offset, int extent) -> long long {
    const double lo = -1.0 - center;
    const double hi = static_cast<double>(extent) - center;
    return std::llround(center * kFracOne) + std::llround(std::clamp(offset, lo, hi) * kFracOne);
  };

  ImageBuffer out(out_width, out_height);
  const int w = img.width;
  const int h = img.height;
  const std::uint8_t* src = img.pixels.data();
  std::uint8_t* dst = out.pixels.data();
  for (int y = 0; y < out_height; ++y) {
    const double qy = y - c_out.y;
    for (int x = 0; x < out_width; ++x) {
      const double qx = x - c_out.x;
      const double du = m[0] * qx + m[1] * qy + ex;
      const double dv = m[3] * qx + m[4] * qy + ey;
      const long long pu = to_fixed(c_in.x, du, w);
      const long long pv = to_fixed(c_in.y, dv, h);
      const long long iu = pu >> kFracBits;
      const long long iv = pv >> kFracBits;
      const int fu = static_cast<int>(pu & (kFracOne - 1));
      const int fv = static_cast<int>(pv & (kFracOne - 1));
      const int x0 = static_cast<int>(std::clamp<long long>(iu, 0, w - 1));
      const int x1 = static_cast<int>(std::clamp<long long>(iu + 1, 0, w - 1));
      const int y0 = static_cast<int>(std::clamp<long long>(iv, 0, h - 1));
      const int y1 = static_cast<int>(std::clamp<long long>(iv + 1, 0, h - 1));
      const std::uint8_t* p00 = src + (static_cast<std::size_t>(y0) * w + x0) * 3;
      const std::uint8_t* p10 = src + (static_cast<std::size_t>(y0) * w + x1) * 3;
      const std::uint8_t* p01 = src + (static_cast<std::size_t>(y1) * w + x0) * 3;
      const std::uint8_t* p11 = src + (static_cast<std::size_t>(y1) * w + x1) * 3;
      std::uint8_t* o = dst + (static_cast<std::size_t>(y) * out_width + x) * 3;
      for (int c = 0; c < 3; ++c) {
        const int top = p00[c] * (kFracOne - fu) + p10[c] * fu;
        const int bottom = p01[c] * (kFracOne - fu) + p11[c] * fu;
        const int v = (top * (kFracOne - fv) + bottom * fv + (1 << (2 * kFracBits - 1))) >>
                      (2 * kFracBits);
        o[c] = static_cast<std::uint8_t>(v);
      }
    }
  }
  return out;
}

LandmarkSet transform_landmarks(const LandmarkSet& lm, const SimilarityTransform& transform) {
  return {transform.apply(lm.left_eye), transform.apply(lm.right_eye), transform.apply(lm.nose_tip),
          transform.apply(lm.left_mouth), transform.apply(lm.right_mouth)};
}

SimilarityTransform alignment_transform(const LandmarkSet& lm, const AlignmentTemplate& tpl) {
  const auto src = lm.points();
  const auto dst = tpl.target.points();
  return fit_similarity(src, dst);
}

ImageBuffer align_face(const ImageBuffer& img, const LandmarkSet& lm, const AlignmentTemplate& tpl) {
  return warp_similarity(img, alignment_transform(lm, tpl), tpl.canvas_width, tpl.canvas_height);
}

ImageBuffer rotate_about_center(const ImageBuffer& img, double angle_deg) {
  validate(img);
  const Point2 c{(img.width - 1) / 2.0, (img.height - 1) / 2.0};
  const auto t = SimilarityTransform::about(c, c, 1.0, angle_deg * std::numbers::pi / 180.0);
  return warp_similarity(img, t, img.width, img.height);
}

ImageBuffer center_crop(const ImageBuffer& img, int size, Point2 center) {
  if (size < 1) throw Error(Errc::InvalidDimensions, "crop size must be >= 1");
  const double half = (size - 1) / 2.0;
  const SimilarityTransform t{1.0, 0.0, half - center.x, half - center.y};
  return warp_similarity(img, t, size, size);
}

std::vector<LandmarkRecord> read_landmark_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  static constexpr const char* cols[] = {"lex", "ley", "rex", "rey", "nx", "ny",
                                         "lmx", "lmy", "rmx", "rmy"};
  const std::size_t path_col = table.column("image_path");
  std::size_t idx[10];
  for (int i = 0; i < 10; ++i) idx[i] = table.column(cols[i]);
  std::vector<LandmarkRecord> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    double v[10];
    for (int i = 0; i < 10; ++i) v[i] = parse_double(row[idx[i]]);
    LandmarkRecord rec;
    rec.image_path = row[path_col];
    rec.landmarks = {{v[0], v[1]}, {v[2], v[3]}, {v[4], v[5]}, {v[6], v[7]}, {v[8], v[9]}};
    out.push_back(std::move(rec));
  }
  return out;
}

void write_landmark_csv(const std::filesystem::path& path, std::span<const LandmarkRecord> rows) {
  CsvTable table;
  table.header = {"image_path", "lex", "ley", "rex", "rey", "nx", "ny", "lmx", "lmy", "rmx", "rmy"};
  for (const auto& r : rows) {
    std::vector<std::string> row{r.image_path};
    for (const auto& p : r.landmarks.points()) {
      row.push_back(format_double(p.x));
      row.push_back(format_double(p.y));
    }
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

}  // namespace fcqc
