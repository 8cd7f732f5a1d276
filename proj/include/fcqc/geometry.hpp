#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fcqc/image.hpp"

namespace fcqc {

/// Image-space coordinate. Pixel (i, j) is centered on (i, j) and spans
/// [i - 0.5, i + 0.5) x [j - 0.5, j + 0.5).
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Five facial points. "Left" means the smaller image x coordinate.
struct LandmarkSet {
  Point2 left_eye;
  Point2 right_eye;
  Point2 nose_tip;
  Point2 left_mouth;
  Point2 right_mouth;

  [[nodiscard]] std::array<Point2, 5> points() const {
    return {left_eye, right_eye, nose_tip, left_mouth, right_mouth};
  }
  static LandmarkSet from_points(std::span<const Point2, 5> p) {
    return {p[0], p[1], p[2], p[3], p[4]};
  }

  friend bool operator==(const LandmarkSet&, const LandmarkSet&) = default;
};

/// Throws InvalidArgument on non-finite coordinates, swapped eyes or zero IED.
void validate(const LandmarkSet& lm);

/// x' = s R(theta) x + t. Rotation is counter-clockwise in a y-up frame, which
/// is clockwise on screen since image y points down.
struct SimilarityTransform {
  double scale = 1.0;
  double rotation = 0.0;  // radians
  double tx = 0.0;
  double ty = 0.0;

  [[nodiscard]] Point2 apply(Point2 p) const;
  [[nodiscard]] SimilarityTransform inverse() const;
  /// Row-major 2x3 matrix [[a, -b, tx], [b, a, ty]].
  [[nodiscard]] std::array<double, 6> matrix() const;
  [[nodiscard]] double determinant() const { return scale * scale; }

  static SimilarityTransform identity() { return {}; }
  /// Scale about `pivot_in`, rotate by `radians`, and move the pivot to `pivot_out`.
  static SimilarityTransform about(Point2 pivot_in, Point2 pivot_out, double scale, double radians);
};

/// (outer o inner)(p) = outer(inner(p)).
SimilarityTransform compose(const SimilarityTransform& outer, const SimilarityTransform& inner);

struct AlignmentTemplate {
  int canvas_width = 520;
  int canvas_height = 520;
  LandmarkSet target;
  double target_ied = 260.0;

  /// 520x520 canvas, eyes at (130,208) and (390,208), nose (260,330),
  /// mouth corners (180,405) and (340,405).
  static AlignmentTemplate canonical();
};

double inter_eye_distance(const LandmarkSet& lm);

/// Closed-form least-squares similarity (Umeyama without reflection).
SimilarityTransform fit_similarity(std::span<const Point2> src, std::span<const Point2> dst);

/// Output pixel p is bilinearly sampled from img at T^-1(p); samples outside
/// the source replicate the nearest edge pixel. Interpolation weights are
/// quantized to 1/1024 so mirrored inputs give mirrored outputs exactly.
ImageBuffer warp_similarity(const ImageBuffer& img, const SimilarityTransform& transform,
                            int out_width, int out_height);

LandmarkSet transform_landmarks(const LandmarkSet& lm, const SimilarityTransform& transform);

/// Transform that align_face applies (source image -> template canvas).
SimilarityTransform alignment_transform(const LandmarkSet& lm, const AlignmentTemplate& tpl);

ImageBuffer align_face(const ImageBuffer& img, const LandmarkSet& lm, const AlignmentTemplate& tpl);

/// Rotation about ((W-1)/2, (H-1)/2), output of the same size.
ImageBuffer rotate_about_center(const ImageBuffer& img, double angle_deg);

ImageBuffer center_crop(const ImageBuffer& img, int size, Point2 center);

/// One row of the landmark CSV: image_path,lex,ley,rex,rey,nx,ny,lmx,lmy,rmx,rmy
struct LandmarkRecord {
  std::string image_path;
  LandmarkSet landmarks;
};

std::vector<LandmarkRecord> read_landmark_csv(const std::filesystem::path& path);
void write_landmark_csv(const std::filesystem::path& path, std::span<const LandmarkRecord> rows);

}  // namespace fcqc
