#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fcqc {

struct DetPoint {
  double threshold = 0.0;
  double fpr = 0.0;  // uncompressed flagged as compressed
  double fnr = 0.0;  // compressed not flagged
};

/// A sample is flagged compressed when its score is below the threshold.
/// Thresholds are -inf, every distinct score (ascending), +inf. EmptyInput.
std::vector<DetPoint> det_curve(std::span<const double> uncompressed, std::span<const double> compressed);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
};

/// First DET point minimizing |fpr - fnr|; eer is the mean of the two rates there.
EerResult eer(std::span<const double> uncompressed, std::span<const double> compressed);

/// F1 with compressed as the positive class. UndefinedF1 when TP + FP + FN == 0.
double f1_at(double threshold, std::span<const double> uncompressed, std::span<const double> compressed);

/// 1-based ranks; tied values share the mean of their rank range.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of average ranks. DegenerateInput for unequal or short
/// inputs, non-finite values, or a constant argument.
double spearman(std::span<const double> x, std::span<const double> y);

/// sorted[floor(target * N)]: at most target * N mated scores fall below it.
double fnmr_threshold(std::span<const double> mated, double target_fnmr);

struct ComparisonRecord {
  std::string probe_id;
  std::string reference_id;
  double similarity = 0.0;
  bool mated = true;
};

struct EdcPoint {
  double discard_fraction = 0.0;
  double fnmr = 0.0;
  std::size_t discarded = 0;
  std::size_t remaining = 0;
};

using QualityMap = std::map<std::string, int, std::less<>>;

/// Orders mated comparisons by min(quality[probe], quality[reference]), ties by
/// (probe, reference), drops the first floor(d * N) for every d in the grid and
/// reports the FNMR (similarity < threshold) of the rest; 0 when nothing remains.
/// UnknownSampleId, EmptyComparisons.
std::vector<EdcPoint> edc_curve(const QualityMap& qualities, std::span<const ComparisonRecord> comparisons,
                                double threshold, std::span<const double> discard_grid);

/// 0, 0.01, ..., 0.30.
std::vector<double> default_discard_grid();

/// Comma-separated fractions, e.g. "0,0.05,0.1".
std::vector<double> parse_discard_grid(std::string_view text);

std::vector<ComparisonRecord> read_comparisons(const std::filesystem::path& path);
void write_comparisons(const std::filesystem::path& path, std::span<const ComparisonRecord> rows);

void write_det_csv(const std::filesystem::path& path, std::span<const DetPoint> points);
void write_edc_csv(const std::filesystem::path& path, std::span<const EdcPoint> points);

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;
};

/// Line plot with axes, ticks and a legend as a standalone SVG document.
std::string render_svg(const PlotSpec& spec, std::span<const PlotSeries> series);

}  // namespace fcqc
