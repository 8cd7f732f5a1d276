#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fcqc/codecs.hpp"
#include "fcqc/geometry.hpp"
#include "fcqc/image.hpp"
#include "fcqc/io.hpp"

namespace fcqc {

enum class PlanKind { Training, TestUpright, TestRotated };

std::string_view to_string(PlanKind kind) noexcept;
PlanKind parse_plan_kind(std::string_view text);

/// One codec/encoder pair and the quality values it is run at.
struct GridEntry {
  Codec codec = Codec::Jpeg;
  EncoderId encoder = EncoderId::B;
  std::vector<int> qualities;
};

struct CompressionGrid {
  std::vector<GridEntry> entries;

  [[nodiscard]] std::size_t recipe_count() const;

  /// JPEG/B at every even quality in [20,100], JPEG 2000/A at every even
  /// quality in [20,100], JPEG 2000/B at every odd quality in [31,99].
  static CompressionGrid training_default();
};

/// Inclusive arithmetic range, e.g. quality_range(20, 100, 2).
std::vector<int> quality_range(int first, int last, int step);

struct DegradationRecipe {
  int target_ied = 260;
  int rotation_angle_deg = 0;
  std::optional<CompressionSpec> compression;
  bool flipped = false;
  int final_size = 248;
  int final_ied = 124;

  friend bool operator==(const DegradationRecipe&, const DegradationRecipe&) = default;
};

struct SourcePlan {
  std::string source_id;
  std::vector<DegradationRecipe> recipes;

  friend bool operator==(const SourcePlan&, const SourcePlan&) = default;
};

/// 64-bit mix of (master seed, source id); drives all draws for one source.
std::uint64_t source_seed(std::uint64_t master_seed, std::string_view source_id) noexcept;
/// 64-bit mix of (master seed, source id, recipe index).
std::uint64_t sample_seed(std::uint64_t master_seed, std::string_view source_id,
                          std::size_t recipe_index) noexcept;

struct TrainingPlanConfig {
  CompressionGrid grid = CompressionGrid::training_default();
  std::vector<int> ied_choices = {60, 70, 80, 90, 100, 110, 120, 130, 140, 200};
  int max_angle_deg = 8;
  double rotation_probability = 0.5;
  int final_size = 248;
  int final_ied = 124;
};

/// Per source: two uncompressed recipes (original, flipped) followed by one
/// recipe per grid quality; all share one drawn IED and angle.
std::vector<SourcePlan> plan_training(std::span<const std::string> sources, std::uint64_t seed,
                                      const TrainingPlanConfig& config = {});

enum class TestProtocol { Upright, Rotated };

struct TestPlanConfig {
  std::vector<int> ied_choices = {60, 90, 120, 140};
  std::vector<int> quality_choices = {20, 30, 40, 50, 60, 70};
  int max_angle_deg = 15;
  double rotation_probability = 0.5;
  EncoderId jpeg_encoder = EncoderId::B;
  EncoderId jp2_encoder = EncoderId::A;
  int final_size = 248;
  int final_ied = 124;
};

/// Per source: uncompressed original and flip, then JPEG and JPEG 2000
/// variants of each of those two, with qualities drawn per recipe.
std::vector<SourcePlan> plan_test(std::span<const std::string> sources, TestProtocol protocol,
                                  std::uint64_t seed, const TestPlanConfig& config = {});

/// The two resampling stages around the codec. `pre` maps the aligned canvas
/// to the scaled (and rotated) image that gets compressed; `post` maps that
/// image to the final crop.
struct RecipeGeometry {
  SimilarityTransform pre;
  int pre_width = 0;
  int pre_height = 0;
  SimilarityTransform post;
  int final_size = 248;
};

/// `landmarks` must already be in the (possibly flipped) canvas frame.
RecipeGeometry recipe_geometry(int canvas_width, int canvas_height, const LandmarkSet& landmarks,
                               const DegradationRecipe& recipe);

LandmarkSet flip_landmarks(const LandmarkSet& lm, int canvas_width);

struct RecipeOutput {
  ImageBuffer final_image;
  ImageBuffer reference;
};

/// flip -> scale to target IED -> rotate -> [encode, decode] -> rotate back ->
/// scale to final IED -> crop. `reference` skips the codec step.
RecipeOutput apply_recipe(const ImageBuffer& aligned, const LandmarkSet& aligned_landmarks,
                          const DegradationRecipe& recipe, const EncoderBindings& bindings = {});

struct SampleRecord {
  std::string sample_id;
  std::string source_id;
  DegradationRecipe recipe;
  std::string output_path;     // relative to the manifest directory
  std::string reference_path;  // empty for uncompressed samples
  std::string error;

  [[nodiscard]] bool compressed() const { return recipe.compression.has_value(); }
  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct DatasetManifest {
  std::vector<SampleRecord> records;
  std::uint64_t master_seed = 0;
  PlanKind plan_kind = PlanKind::Training;
  EncoderBindings bindings;
};

/// Manifest CSV columns, in order.
const std::vector<std::string>& manifest_columns();

CsvTable manifest_table(const DatasetManifest& manifest);
SampleRecord parse_manifest_row(const CsvTable& table, std::size_t row);

/// Writes `manifest.csv` and `manifest.meta` into `dir`.
void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest);
/// Reads a manifest CSV; the sidecar `manifest.meta` is used when present.
DatasetManifest read_manifest(const std::filesystem::path& csv_path);

struct SourceInput {
  std::string source_id;
  std::filesystem::path image_path;
  LandmarkSet landmarks;
};

/// Source ids are file stems; InvalidArgument on duplicates.
std::vector<SourceInput> sources_from_landmarks(const std::filesystem::path& landmark_csv);

struct SynthesisOptions {
  PlanKind plan_kind = PlanKind::Training;
  std::uint64_t seed = 0;
  int workers = 1;
  EncoderBindings bindings;
  AlignmentTemplate alignment = AlignmentTemplate::canonical();
};

/// Aligns every source, executes its recipes and writes lossless PNG outputs
/// under `out_dir/images`. Failures are recorded per sample. The returned
/// manifest (also written to `out_dir`) is ordered by (source id, recipe index)
/// and does not depend on `workers`.
DatasetManifest run_synthesis(std::span<const SourceInput> sources, std::span<const SourcePlan> plan,
                              const std::filesystem::path& out_dir, const SynthesisOptions& options);

}  // namespace fcqc
