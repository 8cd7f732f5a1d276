#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fcqc/image.hpp"
#include "fcqc/io.hpp"
#include "fcqc/labels.hpp"
#include "fcqc/metrics.hpp"
#include "fcqc/nn.hpp"

namespace fcqc {

enum class TrainableScope { All, HeadOnly };

std::string_view to_string(TrainableScope scope) noexcept;
TrainableScope parse_trainable_scope(std::string_view text);

struct Hyperparams {
  int epochs = 10;
  int batch_size = 256;
  double learning_rate = 1e-3;
  int input_resolution = 256;
  TrainableScope scope = TrainableScope::All;
  /// Fraction of sources used for training; 1 trains on everything.
  double train_fraction = 0.8;

  void validate() const;
  /// Keys are prefixed with `prefix`, e.g. "train.epochs".
  [[nodiscard]] KeyValues to_key_values(std::string_view prefix = "train.") const;
  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

/// Reads the keys written by Hyperparams::to_key_values; missing keys keep
/// their value from `defaults`.
Hyperparams hyperparams_from_key_values(const KeyValues& kv, std::string_view prefix = "train.",
                                        const Hyperparams& defaults = {});

struct SigmoidParams {
  double midpoint = 0.0;
  double width = 1.0;

  void validate() const;
  friend bool operator==(const SigmoidParams&, const SigmoidParams&) = default;
};

inline constexpr int kModelFormatVersion = 1;
/// Side length of the crops the regressor consumes.
inline constexpr int kRegressorInputSize = 248;

struct ModelArtifact {
  std::string architecture_id = nn::kCompactV1;
  int input_resolution = 256;
  std::vector<nn::TensorInfo> layout;
  std::vector<float> weights;
  std::uint64_t train_seed = 0;
  LabelKind label_kind = LabelKind::Psnr;
  std::optional<SigmoidParams> sigmoid;
  int format_version = kModelFormatVersion;
  std::array<float, 3> channel_mean{0.0F, 0.0F, 0.0F};
  std::array<float, 3> channel_std{1.0F, 1.0F, 1.0F};
};

/// IncompatibleArtifactVersion unless the artifact matches its architecture.
void validate(const ModelArtifact& model);

/// Writes `model.meta` and `weights.bin` into `dir`.
void save_model(const std::filesystem::path& dir, const ModelArtifact& model);
ModelArtifact load_model(const std::filesystem::path& dir);

/// Bilinear (pixel-center aligned) resize to size x size, returned as planar
/// RGB floats in [0, 1].
std::vector<float> resize_to_tensor(const ImageBuffer& img, int size);

struct TrainingExample {
  std::string sample_id;
  std::string source_id;
  double label = 1.0;
  std::vector<float> tensor;  // 3 x R x R in [0, 1]
};

struct TrainingSet {
  int resolution = 0;
  LabelKind label_kind = LabelKind::Psnr;
  std::vector<TrainingExample> examples;
};

struct LabeledImage {
  std::string sample_id;
  std::string source_id;
  double label = 1.0;
  ImageBuffer image;
};

/// EmptyManifest, LabelOutOfRange, ShapeMismatch (images must be 248 x 248).
TrainingSet make_training_set(std::span<const LabeledImage> images, int resolution,
                              LabelKind kind = LabelKind::Psnr, int workers = 1);
/// Loads the images of a labeled manifest; paths resolve against `root`.
TrainingSet load_training_set(std::span<const LabeledRecord> records, const std::filesystem::path& root,
                              int resolution, int workers = 1);

struct SourceSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Shuffles the distinct source ids with `seed` and assigns the first
/// round(fraction * sources) of them to training. No source is in both parts.
SourceSplit split_by_source(const TrainingSet& set, double train_fraction, std::uint64_t seed);

struct TrainingReport {
  double initial_train_mse = 0.0;
  double final_train_mse = 0.0;
  double first_batch_loss = 0.0;
  double validation_mse = 0.0;  // NaN without a validation part
  std::vector<double> epoch_loss;
  std::size_t train_count = 0;
  std::size_t validation_count = 0;
  double seconds = 0.0;
};

struct TrainResult {
  ModelArtifact model;
  TrainingReport report;
};

struct TrainOptions {
  /// Measure the training MSE before and after training (two extra passes).
  bool evaluate_train = true;
  std::function<void(int epoch, double loss)> on_epoch;
};

/// Splits by source with hp.train_fraction and trains compact-v1 with Adam on
/// the MSE loss.
TrainResult train(const TrainingSet& set, const Hyperparams& hp, std::uint64_t seed,
                  const TrainOptions& options = {});

/// Trains on the given example indices and reports the MSE on `validation`.
TrainResult train_on(const TrainingSet& set, std::span<const std::size_t> train_idx,
                     std::span<const std::size_t> validation_idx, const Hyperparams& hp,
                     std::uint64_t seed, const TrainOptions& options = {});

struct GridCandidate {
  Hyperparams hp;
  double validation_mse = 0.0;
  double cost = 0.0;  // epochs * training samples * resolution^2
};

struct GridSearchResult {
  Hyperparams best;
  std::vector<GridCandidate> candidates;
};

/// Supplies the training set at a given input resolution.
using TrainingSetLoader = std::function<TrainingSet(int resolution)>;

/// Trains every candidate on one 80/20 source split and returns the lowest
/// validation MSE; candidates within 1% of it are ranked by cost. EmptyGrid.
GridSearchResult grid_search(std::span<const Hyperparams> grid, const TrainingSetLoader& loader,
                             std::uint64_t seed);

/// Inference on a loaded artifact. predict() is const and may be called
/// concurrently.
class Predictor {
 public:
  explicit Predictor(const ModelArtifact& model);

  [[nodiscard]] double predict(const ImageBuffer& img) const;
  /// `tensor` is the resize_to_tensor() output at the model resolution.
  [[nodiscard]] double predict_tensor(std::span<const float> tensor) const;

 private:
  nn::CompactNet<float> net_;
  std::array<float, 3> mean_;
  std::array<float, 3> inv_std_;
};

double predict_raw(const ModelArtifact& model, const ImageBuffer& img);

/// Median and half the interquartile range (linear interpolation quantiles).
/// DegenerateDistribution for fewer than 10 scores or no spread.
SigmoidParams calibrate_sigmoid(std::span<const double> raw_scores);

/// round(100 / (1 + exp(-(raw - m) / w))), clamped to [0, 100]; NaN maps to 0.
int map_quality(double raw, const SigmoidParams& p);

struct ScoreRecord {
  std::string sample_id;
  double raw_score = 0.0;  // NaN when the sample could not be scored
  std::optional<int> quality;
};

void write_scores(const std::filesystem::path& path, std::span<const ScoreRecord> scores);
std::vector<ScoreRecord> read_scores(const std::filesystem::path& path);

}  // namespace fcqc
