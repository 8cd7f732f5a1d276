#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fcqc/metrics.hpp"
#include "fcqc/synth.hpp"

namespace fcqc {

struct LabeledSample {
  std::string sample_id;
  double label = 1.0;
  LabelKind kind = LabelKind::Psnr;
  double metric = 0.0;  // PSNR in dB or SSIM; unused for uncompressed samples
};

struct LabelingResult {
  std::vector<LabeledSample> samples;  // manifest order, failed records skipped
  LabelingConfig config;
};

/// Computes metric(reference, final) for every compressed record and derives
/// labels. Paths are resolved against `root` (the manifest directory).
LabelingResult build_labels(const DatasetManifest& manifest, const std::filesystem::path& root,
                            LabelKind kind, int workers = 1, const LabelingConfig& base = {});

/// A manifest row together with its label.
struct LabeledRecord {
  SampleRecord record;
  double label = 1.0;
  LabelKind kind = LabelKind::Psnr;
};

/// Writes `<stem>.csv` (manifest columns + label,label_kind) and `labels.meta`.
void write_labeled_manifest(const std::filesystem::path& csv_path, const DatasetManifest& manifest,
                            const LabelingResult& labels);

std::vector<LabeledRecord> read_labeled_manifest(const std::filesystem::path& csv_path);

}  // namespace fcqc
