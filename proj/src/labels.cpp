#include "fcqc/labels.hpp"

#include <map>

#include "fcqc/errors.hpp"
#include "fcqc/parallel.hpp"

namespace fcqc {

LabelingResult build_labels(const DatasetManifest& manifest, const std::filesystem::path& root,
                            LabelKind kind, int workers, const LabelingConfig& base) {
  std::vector<const SampleRecord*> usable;
  for (const auto& r : manifest.records) {
    if (r.error.empty()) usable.push_back(&r);
  }
  if (usable.empty()) throw Error(Errc::EmptyManifest, "manifest has no usable records");
  for (const auto* r : usable) {
    if (r->compressed() && r->reference_path.empty()) {
      throw Error(Errc::MissingReference, "sample " + r->sample_id + " has no reference path");
    }
  }

  LabelingResult result;
  result.config = base;
  result.config.kind = kind;
  std::vector<MetricSample> metrics(usable.size());
  parallel_for(usable.size(), workers, [&](std::size_t i) {
    const SampleRecord& r = *usable[i];
    metrics[i].compressed = r.compressed();
    if (!r.compressed()) return;
    ImageBuffer reference;
    try {
      reference = read_image(root / r.reference_path);
    } catch (const Error& e) {
      throw Error(Errc::MissingReference, "sample " + r.sample_id + ": " + e.what());
    }
    const ImageBuffer image = read_image(root / r.output_path);
    metrics[i].value = kind == LabelKind::Psnr ? psnr(reference, image, result.config.psnr_cap)
                                               : ssim(reference, image, result.config.ssim);
  });
  const std::vector<double> labels = labels_from_metrics(metrics, result.config);
  result.samples.reserve(usable.size());
  for (std::size_t i = 0; i < usable.size(); ++i) {
    result.samples.push_back({usable[i]->sample_id, labels[i], kind, metrics[i].value});
  }
  return result;
}

void write_labeled_manifest(const std::filesystem::path& csv_path, const DatasetManifest& manifest,
                            const LabelingResult& labels) {
  std::map<std::string_view, const LabeledSample*> by_id;
  for (const auto& s : labels.samples) by_id.emplace(s.sample_id, &s);
  DatasetManifest kept = manifest;
  kept.records.clear();
  for (const auto& r : manifest.records) {
    if (by_id.count(r.sample_id)) kept.records.push_back(r);
  }
  CsvTable table = manifest_table(kept);
  table.header.push_back("label");
  table.header.push_back("label_kind");
  for (std::size_t i = 0; i < kept.records.size(); ++i) {
    const LabeledSample& s = *by_id.at(kept.records[i].sample_id);
    table.rows[i].push_back(format_double(s.label));
    table.rows[i].push_back(std::string(to_string(s.kind)));
  }
  write_csv(csv_path, table);
  write_key_values(csv_path.parent_path() / "labels.meta", labels.config.to_key_values());
}

std::vector<LabeledRecord> read_labeled_manifest(const std::filesystem::path& csv_path) {
  const CsvTable table = read_csv(csv_path);
  const std::size_t label_col = table.column("label");
  const std::size_t kind_col = table.column("label_kind");
  std::vector<LabeledRecord> out;
  out.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    LabeledRecord rec;
    rec.record = parse_manifest_row(table, i);
    rec.label = parse_double(table.rows[i][label_col]);
    rec.kind = parse_label_kind(table.rows[i][kind_col]);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace fcqc
