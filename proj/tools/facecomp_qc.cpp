// facecomp_qc: batch front end for synthesis, labeling, training, prediction,
// calibration and evaluation. Every option maps to a flat config key; the
// resolved configuration is written next to the outputs before any work starts.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fcqc/codecs.hpp"
#include "fcqc/errors.hpp"
#include "fcqc/evaluation.hpp"
#include "fcqc/io.hpp"
#include "fcqc/labels.hpp"
#include "fcqc/parallel.hpp"
#include "fcqc/regressor.hpp"
#include "fcqc/synth.hpp"

namespace fs = std::filesystem;
using fcqc::Errc;
using fcqc::Error;
using fcqc::KeyValues;

namespace {

constexpr int kExitPartialFailure = 3;

// ---------------------------------------------------------------------------
// Config plumbing

struct Run {
  std::string command;
  KeyValues cfg;
  fs::path out;
  std::uint64_t seed = 0;
  int workers = 1;
  std::vector<std::string> log;
};

const std::string* find(const KeyValues& kv, std::string_view key) {
  const auto it = kv.find(key);
  return it == kv.end() ? nullptr : &it->second;
}

const std::string& require(const KeyValues& kv, std::string_view key, std::string_view flag) {
  const auto* v = find(kv, key);
  if (!v || v->empty()) {
    throw Error(Errc::InvalidArgument,
                "missing " + std::string(flag) + " (config key " + std::string(key) + ")");
  }
  return *v;
}

std::string value_or(const KeyValues& kv, std::string_view key, std::string fallback) {
  const auto* v = find(kv, key);
  return v ? *v : fallback;
}

template <typename T>
std::string join(const std::vector<T>& values, std::string_view sep = ",") {
  std::ostringstream os;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) os << sep;
    if constexpr (std::is_floating_point_v<T>) {
      os << fcqc::format_double(values[i]);
    } else {
      os << values[i];
    }
  }
  return os.str();
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(sep, start), text.size());
    std::string item(text.substr(start, end - start));
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    item = a == std::string::npos ? std::string() : item.substr(a, b - a + 1);
    if (!item.empty()) out.push_back(item);
    start = end + 1;
  }
  return out;
}

std::vector<int> parse_int_list(std::string_view text) {
  std::vector<int> out;
  for (const auto& s : split(text, ',')) out.push_back(static_cast<int>(fcqc::parse_int(s)));
  return out;
}

std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> out;
  for (const auto& s : split(text, ',')) out.push_back(fcqc::parse_double(s));
  return out;
}

/// "CODEC/ENC:first:last:step,..." e.g. "JPEG/B:20:100:2,JPEG2000/A:20:100:2".
fcqc::CompressionGrid parse_grid_spec(std::string_view text) {
  if (text == "default") return fcqc::CompressionGrid::training_default();
  fcqc::CompressionGrid grid;
  for (const auto& item : split(text, ',')) {
    const auto parts = split(item, ':');
    const auto slash = parts.empty() ? std::string::npos : parts[0].find('/');
    if (parts.size() != 4 || slash == std::string::npos) {
      throw Error(Errc::InvalidArgument, "grid entry '" + item + "' is not CODEC/ENC:first:last:step");
    }
    fcqc::GridEntry e;
    e.codec = fcqc::parse_codec(parts[0].substr(0, slash));
    e.encoder = fcqc::parse_encoder_id(parts[0].substr(slash + 1));
    e.qualities = fcqc::quality_range(static_cast<int>(fcqc::parse_int(parts[1])),
                                      static_cast<int>(fcqc::parse_int(parts[2])),
                                      static_cast<int>(fcqc::parse_int(parts[3])));
    grid.entries.push_back(std::move(e));
  }
  if (grid.entries.empty()) throw Error(Errc::InvalidArgument, "compression grid is empty");
  return grid;
}

std::string format_grid_spec(const fcqc::CompressionGrid& grid) {
  std::vector<std::string> items;
  for (const auto& e : grid.entries) {
    const auto& q = e.qualities;
    const int step = q.size() > 1 ? q[1] - q[0] : 1;
    items.push_back(std::string(fcqc::to_string(e.codec)) + "/" + std::string(fcqc::to_string(e.encoder)) + ":" +
                    std::to_string(q.front()) + ":" + std::to_string(q.back()) + ":" + std::to_string(step));
  }
  return join(items);
}

KeyValues command_defaults(const std::string& command) {
  KeyValues d;
  d["seed"] = "0";
  d["workers"] = "1";
  if (command == "synth") {
    const fcqc::TrainingPlanConfig tc;
    const fcqc::TestPlanConfig pc;
    const fcqc::EncoderBindings b;
    d["plan.kind"] = "training";
    d["plan.grid"] = format_grid_spec(tc.grid);
    d["plan.final_size"] = std::to_string(tc.final_size);
    d["plan.final_ied"] = std::to_string(tc.final_ied);
    d["plan.train.ied_choices"] = join(tc.ied_choices);
    d["plan.train.max_angle_deg"] = std::to_string(tc.max_angle_deg);
    d["plan.train.rotation_probability"] = fcqc::format_double(tc.rotation_probability);
    d["plan.test.ied_choices"] = join(pc.ied_choices);
    d["plan.test.qualities"] = join(pc.quality_choices);
    d["plan.test.max_angle_deg"] = std::to_string(pc.max_angle_deg);
    d["plan.test.rotation_probability"] = fcqc::format_double(pc.rotation_probability);
    d["plan.test.jpeg_encoder"] = std::string(fcqc::to_string(pc.jpeg_encoder));
    d["plan.test.jp2_encoder"] = std::string(fcqc::to_string(pc.jp2_encoder));
    d["codec.jpeg.backend"] = b.jpeg;
    d["codec.jp2.backendA"] = b.jp2_a;
    d["codec.jp2.backendB"] = b.jp2_b;
  } else if (command == "label") {
    d["labels.kind"] = "psnr";
    d["labels.psnr_cap"] = fcqc::format_double(fcqc::LabelingConfig{}.psnr_cap);
  } else if (command == "train" || command == "grid-search") {
    for (auto& [k, v] : fcqc::Hyperparams{}.to_key_values()) d[k] = v;
    d["train.train_on_all"] = "false";
  } else if (command == "eval-det") {
    d["eval.score"] = "raw";
    d["eval.max_quality"] = "100";
  } else if (command == "eval-edc") {
    d["eval.start_fnmr"] = "0.1";
    d["eval.discard_grid"] = join(fcqc::default_discard_grid());
  } else if (command == "ratio") {
    d["ratio.channels"] = "3";
    d["ratio.bit_depth"] = "8";
  }
  return d;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

void note(Run& run, const std::string& line) {
  std::cout << line << '\n';
  run.log.push_back(line);
}

fcqc::EncoderBindings bindings_from(const KeyValues& cfg) {
  fcqc::EncoderBindings b;
  b.jpeg = value_or(cfg, "codec.jpeg.backend", b.jpeg);
  b.jp2_a = value_or(cfg, "codec.jp2.backendA", b.jp2_a);
  b.jp2_b = value_or(cfg, "codec.jp2.backendB", b.jp2_b);
  if (!fcqc::backend_available(fcqc::Codec::Jpeg, b.jpeg)) {
    throw Error(Errc::EncoderUnavailable, "JPEG backend '" + b.jpeg + "' is not available");
  }
  for (const auto& name : {b.jp2_a, b.jp2_b}) {
    if (!fcqc::backend_available(fcqc::Codec::Jpeg2000, name)) {
      throw Error(Errc::EncoderUnavailable, "JPEG 2000 backend '" + name + "' is not available");
    }
  }
  return b;
}

std::string relative_to(const fs::path& target, const fs::path& base) {
  return fs::relative(fs::absolute(target), fs::absolute(base)).generic_string();
}

// ---------------------------------------------------------------------------
// Commands

int cmd_synth(Run& run) {
  const fs::path landmarks = require(run.cfg, "synth.landmarks", "--landmarks");
  const auto sources = fcqc::sources_from_landmarks(landmarks);
  if (sources.empty()) throw Error(Errc::EmptySourceList, landmarks.string() + " lists no sources");
  std::vector<std::string> ids;
  for (const auto& s : sources) ids.push_back(s.source_id);

  const auto kind = fcqc::parse_plan_kind(run.cfg.at("plan.kind"));
  const int final_size = static_cast<int>(fcqc::parse_int(run.cfg.at("plan.final_size")));
  const int final_ied = static_cast<int>(fcqc::parse_int(run.cfg.at("plan.final_ied")));
  std::vector<fcqc::SourcePlan> plan;
  if (kind == fcqc::PlanKind::Training) {
    fcqc::TrainingPlanConfig tc;
    tc.grid = parse_grid_spec(run.cfg.at("plan.grid"));
    tc.ied_choices = parse_int_list(run.cfg.at("plan.train.ied_choices"));
    tc.max_angle_deg = static_cast<int>(fcqc::parse_int(run.cfg.at("plan.train.max_angle_deg")));
    tc.rotation_probability = fcqc::parse_double(run.cfg.at("plan.train.rotation_probability"));
    tc.final_size = final_size;
    tc.final_ied = final_ied;
    plan = fcqc::plan_training(ids, run.seed, tc);
  } else {
    fcqc::TestPlanConfig pc;
    pc.ied_choices = parse_int_list(run.cfg.at("plan.test.ied_choices"));
    pc.quality_choices = parse_int_list(run.cfg.at("plan.test.qualities"));
    pc.max_angle_deg = static_cast<int>(fcqc::parse_int(run.cfg.at("plan.test.max_angle_deg")));
    pc.rotation_probability = fcqc::parse_double(run.cfg.at("plan.test.rotation_probability"));
    pc.jpeg_encoder = fcqc::parse_encoder_id(run.cfg.at("plan.test.jpeg_encoder"));
    pc.jp2_encoder = fcqc::parse_encoder_id(run.cfg.at("plan.test.jp2_encoder"));
    pc.final_size = final_size;
    pc.final_ied = final_ied;
    const auto protocol =
        kind == fcqc::PlanKind::TestUpright ? fcqc::TestProtocol::Upright : fcqc::TestProtocol::Rotated;
    plan = fcqc::plan_test(ids, protocol, run.seed, pc);
  }

  fcqc::SynthesisOptions options;
  options.plan_kind = kind;
  options.seed = run.seed;
  options.workers = run.workers;
  options.bindings = bindings_from(run.cfg);
  const auto manifest = fcqc::run_synthesis(sources, plan, run.out, options);

  std::size_t failed = 0;
  for (const auto& r : manifest.records) {
    if (r.error.empty()) continue;
    if (failed < 20) std::cerr << "sample " << r.sample_id << ": " << r.error << '\n';
    ++failed;
  }
  note(run, "wrote " + std::to_string(manifest.records.size()) + " samples from " +
                std::to_string(sources.size()) + " sources to " + (run.out / "manifest.csv").string());
  if (failed) {
    note(run, std::to_string(failed) + " samples failed");
    return kExitPartialFailure;
  }
  return 0;
}

int cmd_label(Run& run) {
  const fs::path manifest_path = require(run.cfg, "label.manifest", "--manifest");
  const auto kind = fcqc::parse_label_kind(run.cfg.at("labels.kind"));
  const auto manifest = fcqc::read_manifest(manifest_path);
  const fs::path root = manifest_path.parent_path();
  fcqc::LabelingConfig base;
  base.psnr_cap = fcqc::parse_double(run.cfg.at("labels.psnr_cap"));
  const auto labels = fcqc::build_labels(manifest, root, kind, run.workers, base);

  fcqc::DatasetManifest moved = manifest;
  for (auto& r : moved.records) {
    if (!r.output_path.empty()) r.output_path = relative_to(root / r.output_path, run.out);
    if (!r.reference_path.empty()) r.reference_path = relative_to(root / r.reference_path, run.out);
  }
  fs::create_directories(run.out);
  fcqc::write_labeled_manifest(run.out / "labels.csv", moved, labels);
  note(run, "labeled " + std::to_string(labels.samples.size()) + " samples (" +
                std::string(fcqc::to_string(kind)) + ") into " + (run.out / "labels.csv").string());
  return 0;
}

std::vector<fcqc::LabeledRecord> read_training_records(const Run& run, const fs::path& path) {
  auto records = fcqc::read_labeled_manifest(path);
  if (records.empty()) throw Error(Errc::EmptyManifest, path.string() + " has no rows");
  if (const auto* kind = find(run.cfg, "labels.kind")) {
    const auto wanted = fcqc::parse_label_kind(*kind);
    for (const auto& r : records) {
      if (r.kind != wanted) {
        throw Error(Errc::InvalidArgument, path.string() + " holds " + std::string(fcqc::to_string(r.kind)) +
                                               " labels, not " + *kind);
      }
    }
  }
  return records;
}

int cmd_train(Run& run) {
  const fs::path manifest = require(run.cfg, "train.manifest", "--manifest");
  auto hp = fcqc::hyperparams_from_key_values(run.cfg);
  if (fcqc::parse_bool(run.cfg.at("train.train_on_all"))) hp.train_fraction = 1.0;
  hp.validate();
  const auto records = read_training_records(run, manifest);
  const auto set = fcqc::load_training_set(records, manifest.parent_path(), hp.input_resolution, run.workers);

  fcqc::TrainOptions options;
  options.on_epoch = [&](int epoch, double loss) {
    std::cerr << "epoch " << epoch << "/" << hp.epochs << " loss " << loss << std::endl;
  };
  const auto result = fcqc::train(set, hp, run.seed, options);
  fcqc::save_model(run.out, result.model);

  const auto& rep = result.report;
  KeyValues report = hp.to_key_values();
  report["seed"] = std::to_string(run.seed);
  report["label_kind"] = std::string(fcqc::to_string(set.label_kind));
  report["train_samples"] = std::to_string(rep.train_count);
  report["validation_samples"] = std::to_string(rep.validation_count);
  report["initial_train_mse"] = fcqc::format_double(rep.initial_train_mse);
  report["final_train_mse"] = fcqc::format_double(rep.final_train_mse);
  report["first_batch_loss"] = fcqc::format_double(rep.first_batch_loss);
  report["validation_mse"] = fcqc::format_double(rep.validation_mse);
  report["epoch_loss"] = join(rep.epoch_loss);
  fcqc::write_key_values(run.out / "train_report.meta", report);

  const auto split = fcqc::split_by_source(set, hp.train_fraction, run.seed);
  std::map<std::string, std::string> partition;
  for (std::size_t i : split.train) partition[set.examples[i].source_id] = "train";
  for (std::size_t i : split.validation) partition[set.examples[i].source_id] = "validation";
  fcqc::CsvTable table;
  table.header = {"source_id", "partition"};
  for (const auto& [source, part] : partition) table.rows.push_back({source, part});
  fcqc::write_csv(run.out / "split.csv", table);

  run.log.push_back("training_seconds = " + fcqc::format_double(rep.seconds));
  note(run, "trained on " + std::to_string(rep.train_count) + " samples; train MSE " +
                fcqc::format_double(rep.initial_train_mse) + " -> " + fcqc::format_double(rep.final_train_mse) +
                ", validation MSE " + fcqc::format_double(rep.validation_mse) + "; model in " + run.out.string());
  return 0;
}

int cmd_grid_search(Run& run) {
  const fs::path manifest = require(run.cfg, "train.manifest", "--manifest");
  const auto base = fcqc::hyperparams_from_key_values(run.cfg);
  const auto list = [&](const char* key, const std::string& fallback) {
    return split(value_or(run.cfg, std::string("grid.") + key, fallback), ',');
  };
  std::vector<fcqc::Hyperparams> grid;
  for (const auto& e : list("epochs", std::to_string(base.epochs)))
    for (const auto& b : list("batch_size", std::to_string(base.batch_size)))
      for (const auto& lr : list("learning_rate", fcqc::format_double(base.learning_rate)))
        for (const auto& r : list("input_resolution", std::to_string(base.input_resolution)))
          for (const auto& s : list("scope", std::string(fcqc::to_string(base.scope)))) {
            fcqc::Hyperparams hp = base;
            hp.epochs = static_cast<int>(fcqc::parse_int(e));
            hp.batch_size = static_cast<int>(fcqc::parse_int(b));
            hp.learning_rate = fcqc::parse_double(lr);
            hp.input_resolution = static_cast<int>(fcqc::parse_int(r));
            hp.scope = fcqc::parse_trainable_scope(s);
            grid.push_back(hp);
          }
  const auto records = read_training_records(run, manifest);
  const auto loader = [&](int resolution) {
    return fcqc::load_training_set(records, manifest.parent_path(), resolution, run.workers);
  };
  const auto result = fcqc::grid_search(grid, loader, run.seed);

  fcqc::CsvTable table;
  table.header = {"epochs", "batch_size", "learning_rate", "input_resolution", "scope",
                  "validation_mse", "cost", "selected"};
  for (const auto& c : result.candidates) {
    table.rows.push_back({std::to_string(c.hp.epochs), std::to_string(c.hp.batch_size),
                          fcqc::format_double(c.hp.learning_rate), std::to_string(c.hp.input_resolution),
                          std::string(fcqc::to_string(c.hp.scope)), fcqc::format_double(c.validation_mse),
                          fcqc::format_double(c.cost), c.hp == result.best ? "1" : "0"});
  }
  fs::create_directories(run.out);
  fcqc::write_csv(run.out / "grid_search.csv", table);
  fcqc::write_key_values(run.out / "best.cfg", result.best.to_key_values());
  note(run, "evaluated " + std::to_string(grid.size()) + " candidates; best written to " +
                (run.out / "best.cfg").string());
  return 0;
}

struct SampleRow {
  std::string sample_id;
  std::string path;
};

std::vector<SampleRow> manifest_samples(const fs::path& path) {
  const auto table = fcqc::read_csv(path);
  const std::size_t id = table.column("sample_id");
  const std::size_t p = table.column("path");
  std::vector<SampleRow> out;
  for (const auto& row : table.rows) out.push_back({row[id], row[p]});
  return out;
}

std::vector<fcqc::ScoreRecord> score_manifest(const fcqc::ModelArtifact& model, const fs::path& manifest,
                                              int workers, std::size_t& failures) {
  const auto rows = manifest_samples(manifest);
  const fs::path root = manifest.parent_path();
  const fcqc::Predictor predictor(model);
  std::vector<fcqc::ScoreRecord> scores(rows.size());
  fcqc::parallel_for(rows.size(), workers, [&](std::size_t i) {
    auto& s = scores[i];
    s.sample_id = rows[i].sample_id;
    try {
      if (rows[i].path.empty()) throw Error(Errc::InvalidArgument, "no image");
      s.raw_score = predictor.predict(fcqc::read_image(root / rows[i].path));
      if (model.sigmoid) s.quality = fcqc::map_quality(s.raw_score, *model.sigmoid);
    } catch (const Error&) {
      s.raw_score = std::numeric_limits<double>::quiet_NaN();
      s.quality = 0;
    }
  });
  failures = 0;
  for (const auto& s : scores) failures += std::isnan(s.raw_score) ? 1 : 0;
  return scores;
}

int cmd_predict(Run& run) {
  const auto model = fcqc::load_model(require(run.cfg, "predict.model", "--model"));
  std::size_t failures = 0;
  const auto scores = score_manifest(model, require(run.cfg, "predict.manifest", "--manifest"), run.workers,
                                     failures);
  fs::create_directories(run.out);
  fcqc::write_scores(run.out / "scores.csv", scores);
  note(run, "scored " + std::to_string(scores.size()) + " samples (" + std::to_string(failures) +
                " failures)" + (model.sigmoid ? "" : ", model is uncalibrated so quality is empty") + " -> " +
                (run.out / "scores.csv").string());
  return 0;
}

int cmd_calibrate(Run& run) {
  const fs::path model_dir = require(run.cfg, "calibrate.model", "--model");
  auto model = fcqc::load_model(model_dir);
  std::vector<double> raw;
  if (const auto* scores = find(run.cfg, "calibrate.scores")) {
    for (const auto& s : fcqc::read_scores(*scores)) raw.push_back(s.raw_score);
  } else {
    std::size_t failures = 0;
    for (const auto& s : score_manifest(model, require(run.cfg, "calibrate.manifest", "--manifest or --scores"),
                                        run.workers, failures)) {
      raw.push_back(s.raw_score);
    }
  }
  model.sigmoid = fcqc::calibrate_sigmoid(raw);
  fcqc::save_model(run.out, model);
  note(run, "sigmoid midpoint " + fcqc::format_double(model.sigmoid->midpoint) + ", width " +
                fcqc::format_double(model.sigmoid->width) + "; model written to " + run.out.string());
  return 0;
}

struct DetSample {
  double score;
  bool compressed;
  std::string codec;
  int quality_param;
};

int cmd_eval_det(Run& run) {
  const fs::path scores_path = require(run.cfg, "eval.scores", "--scores");
  const std::string mode = run.cfg.at("eval.score");
  if (mode != "raw" && mode != "quality") throw Error(Errc::InvalidArgument, "--score must be raw or quality");
  const int max_quality = static_cast<int>(fcqc::parse_int(run.cfg.at("eval.max_quality")));

  // Compression facts come from the score file itself when it carries them,
  // otherwise from the manifest.
  const auto score_table = fcqc::read_csv(scores_path);
  fcqc::CsvTable facts = score_table;
  if (!score_table.find_column("codec") || !score_table.find_column("compressed")) {
    facts = fcqc::read_csv(require(run.cfg, "eval.manifest", "--manifest"));
  }
  const std::size_t f_id = facts.column("sample_id");
  const std::size_t f_comp = facts.column("compressed");
  const std::size_t f_codec = facts.column("codec");
  const std::size_t f_q = facts.column("quality");
  std::map<std::string, const std::vector<std::string>*> by_id;
  for (const auto& row : facts.rows) by_id[row[f_id]] = &row;

  std::vector<DetSample> samples;
  std::size_t failures = 0;
  for (const auto& s : fcqc::read_scores(scores_path)) {
    const auto it = by_id.find(s.sample_id);
    if (it == by_id.end()) throw Error(Errc::UnknownSampleId, "no manifest row for '" + s.sample_id + "'");
    const auto& row = *it->second;
    if (std::isnan(s.raw_score)) {
      ++failures;
      continue;
    }
    double value = s.raw_score;
    if (mode == "quality") {
      if (!s.quality) throw Error(Errc::InvalidArgument, "score file has no quality values; run calibrate");
      value = *s.quality;
    }
    const bool compressed = fcqc::parse_bool(row[f_comp]);
    const int q = compressed ? static_cast<int>(fcqc::parse_int(row[f_q])) : 100;
    if (compressed && q > max_quality) continue;
    samples.push_back({value, compressed, compressed ? row[f_codec] : "", q});
  }

  fs::create_directories(run.out);
  fcqc::CsvTable report;
  report.header = {"slice", "n_uncompressed", "n_compressed", "eer", "threshold", "f1", "spearman", "failures"};
  std::vector<fcqc::PlotSeries> series;
  std::vector<double> u;
  for (const auto& s : samples) {
    if (!s.compressed) u.push_back(s.score);
  }
  const std::pair<const char*, const char*> slices[] = {{"JPEG", "JPEG"}, {"JPEG2000", "JPEG 2000"}, {"All", "All"}};
  std::ostringstream table;
  table << "slice        EER      F1       Spearman\n";
  for (const auto& [codec, label] : slices) {
    std::vector<double> c;
    std::vector<double> x = u;
    std::vector<double> y(u.size(), 100.0);
    for (const auto& s : samples) {
      if (!s.compressed || (std::string_view(codec) != "All" && s.codec != codec)) continue;
      c.push_back(s.score);
      x.push_back(s.score);
      y.push_back(s.quality_param);
    }
    if (u.empty() || c.empty()) {
      report.rows.push_back({codec, std::to_string(u.size()), std::to_string(c.size()), "", "", "", "",
                             std::to_string(failures)});
      continue;
    }
    const auto curve = fcqc::det_curve(u, c);
    const auto e = fcqc::eer(u, c);
    double f1 = std::numeric_limits<double>::quiet_NaN();
    double rho = std::numeric_limits<double>::quiet_NaN();
    try {
      f1 = fcqc::f1_at(e.threshold, u, c);
    } catch (const Error&) {
    }
    try {
      rho = fcqc::spearman(x, y);
    } catch (const Error&) {
    }
    report.rows.push_back({codec, std::to_string(u.size()), std::to_string(c.size()), fcqc::format_double(e.eer),
                           fcqc::format_double(e.threshold), fcqc::format_double(f1), fcqc::format_double(rho),
                           std::to_string(failures)});
    fcqc::write_det_csv(run.out / ("det_" + std::string(codec) + ".csv"), curve);
    fcqc::PlotSeries ps{label, {}};
    for (const auto& p : curve) ps.points.emplace_back(p.fpr, p.fnr);
    series.push_back(std::move(ps));
    char line[128];
    std::snprintf(line, sizeof line, "%-12s %-8.4f %-8.4f %-8.4f\n", label, e.eer, f1, rho);
    table << line;
  }
  fcqc::write_csv(run.out / "det_report.csv", report);
  fcqc::write_text(run.out / "det.svg",
                   fcqc::render_svg({"DET", "false positive rate", "false negative rate"}, series));
  std::cout << table.str();
  note(run, std::to_string(failures) + " failed samples excluded; report in " +
                (run.out / "det_report.csv").string());
  return 0;
}

int cmd_eval_edc(Run& run) {
  const auto score_files = split(require(run.cfg, "eval.scores", "--scores"), ',');
  const fs::path comparisons_path = require(run.cfg, "eval.comparisons", "--comparisons");
  const double start = fcqc::parse_double(run.cfg.at("eval.start_fnmr"));
  const auto grid = parse_double_list(run.cfg.at("eval.discard_grid"));

  std::vector<fcqc::ComparisonRecord> mated;
  for (auto& c : fcqc::read_comparisons(comparisons_path)) {
    if (c.mated) mated.push_back(std::move(c));
  }
  if (mated.empty()) throw Error(Errc::EmptyComparisons, comparisons_path.string() + " has no mated comparisons");
  std::vector<double> similarities;
  for (const auto& c : mated) similarities.push_back(c.similarity);
  const double threshold = fcqc::fnmr_threshold(similarities, start);

  std::set<std::string> stems;
  for (const auto& f : score_files) stems.insert(fs::path(f).stem().string());
  const bool unique_stems = stems.size() == score_files.size();

  fs::create_directories(run.out);
  fcqc::CsvTable report;
  report.header = {"series", "threshold", "fnmr_at_zero", "failure_rate", "comparisons"};
  std::vector<fcqc::PlotSeries> series;
  double y_max = 0.0;
  for (const auto& file : score_files) {
    const fs::path p(file);
    const std::string name = unique_stems ? p.stem().string() : p.parent_path().filename().string();
    fcqc::QualityMap qualities;
    std::size_t failures = 0;
    bool any_quality = false;
    const auto scores = fcqc::read_scores(p);
    for (const auto& s : scores) {
      any_quality = any_quality || s.quality.has_value();
      const bool failed = std::isnan(s.raw_score) || !s.quality;
      failures += failed ? 1 : 0;
      qualities[s.sample_id] = failed ? 0 : *s.quality;
    }
    if (!any_quality) throw Error(Errc::InvalidArgument, file + " has no quality values; run calibrate");
    const auto curve = fcqc::edc_curve(qualities, mated, threshold, grid);
    fcqc::write_edc_csv(run.out / ("edc_" + name + ".csv"), curve);
    const double failure_rate = scores.empty() ? 0.0 : static_cast<double>(failures) / scores.size();
    report.rows.push_back({name, fcqc::format_double(threshold), fcqc::format_double(curve.front().fnmr),
                           fcqc::format_double(failure_rate), std::to_string(mated.size())});
    fcqc::PlotSeries ps{name, {}};
    for (const auto& pt : curve) {
      ps.points.emplace_back(pt.discard_fraction, pt.fnmr);
      y_max = std::max(y_max, pt.fnmr);
    }
    series.push_back(std::move(ps));
    note(run, name + ": FNMR " + fcqc::format_double(curve.front().fnmr) + " at 0% discarded, " +
                  fcqc::format_double(curve.back().fnmr) + " at " +
                  fcqc::format_double(curve.back().discard_fraction * 100) + "%");
  }
  fcqc::write_csv(run.out / "edc_report.csv", report);
  fcqc::PlotSpec spec{"EDC", "fraction of comparisons discarded", "FNMR"};
  spec.x_max = grid.empty() ? 1.0 : *std::max_element(grid.begin(), grid.end());
  spec.y_max = std::max(0.05, y_max * 1.1);
  fcqc::write_text(run.out / "edc.svg", fcqc::render_svg(spec, series));
  return 0;
}

int cmd_ratio(Run& run) {
  long long bytes = 0;
  int width = 0;
  int height = 0;
  if (const auto* file = find(run.cfg, "ratio.file")) {
    const auto data = fcqc::read_file(*file);
    const auto img = fcqc::decode(data);
    bytes = static_cast<long long>(data.size());
    width = img.width;
    height = img.height;
  } else {
    bytes = fcqc::parse_int(require(run.cfg, "ratio.bytes", "--bytes or --file"));
    width = static_cast<int>(fcqc::parse_int(require(run.cfg, "ratio.width", "--width")));
    height = static_cast<int>(fcqc::parse_int(require(run.cfg, "ratio.height", "--height")));
  }
  const auto r = fcqc::compression_ratio(bytes, width, height,
                                         static_cast<int>(fcqc::parse_int(run.cfg.at("ratio.channels"))),
                                         static_cast<int>(fcqc::parse_int(run.cfg.at("ratio.bit_depth"))));
  std::cout << "compression_ratio=" << fcqc::format_double(r.ratio) << " baseline_score=" << r.baseline_score
            << '\n';
  return 0;
}

fs::path default_out(const std::string& command, const KeyValues& cfg) {
  if (command == "label") {
    const auto* m = find(cfg, "label.manifest");
    const fs::path dir = m ? fs::path(*m).parent_path() : fs::path(".");
    return dir / ("labels_" + value_or(cfg, "labels.kind", "psnr"));
  }
  if (command == "calibrate") {
    if (const auto* m = find(cfg, "calibrate.model")) return *m;
  }
  if (command == "ratio") return {};
  static const std::map<std::string, std::string> names = {
      {"synth", "synth_out"}, {"train", "model"},       {"grid-search", "grid_search"},
      {"predict", "scores"},  {"eval-det", "eval_det"}, {"eval-edc", "eval_edc"}};
  return names.at(command);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Face image compression quality: synthesis, labeling, training and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  // Values given on the command line, keyed by config key.
  std::map<std::string, std::string> flags;
  std::vector<std::pair<CLI::Option*, std::string>> bound;
  const auto opt = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    bound.emplace_back(sub->add_option(name, flags[key], help), key);
    return bound.back().first;
  };

  std::string config_path;
  app.add_option("--config", config_path, "Key-value config file (default: $FACECOMP_QC_CONFIG)");
  opt(&app, "--seed", "seed", "Master seed");
  opt(&app, "--out", "out", "Output directory");
  opt(&app, "--workers", "workers", "Worker threads (results do not depend on it)");

  auto* synth = app.add_subcommand("synth", "Align sources and synthesize degraded samples");
  opt(synth, "--landmarks,--sources", "synth.landmarks", "Landmark CSV (image_path,lex,ley,...)");
  opt(synth, "--plan", "plan.kind", "training | test-upright | test-rotated");
  opt(synth, "--grid", "plan.grid", "Compression grid, e.g. JPEG/B:20:100:10,JPEG2000/A:20:100:10");

  auto* label = app.add_subcommand("label", "Compute PSNR or SSIM labels for a manifest");
  opt(label, "--manifest", "label.manifest", "manifest.csv written by synth");
  opt(label, "--labels", "labels.kind", "psnr | ssim");

  bool train_on_all = false;
  auto* train = app.add_subcommand("train", "Train the regressor on a labeled manifest");
  auto* grid = app.add_subcommand("grid-search", "Select hyperparameters on a source-disjoint 80/20 split");
  for (auto* sub : {train, grid}) {
    opt(sub, "--manifest", "train.manifest", "Labeled manifest (labels.csv)");
    opt(sub, "--labels", "labels.kind", "Expected label kind: psnr | ssim");
    opt(sub, "--epochs", "train.epochs", "Epochs");
    opt(sub, "--batch-size", "train.batch_size", "Batch size");
    opt(sub, "--lr", "train.learning_rate", "Adam step size");
    opt(sub, "--resolution", "train.input_resolution", "Network input resolution");
    opt(sub, "--scope", "train.scope", "all | head-only");
    opt(sub, "--train-fraction", "train.train_fraction", "Fraction of sources used for training");
  }
  train->add_flag("--train-on-all", train_on_all, "Train on every source (no validation split)");
  opt(grid, "--grid-epochs", "grid.epochs", "Comma-separated candidate values");
  opt(grid, "--grid-batch-size", "grid.batch_size", "Comma-separated candidate values");
  opt(grid, "--grid-lr", "grid.learning_rate", "Comma-separated candidate values");
  opt(grid, "--grid-resolution", "grid.input_resolution", "Comma-separated candidate values");

  auto* predict = app.add_subcommand("predict", "Score the samples of a manifest");
  opt(predict, "--model", "predict.model", "Model directory");
  opt(predict, "--manifest", "predict.manifest", "Manifest or labeled manifest");

  auto* calibrate = app.add_subcommand("calibrate", "Fit the quality sigmoid to raw training scores");
  opt(calibrate, "--model", "calibrate.model", "Model directory");
  opt(calibrate, "--scores", "calibrate.scores", "Score CSV with raw_score");
  opt(calibrate, "--manifest", "calibrate.manifest", "Manifest to score when no score file is given");

  auto* det = app.add_subcommand("eval-det", "DET, EER, F1 and Spearman per codec");
  opt(det, "--scores", "eval.scores", "Score CSV");
  opt(det, "--manifest", "eval.manifest", "Manifest with codec and quality columns");
  opt(det, "--score", "eval.score", "raw | quality");
  opt(det, "--max-quality", "eval.max_quality", "Ignore compressed samples above this quality parameter");

  auto* edc = app.add_subcommand("eval-edc", "Error versus discard characteristic");
  opt(edc, "--scores", "eval.scores", "Comma-separated score CSVs with quality values");
  opt(edc, "--comparisons", "eval.comparisons", "CSV probe_id,reference_id,similarity,mated");
  opt(edc, "--start-fnmr", "eval.start_fnmr", "FNMR at which the threshold is fixed");
  opt(edc, "--discard-grid", "eval.discard_grid", "Comma-separated discard fractions");

  auto* ratio = app.add_subcommand("ratio", "Compression ratio and baseline score");
  opt(ratio, "--bytes", "ratio.bytes", "Encoded size in bytes");
  opt(ratio, "--width", "ratio.width", "Image width");
  opt(ratio, "--height", "ratio.height", "Image height");
  opt(ratio, "--channels", "ratio.channels", "Channels");
  opt(ratio, "--bit-depth", "ratio.bit_depth", "Bits per channel");
  opt(ratio, "--file", "ratio.file", "Encoded image file");

  CLI11_PARSE(app, argc, argv);

  Run run;
  run.command = app.get_subcommands().front()->get_name();
  const auto started = std::chrono::steady_clock::now();
  try {
    run.cfg = command_defaults(run.command);
    if (config_path.empty()) {
      if (const char* env = std::getenv("FACECOMP_QC_CONFIG")) config_path = env;
    }
    if (!config_path.empty()) {
      for (auto& [k, v] : fcqc::read_key_values(config_path)) run.cfg[k] = v;
      run.cfg["config"] = config_path;
    }
    for (const auto& [option, key] : bound) {
      if (option->count() > 0) run.cfg[key] = flags[key];
    }
    if (train_on_all) run.cfg["train.train_on_all"] = "true";
    if (!find(run.cfg, "out")) {
      const fs::path d = default_out(run.command, run.cfg);
      if (!d.empty()) run.cfg["out"] = d.string();
    }
    run.seed = std::stoull(run.cfg.at("seed"));
    run.workers = static_cast<int>(fcqc::parse_int(run.cfg.at("workers")));
    if (run.workers < 1) throw Error(Errc::InvalidArgument, "--workers must be >= 1");
    if (const auto* out = find(run.cfg, "out")) {
      run.out = *out;
      fs::create_directories(run.out);
      fcqc::write_key_values(run.out / (run.command + ".resolved.cfg"), run.cfg);
    }

    int code = 0;
    if (run.command == "synth") code = cmd_synth(run);
    else if (run.command == "label") code = cmd_label(run);
    else if (run.command == "train") code = cmd_train(run);
    else if (run.command == "grid-search") code = cmd_grid_search(run);
    else if (run.command == "predict") code = cmd_predict(run);
    else if (run.command == "calibrate") code = cmd_calibrate(run);
    else if (run.command == "eval-det") code = cmd_eval_det(run);
    else if (run.command == "eval-edc") code = cmd_eval_edc(run);
    else if (run.command == "ratio") code = cmd_ratio(run);

    if (!run.out.empty()) {
      std::ostringstream log;
      log << "finished = " << timestamp() << '\n'
          << "elapsed_seconds = "
          << std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count() << '\n';
      for (const auto& line : run.log) log << "# " << line << '\n';
      fcqc::write_text(run.out / (run.command + ".log"), log.str());
    }
    return code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
