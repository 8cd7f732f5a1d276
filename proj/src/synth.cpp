#include "fcqc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "fcqc/errors.hpp"
#include "fcqc/parallel.hpp"
#include "fcqc/random.hpp"

namespace fcqc {

namespace {

template <typename T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& values) {
  return values[bounded(rng, values.size())];
}

void require_sources(std::span<const std::string> sources) {
  if (sources.empty()) throw Error(Errc::EmptySourceList, "no sources to plan for");
  std::set<std::string_view> seen;
  for (const auto& s : sources) {
    if (!seen.insert(s).second) throw Error(Errc::InvalidArgument, "duplicate source id '" + s + "'");
  }
}

std::string bool_field(bool v) { return v ? "1" : "0"; }

}  // namespace

std::string_view to_string(PlanKind kind) noexcept {
  switch (kind) {
    case PlanKind::Training: return "training";
    case PlanKind::TestUpright: return "test-upright";
    case PlanKind::TestRotated: return "test-rotated";
  }
  return "training";
}

PlanKind parse_plan_kind(std::string_view text) {
  if (text == "training") return PlanKind::Training;
  if (text == "test-upright") return PlanKind::TestUpright;
  if (text == "test-rotated") return PlanKind::TestRotated;
  throw Error(Errc::InvalidArgument,
              "plan kind must be training, test-upright or test-rotated, got '" + std::string(text) + "'");
}

std::size_t CompressionGrid::recipe_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.qualities.size();
  return n;
}

std::vector<int> quality_range(int first, int last, int step) {
  if (step <= 0) throw Error(Errc::InvalidArgument, "quality range step must be positive");
  std::vector<int> out;
  for (int q = first; q <= last; q += step) out.push_back(q);
  return out;
}

CompressionGrid CompressionGrid::training_default() {
  CompressionGrid grid;
  grid.entries.push_back({Codec::Jpeg, EncoderId::B, quality_range(20, 100, 2)});
  grid.entries.push_back({Codec::Jpeg2000, EncoderId::A, quality_range(20, 100, 2)});
  grid.entries.push_back({Codec::Jpeg2000, EncoderId::B, quality_range(31, 99, 2)});
  return grid;
}

std::uint64_t source_seed(std::uint64_t master_seed, std::string_view source_id) noexcept {
  return splitmix64(splitmix64(master_seed) ^ fnv1a(source_id));
}

std::uint64_t sample_seed(std::uint64_t master_seed, std::string_view source_id,
                          std::size_t recipe_index) noexcept {
  return splitmix64(source_seed(master_seed, source_id) + 0x632BE59BD9B4E019ULL * (recipe_index + 1));
}

std::vector<SourcePlan> plan_training(std::span<const std::string> sources, std::uint64_t seed,
                                      const TrainingPlanConfig& config) {
  require_sources(sources);
  if (config.ied_choices.empty()) throw Error(Errc::InvalidArgument, "empty IED choice set");
  for (const auto& e : config.grid.entries) {
    for (int q : e.qualities) {
      if (q < 1 || q > 100) throw Error(Errc::InvalidQuality, "grid quality out of range: " + std::to_string(q));
    }
  }
  std::vector<SourcePlan> plans;
  plans.reserve(sources.size());
  for (const auto& source : sources) {
    std::mt19937_64 rng(source_seed(seed, source));
    DegradationRecipe base;
    base.target_ied = pick(rng, config.ied_choices);
    const bool rotate = unit(rng) < config.rotation_probability;
    base.rotation_angle_deg = rotate ? uniform_int(rng, -config.max_angle_deg, config.max_angle_deg) : 0;
    base.final_size = config.final_size;
    base.final_ied = config.final_ied;

    SourcePlan plan;
    plan.source_id = source;
    plan.recipes.push_back(base);
    DegradationRecipe flipped = base;
    flipped.flipped = true;
    plan.recipes.push_back(flipped);
    for (const auto& entry : config.grid.entries) {
      for (int q : entry.qualities) {
        DegradationRecipe r = base;
        r.compression = CompressionSpec{entry.codec, entry.encoder, q};
        plan.recipes.push_back(r);
      }
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

std::vector<SourcePlan> plan_test(std::span<const std::string> sources, TestProtocol protocol,
                                  std::uint64_t seed, const TestPlanConfig& config) {
  require_sources(sources);
  if (config.ied_choices.empty() || config.quality_choices.empty()) {
    throw Error(Errc::InvalidArgument, "empty IED or quality choice set");
  }
  std::vector<SourcePlan> plans;
  plans.reserve(sources.size());
  for (const auto& source : sources) {
    std::mt19937_64 rng(source_seed(seed, source));
    DegradationRecipe base;
    base.target_ied = pick(rng, config.ied_choices);
    const bool rotate = unit(rng) < config.rotation_probability;
    const int angle = uniform_int(rng, -config.max_angle_deg, config.max_angle_deg);
    base.rotation_angle_deg = (protocol == TestProtocol::Rotated && rotate) ? angle : 0;
    base.final_size = config.final_size;
    base.final_ied = config.final_ied;

    SourcePlan plan;
    plan.source_id = source;
    const std::pair<Codec, EncoderId> codecs[] = {{Codec::Jpeg, config.jpeg_encoder},
                                                   {Codec::Jpeg2000, config.jp2_encoder}};
    for (bool flip : {false, true}) {
      DegradationRecipe r = base;
      r.flipped = flip;
      plan.recipes.push_back(r);
    }
    for (const auto& [codec, encoder] : codecs) {
      for (bool flip : {false, true}) {
        DegradationRecipe r = base;
        r.flipped = flip;
        std::mt19937_64 qrng(sample_seed(seed, source, plan.recipes.size()));
        r.compression = CompressionSpec{codec, encoder, pick(qrng, config.quality_choices)};
        plan.recipes.push_back(r);
      }
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

LandmarkSet flip_landmarks(const LandmarkSet& lm, int canvas_width) {
  const auto mirror = [&](Point2 p) { return Point2{(canvas_width - 1) - p.x, p.y}; };
  return {mirror(lm.right_eye), mirror(lm.left_eye), mirror(lm.nose_tip), mirror(lm.right_mouth),
          mirror(lm.left_mouth)};
}

RecipeGeometry recipe_geometry(int canvas_width, int canvas_height, const LandmarkSet& landmarks,
                               const DegradationRecipe& recipe) {
  if (recipe.target_ied < 1 || recipe.final_ied < 1 || recipe.final_size < 1) {
    throw Error(Errc::InvalidArgument, "recipe sizes must be positive");
  }
  const double ied = inter_eye_distance(landmarks);
  if (!(ied > 0.0)) throw Error(Errc::DegenerateConfiguration, "aligned landmarks have zero IED");
  const double theta = recipe.rotation_angle_deg * std::numbers::pi / 180.0;
  const double s_pre = recipe.target_ied / ied;
  const double s_final = recipe.final_ied / ied;

  RecipeGeometry g;
  g.pre_width = std::max(1, static_cast<int>(std::lround(canvas_width * s_pre)));
  g.pre_height = std::max(1, static_cast<int>(std::lround(canvas_height * s_pre)));
  g.final_size = recipe.final_size;
  const Point2 canvas_center{(canvas_width - 1) / 2.0, (canvas_height - 1) / 2.0};
  const Point2 pre_center{(g.pre_width - 1) / 2.0, (g.pre_height - 1) / 2.0};
  const Point2 final_center{(recipe.final_size - 1) / 2.0, (recipe.final_size - 1) / 2.0};
  // The crop is horizontally centered on the canvas axis, which keeps the
  // whole pipeline mirror symmetric; vertically it sits a quarter IED below
  // the eye line.
  const double eye_line = (landmarks.left_eye.y + landmarks.right_eye.y) / 2.0;
  const Point2 face_center{canvas_center.x, eye_line + 0.25 * ied};

  g.pre = SimilarityTransform::about(canvas_center, pre_center, s_pre, theta);
  const Point2 final_pivot{final_center.x + s_final * (canvas_center.x - face_center.x),
                           final_center.y + s_final * (canvas_center.y - face_center.y)};
  g.post = SimilarityTransform::about(pre_center, final_pivot, s_final / s_pre, -theta);
  return g;
}

RecipeOutput apply_recipe(const ImageBuffer& aligned, const LandmarkSet& aligned_landmarks,
                          const DegradationRecipe& recipe, const EncoderBindings& bindings) {
  validate(aligned);
  const ImageBuffer* canvas = &aligned;
  ImageBuffer flipped;
  LandmarkSet lm = aligned_landmarks;
  if (recipe.flipped) {
    flipped = flip_horizontal(aligned);
    canvas = &flipped;
    lm = flip_landmarks(aligned_landmarks, aligned.width);
  }
  const RecipeGeometry g = recipe_geometry(canvas->width, canvas->height, lm, recipe);
  const ImageBuffer pre = warp_similarity(*canvas, g.pre, g.pre_width, g.pre_height);
  RecipeOutput out;
  out.reference = warp_similarity(pre, g.post, g.final_size, g.final_size);
  if (recipe.compression) {
    const EncodedImage encoded = encode(pre, *recipe.compression, bindings);
    const ImageBuffer decoded = decode(encoded.bytes);
    out.final_image = warp_similarity(decoded, g.post, g.final_size, g.final_size);
  } else {
    out.final_image = out.reference;
  }
  return out;
}

const std::vector<std::string>& manifest_columns() {
  static const std::vector<std::string> cols = {"sample_id", "source_id", "path",    "reference_path",
                                                "compressed", "codec",    "encoder", "quality",
                                                "ied",        "angle_deg", "flipped", "error"};
  return cols;
}

CsvTable manifest_table(const DatasetManifest& manifest) {
  CsvTable table;
  table.header = manifest_columns();
  for (const auto& r : manifest.records) {
    const auto& c = r.recipe.compression;
    table.rows.push_back({r.sample_id, r.source_id, r.output_path, r.reference_path,
                          bool_field(r.compressed()), c ? std::string(to_string(c->codec)) : "",
                          c ? std::string(to_string(c->encoder)) : "",
                          c ? std::to_string(c->quality) : "", std::to_string(r.recipe.target_ied),
                          std::to_string(r.recipe.rotation_angle_deg), bool_field(r.recipe.flipped),
                          r.error});
  }
  return table;
}

SampleRecord parse_manifest_row(const CsvTable& table, std::size_t row) {
  const auto& f = table.rows.at(row);
  auto get = [&](const char* name) -> const std::string& { return f[table.column(name)]; };
  SampleRecord r;
  r.sample_id = get("sample_id");
  r.source_id = get("source_id");
  r.output_path = get("path");
  r.reference_path = get("reference_path");
  r.error = get("error");
  r.recipe.target_ied = static_cast<int>(parse_int(get("ied")));
  r.recipe.rotation_angle_deg = static_cast<int>(parse_int(get("angle_deg")));
  r.recipe.flipped = parse_bool(get("flipped"));
  if (parse_bool(get("compressed"))) {
    r.recipe.compression = CompressionSpec{parse_codec(get("codec")), parse_encoder_id(get("encoder")),
                                           static_cast<int>(parse_int(get("quality")))};
  }
  return r;
}

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest) {
  KeyValues meta;
  meta["plan.kind"] = std::string(to_string(manifest.plan_kind));
  meta["plan.seed"] = std::to_string(manifest.master_seed);
  meta["codec.jpeg.backend"] = manifest.bindings.jpeg;
  meta["codec.jp2.backendA"] = manifest.bindings.jp2_a;
  meta["codec.jp2.backendB"] = manifest.bindings.jp2_b;
  meta["records"] = std::to_string(manifest.records.size());
  if (!manifest.records.empty()) {
    meta["plan.final_size"] = std::to_string(manifest.records.front().recipe.final_size);
    meta["plan.final_ied"] = std::to_string(manifest.records.front().recipe.final_ied);
  }
  write_key_values(dir / "manifest.meta", meta);
  write_csv(dir / "manifest.csv", manifest_table(manifest));
}

DatasetManifest read_manifest(const std::filesystem::path& csv_path) {
  DatasetManifest manifest;
  const CsvTable table = read_csv(csv_path);
  for (const auto& col : manifest_columns()) (void)table.column(col);
  const auto meta_path = csv_path.parent_path() / "manifest.meta";
  int final_size = 248;
  int final_ied = 124;
  if (std::filesystem::exists(meta_path)) {
    const KeyValues meta = read_key_values(meta_path);
    auto get = [&](const char* key) -> const std::string* {
      auto it = meta.find(key);
      return it == meta.end() ? nullptr : &it->second;
    };
    if (auto* v = get("plan.kind")) manifest.plan_kind = parse_plan_kind(*v);
    if (auto* v = get("plan.seed")) manifest.master_seed = static_cast<std::uint64_t>(parse_int(*v));
    if (auto* v = get("codec.jpeg.backend")) manifest.bindings.jpeg = *v;
    if (auto* v = get("codec.jp2.backendA")) manifest.bindings.jp2_a = *v;
    if (auto* v = get("codec.jp2.backendB")) manifest.bindings.jp2_b = *v;
    if (auto* v = get("plan.final_size")) final_size = static_cast<int>(parse_int(*v));
    if (auto* v = get("plan.final_ied")) final_ied = static_cast<int>(parse_int(*v));
  }
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    SampleRecord r = parse_manifest_row(table, i);
    r.recipe.final_size = final_size;
    r.recipe.final_ied = final_ied;
    manifest.records.push_back(std::move(r));
  }
  return manifest;
}

std::vector<SourceInput> sources_from_landmarks(const std::filesystem::path& landmark_csv) {
  const auto rows = read_landmark_csv(landmark_csv);
  const auto base = landmark_csv.parent_path();
  std::vector<SourceInput> out;
  std::set<std::string> seen;
  for (const auto& row : rows) {
    SourceInput s;
    const std::filesystem::path p(row.image_path);
    s.image_path = p.is_absolute() ? p : base / p;
    s.source_id = p.stem().string();
    s.landmarks = row.landmarks;
    if (!seen.insert(s.source_id).second) {
      throw Error(Errc::InvalidArgument, "duplicate source id '" + s.source_id + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

// Sample images are intermediates; fast deflate keeps synthesis I/O bound by
// the codecs rather than by zlib.
constexpr int kOutputPngLevel = 1;

struct StageKey {
  bool flipped;
  int ied;
  int angle;
  int final_size;
  int final_ied;
  auto operator<=>(const StageKey&) const = default;
};

StageKey key_of(const DegradationRecipe& r) {
  return {r.flipped, r.target_ied, r.rotation_angle_deg, r.final_size, r.final_ied};
}

std::string sample_id_for(const std::string& source_id, std::size_t index) {
  std::string idx = std::to_string(index);
  if (idx.size() < 3) idx.insert(0, 3 - idx.size(), '0');
  return source_id + "_" + idx;
}

std::vector<SampleRecord> synthesize_source(const SourceInput& source, const SourcePlan& plan,
                                            const std::filesystem::path& out_dir,
                                            const SynthesisOptions& options) {
  std::vector<SampleRecord> records(plan.recipes.size());
  std::map<StageKey, std::string> uncompressed_paths;
  for (std::size_t i = 0; i < plan.recipes.size(); ++i) {
    auto& r = records[i];
    r.sample_id = sample_id_for(plan.source_id, i);
    r.source_id = plan.source_id;
    r.recipe = plan.recipes[i];
    r.output_path = "images/" + r.sample_id + ".png";
    if (!r.compressed()) uncompressed_paths.emplace(key_of(r.recipe), r.output_path);
  }

  ImageBuffer aligned;
  LandmarkSet aligned_lm;
  try {
    validate(source.landmarks);
    const ImageBuffer img = read_image(source.image_path);
    const SimilarityTransform t = alignment_transform(source.landmarks, options.alignment);
    aligned = warp_similarity(img, t, options.alignment.canvas_width, options.alignment.canvas_height);
    aligned_lm = transform_landmarks(source.landmarks, t);
  } catch (const std::exception& e) {
    for (auto& r : records) {
      r.output_path.clear();
      r.error = e.what();
    }
    return records;
  }

  struct Stage {
    ImageBuffer pre;
    ImageBuffer reference;
    RecipeGeometry geometry;
    std::string reference_path;
  };
  std::map<StageKey, Stage> stages;
  ImageBuffer flipped_canvas;

  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    try {
      const StageKey key = key_of(r.recipe);
      auto it = stages.find(key);
      if (it == stages.end()) {
        const ImageBuffer* canvas = &aligned;
        LandmarkSet lm = aligned_lm;
        if (r.recipe.flipped) {
          if (flipped_canvas.empty()) flipped_canvas = flip_horizontal(aligned);
          canvas = &flipped_canvas;
          lm = flip_landmarks(aligned_lm, aligned.width);
        }
        Stage st;
        st.geometry = recipe_geometry(canvas->width, canvas->height, lm, r.recipe);
        st.pre = warp_similarity(*canvas, st.geometry.pre, st.geometry.pre_width, st.geometry.pre_height);
        st.reference = warp_similarity(st.pre, st.geometry.post, st.geometry.final_size,
                                       st.geometry.final_size);
        it = stages.emplace(key, std::move(st)).first;
      }
      Stage& st = it->second;
      if (!r.compressed()) {
        write_png(out_dir / r.output_path, st.reference, kOutputPngLevel);
        continue;
      }
      if (st.reference_path.empty()) {
        if (auto u = uncompressed_paths.find(key); u != uncompressed_paths.end()) {
          st.reference_path = u->second;
        } else {
          st.reference_path = "references/" + r.source_id + "_f" + std::to_string(key.flipped) + "_i" +
                              std::to_string(key.ied) + "_a" + std::to_string(key.angle) + ".png";
          write_png(out_dir / st.reference_path, st.reference, kOutputPngLevel);
        }
      }
      r.reference_path = st.reference_path;
      const EncodedImage encoded = encode(st.pre, *r.recipe.compression, options.bindings);
      const ImageBuffer decoded = decode(encoded.bytes);
      const ImageBuffer final_image =
          warp_similarity(decoded, st.geometry.post, st.geometry.final_size, st.geometry.final_size);
      write_png(out_dir / r.output_path, final_image, kOutputPngLevel);
    } catch (const std::exception& e) {
      r.output_path.clear();
      r.error = e.what();
    }
  }
  return records;
}

}  // namespace

DatasetManifest run_synthesis(std::span<const SourceInput> sources, std::span<const SourcePlan> plan,
                              const std::filesystem::path& out_dir, const SynthesisOptions& options) {
  if (sources.empty() || plan.empty()) throw Error(Errc::EmptySourceList, "nothing to synthesize");
  std::map<std::string_view, const SourceInput*> by_id;
  for (const auto& s : sources) by_id.emplace(s.source_id, &s);

  std::vector<const SourcePlan*> ordered;
  ordered.reserve(plan.size());
  for (const auto& p : plan) ordered.push_back(&p);
  std::sort(ordered.begin(), ordered.end(),
            [](const SourcePlan* a, const SourcePlan* b) { return a->source_id < b->source_id; });

  std::filesystem::create_directories(out_dir / "images");
  std::vector<std::vector<SampleRecord>> results(ordered.size());
  parallel_for(ordered.size(), options.workers, [&](std::size_t i) {
    const SourcePlan& p = *ordered[i];
    auto it = by_id.find(p.source_id);
    if (it == by_id.end()) {
      std::vector<SampleRecord> failed(p.recipes.size());
      for (std::size_t k = 0; k < failed.size(); ++k) {
        failed[k].sample_id = sample_id_for(p.source_id, k);
        failed[k].source_id = p.source_id;
        failed[k].recipe = p.recipes[k];
        failed[k].error = "no source image for id '" + p.source_id + "'";
      }
      results[i] = std::move(failed);
      return;
    }
    results[i] = synthesize_source(*it->second, p, out_dir, options);
  });

  DatasetManifest manifest;
  manifest.master_seed = options.seed;
  manifest.plan_kind = options.plan_kind;
  manifest.bindings = options.bindings;
  for (auto& r : results) {
    for (auto& rec : r) manifest.records.push_back(std::move(rec));
  }
  write_manifest(out_dir, manifest);
  return manifest;
}

}  // namespace fcqc
