#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "fcqc/codecs.hpp"
#include "fcqc/io.hpp"
#include "fcqc/metrics.hpp"
#include "fcqc/synth.hpp"
#include "fcqc/testing/face_generator.hpp"
#include "support/corpus.hpp"
#include "support/error_code.hpp"
#include "support/oracles.hpp"

using namespace fcqc;

namespace {

std::vector<std::string> source_ids(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("s" + std::to_string(1000 + i));
  return ids;
}

struct Aligned {
  ImageBuffer image;
  LandmarkSet landmarks;
};

Aligned aligned_face(std::uint64_t seed) {
  const auto face = fcqc::testing::generate_face(seed);
  const auto tpl = AlignmentTemplate::canonical();
  const auto t = alignment_transform(face.landmarks, tpl);
  return {warp_similarity(face.image, t, tpl.canvas_width, tpl.canvas_height), transform_landmarks(face.landmarks, t)};
}

CompressionGrid small_grid() {
  return {{{Codec::Jpeg, EncoderId::B, {20, 60, 100}},
           {Codec::Jpeg2000, EncoderId::A, {20, 60, 100}},
           {Codec::Jpeg2000, EncoderId::B, {31, 61, 99}}}};
}

}  // namespace

TEST(Synth, QualityRange) {
  EXPECT_EQ(quality_range(20, 100, 2).size(), 41U);
  EXPECT_EQ(quality_range(31, 99, 2).size(), 35U);
  EXPECT_EQ(quality_range(20, 100, 10), (std::vector<int>{20, 30, 40, 50, 60, 70, 80, 90, 100}));
}

TEST(Synth, DefaultTrainingPlanShape) {
  const auto ids = source_ids(25);
  const auto plan = plan_training(ids, 7);
  ASSERT_EQ(plan.size(), ids.size());
  const std::set<int> ieds = {60, 70, 80, 90, 100, 110, 120, 130, 140, 200};
  for (const auto& p : plan) {
    ASSERT_EQ(p.recipes.size(), 119U);
    int compressed = 0, flipped = 0;
    std::map<std::pair<Codec, EncoderId>, int> per_codec;
    for (const auto& r : p.recipes) {
      EXPECT_TRUE(ieds.contains(r.target_ied));
      EXPECT_EQ(r.target_ied, p.recipes.front().target_ied);
      EXPECT_EQ(r.rotation_angle_deg, p.recipes.front().rotation_angle_deg);
      EXPECT_LE(std::abs(r.rotation_angle_deg), 8);
      EXPECT_EQ(r.final_size, 248);
      EXPECT_EQ(r.final_ied, 124);
      if (r.compression) {
        ++compressed;
        EXPECT_FALSE(r.flipped);
        ++per_codec[{r.compression->codec, r.compression->encoder}];
      }
      flipped += r.flipped;
    }
    EXPECT_EQ(compressed, 117);
    EXPECT_EQ(flipped, 1);
    EXPECT_EQ((per_codec[{Codec::Jpeg, EncoderId::B}]), 41);
    EXPECT_EQ((per_codec[{Codec::Jpeg2000, EncoderId::A}]), 41);
    EXPECT_EQ((per_codec[{Codec::Jpeg2000, EncoderId::B}]), 35);
  }
}

TEST(Synth, TrainingPlanDeterministic) {
  const auto ids = source_ids(30);
  EXPECT_EQ(plan_training(ids, 9), plan_training(ids, 9));
  EXPECT_NE(plan_training(ids, 9), plan_training(ids, 10));
}

TEST(Synth, TrainingPlanDrawsIndependentOfSourceOrder) {
  auto ids = source_ids(12);
  const auto a = plan_training(ids, 4);
  std::reverse(ids.begin(), ids.end());
  auto b = plan_training(ids, 4);
  std::reverse(b.begin(), b.end());
  EXPECT_EQ(a, b);
}

TEST(Synth, JpegOnlyGrid) {
  TrainingPlanConfig cfg;
  cfg.grid = {{{Codec::Jpeg, EncoderId::B, quality_range(20, 100, 2)}}};
  for (const auto& p : plan_training(source_ids(3), 1, cfg)) {
    EXPECT_EQ(std::count_if(p.recipes.begin(), p.recipes.end(), [](auto& r) { return r.compression.has_value(); }),
              41);
  }
}

TEST(Synth, RotationProbabilityNearHalf) {
  const auto plan = plan_training(source_ids(2000), 5);
  int rotated = 0;
  for (const auto& p : plan) rotated += p.recipes.front().rotation_angle_deg != 0;
  // Angle 0 can also be drawn in the rotated branch: expected 0.5 * 16/17.
  EXPECT_NEAR(rotated / 2000.0, 0.5 * 16.0 / 17.0, 0.05);
}

TEST(Synth, EmptySourceList) {
  const std::vector<std::string> none;
  EXPECT_EQ(error_code([&] { (void)plan_training(none, 1); }), Errc::EmptySourceList);
  EXPECT_EQ(error_code([&] { (void)plan_test(none, TestProtocol::Rotated, 1); }), Errc::EmptySourceList);
}

TEST(Synth, TestPlanCounts) {
  const auto plan = plan_test(source_ids(400), TestProtocol::Rotated, 3);
  int unc = 0, jpeg = 0, jp2 = 0;
  for (const auto& p : plan) {
    ASSERT_EQ(p.recipes.size(), 6U);
    for (const auto& r : p.recipes) {
      EXPECT_LE(std::abs(r.rotation_angle_deg), 15);
      EXPECT_TRUE((std::set<int>{60, 90, 120, 140}).contains(r.target_ied));
      if (!r.compression) {
        ++unc;
        continue;
      }
      EXPECT_TRUE((std::set<int>{20, 30, 40, 50, 60, 70}).contains(r.compression->quality));
      if (r.compression->codec == Codec::Jpeg) {
        ++jpeg;
        EXPECT_EQ(r.compression->encoder, EncoderId::B);
      } else {
        ++jp2;
        EXPECT_EQ(r.compression->encoder, EncoderId::A);
      }
    }
  }
  EXPECT_EQ(unc, 800);
  EXPECT_EQ(jpeg, 800);
  EXPECT_EQ(jp2, 800);
}

TEST(Synth, UprightHasNoRotation) {
  for (const auto& p : plan_test(source_ids(200), TestProtocol::Upright, 3))
    for (const auto& r : p.recipes) EXPECT_EQ(r.rotation_angle_deg, 0);
  const auto rotated = plan_test(source_ids(200), TestProtocol::Rotated, 3);
  EXPECT_TRUE(std::any_of(rotated.begin(), rotated.end(),
                          [](const SourcePlan& p) { return p.recipes.front().rotation_angle_deg != 0; }));
  EXPECT_EQ(plan_test(source_ids(50), TestProtocol::Rotated, 8), plan_test(source_ids(50), TestProtocol::Rotated, 8));
}

TEST(Synth, DegenerateRecipeIsIdentityOnReference) {
  const auto a = aligned_face(1);
  DegradationRecipe r;
  r.target_ied = 260;
  const auto out = apply_recipe(a.image, a.landmarks, r);
  EXPECT_EQ(out.final_image, out.reference);
  EXPECT_EQ(out.final_image.width, 248);
  EXPECT_EQ(out.final_image.height, 248);
}

TEST(Synth, StrongerCompressionHurtsMore) {
  const auto a = aligned_face(2);
  DegradationRecipe r;
  r.target_ied = 60;
  r.rotation_angle_deg = 8;
  r.compression = CompressionSpec{Codec::Jpeg, EncoderId::B, 20};
  const auto q20 = apply_recipe(a.image, a.landmarks, r);
  r.compression->quality = 70;
  const auto q70 = apply_recipe(a.image, a.landmarks, r);
  EXPECT_EQ(q20.reference, q70.reference);
  EXPECT_LT(psnr(q20.reference, q20.final_image), psnr(q70.reference, q70.final_image));
}

// Mirroring the canvas also mirrors the rotation sense, so a flipped recipe
// at angle a is the mirror image of the plain recipe at -a.
TEST(Synth, FlipCommutesWithGeometry) {
  const auto a = aligned_face(3);
  for (int angle : {0, 5, -7}) {
    DegradationRecipe r;
    r.target_ied = 90;
    r.rotation_angle_deg = -angle;
    const auto plain = apply_recipe(a.image, a.landmarks, r);
    r.flipped = true;
    r.rotation_angle_deg = angle;
    const auto flipped = apply_recipe(a.image, a.landmarks, r);
    EXPECT_EQ(flipped.final_image, flip_horizontal(plain.final_image)) << angle;
  }
}

TEST(Synth, ReferenceMatchesUncompressedRecipe) {
  const auto a = aligned_face(4);
  DegradationRecipe r;
  r.target_ied = 140;
  r.rotation_angle_deg = -4;
  const auto unc = apply_recipe(a.image, a.landmarks, r);
  for (Codec c : {Codec::Jpeg, Codec::Jpeg2000}) {
    r.compression = CompressionSpec{c, EncoderId::A, 40};
    const auto out = apply_recipe(a.image, a.landmarks, r);
    EXPECT_EQ(out.reference, unc.final_image);
    EXPECT_EQ(out.final_image.width, 248);
    EXPECT_NE(out.final_image, out.reference);
  }
}

TEST(Synth, FinalCropPutsEyesAtFinalIed) {
  const auto target = AlignmentTemplate::canonical().target;
  DegradationRecipe r;
  r.target_ied = 100;
  r.rotation_angle_deg = 6;
  const auto g = recipe_geometry(520, 520, target, r);
  const auto lm = transform_landmarks(transform_landmarks(target, g.pre), g.post);
  EXPECT_NEAR(inter_eye_distance(lm), 124.0, 0.5);
  EXPECT_NEAR(lm.left_eye.y, lm.right_eye.y, 0.5);
  const double mid_x = (lm.left_eye.x + lm.right_eye.x) / 2;
  EXPECT_NEAR(mid_x, 123.5, 0.5);
  // Eye midpoint sits a quarter IED above the crop center.
  EXPECT_NEAR((lm.left_eye.y + lm.right_eye.y) / 2, 123.5 - 31.0, 0.5);
}

TEST(Synth, ManifestCsvRoundTrip) {
  const auto dir = oracle::temp_dir("manifest_rt");
  DatasetManifest m;
  m.master_seed = 42;
  m.plan_kind = PlanKind::TestRotated;
  SampleRecord a;
  a.sample_id = "x_000";
  a.source_id = "x";
  a.output_path = "images/x_000.png";
  a.recipe.target_ied = 90;
  a.recipe.flipped = true;
  SampleRecord b = a;
  b.sample_id = "x_001";
  b.output_path = "images/x_001.png";
  b.reference_path = "images/x_000.png";
  b.recipe.compression = CompressionSpec{Codec::Jpeg2000, EncoderId::A, 30};
  b.recipe.rotation_angle_deg = -12;
  b.error = "disk, \"full\"";
  m.records = {a, b};
  write_manifest(dir, m);
  const auto back = read_manifest(dir / "manifest.csv");
  EXPECT_EQ(back.records, m.records);
  EXPECT_EQ(back.master_seed, 42U);
  EXPECT_EQ(back.plan_kind, PlanKind::TestRotated);
  EXPECT_EQ(read_csv(dir / "manifest.csv").header, manifest_columns());
}

class SynthRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = oracle::temp_dir("synth_run");
    csv_ = oracle::write_face_corpus(root_ / "corpus", 10, 77);
  }
  static inline std::filesystem::path root_;
  static inline std::filesystem::path csv_;

  static DatasetManifest run(const std::string& name, int workers, const std::vector<SourceInput>& sources) {
    std::vector<std::string> ids;
    for (const auto& s : sources) ids.push_back(s.source_id);
    TrainingPlanConfig cfg;
    cfg.grid = small_grid();
    const auto plan = plan_training(ids, 5, cfg);
    SynthesisOptions opt;
    opt.seed = 5;
    opt.workers = workers;
    return run_synthesis(sources, plan, root_ / name, opt);
  }
};

TEST_F(SynthRun, RecordsAndDeterminismAcrossWorkers) {
  const auto sources = sources_from_landmarks(csv_);
  ASSERT_EQ(sources.size(), 10U);
  const auto one = run("w1", 1, sources);
  const auto four = run("w4", 4, sources);
  ASSERT_EQ(one.records.size(), 110U);
  EXPECT_EQ(read_text(root_ / "w1" / "manifest.csv"), read_text(root_ / "w4" / "manifest.csv"));
  EXPECT_TRUE(std::is_sorted(one.records.begin(), one.records.end(),
                             [](auto& a, auto& b) { return a.source_id < b.source_id; }));
  std::set<std::string> ids;
  for (const auto& r : one.records) {
    EXPECT_TRUE(ids.insert(r.sample_id).second);
    EXPECT_TRUE(r.error.empty()) << r.error;
    const auto img = read_image(root_ / "w1" / r.output_path);
    EXPECT_EQ(img.width, 248);
    EXPECT_EQ(img.height, 248);
    EXPECT_EQ(read_file(root_ / "w1" / r.output_path), read_file(root_ / "w4" / r.output_path));
    if (r.compressed()) {
      EXPECT_FALSE(r.reference_path.empty());
      // The reference is the same-geometry uncompressed sample of the source.
      const auto it = std::find_if(one.records.begin(), one.records.end(), [&](const SampleRecord& u) {
        return !u.compressed() && u.source_id == r.source_id && u.recipe.flipped == r.recipe.flipped;
      });
      ASSERT_NE(it, one.records.end());
      EXPECT_EQ(r.reference_path, it->output_path);
    } else {
      EXPECT_TRUE(r.reference_path.empty());
    }
  }
}

TEST_F(SynthRun, UnreadableSourceIsFlagged) {
  auto sources = sources_from_landmarks(csv_);
  sources[3].image_path = root_ / "corpus" / "missing.png";
  const auto m = run("broken", 1, sources);
  ASSERT_EQ(m.records.size(), 110U);
  int failed = 0;
  for (const auto& r : m.records) {
    if (r.source_id == sources[3].source_id) {
      EXPECT_FALSE(r.error.empty());
      ++failed;
    } else {
      EXPECT_TRUE(r.error.empty());
    }
  }
  EXPECT_EQ(failed, 11);
}

TEST_F(SynthRun, EmptyInput) {
  const std::vector<SourceInput> none;
  const std::vector<SourcePlan> plan;
  EXPECT_EQ(error_code([&] { (void)run_synthesis(none, plan, root_ / "empty", {}); }), Errc::EmptySourceList);
}
