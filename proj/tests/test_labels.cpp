#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "fcqc/codecs.hpp"
#include "fcqc/labels.hpp"
#include "support/error_code.hpp"
#include "support/oracles.hpp"

using namespace fcqc;

namespace {

// One source with a reference image and compressed stand-ins that differ from
// it by uniform shifts, so every PSNR is known in closed form.
struct Fixture {
  std::filesystem::path dir;
  DatasetManifest manifest;
};

Fixture make_fixture(const std::string& name, const std::vector<int>& shifts) {
  Fixture f{oracle::temp_dir(name), {}};
  std::mt19937_64 rng(5);
  ImageBuffer ref = oracle::random_image(rng, 24, 24);
  for (auto& v : ref.pixels) v = static_cast<std::uint8_t>(v / 2);
  std::filesystem::create_directories(f.dir / "images");
  write_png(f.dir / "images/ref.png", ref);
  SampleRecord u;
  u.sample_id = "src_000";
  u.source_id = "src";
  u.output_path = "images/ref.png";
  f.manifest.records.push_back(u);
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    ImageBuffer img = ref;
    for (auto& v : img.pixels) v = static_cast<std::uint8_t>(v + shifts[i]);
    SampleRecord r = u;
    r.sample_id = "src_" + std::to_string(100 + i);
    r.output_path = "images/" + r.sample_id + ".png";
    r.reference_path = "images/ref.png";
    r.recipe.compression = CompressionSpec{Codec::Jpeg, EncoderId::B, 20 + int(i)};
    write_png(f.dir / r.output_path, img);
    f.manifest.records.push_back(r);
  }
  return f;
}

}  // namespace

TEST(Labels, PsnrLabelsFollowPsnrOrder) {
  const std::vector<int> shifts = {7, 1, 30, 3, 12};
  const auto f = make_fixture("labels_psnr", shifts);
  const auto res = build_labels(f.manifest, f.dir, LabelKind::Psnr, 2);
  ASSERT_EQ(res.samples.size(), 6U);
  EXPECT_EQ(res.samples[0].label, 1.0);
  const double lo = 10 * std::log10(65025.0 / (30.0 * 30.0));
  const double hi = 10 * std::log10(65025.0 / 1.0);
  EXPECT_NEAR(res.config.psnr_min, lo, 1e-9);
  EXPECT_NEAR(res.config.psnr_max, hi, 1e-9);
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    const auto& s = res.samples[i + 1];
    const double p = 10 * std::log10(65025.0 / (shifts[i] * double(shifts[i])));
    EXPECT_NEAR(s.metric, p, 1e-9);
    EXPECT_NEAR(s.label, (p - lo) / (hi - lo), 1e-12);
    EXPECT_GE(s.label, 0.0);
    EXPECT_LE(s.label, 1.0);
  }
  // Largest shift maps to 0, smallest to 1.
  EXPECT_EQ(res.samples[3].label, 0.0);
  EXPECT_EQ(res.samples[2].label, 1.0);
}

TEST(Labels, SsimKind) {
  const auto f = make_fixture("labels_ssim", {2, 40});
  const auto res = build_labels(f.manifest, f.dir, LabelKind::Ssim);
  EXPECT_EQ(res.samples[0].label, 1.0);
  EXPECT_GT(res.samples[1].label, res.samples[2].label);
  for (const auto& s : res.samples) EXPECT_EQ(s.kind, LabelKind::Ssim);
  EXPECT_FALSE(res.config.to_key_values().contains("psnr_min"));
}

TEST(Labels, Deterministic) {
  const auto f = make_fixture("labels_det", {4, 9, 17});
  const auto a = build_labels(f.manifest, f.dir, LabelKind::Psnr, 1);
  const auto b = build_labels(f.manifest, f.dir, LabelKind::Psnr, 3);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(a.samples[i].label, b.samples[i].label);
}

TEST(Labels, Errors) {
  auto f = make_fixture("labels_err", {4});
  EXPECT_EQ(error_code([&] { (void)build_labels(f.manifest, f.dir, LabelKind::Psnr); }), Errc::DegenerateRange);

  auto g = make_fixture("labels_missing", {4, 8});
  g.manifest.records[1].reference_path = "images/nope.png";
  EXPECT_EQ(error_code([&] { (void)build_labels(g.manifest, g.dir, LabelKind::Psnr); }), Errc::MissingReference);
  g.manifest.records[1].reference_path.clear();
  EXPECT_EQ(error_code([&] { (void)build_labels(g.manifest, g.dir, LabelKind::Psnr); }), Errc::MissingReference);

  DatasetManifest empty;
  EXPECT_EQ(error_code([&] { (void)build_labels(empty, g.dir, LabelKind::Psnr); }), Errc::EmptyManifest);
}

TEST(Labels, FailedRecordsAreSkipped) {
  auto f = make_fixture("labels_skip", {4, 8, 16});
  f.manifest.records[2].error = "encoder crashed";
  const auto res = build_labels(f.manifest, f.dir, LabelKind::Psnr);
  EXPECT_EQ(res.samples.size(), 3U);
  EXPECT_TRUE(std::none_of(res.samples.begin(), res.samples.end(),
                           [&](auto& s) { return s.sample_id == f.manifest.records[2].sample_id; }));
}

TEST(Labels, LabeledManifestRoundTrip) {
  const auto f = make_fixture("labels_rt", {3, 6, 9});
  const auto res = build_labels(f.manifest, f.dir, LabelKind::Psnr);
  write_labeled_manifest(f.dir / "labels.csv", f.manifest, res);
  const auto back = read_labeled_manifest(f.dir / "labels.csv");
  ASSERT_EQ(back.size(), res.samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].record, f.manifest.records[i]);
    EXPECT_EQ(back[i].label, res.samples[i].label);
    EXPECT_EQ(back[i].kind, LabelKind::Psnr);
  }
  const auto meta = LabelingConfig::from_key_values(read_key_values(f.dir / "labels.meta"));
  EXPECT_EQ(meta.psnr_min, res.config.psnr_min);
  EXPECT_EQ(meta.psnr_max, res.config.psnr_max);
}
