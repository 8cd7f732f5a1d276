// Writes a procedural face corpus: PNG images plus a landmark CSV that
// `facecomp_qc synth --landmarks` accepts.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fcqc/codecs.hpp"
#include "fcqc/geometry.hpp"
#include "fcqc/parallel.hpp"
#include "fcqc/random.hpp"
#include "fcqc/testing/face_generator.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a procedural face corpus with five-point landmarks"};
  int count = 240;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string out_dir = "corpus";
  fcqc::testing::FaceGeneratorConfig config;
  app.add_option("-n,--count", count, "Number of images")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--size", config.width, "Image side length")->check(CLI::Range(128, 4096));
  CLI11_PARSE(app, argc, argv);
  config.height = config.width;
  config.min_ied = config.width * 0.33;
  config.max_ied = config.width * 0.49;

  try {
    const std::filesystem::path out(out_dir);
    std::filesystem::create_directories(out / "images");
    std::vector<fcqc::LandmarkRecord> rows(static_cast<std::size_t>(count));
    fcqc::parallel_for(rows.size(), workers, [&](std::size_t i) {
      char name[32];
      std::snprintf(name, sizeof name, "face%04zu", i);
      const auto face = fcqc::testing::generate_face(fcqc::splitmix64(seed) ^ fcqc::fnv1a(name), config);
      const std::string rel = std::string("images/") + name + ".png";
      fcqc::write_png(out / rel, face.image);
      rows[i] = {rel, face.landmarks};
    });
    fcqc::write_landmark_csv(out / "landmarks.csv", rows);
    std::printf("wrote %d images and %s\n", count, (out / "landmarks.csv").c_str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
