#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "fcqc/codecs.hpp"
#include "fcqc/geometry.hpp"
#include "fcqc/parallel.hpp"
#include "fcqc/random.hpp"
#include "fcqc/testing/face_generator.hpp"

namespace oracle {

/// Writes `count` procedural faces to dir/images and their landmarks to
/// dir/landmarks.csv. Returns the CSV path.
inline std::filesystem::path write_face_corpus(const std::filesystem::path& dir, int count, std::uint64_t seed,
                                               int size = 256, int workers = 1) {
  fcqc::testing::FaceGeneratorConfig cfg;
  cfg.width = cfg.height = size;
  cfg.min_ied = 0.33 * size;
  cfg.max_ied = 0.49 * size;
  std::filesystem::create_directories(dir / "images");
  std::vector<fcqc::LandmarkRecord> rows(static_cast<std::size_t>(count));
  fcqc::parallel_for(rows.size(), workers, [&](std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof name, "face%04zu", i);
    const auto face = fcqc::testing::generate_face(fcqc::splitmix64(seed) ^ fcqc::fnv1a(name), cfg);
    const std::string rel = std::string("images/") + name + ".png";
    fcqc::write_png(dir / rel, face.image, 1);
    rows[i] = {rel, face.landmarks};
  });
  fcqc::write_landmark_csv(dir / "landmarks.csv", rows);
  return dir / "landmarks.csv";
}

}  // namespace oracle
