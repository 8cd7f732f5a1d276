#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fcqc/image.hpp"

namespace fcqc {

enum class Codec { Jpeg, Jpeg2000 };
enum class EncoderId { A, B };

std::string_view to_string(Codec codec) noexcept;
std::string_view to_string(EncoderId id) noexcept;
Codec parse_codec(std::string_view text);
EncoderId parse_encoder_id(std::string_view text);

struct CompressionSpec {
  Codec codec = Codec::Jpeg;
  EncoderId encoder = EncoderId::B;
  int quality = 75;

  friend bool operator==(const CompressionSpec&, const CompressionSpec&) = default;
};

struct EncodedImage {
  std::vector<std::uint8_t> bytes;
  CompressionSpec spec;

  [[nodiscard]] std::size_t byte_count() const noexcept { return bytes.size(); }
};

/// Named encoder configurations bound to the abstract encoder ids.
///
/// JPEG backend "libjpeg": encoder A writes progressive scans with optimized
/// Huffman tables, encoder B writes baseline; both use the libjpeg quality
/// scale with 4:2:0 chroma subsampling.
///
/// JPEG 2000 backends, selectable for either id:
///   "openjpeg-rate" - quality q targets a compression ratio of 100/q;
///   "openjpeg-psnr" - quality q is the fixed-quality distortion target in dB.
struct EncoderBindings {
  std::string jpeg = "libjpeg";
  std::string jp2_a = "openjpeg-rate";
  std::string jp2_b = "openjpeg-psnr";

  friend bool operator==(const EncoderBindings&, const EncoderBindings&) = default;
};

/// True when the named backend exists in this build.
bool backend_available(Codec codec, std::string_view backend) noexcept;

enum class StreamFormat { Png, Jpeg, Jp2, J2k, Unknown };

StreamFormat sniff_format(std::span<const std::uint8_t> bytes) noexcept;

/// Decodes PNG, JPEG, JP2 or raw J2K codestreams to 8-bit RGB.
/// Grayscale input is replicated to three channels. Truncated or corrupt
/// streams raise MalformedStream.
ImageBuffer decode(std::span<const std::uint8_t> bytes);

EncodedImage encode(const ImageBuffer& img, const CompressionSpec& spec,
                    const EncoderBindings& bindings = {});

/// PNG with the given zlib level (0-9).
std::vector<std::uint8_t> encode_lossless(const ImageBuffer& img, int compression_level = 6);

struct CompressionRatio {
  double ratio = 0.0;
  int baseline_score = 1;
};

/// File size relative to the raw raster size, plus the linear clamped 1..100 score.
CompressionRatio compression_ratio(long long byte_count, int width, int height, int channels,
                                   int bit_depth);

/// round(100 * min(1, ratio)), clamped to [1, 100].
int baseline_score_from_ratio(double ratio) noexcept;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

ImageBuffer read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageBuffer& img, int compression_level = 6);

}  // namespace fcqc
