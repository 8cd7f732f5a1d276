#include "fcqc/codecs.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include <jpeglib.h>
#include <openjpeg.h>
#include <png.h>

#include "fcqc/errors.hpp"

namespace fcqc {

std::string_view to_string(Codec codec) noexcept {
  return codec == Codec::Jpeg ? "JPEG" : "JPEG2000";
}

std::string_view to_string(EncoderId id) noexcept { return id == EncoderId::A ? "A" : "B"; }

Codec parse_codec(std::string_view text) {
  if (text == "JPEG" || text == "jpeg" || text == "jpg") return Codec::Jpeg;
  if (text == "JPEG2000" || text == "jpeg2000" || text == "jp2" || text == "JPEG 2000") {
    return Codec::Jpeg2000;
  }
  throw Error(Errc::InvalidArgument, "unknown codec '" + std::string(text) + "'");
}

EncoderId parse_encoder_id(std::string_view text) {
  if (text == "A" || text == "a") return EncoderId::A;
  if (text == "B" || text == "b") return EncoderId::B;
  throw Error(Errc::InvalidArgument, "unknown encoder id '" + std::string(text) + "'");
}

namespace {

constexpr std::string_view kLibjpeg = "libjpeg";
constexpr std::string_view kOpjRate = "openjpeg-rate";
constexpr std::string_view kOpjPsnr = "openjpeg-psnr";

// ---------------------------------------------------------------- PNG

ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(Errc::MalformedStream, "png: " + msg);
  }
  image.format = PNG_FORMAT_RGB;
  ImageBuffer out(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(Errc::MalformedStream, "png: " + msg);
  }
  return out;
}

// ---------------------------------------------------------------- JPEG

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  int warnings = 0;
  char message[JMSG_LENGTH_MAX] = {};
};

extern "C" void jpeg_error_exit_cb(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

extern "C" void jpeg_emit_message_cb(j_common_ptr cinfo, int level) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  if (level < 0) {
    // Corrupt data or premature end of stream. libjpeg recovers silently,
    // which would hide truncation, so remember it.
    if (err->warnings == 0) (*cinfo->err->format_message)(cinfo, err->message);
    ++err->warnings;
  }
}

ImageBuffer decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit_cb;
  err.pub.emit_message = jpeg_emit_message_cb;

  std::vector<std::uint8_t> raw;
  int width = 0;
  int height = 0;
  int comps = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(Errc::MalformedStream, std::string("jpeg: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, const_cast<unsigned char*>(bytes.data()),
               static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.jpeg_color_space == JCS_CMYK || cinfo.jpeg_color_space == JCS_YCCK) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(Errc::UnsupportedFormat, "jpeg: CMYK streams are not supported");
  }
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  cinfo.dct_method = JDCT_ISLOW;
  jpeg_start_decompress(&cinfo);
  width = static_cast<int>(cinfo.output_width);
  height = static_cast<int>(cinfo.output_height);
  comps = cinfo.output_components;
  raw.resize(static_cast<std::size_t>(width) * height * comps);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = raw.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * comps;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);

  if (err.warnings > 0) {
    throw Error(Errc::MalformedStream, std::string("jpeg: ") + err.message);
  }
  ImageBuffer out(width, height);
  if (comps == 3) {
    out.pixels = std::move(raw);
  } else {
    for (std::size_t i = 0; i < raw.size(); ++i) {
      out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = raw[i];
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_jpeg(const ImageBuffer& img, int quality, bool progressive) {
  jpeg_compress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit_cb;
  err.pub.emit_message = jpeg_emit_message_cb;

  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    throw Error(Errc::MalformedStream, std::string("jpeg encode: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  cinfo.dct_method = JDCT_ISLOW;
  // 4:2:0
  cinfo.comp_info[0].h_samp_factor = 2;
  cinfo.comp_info[0].v_samp_factor = 2;
  cinfo.comp_info[1].h_samp_factor = cinfo.comp_info[1].v_samp_factor = 1;
  cinfo.comp_info[2].h_samp_factor = cinfo.comp_info[2].v_samp_factor = 1;
  cinfo.optimize_coding = progressive ? TRUE : FALSE;
  if (progressive) jpeg_simple_progression(&cinfo);
  jpeg_start_compress(&cinfo, TRUE);
  const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(img.pixels.data() + cinfo.next_scanline * stride);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> out(buffer, buffer + size);
  jpeg_destroy_compress(&cinfo);
  std::free(buffer);
  return out;
}

// ---------------------------------------------------------------- JPEG 2000

struct MemoryStream {
  std::vector<std::uint8_t>* sink = nullptr;    // encoding
  std::span<const std::uint8_t> source;         // decoding
  std::size_t pos = 0;
};

extern "C" OPJ_SIZE_T opj_mem_read(void* buffer, OPJ_SIZE_T n, void* user) {
  auto* s = static_cast<MemoryStream*>(user);
  if (s->pos >= s->source.size()) return static_cast<OPJ_SIZE_T>(-1);
  const std::size_t count = std::min<std::size_t>(n, s->source.size() - s->pos);
  std::memcpy(buffer, s->source.data() + s->pos, count);
  s->pos += count;
  return count;
}

extern "C" OPJ_SIZE_T opj_mem_write(void* buffer, OPJ_SIZE_T n, void* user) {
  auto* s = static_cast<MemoryStream*>(user);
  auto& sink = *s->sink;
  if (s->pos + n > sink.size()) sink.resize(s->pos + n);
  std::memcpy(sink.data() + s->pos, buffer, n);
  s->pos += n;
  return n;
}

extern "C" OPJ_OFF_T opj_mem_skip(OPJ_OFF_T n, void* user) {
  auto* s = static_cast<MemoryStream*>(user);
  const auto limit = s->sink ? static_cast<OPJ_OFF_T>(1) << 40
                             : static_cast<OPJ_OFF_T>(s->source.size());
  const OPJ_OFF_T target = std::clamp<OPJ_OFF_T>(static_cast<OPJ_OFF_T>(s->pos) + n, 0, limit);
  const OPJ_OFF_T moved = target - static_cast<OPJ_OFF_T>(s->pos);
  s->pos = static_cast<std::size_t>(target);
  if (s->sink && s->pos > s->sink->size()) s->sink->resize(s->pos);
  return moved;
}

extern "C" OPJ_BOOL opj_mem_seek(OPJ_OFF_T n, void* user) {
  auto* s = static_cast<MemoryStream*>(user);
  if (n < 0) return OPJ_FALSE;
  if (!s->sink && static_cast<std::size_t>(n) > s->source.size()) return OPJ_FALSE;
  s->pos = static_cast<std::size_t>(n);
  if (s->sink && s->pos > s->sink->size()) s->sink->resize(s->pos);
  return OPJ_TRUE;
}

struct OpjMessages {
  std::string error;
};

extern "C" void opj_error_cb(const char* msg, void* user) {
  auto* m = static_cast<OpjMessages*>(user);
  if (m->error.empty()) {
    m->error = msg;
    while (!m->error.empty() && (m->error.back() == '\n' || m->error.back() == ' ')) {
      m->error.pop_back();
    }
  }
}

extern "C" void opj_quiet_cb(const char*, void*) {}

struct OpjCodecDeleter {
  void operator()(opj_codec_t* c) const { opj_destroy_codec(c); }
};
struct OpjStreamDeleter {
  void operator()(opj_stream_t* s) const { opj_stream_destroy(s); }
};
struct OpjImageDeleter {
  void operator()(opj_image_t* i) const { opj_image_destroy(i); }
};
using OpjCodec = std::unique_ptr<opj_codec_t, OpjCodecDeleter>;
using OpjStream = std::unique_ptr<opj_stream_t, OpjStreamDeleter>;
using OpjImage = std::unique_ptr<opj_image_t, OpjImageDeleter>;

void install_handlers(opj_codec_t* codec, OpjMessages* messages) {
  opj_set_error_handler(codec, opj_error_cb, messages);
  opj_set_warning_handler(codec, opj_quiet_cb, nullptr);
  opj_set_info_handler(codec, opj_quiet_cb, nullptr);
}

std::uint8_t component_sample(const opj_image_comp_t& comp, int x, int y) {
  const int cx = std::min<int>(static_cast<int>(comp.w) - 1, x / static_cast<int>(comp.dx));
  const int cy = std::min<int>(static_cast<int>(comp.h) - 1, y / static_cast<int>(comp.dy));
  int v = comp.data[static_cast<std::size_t>(cy) * comp.w + cx];
  if (comp.sgnd) v += 1 << (comp.prec - 1);
  if (comp.prec > 8) {
    v >>= (comp.prec - 8);
  } else if (comp.prec < 8) {
    v = (v * 255) / ((1 << comp.prec) - 1);
  }
  return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
}

ImageBuffer decode_jpeg2000(std::span<const std::uint8_t> bytes, bool jp2_container) {
  OpjMessages messages;
  OpjCodec codec(opj_create_decompress(jp2_container ? OPJ_CODEC_JP2 : OPJ_CODEC_J2K));
  install_handlers(codec.get(), &messages);
  opj_dparameters_t params;
  opj_set_default_decoder_parameters(&params);
  if (!opj_setup_decoder(codec.get(), &params)) {
    throw Error(Errc::MalformedStream, "jpeg2000: decoder setup failed");
  }
  MemoryStream mem;
  mem.source = bytes;
  OpjStream stream(opj_stream_create(OPJ_J2K_STREAM_CHUNK_SIZE, OPJ_TRUE));
  opj_stream_set_user_data(stream.get(), &mem, nullptr);
  opj_stream_set_user_data_length(stream.get(), bytes.size());
  opj_stream_set_read_function(stream.get(), opj_mem_read);
  opj_stream_set_skip_function(stream.get(), opj_mem_skip);
  opj_stream_set_seek_function(stream.get(), opj_mem_seek);

  opj_image_t* raw_image = nullptr;
  if (!opj_read_header(stream.get(), codec.get(), &raw_image)) {
    opj_image_destroy(raw_image);
    throw Error(Errc::MalformedStream, "jpeg2000: " + messages.error);
  }
  OpjImage image(raw_image);
  if (!opj_decode(codec.get(), stream.get(), image.get()) ||
      !opj_end_decompress(codec.get(), stream.get()) || !messages.error.empty()) {
    throw Error(Errc::MalformedStream,
                "jpeg2000: " + (messages.error.empty() ? std::string("decode failed") : messages.error));
  }
  const int ncomps = static_cast<int>(image->numcomps);
  if (ncomps != 1 && ncomps != 3 && ncomps != 4) {
    throw Error(Errc::UnsupportedFormat,
                "jpeg2000: unsupported component count " + std::to_string(ncomps));
  }
  const int width = static_cast<int>(image->x1 - image->x0);
  const int height = static_cast<int>(image->y1 - image->y0);
  for (int c = 0; c < ncomps; ++c) {
    if (image->comps[c].data == nullptr) {
      throw Error(Errc::MalformedStream, "jpeg2000: missing component data");
    }
  }
  ImageBuffer out(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(x, y, c) = component_sample(image->comps[ncomps == 1 ? 0 : c], x, y);
      }
    }
  }
  return out;
}

enum class Jp2RateMode { Ratio, Psnr };

std::vector<std::uint8_t> encode_jpeg2000(const ImageBuffer& img, int quality, Jp2RateMode mode) {
  opj_image_cmptparm_t comp_params[3];
  std::memset(comp_params, 0, sizeof(comp_params));
  for (auto& p : comp_params) {
    p.dx = p.dy = 1;
    p.w = static_cast<OPJ_UINT32>(img.width);
    p.h = static_cast<OPJ_UINT32>(img.height);
    p.prec = 8;
    p.sgnd = 0;
  }
  OpjImage image(opj_image_create(3, comp_params, OPJ_CLRSPC_SRGB));
  if (!image) throw Error(Errc::EncoderUnavailable, "jpeg2000: image allocation failed");
  image->x0 = image->y0 = 0;
  image->x1 = static_cast<OPJ_UINT32>(img.width);
  image->y1 = static_cast<OPJ_UINT32>(img.height);
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) image->comps[c].data[i] = img.pixels[3 * i + c];
  }

  opj_cparameters_t params;
  opj_set_default_encoder_parameters(&params);
  params.tcp_numlayers = 1;
  params.irreversible = 1;
  params.tcp_mct = 1;
  int resolutions = 1;
  while (resolutions < 6 && (std::min(img.width, img.height) >> resolutions) >= 1) ++resolutions;
  params.numresolution = resolutions;
  if (mode == Jp2RateMode::Ratio) {
    params.cp_disto_alloc = 1;
    params.tcp_rates[0] = 100.0f / static_cast<float>(quality);
  } else {
    params.cp_fixed_quality = 1;
    params.tcp_distoratio[0] = static_cast<float>(quality);
  }

  OpjMessages messages;
  OpjCodec codec(opj_create_compress(OPJ_CODEC_JP2));
  install_handlers(codec.get(), &messages);
  if (!opj_setup_encoder(codec.get(), &params, image.get())) {
    throw Error(Errc::EncoderUnavailable, "jpeg2000: encoder setup failed: " + messages.error);
  }
  std::vector<std::uint8_t> out;
  MemoryStream mem;
  mem.sink = &out;
  OpjStream stream(opj_stream_create(OPJ_J2K_STREAM_CHUNK_SIZE, OPJ_FALSE));
  opj_stream_set_user_data(stream.get(), &mem, nullptr);
  opj_stream_set_write_function(stream.get(), opj_mem_write);
  opj_stream_set_skip_function(stream.get(), opj_mem_skip);
  opj_stream_set_seek_function(stream.get(), opj_mem_seek);
  if (!opj_start_compress(codec.get(), image.get(), stream.get()) ||
      !opj_encode(codec.get(), stream.get()) || !opj_end_compress(codec.get(), stream.get())) {
    throw Error(Errc::EncoderUnavailable, "jpeg2000: encoding failed: " + messages.error);
  }
  stream.reset();
  return out;
}

}  // namespace

bool backend_available(Codec codec, std::string_view backend) noexcept {
  if (codec == Codec::Jpeg) return backend == kLibjpeg;
  return backend == kOpjRate || backend == kOpjPsnr;
}

StreamFormat sniff_format(std::span<const std::uint8_t> b) noexcept {
  static constexpr std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  static constexpr std::uint8_t jp2_sig[12] = {0x00, 0x00, 0x00, 0x0C, 'j',  'P',
                                               ' ',  ' ',  0x0D, 0x0A, 0x87, 0x0A};
  if (b.size() >= 8 && std::equal(png_sig, png_sig + 8, b.begin())) return StreamFormat::Png;
  if (b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF) return StreamFormat::Jpeg;
  if (b.size() >= 12 && std::equal(jp2_sig, jp2_sig + 12, b.begin())) return StreamFormat::Jp2;
  if (b.size() >= 4 && b[0] == 0xFF && b[1] == 0x4F && b[2] == 0xFF && b[3] == 0x51) {
    return StreamFormat::J2k;
  }
  return StreamFormat::Unknown;
}

ImageBuffer decode(std::span<const std::uint8_t> bytes) {
  switch (sniff_format(bytes)) {
    case StreamFormat::Png: return decode_png(bytes);
    case StreamFormat::Jpeg: return decode_jpeg(bytes);
    case StreamFormat::Jp2: return decode_jpeg2000(bytes, true);
    case StreamFormat::J2k: return decode_jpeg2000(bytes, false);
    case StreamFormat::Unknown: break;
  }
  if (bytes.empty()) throw Error(Errc::MalformedStream, "empty stream");
  throw Error(Errc::UnsupportedFormat, "stream is not PNG, JPEG or JPEG 2000");
}

EncodedImage encode(const ImageBuffer& img, const CompressionSpec& spec,
                    const EncoderBindings& bindings) {
  validate(img);
  if (spec.quality < 1 || spec.quality > 100) {
    throw Error(Errc::InvalidQuality, "quality must be in [1,100], got " + std::to_string(spec.quality));
  }
  EncodedImage out;
  out.spec = spec;
  if (spec.codec == Codec::Jpeg) {
    if (bindings.jpeg != kLibjpeg) {
      throw Error(Errc::EncoderUnavailable, "JPEG backend '" + bindings.jpeg + "' is not installed");
    }
    out.bytes = encode_jpeg(img, spec.quality, spec.encoder == EncoderId::A);
  } else {
    const std::string& backend = spec.encoder == EncoderId::A ? bindings.jp2_a : bindings.jp2_b;
    if (backend == kOpjRate) {
      out.bytes = encode_jpeg2000(img, spec.quality, Jp2RateMode::Ratio);
    } else if (backend == kOpjPsnr) {
      out.bytes = encode_jpeg2000(img, spec.quality, Jp2RateMode::Psnr);
    } else {
      throw Error(Errc::EncoderUnavailable, "JPEG 2000 backend '" + backend + "' for encoder " +
                                                std::string(to_string(spec.encoder)) +
                                                " is not installed");
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_lossless(const ImageBuffer& img, int compression_level) {
  validate(img);
  if (compression_level < 0 || compression_level > 9) {
    throw Error(Errc::InvalidArgument, "PNG compression level must be in [0, 9]");
  }
  struct Sink {
    std::vector<std::uint8_t> bytes;
    std::string error;
  } sink;
  png_structp png = png_create_write_struct(
      PNG_LIBPNG_VER_STRING, &sink,
      [](png_structp p, png_const_charp msg) {
        static_cast<Sink*>(png_get_error_ptr(p))->error = msg;
        png_longjmp(p, 1);
      },
      [](png_structp, png_const_charp) {});
  if (!png) throw Error(Errc::Io, "png: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(Errc::Io, "png: " + sink.error);
  }
  png_set_write_fn(
      png, &sink,
      [](png_structp p, png_bytep data, png_size_t n) {
        auto* out = static_cast<Sink*>(png_get_io_ptr(p));
        out->bytes.insert(out->bytes.end(), data, data + n);
      },
      nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, compression_level);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, img.pixels.data() + static_cast<std::size_t>(y) * stride);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return std::move(sink.bytes);
}

int baseline_score_from_ratio(double ratio) noexcept {
  const double score = std::round(100.0 * std::min(1.0, ratio));
  return static_cast<int>(std::clamp(score, 1.0, 100.0));
}

CompressionRatio compression_ratio(long long byte_count, int width, int height, int channels,
                                   int bit_depth) {
  if (byte_count <= 0 || width <= 0 || height <= 0 || channels <= 0 || bit_depth <= 0) {
    throw Error(Errc::InvalidDimensions, "compression_ratio arguments must all be positive");
  }
  const double raw_bytes = static_cast<double>(width) * height * channels * bit_depth / 8.0;
  CompressionRatio r;
  r.ratio = static_cast<double>(byte_count) / raw_bytes;
  r.baseline_score = baseline_score_from_ratio(r.ratio);
  return r;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "short write to " + path.string());
}

ImageBuffer read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode(bytes);
}

void write_png(const std::filesystem::path& path, const ImageBuffer& img, int compression_level) {
  write_file(path, encode_lossless(img, compression_level));
}

}  // namespace fcqc
