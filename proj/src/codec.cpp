#include <csetjmp>
#include <cstdio>
#include <cstring>

#include <jpeglib.h>
#include <png.h>

#include "mnv2/error.hpp"
#include "mnv2/image.hpp"
#include "mnv2/weights.hpp"

namespace mnv2 {
namespace {

enum class Format { png, jpeg, unknown };

Format sniff(std::span<const std::uint8_t> head) {
  static const std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (head.size() >= 8 && std::memcmp(head.data(), png_sig, 8) == 0) return Format::png;
  if (head.size() >= 3 && head[0] == 0xff && head[1] == 0xd8 && head[2] == 0xff) return Format::jpeg;
  return Format::unknown;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_on_error(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_silence(j_common_ptr, int) {}

// Decodes into `out` (sized by the callee). Returns false and fills `message`
// on failure. No objects with destructors live between setjmp and longjmp.
bool decode_jpeg(const std::vector<std::uint8_t>& bytes, bool header_only, ImageRGB8& out,
                 std::string& message) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_on_error;
  err.mgr.emit_message = jpeg_silence;
  if (setjmp(err.jump)) {
    message = err.message;
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  if (header_only) {
    jpeg_destroy_decompress(&cinfo);
    return true;
  }
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = cinfo.output_width;
  out.height = cinfo.output_height;
  out.pixels.resize(3 * out.width * out.height);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

ImageRGB8 decode_png(const std::vector<std::uint8_t>& bytes, const std::string& label) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError("cannot decode PNG " + label + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  ImageRGB8 out(image.width, image.height);
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode PNG " + label + ": " + msg);
  }
  return out;
}

} // namespace

ImageRGB8 decode_image(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  switch (sniff(bytes)) {
  case Format::png:
    return decode_png(bytes, path.string());
  case Format::jpeg: {
    ImageRGB8 out;
    std::string message;
    if (!decode_jpeg(bytes, false, out, message)) {
      throw FormatError("cannot decode JPEG " + path.string() + ": " + message);
    }
    return out;
  }
  case Format::unknown:
    break;
  }
  throw FormatError("unrecognized image format: " + path.string());
}

bool probe_image(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const Error&) {
    return false;
  }
  switch (sniff(bytes)) {
  case Format::png: {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    const bool ok = png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) != 0;
    png_image_free(&image);
    return ok && image.width > 0 && image.height > 0;
  }
  case Format::jpeg: {
    ImageRGB8 unused;
    std::string message;
    return decode_jpeg(bytes, true, unused, message);
  }
  case Format::unknown:
    break;
  }
  return false;
}

void write_png(const std::filesystem::path& path, const ImageRGB8& img) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw Error("cannot write PNG " + path.string() + ": " + image.message);
  }
}

void write_jpeg(const std::filesystem::path& path, const ImageRGB8& img, int quality) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error("cannot write " + path.string());
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, f);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPLE*>(img.pixels.data() + cinfo.next_scanline * img.width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(f);
}

} // namespace mnv2
