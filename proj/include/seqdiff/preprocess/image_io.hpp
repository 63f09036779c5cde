#pragma once

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

// jpeglib.h needs size_t and FILE declared first.
#include <jpeglib.h>

#include "seqdiff/preprocess/image.hpp"

namespace seqdiff {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline ImageF32 from_interleaved_rgb(const unsigned char* px, std::size_t h, std::size_t w) {
  ImageF32 img(3, h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = px[(y * w + x) * 3 + c] / 255.0f;
  return img;
}

inline ImageF32 read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ImageIoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw ImageIoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return from_interleaved_rgb(buf.data(), image.height, image.width);
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

inline ImageF32 read_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw ImageIoError("cannot open " + path.string());
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = [](j_common_ptr info) {
    std::longjmp(reinterpret_cast<JpegErrorManager*>(info->err)->jump, 1);
  };
  std::vector<unsigned char> buf;
  std::size_t h = 0, w = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw ImageIoError("cannot decode JPEG " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  h = cinfo.output_height;
  w = cinfo.output_width;
  buf.resize(h * w * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buf.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_interleaved_rgb(buf.data(), h, w);
}

}  // namespace detail

/// Decodes an 8-bit PNG or JPEG (sniffed by signature) to RGB in [0,1].
inline ImageF32 read_image(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ImageIoError("cannot open image " + path.string());
  unsigned char sig[8] = {};
  is.read(reinterpret_cast<char*>(sig), 8);
  is.close();
  if (png_sig_cmp(sig, 0, 8) == 0) return detail::read_png(path);
  if (sig[0] == 0xFF && sig[1] == 0xD8) return detail::read_jpeg(path);
  throw ImageIoError("unsupported image format: " + path.string());
}

inline std::vector<unsigned char> to_rgb8(const ImageF32& img) {
  if (img.channels != 3) throw ImageIoError("to_rgb8: expected 3 channels");
  std::vector<unsigned char> px(img.plane() * 3);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = clamp01(img.at(c, y, x));
        px[(y * img.width + x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  return px;
}

/// Rounds to the nearest 8-bit level, i.e. what a PNG round trip yields.
inline ImageF32 quantize8(const ImageF32& img) {
  const auto px = to_rgb8(img);
  return detail::from_interleaved_rgb(px.data(), img.height, img.width);
}

inline void write_png(const std::filesystem::path& path, const ImageF32& img) {
  const auto px = to_rgb8(img);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, px.data(), 0, nullptr)) {
    throw ImageIoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace seqdiff
