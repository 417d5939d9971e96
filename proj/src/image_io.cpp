// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#include "acnf/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include "acnf/codec.hpp"
#include "acnf/error.hpp"

namespace acnf {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open image file: " + path);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(f)),
                              std::istreambuf_iterator<char>());
}

Tensor from_rows8(const std::vector<std::vector<uint8_t>>& rows, int w, int c) {
  Tensor img(1, static_cast<int>(rows.size()), w, c);
  for (size_t y = 0; y < rows.size(); ++y)
    for (int x = 0; x < w * c; ++x)
      img.v[y * static_cast<size_t>(w) * c + x] = static_cast<float>(rows[y][x]) / 255.0f;
  return img;
}

struct PngReadCtx {
  const uint8_t* data;
  size_t size, pos;
};

void png_read_fn(png_structp png, png_bytep out, png_size_t len) {
  auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
  if (ctx->pos + len > ctx->size) png_error(png, "unexpected end of PNG data");
  std::memcpy(out, ctx->data + ctx->pos, len);
  ctx->pos += len;
}

Tensor load_png_bytes(const std::vector<uint8_t>& bytes, const std::string& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng init failed");
  }
  std::vector<std::vector<uint8_t>> rows;
  int w = 0, c = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("corrupt PNG: " + path);
  }
  PngReadCtx ctx{bytes.data(), bytes.size(), 0};
  png_set_read_fn(png, &ctx, png_read_fn);
  png_read_info(png, info);

  png_byte color = png_get_color_type(png, info);
  png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  w = static_cast<int>(png_get_image_width(png, info));
  int h = static_cast<int>(png_get_image_height(png, info));
  c = static_cast<int>(png_get_channels(png, info));
  if (c != 1 && c != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("unsupported PNG channel count in " + path);
  }
  rows.assign(h, std::vector<uint8_t>(static_cast<size_t>(w) * c));
  std::vector<png_bytep> ptrs(h);
  for (int y = 0; y < h; ++y) ptrs[y] = rows[y].data();
  png_read_image(png, ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_rows8(rows, w, c);
}

Tensor load_pnm_bytes(const std::vector<uint8_t>& bytes, const std::string& path) {
  // Binary P5/P6 with maxval 255 only.
  size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  std::string magic = token();
  int c = magic == "P5" ? 1 : magic == "P6" ? 3 : 0;
  if (c == 0) throw DataError("unsupported PNM type in " + path);
  int w = std::stoi(token()), h = std::stoi(token()), maxval = std::stoi(token());
  if (w <= 0 || h <= 0 || maxval != 255) throw DataError("unsupported PNM header in " + path);
  ++pos;  // single whitespace after maxval
  size_t need = static_cast<size_t>(w) * h * c;
  if (bytes.size() - pos < need) throw DataError("truncated PNM: " + path);
  Tensor img(1, h, w, c);
  for (size_t i = 0; i < need; ++i) img.v[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
  return img;
}

}  // namespace

Tensor load_image(const std::string& path) {
  std::vector<uint8_t> bytes = read_file(path);
  if (bytes.size() < 4) throw DataError("file too short to be an image: " + path);
  if (bytes[0] == 0x89 && bytes[1] == 'P') return load_png_bytes(bytes, path);
  if (bytes[0] == 0xFF && bytes[1] == 0xD8) {
    JpegCodec codec;
    return codec.decode_bytes(bytes);
  }
  if (bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) return load_pnm_bytes(bytes, path);
  throw DataError("unrecognized image format: " + path);
}

void save_png(const std::string& path, const Tensor& img) {
  if (img.n != 1 || (img.c != 1 && img.c != 3))
    throw ValueError("save_png: need (1,h,w,{1|3}) tensor, got " + img.shape_str());
  std::vector<uint8_t> bytes = to_bytes_8bit(img);
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw DataError("cannot write PNG: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw DataError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw DataError("PNG write failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
               img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> ptrs(img.h);
  for (int y = 0; y < img.h; ++y)
    ptrs[y] = bytes.data() + static_cast<size_t>(y) * img.w * img.c;
  png_write_image(png, ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

Tensor rgb_to_luma(const Tensor& img) {
  if (img.c == 1) return img;
  if (img.c != 3) throw ValueError("rgb_to_luma: need 1 or 3 channels, got " + img.shape_str());
  Tensor out(img.n, img.h, img.w, 1);
  for (size_t i = 0; i < out.v.size(); ++i) {
    const float* p = &img.v[i * 3];
    out.v[i] = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
  }
  return out;
}

}  // namespace acnf
