// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#include "acnf/codec.hpp"

#include <cstdio>
#include <csetjmp>
#include <cstdlib>
#include <cstring>

#include <jpeglib.h>

#include "acnf/error.hpp"

namespace acnf {

namespace {

#define ACNF_STR_(x) #x
#define ACNF_STR(x) ACNF_STR_(x)

// Escalates every libjpeg warning (truncated stream, bad markers, ...) to a
// hard error so corrupt inputs can never silently decode.
struct ErrMgr {
  jpeg_error_mgr pub;
  jmp_buf jmp;
  char message[JMSG_LENGTH_MAX];
};

void throw_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<ErrMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  longjmp(err->jmp, 1);
}

void strict_emit_message(j_common_ptr cinfo, int msg_level) {
  if (msg_level < 0) throw_error_exit(cinfo);
}

void setup_error_mgr(ErrMgr& err, j_common_ptr cinfo) {
  cinfo->err = jpeg_std_error(&err.pub);
  err.pub.error_exit = throw_error_exit;
  err.pub.emit_message = strict_emit_message;
  err.message[0] = '\0';
}

}  // namespace

std::string JpegCodec::identity() const {
#ifdef LIBJPEG_TURBO_VERSION
  return std::string("libjpeg-turbo ") + ACNF_STR(LIBJPEG_TURBO_VERSION) + " (libjpeg API " +
         std::to_string(JPEG_LIB_VERSION) + ")";
#else
  return std::string("libjpeg API ") + std::to_string(JPEG_LIB_VERSION);
#endif
}

EncodedArtifact JpegCodec::encode(const Tensor& image, int qf) const {
  if (qf < 1 || qf > 100)
    throw CodecError("quality factor " + std::to_string(qf) + " outside [1,100]");
  if (image.n != 1 || (image.c != 1 && image.c != 3))
    throw CodecError("encode: need (1,h,w,{1|3}) tensor, got " + image.shape_str());
  if (image.h < 8 || image.w < 8)
    throw CodecError("encode: dimensions " + image.shape_str() + " below 8x8 minimum");

  std::vector<uint8_t> bytes = to_bytes_8bit(image);  // 8-bit codec boundary

  jpeg_compress_struct cinfo;
  ErrMgr err;
  setup_error_mgr(err, reinterpret_cast<j_common_ptr>(&cinfo));
  unsigned char* buf = nullptr;
  unsigned long buf_size = 0;
  if (setjmp(err.jmp)) {
    jpeg_destroy_compress(&cinfo);
    if (buf) free(buf);
    throw CodecError(std::string("JPEG encode failed: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buf, &buf_size);
  cinfo.image_width = static_cast<JDIMENSION>(image.w);
  cinfo.image_height = static_cast<JDIMENSION>(image.h);
  cinfo.input_components = image.c;
  cinfo.in_color_space = image.c == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);  // baseline, 4:2:0 for color, fixed Huffman tables
  jpeg_set_quality(&cinfo, qf, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  size_t stride = static_cast<size_t>(image.w) * image.c;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = bytes.data() + cinfo.next_scanline * stride;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);

  EncodedArtifact a;
  a.payload.assign(buf, buf + buf_size);
  free(buf);
  a.bit_count = static_cast<int64_t>(a.payload.size()) * 8;
  a.qf = qf;
  a.width = image.w;
  a.height = image.h;
  a.channels = image.c;
  return a;
}

Tensor JpegCodec::decode_bytes(const std::vector<uint8_t>& payload) const {
  if (payload.size() < 4 || payload[0] != 0xFF || payload[1] != 0xD8)
    throw CodecError("decode: payload does not start with JPEG SOI");

  jpeg_decompress_struct cinfo;
  ErrMgr err;
  setup_error_mgr(err, reinterpret_cast<j_common_ptr>(&cinfo));
  if (setjmp(err.jmp)) {
    jpeg_destroy_decompress(&cinfo);
    throw CodecError(std::string("JPEG decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, payload.data(), static_cast<unsigned long>(payload.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.jpeg_color_space == JCS_GRAYSCALE ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  int w = static_cast<int>(cinfo.output_width);
  int h = static_cast<int>(cinfo.output_height);
  int c = cinfo.output_components;
  if (c != 1 && c != 3) {
    jpeg_destroy_decompress(&cinfo);
    throw CodecError("decode: unsupported component count " + std::to_string(c));
  }
  std::vector<uint8_t> bytes(static_cast<size_t>(h) * w * c);
  size_t stride = static_cast<size_t>(w) * c;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = bytes.data() + cinfo.output_scanline * stride;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_bytes_8bit<float>(bytes, h, w, c);
}

Tensor JpegCodec::decode(const EncodedArtifact& artifact) const {
  Tensor img = decode_bytes(artifact.payload);
  if (artifact.width > 0 && (img.w != artifact.width || img.h != artifact.height))
    throw CodecError("decode: stream dims disagree with artifact metadata");
  return img;
}

}  // namespace acnf
