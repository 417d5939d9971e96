// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0
//
// JPEG backend: determinism, golden-corpus pinning, error paths, and
// rate/quality sanity.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>

#include "json.hpp"

#include "acnf/codec.hpp"
#include "acnf/eval.hpp"
#include "acnf/hashutil.hpp"
#include "acnf/image_io.hpp"
#include "acnf/synth.hpp"
#include "testsupport.hpp"

using namespace acnf;

#ifndef ACNF_GOLDENS_DIR
#define ACNF_GOLDENS_DIR "goldens"
#endif

TEST_CASE("identity names the backend and its version") {
  JpegCodec codec;
  std::string id = codec.identity();
  CHECK(id.find("libjpeg") != std::string::npos);
  CHECK(codec.identity() == id);
}

TEST_CASE("encode is deterministic and fills artifact fields") {
  JpegCodec codec;
  Tensor img = synthetic_image(1, 48, 40, 1);
  EncodedArtifact a = codec.encode(img, 50);
  EncodedArtifact b = codec.encode(img, 50);
  CHECK(a.payload == b.payload);
  CHECK(a.qf == 50);
  CHECK(a.width == 40);
  CHECK(a.height == 48);
  CHECK(a.channels == 1);
  CHECK(a.bit_count == static_cast<int64_t>(a.payload.size()) * 8);
  CHECK(a.payload.size() >= 4u);
  CHECK(a.payload[0] == 0xFF);
  CHECK(a.payload[1] == 0xD8);
  CHECK(a.payload[a.payload.size() - 2] == 0xFF);
  CHECK(a.payload.back() == 0xD9);
}

TEST_CASE("decode matches decode_bytes and validates dimensions") {
  JpegCodec codec;
  Tensor img = synthetic_image(2, 32, 32, 3);
  EncodedArtifact a = codec.encode(img, 80);
  Tensor d1 = codec.decode(a);
  Tensor d2 = codec.decode_bytes(a.payload);
  REQUIRE(d1.same_shape(d2));
  CHECK(d1.v == d2.v);
  CHECK(d1.h == 32);
  CHECK(d1.c == 3);
  EncodedArtifact lying = a;
  lying.width = 16;
  CHECK_THROWS_AS(codec.decode(lying), CodecError);
}

TEST_CASE("error paths raise CodecError") {
  JpegCodec codec;
  Tensor img = synthetic_image(3, 32, 32, 1);
  CHECK_THROWS_AS(codec.encode(img, 0), CodecError);
  CHECK_THROWS_AS(codec.encode(img, 101), CodecError);
  CHECK_THROWS_AS(codec.encode(synthetic_image(3, 4, 32, 1), 50), CodecError);
  CHECK_THROWS_AS(codec.decode_bytes({0x00, 0x01, 0x02}), CodecError);
  EncodedArtifact a = codec.encode(img, 50);
  std::vector<uint8_t> truncated(a.payload.begin(), a.payload.begin() + a.payload.size() / 2);
  CHECK_THROWS_AS(codec.decode_bytes(truncated), CodecError);
  Tensor batch2(2, 32, 32, 1);
  CHECK_THROWS_AS(codec.encode(batch2, 50), CodecError);
  Tensor c2(1, 32, 32, 2);
  CHECK_THROWS_AS(codec.encode(c2, 50), CodecError);
}

TEST_CASE("quality ladder: higher qf, more bits, higher fidelity") {
  JpegCodec codec;
  Tensor img = synthetic_image(4, 64, 64, 1);
  EncodedArtifact lo = codec.encode(img, 10);
  EncodedArtifact hi = codec.encode(img, 95);
  CHECK(hi.payload.size() > lo.payload.size());
  double p_lo = psnr(img, codec.decode(lo));
  double p_hi = psnr(img, codec.decode(hi));
  CHECK(p_hi > p_lo);
  CHECK(p_hi > 35.0);
}

TEST_CASE("roundtrip convenience equals encode+decode") {
  JpegCodec codec;
  Tensor img = synthetic_image(5, 40, 48, 1);
  auto [decoded, bits] = codec.roundtrip(img, 30);
  EncodedArtifact again = codec.encode(img, 30);
  CHECK(bits == again.bit_count);
  Tensor direct = codec.decode(again);
  CHECK(decoded.v == direct.v);
}

TEST_CASE("golden corpus pins payload hashes and bit counts") {
  std::ifstream f(std::string(ACNF_GOLDENS_DIR) + "/manifest.json");
  REQUIRE_MESSAGE(f.good(), "golden manifest missing; run make_goldens");
  nlohmann::json manifest = nlohmann::json::parse(f);
  REQUIRE(manifest.at("format") == "acnf-goldens-v1");
  JpegCodec codec;
  REQUIRE_MESSAGE(manifest.at("codec_identity") == codec.identity(),
                  "goldens were produced by a different codec build");
  auto entries = manifest.at("entries");
  REQUIRE(entries.size() >= 20u);  // >= 5 inputs x 4 QFs
  for (const auto& e : entries) {
    Tensor input = load_image(std::string(ACNF_GOLDENS_DIR) + "/" + e.at("input").get<std::string>());
    EncodedArtifact a = codec.encode(input, e.at("qf").get<int>());
    CHECK(sha256_hex(a.payload) == e.at("payload_sha256").get<std::string>());
    CHECK(a.bit_count == e.at("bit_count").get<int64_t>());
    // The committed bitstream itself still decodes, and matches a fresh one.
    std::ifstream jf(std::string(ACNF_GOLDENS_DIR) + "/" + e.at("file").get<std::string>(),
                     std::ios::binary);
    REQUIRE(jf.good());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(jf)),
                               std::istreambuf_iterator<char>());
    CHECK(sha256_hex(bytes) == e.at("payload_sha256").get<std::string>());
    Tensor dec = codec.decode_bytes(bytes);
    CHECK(dec.same_shape(codec.decode(a)));
  }
}
