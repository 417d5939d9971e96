// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset ingestion, patch iteration, and the real-codec cache.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <set>

#include "acnf/data.hpp"
#include "acnf/image_io.hpp"
#include "acnf/synth.hpp"
#include "testsupport.hpp"

using namespace acnf;
using testsupport::TmpDir;

namespace {

// A small PNG corpus: indices 0..n-1, sizes hxw, one undersized straggler.
std::string write_corpus(const TmpDir& tmp, int n, int h, int w, int channels = 1) {
  std::string dir = tmp.sub("corpus");
  std::filesystem::create_directories(dir);
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%02d.png", i);
    save_png(dir + "/" + name, synthetic_image(static_cast<uint64_t>(i), h, w, channels));
  }
  save_png(dir + "/tiny.png", synthetic_image(99, 8, 8, channels));
  std::ofstream junk(dir + "/notes.txt");
  junk << "not an image\n";
  return dir;
}

}  // namespace

TEST_CASE("image io: png/pnm roundtrip and luma") {
  TmpDir tmp("imgio");
  Tensor gray = quantize_unit(synthetic_image(11, 24, 20, 1));
  Tensor rgb = quantize_unit(synthetic_image(12, 16, 16, 3));

  save_png(tmp.sub("g.png"), gray);
  Tensor g2 = load_image(tmp.sub("g.png"));
  REQUIRE(g2.same_shape(gray));
  CHECK(g2.v == gray.v);

  save_png(tmp.sub("c.png"), rgb);
  Tensor c2 = load_image(tmp.sub("c.png"));
  REQUIRE(c2.same_shape(rgb));
  CHECK(c2.v == rgb.v);

  // Binary PNM (P5 gray / P6 rgb).
  {
    std::ofstream f(tmp.sub("g.pgm"), std::ios::binary);
    f << "P5\n20 24\n255\n";
    auto bytes = to_bytes_8bit(gray);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  Tensor g3 = load_image(tmp.sub("g.pgm"));
  REQUIRE(g3.same_shape(gray));
  CHECK(g3.v == gray.v);

  Tensor y = rgb_to_luma(rgb);
  CHECK(y.c == 1);
  CHECK(y.at(0, 3, 3, 0) ==
        doctest::Approx(0.299f * rgb.at(0, 3, 3, 0) + 0.587f * rgb.at(0, 3, 3, 1) +
                        0.114f * rgb.at(0, 3, 3, 2))
            .epsilon(1e-6));

  CHECK_THROWS_AS(load_image(tmp.sub("missing.png")), DataError);
  {
    std::ofstream f(tmp.sub("junk.png"), std::ios::binary);
    f << "definitely not a png";
  }
  CHECK_THROWS_AS(load_image(tmp.sub("junk.png")), DataError);
}

TEST_CASE("ingest: split, grid alignment, determinism") {
  TmpDir tmp("ingest");
  std::string dir = write_corpus(tmp, 6, 72, 88);
  PatchStore store = ingest_dataset(dir, 32, 0.2, 7, 1);

  // tiny.png (8x8 < 32) and notes.txt are skipped.
  CHECK(store.images.size() == 6u);
  CHECK(store.patch_size == 32);

  // Image-level split: no image contributes to both sides.
  std::set<int> train_imgs, val_imgs;
  for (const auto& r : store.train) train_imgs.insert(r.image);
  for (const auto& r : store.val) val_imgs.insert(r.image);
  for (int i : val_imgs) CHECK(train_imgs.count(i) == 0);
  CHECK(val_imgs.size() == 1u);  // clamp(lround(0.2*6), 1, 5) = 1

  // Grid: 8-aligned, in-bounds, non-overlapping (stride = patch size).
  // 72x88 at 32 -> 2x2 grid per image.
  CHECK(store.train.size() + store.val.size() == 6u * 4u);
  for (const auto& r : store.train) {
    CHECK(r.y % 8 == 0);
    CHECK(r.x % 8 == 0);
    CHECK(r.y + 32 <= 72);
    CHECK(r.x + 32 <= 88);
    CHECK(r.y % 32 == 0);
    CHECK(r.x % 32 == 0);
  }

  PatchStore again = ingest_dataset(dir, 32, 0.2, 7, 1);
  CHECK(again.train.size() == store.train.size());
  for (size_t i = 0; i < store.train.size(); ++i) {
    CHECK(again.train[i].image == store.train[i].image);
    CHECK(again.train[i].y == store.train[i].y);
    CHECK(again.train[i].x == store.train[i].x);
  }
  PatchStore other = ingest_dataset(dir, 32, 0.2, 8, 1);
  bool differs = other.val != store.val || other.train != store.train;
  CHECK(differs);
}

TEST_CASE("ingest input validation") {
  TmpDir tmp("ingestbad");
  std::string empty = tmp.sub("empty");
  std::filesystem::create_directories(empty);
  CHECK_THROWS_AS(ingest_dataset(empty, 32, 0.05, 1, 1), DataError);
  CHECK_THROWS_AS(ingest_dataset(tmp.sub("missing"), 32, 0.05, 1, 1), DataError);
  std::string dir = write_corpus(tmp, 2, 64, 64);
  CHECK_THROWS_AS(ingest_dataset(dir, 20, 0.05, 1, 1), ConfigError);   // not /8
  CHECK_THROWS_AS(ingest_dataset(dir, 0, 0.05, 1, 1), ConfigError);
  CHECK_THROWS_AS(ingest_dataset(dir, 32, 1.5, 1, 1), ConfigError);
}

TEST_CASE("manifest save/load roundtrip") {
  TmpDir tmp("manifest");
  std::string dir = write_corpus(tmp, 3, 64, 64);
  PatchStore store = ingest_dataset(dir, 32, 0.34, 5, 1);
  std::string path = tmp.sub("patches.json");
  store.save_manifest(path);
  PatchStore back = PatchStore::load_manifest(path);
  CHECK(back.images == store.images);
  CHECK(back.patch_size == store.patch_size);
  CHECK(back.channels == store.channels);
  CHECK(back.train == store.train);
  CHECK(back.val == store.val);
  CHECK_THROWS_AS(PatchStore::load_manifest(tmp.sub("missing.json")), DataError);
}

TEST_CASE("patch loader slices images and converts channels") {
  TmpDir tmp("loader");
  std::string dir = write_corpus(tmp, 2, 64, 64, 3);

  // Luma conversion.
  PatchStore store = ingest_dataset(dir, 32, 0.5, 1, 1);
  PatchLoader data(store);
  const PatchRef& r = store.train.front();
  Tensor patch = data.patch(r);
  CHECK(patch.h == 32);
  CHECK(patch.c == 1);
  Tensor rgb = load_image(store.images[r.image].path);
  float y00 = 0.299f * rgb.at(0, r.y, r.x, 0) + 0.587f * rgb.at(0, r.y, r.x, 1) +
              0.114f * rgb.at(0, r.y, r.x, 2);
  CHECK(patch.at(0, 0, 0, 0) == doctest::Approx(y00).epsilon(1e-5));

  // RGB passthrough keeps pixel values.
  PatchStore store3 = ingest_dataset(dir, 32, 0.5, 1, 3);
  PatchLoader data3(store3);
  Tensor p3 = data3.patch(store3.train.front());
  CHECK(p3.c == 3);
}

TEST_CASE("cache_input quantizes to the codec grid") {
  TmpDir tmp("cinput");
  std::string dir = write_corpus(tmp, 1, 64, 64);
  PatchStore store = ingest_dataset(dir, 64, 0.5, 1, 1);
  REQUIRE(store.train.size() + store.val.size() == 1u);
  PatchRef ref = store.train.empty() ? store.val[0] : store.train[0];
  PatchLoader data(store);

  auto on_grid = [](float v) {
    return v == static_cast<float>(std::round(static_cast<double>(v) * 255.0) / 255.0);
  };
  Tensor plain = cache_input(data, ref, 1.0, CacheTransform::kNone);
  CHECK(plain.h == 64);
  for (float v : plain.v) CHECK(on_grid(v));

  Tensor down = cache_input(data, ref, 0.5, CacheTransform::kBicubicDown);
  CHECK(down.h == 32);
  CHECK(down.w == 32);
  for (float v : down.v) CHECK(on_grid(v));
}

TEST_CASE("codec cache: build, persist, verify, tamper detection") {
  TmpDir tmp("cache");
  std::string dir = write_corpus(tmp, 3, 64, 64);
  PatchStore store = ingest_dataset(dir, 32, 0.34, 3, 1);
  PatchLoader data(store);
  JpegCodec codec;

  CodecCache cache = build_codec_cache(data, store.train, codec, 10, 0.5,
                                       CacheTransform::kBicubicDown);
  CHECK(cache.entries.size() == store.train.size());
  CHECK(cache.qf == 10);
  CHECK(cache.scale == 0.5);
  CHECK(cache.codec_identity == codec.identity());
  for (const auto& e : cache.entries) {
    CHECK(e.decoded.h == 16);  // 32 * 0.5
    CHECK(e.bit_count > 0);
  }

  Rng rng(1);
  verify_codec_cache(data, cache, codec, 1.0, rng);  // full re-encode check

  std::string cdir = tmp.sub("cache_dir");
  cache.save(cdir);
  CodecCache back = CodecCache::load(cdir);
  CHECK(back.qf == cache.qf);
  CHECK(back.scale == cache.scale);
  CHECK(back.transform == cache.transform);
  REQUIRE(back.entries.size() == cache.entries.size());
  for (size_t i = 0; i < cache.entries.size(); ++i) {
    CHECK(back.entries[i].bit_count == cache.entries[i].bit_count);
    CHECK(back.entries[i].decoded.v == cache.entries[i].decoded.v);
    CHECK(back.entries[i].ref == cache.entries[i].ref);
  }

  // Tampered pixels must fail verification.
  CodecCache bad = back;
  bad.entries[0].decoded.v[0] += 1.0f / 255.0f;
  Rng rng2(1);
  CHECK_THROWS_AS(verify_codec_cache(data, bad, codec, 1.0, rng2), DataError);
  CodecCache bad2 = back;
  bad2.entries[0].bit_count += 8;
  Rng rng3(1);
  CHECK_THROWS_AS(verify_codec_cache(data, bad2, codec, 1.0, rng3), DataError);
  // Identity mismatch refuses outright.
  CodecCache alien = back;
  alien.codec_identity = "someone-else 0.0";
  Rng rng4(1);
  CHECK_THROWS_AS(verify_codec_cache(data, alien, codec, 0.1, rng4), DataError);
}

TEST_CASE("cache index survives reload with exact bytes") {
  TmpDir tmp("cachebytes");
  std::string dir = write_corpus(tmp, 1, 64, 64);
  PatchStore store = ingest_dataset(dir, 32, 0.5, 2, 1);
  PatchLoader data(store);
  JpegCodec codec;
  CodecCache cache = build_codec_cache(data, store.train, codec, 50, 1.0, CacheTransform::kNone);
  std::string cdir = tmp.sub("c");
  cache.save(cdir);
  cache.save(cdir);  // second save overwrites deterministically
  std::ifstream f(cdir + "/index.json");
  REQUIRE(f.good());
  CodecCache back = CodecCache::load(cdir);
  CHECK(back.entries.size() == cache.entries.size());
  CHECK_THROWS_AS(CodecCache::load(tmp.sub("missing")), DataError);
}
