// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#include "acnf/data.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"

#include "acnf/error.hpp"
#include "acnf/hashutil.hpp"
#include "acnf/image_io.hpp"
#include "acnf/resize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace acnf {

std::string to_string(CacheTransform t) {
  return t == CacheTransform::kNone ? "none" : "bicubic_down";
}

CacheTransform cache_transform_from_string(const std::string& s) {
  if (s == "none") return CacheTransform::kNone;
  if (s == "bicubic_down") return CacheTransform::kBicubicDown;
  throw ConfigError("unknown cache transform '" + s + "'");
}

void PatchStore::save_manifest(const std::string& path) const {
  ordered_json j;
  j["format"] = "acnf-patchstore-v1";
  j["patch_size"] = patch_size;
  j["seed"] = seed;
  j["channels"] = channels;
  auto imgs = ordered_json::array();
  for (const auto& e : images) {
    ordered_json ij;
    ij["path"] = e.path;
    ij["sha256"] = e.sha256;
    ij["width"] = e.width;
    ij["height"] = e.height;
    ij["split"] = e.split;
    imgs.push_back(ij);
  }
  j["images"] = imgs;
  auto dump_refs = [](const std::vector<PatchRef>& refs) {
    auto arr = ordered_json::array();
    for (const auto& r : refs) arr.push_back({r.image, r.y, r.x});
    return arr;
  };
  j["train"] = dump_refs(train);
  j["val"] = dump_refs(val);
  std::ofstream f(path);
  if (!f) throw DataError("cannot write patch manifest: " + path);
  f << j.dump(2) << "\n";
}

PatchStore PatchStore::load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read patch manifest: " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const std::exception& e) {
    throw DataError("bad patch manifest " + path + ": " + e.what());
  }
  if (j.value("format", "") != "acnf-patchstore-v1")
    throw DataError("unsupported patch manifest format in " + path);
  PatchStore s;
  s.patch_size = j.at("patch_size").get<int>();
  s.seed = j.at("seed").get<uint64_t>();
  s.channels = j.at("channels").get<int>();
  for (const auto& ij : j.at("images"))
    s.images.push_back({ij.at("path").get<std::string>(), ij.at("sha256").get<std::string>(),
                        ij.at("width").get<int>(), ij.at("height").get<int>(),
                        ij.at("split").get<std::string>()});
  auto load_refs = [](const json& arr) {
    std::vector<PatchRef> refs;
    for (const auto& r : arr) refs.push_back({r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>()});
    return refs;
  };
  s.train = load_refs(j.at("train"));
  s.val = load_refs(j.at("val"));
  return s;
}

PatchStore ingest_dataset(const std::string& directory, int patch_size, double val_fraction,
                          uint64_t seed, int channels) {
  if (patch_size <= 0 || patch_size % 8 != 0)
    throw ConfigError("patch size must be a positive multiple of 8");
  if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw ConfigError("val fraction must be in [0,1)");
  if (!fs::is_directory(directory)) throw DataError("not a directory: " + directory);

  std::vector<std::string> files;
  for (const auto& ent : fs::directory_iterator(directory))
    if (ent.is_regular_file()) files.push_back(ent.path().string());
  std::sort(files.begin(), files.end());

  PatchStore store;
  store.patch_size = patch_size;
  store.seed = seed;
  store.channels = channels;
  for (const auto& path : files) {
    Tensor img;
    try {
      img = load_image(path);
    } catch (const Error& e) {
      std::cerr << "warning: skipping unreadable image " << path << " (" << e.what() << ")\n";
      continue;
    }
    if (img.h < patch_size || img.w < patch_size) {
      std::cerr << "warning: skipping " << path << ": " << img.w << "x" << img.h
                << " smaller than patch size " << patch_size << "\n";
      continue;
    }
    store.images.push_back({path, sha256_file_hex(path), img.w, img.h, "train"});
  }
  if (store.images.empty())
    throw DataError("no usable images of size >= " + std::to_string(patch_size) + " in " + directory);

  // Image-level split: shuffle indices, mark the tail as validation.
  Rng rng(seed);
  size_t n = store.images.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());
  size_t n_val = 0;
  if (val_fraction > 0 && n >= 2)
    n_val = std::clamp<size_t>(static_cast<size_t>(std::lround(val_fraction * static_cast<double>(n))), 1, n - 1);
  for (size_t i = 0; i < n_val; ++i) store.images[order[i]].split = "val";

  // Non-overlapping 8-aligned grid of patch coordinates.
  for (size_t idx = 0; idx < n; ++idx) {
    const auto& e = store.images[idx];
    auto& dest = e.split == "val" ? store.val : store.train;
    for (int y = 0; y + patch_size <= e.height; y += patch_size)
      for (int x = 0; x + patch_size <= e.width; x += patch_size)
        dest.push_back({static_cast<int>(idx), y, x});
  }
  return store;
}

PatchLoader::PatchLoader(PatchStore store) : store_(std::move(store)) {
  cache_.resize(store_.images.size());
}

const Tensor& PatchLoader::image(int index) {
  if (index < 0 || static_cast<size_t>(index) >= store_.images.size())
    throw DataError("image index out of range");
  Tensor& slot = cache_[static_cast<size_t>(index)];
  if (slot.empty()) {
    Tensor img = load_image(store_.images[static_cast<size_t>(index)].path);
    if (store_.channels == 1) {
      img = rgb_to_luma(img);
    } else if (img.c == 1) {
      Tensor rgb(1, img.h, img.w, 3);
      for (size_t i = 0; i < img.v.size(); ++i)
        rgb.v[3 * i] = rgb.v[3 * i + 1] = rgb.v[3 * i + 2] = img.v[i];
      img = std::move(rgb);
    }
    slot = std::move(img);
  }
  return slot;
}

Tensor PatchLoader::patch(const PatchRef& ref) {
  const Tensor& img = image(ref.image);
  int ps = store_.patch_size;
  if (ref.y < 0 || ref.x < 0 || ref.y + ps > img.h || ref.x + ps > img.w)
    throw DataError("patch out of bounds");
  Tensor out(1, ps, ps, img.c);
  for (int y = 0; y < ps; ++y)
    std::copy_n(&img.at(0, ref.y + y, ref.x, 0), static_cast<size_t>(ps) * img.c,
                &out.at(0, y, 0, 0));
  return out;
}

Tensor cache_input(PatchLoader& data, const PatchRef& ref, double scale, CacheTransform t) {
  Tensor x = data.patch(ref);
  if (t == CacheTransform::kBicubicDown) x = bicubic_resize(x, scale);
  return quantize_unit(x);
}

CodecCache build_codec_cache(PatchLoader& data, const std::vector<PatchRef>& refs,
                             const CodecBackend& codec, int qf, double scale, CacheTransform t) {
  if (refs.empty()) throw DataError("codec cache: empty patch list");
  CodecCache cache;
  cache.codec_identity = codec.identity();
  cache.qf = qf;
  cache.scale = scale;
  cache.transform = t;
  cache.patch_size = data.store().patch_size;
  cache.channels = data.store().channels;
  cache.entries.reserve(refs.size());
  for (const auto& ref : refs) {
    Tensor input = cache_input(data, ref, scale, t);
    try {
      auto [decoded, bits] = codec.roundtrip(input, qf);
      cache.entries.push_back({ref, std::move(decoded), bits});
    } catch (const Error& e) {
      throw CodecError("codec cache: patch (image " + std::to_string(ref.image) + ", y " +
                       std::to_string(ref.y) + ", x " + std::to_string(ref.x) + "): " + e.what());
    }
  }
  return cache;
}

void verify_codec_cache(PatchLoader& data, const CodecCache& cache, const CodecBackend& codec,
                        double sample_fraction, Rng& rng) {
  if (cache.codec_identity != codec.identity())
    throw DataError("codec cache built with '" + cache.codec_identity + "', verifying with '" +
                    codec.identity() + "'");
  size_t n = cache.entries.size();
  if (n == 0) throw DataError("codec cache: empty");
  size_t k = std::clamp<size_t>(static_cast<size_t>(std::lround(sample_fraction * static_cast<double>(n))), 1, n);
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());
  for (size_t i = 0; i < k; ++i) {
    const auto& ent = cache.entries[order[i]];
    Tensor input = cache_input(data, ent.ref, cache.scale, cache.transform);
    auto [decoded, bits] = codec.roundtrip(input, cache.qf);
    if (bits != ent.bit_count)
      throw DataError("codec cache: bit count drift at entry " + std::to_string(order[i]));
    if (to_bytes_8bit(decoded) != to_bytes_8bit(ent.decoded))
      throw DataError("codec cache: decoded pixels drift at entry " + std::to_string(order[i]));
  }
}

void CodecCache::save(const std::string& dir) const {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "entries", ec);
  ordered_json j;
  j["format"] = "acnf-codeccache-v1";
  j["codec_identity"] = codec_identity;
  j["qf"] = qf;
  j["scale"] = scale;
  j["transform"] = to_string(transform);
  j["patch_size"] = patch_size;
  j["channels"] = channels;
  auto arr = ordered_json::array();
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    char name[32];
    std::snprintf(name, sizeof name, "entry_%06zu.bin", i);
    ordered_json ej;
    ej["image"] = e.ref.image;
    ej["y"] = e.ref.y;
    ej["x"] = e.ref.x;
    ej["bit_count"] = e.bit_count;
    ej["file"] = std::string("entries/") + name;
    arr.push_back(ej);
    // Blob layout: u32le h, w, c then h*w*c raw 8-bit samples.
    std::ofstream bf(fs::path(dir) / "entries" / name, std::ios::binary);
    if (!bf) throw DataError("cannot write cache entry in " + dir);
    uint32_t hdr[3] = {static_cast<uint32_t>(e.decoded.h), static_cast<uint32_t>(e.decoded.w),
                       static_cast<uint32_t>(e.decoded.c)};
    bf.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
    std::vector<uint8_t> bytes = to_bytes_8bit(e.decoded);
    bf.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  j["entries"] = arr;
  std::ofstream f(fs::path(dir) / "index.json");
  if (!f) throw DataError("cannot write cache index in " + dir);
  f << j.dump(2) << "\n";
}

CodecCache CodecCache::load(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "index.json");
  if (!f) throw DataError("missing cache index: " + dir + "/index.json");
  json j;
  try {
    j = json::parse(f);
  } catch (const std::exception& e) {
    throw DataError("bad cache index " + dir + ": " + e.what());
  }
  if (j.value("format", "") != "acnf-codeccache-v1")
    throw DataError("unsupported cache format in " + dir);
  CodecCache cache;
  cache.codec_identity = j.at("codec_identity").get<std::string>();
  cache.qf = j.at("qf").get<int>();
  cache.scale = j.at("scale").get<double>();
  cache.transform = cache_transform_from_string(j.at("transform").get<std::string>());
  cache.patch_size = j.at("patch_size").get<int>();
  cache.channels = j.at("channels").get<int>();
  for (const auto& ej : j.at("entries")) {
    Entry e;
    e.ref = {ej.at("image").get<int>(), ej.at("y").get<int>(), ej.at("x").get<int>()};
    e.bit_count = ej.at("bit_count").get<int64_t>();
    std::string blob_path = (fs::path(dir) / ej.at("file").get<std::string>()).string();
    std::ifstream bf(blob_path, std::ios::binary);
    if (!bf) throw DataError("missing cache entry blob: " + blob_path);
    uint32_t hdr[3];
    bf.read(reinterpret_cast<char*>(hdr), sizeof hdr);
    if (!bf) throw DataError("truncated cache entry blob: " + blob_path);
    std::vector<uint8_t> bytes(static_cast<size_t>(hdr[0]) * hdr[1] * hdr[2]);
    bf.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<size_t>(bf.gcount()) != bytes.size())
      throw DataError("truncated cache entry blob: " + blob_path);
    e.decoded = from_bytes_8bit(bytes, static_cast<int>(hdr[0]), static_cast<int>(hdr[1]),
                                static_cast<int>(hdr[2]));
    cache.entries.push_back(std::move(e));
  }
  return cache;
}

}  // namespace acnf
