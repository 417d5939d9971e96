// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "acnf/codec.hpp"
#include "acnf/tensor.hpp"

namespace acnf {

// Transform applied to a patch before it enters the real codec.
enum class CacheTransform { kNone, kBicubicDown };

std::string to_string(CacheTransform t);
CacheTransform cache_transform_from_string(const std::string& s);

struct PatchRef {
  int image = 0;  // index into PatchStore::images
  int y = 0;      // top-left corner in the source image, 8-aligned
  int x = 0;
  friend bool operator==(const PatchRef&, const PatchRef&) = default;
};

struct PatchStore {
  int patch_size = 128;
  uint64_t seed = 0;
  int channels = 1;
  struct ImageEntry {
    std::string path;
    std::string sha256;
    int width = 0, height = 0;
    std::string split;  // "train" | "val"
    friend bool operator==(const ImageEntry&, const ImageEntry&) = default;
  };
  std::vector<ImageEntry> images;
  std::vector<PatchRef> train, val;

  void save_manifest(const std::string& path) const;
  static PatchStore load_manifest(const std::string& path);
};

// Scans a directory for images, assigns an image-level train/val split, and
// extracts a deterministic 8-aligned grid of patch coordinates. Images
// smaller than patch_size are skipped with a warning on stderr.
PatchStore ingest_dataset(const std::string& directory, int patch_size, double val_fraction,
                          uint64_t seed, int channels = 1);

// Loads and channel-converts source images on demand, caching them in memory.
class PatchLoader {
 public:
  explicit PatchLoader(PatchStore store);
  const PatchStore& store() const { return store_; }
  const Tensor& image(int index);
  Tensor patch(const PatchRef& ref);

 private:
  PatchStore store_;
  std::vector<Tensor> cache_;
};

// Real-codec outputs for a fixed (qf, scale, transform), one entry per patch.
struct CodecCache {
  std::string codec_identity;
  int qf = 0;
  double scale = 1.0;
  CacheTransform transform = CacheTransform::kNone;
  int patch_size = 0;
  int channels = 1;
  struct Entry {
    PatchRef ref;
    Tensor decoded;
    int64_t bit_count = 0;
  };
  std::vector<Entry> entries;

  void save(const std::string& dir) const;
  static CodecCache load(const std::string& dir);
};

// The codec input for a cache entry: the patch itself (kNone) or its bicubic
// downsample (kBicubicDown), quantized to the codec's 8-bit domain.
Tensor cache_input(PatchLoader& data, const PatchRef& ref, double scale, CacheTransform t);

CodecCache build_codec_cache(PatchLoader& data, const std::vector<PatchRef>& refs,
                             const CodecBackend& codec, int qf, double scale, CacheTransform t);

// Re-encodes a random sample of entries and checks stored bit counts and
// decoded pixels exactly; throws DataError on any mismatch.
void verify_codec_cache(PatchLoader& data, const CodecCache& cache, const CodecBackend& codec,
                        double sample_fraction, Rng& rng);

}  // namespace acnf
