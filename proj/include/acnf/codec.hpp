// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acnf/tensor.hpp"

namespace acnf {

// A complete baseline JPEG stream plus bookkeeping.
struct EncodedArtifact {
  std::vector<uint8_t> payload;
  int64_t bit_count = 0;  // always 8 * payload.size()
  int qf = 0;
  int width = 0;
  int height = 0;
  int channels = 0;
};

// The nondifferentiable real codec: encode quantizes to the 8-bit domain and
// produces a baseline JPEG (grayscale for c=1, 4:2:0 color for c=3).
class CodecBackend {
 public:
  virtual ~CodecBackend() = default;
  virtual std::string identity() const = 0;
  virtual EncodedArtifact encode(const Tensor& image, int qf) const = 0;
  virtual Tensor decode(const EncodedArtifact& artifact) const = 0;

  // decode(encode(image, qf)) with the artifact's bit count.
  std::pair<Tensor, int64_t> roundtrip(const Tensor& image, int qf) const {
    EncodedArtifact a = encode(image, qf);
    return {decode(a), a.bit_count};
  }
};

class JpegCodec final : public CodecBackend {
 public:
  // Library name, version, and ABI the goldens are pinned against.
  std::string identity() const override;
  EncodedArtifact encode(const Tensor& image, int qf) const override;
  Tensor decode(const EncodedArtifact& artifact) const override;
  Tensor decode_bytes(const std::vector<uint8_t>& payload) const;
};

}  // namespace acnf
