// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#include "acnf/container.hpp"

#include <cstring>

#include "acnf/error.hpp"
#include "acnf/hashutil.hpp"

namespace acnf {

namespace {

constexpr uint8_t kApp11 = 0xEB;
constexpr int kPayloadLen = 19;  // magic(4) ver(1) scale(1) qf(1) w(2) h(2) id(8)
constexpr char kMagic[4] = {'A', 'C', 'N', 'F'};

void put_u16be(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v & 0xFF));
}

uint16_t get_u16be(const uint8_t* p) {
  return static_cast<uint16_t>((p[0] << 8) | p[1]);
}

}  // namespace

double scale_from_code(uint8_t code) {
  switch (code) {
    case 0: return 1.0;
    case 1: return 0.75;
    case 2: return 0.5;
    default: throw CodecError("container: bad scale code " + std::to_string(code));
  }
}

uint8_t code_from_scale(double scale) {
  if (scale == 1.0) return 0;
  if (scale == 0.75) return 1;
  if (scale == 0.5) return 2;
  throw ConfigError("container: scale must be 0.5, 0.75 or 1.0");
}

std::array<uint8_t, 8> model_id_from_manifest(const std::string& manifest_path) {
  std::string hex = sha256_file_hex(manifest_path);
  std::array<uint8_t, 8> id{};
  for (int i = 0; i < 8; ++i)
    id[i] = static_cast<uint8_t>(std::stoi(hex.substr(2 * i, 2), nullptr, 16));
  return id;
}

std::vector<uint8_t> pack(const EncodedArtifact& artifact, const ContainerMetadata& meta) {
  const auto& p = artifact.payload;
  if (p.size() < 4 || p[0] != 0xFF || p[1] != 0xD8)
    throw CodecError("pack: artifact payload is not a JPEG stream");
  if (p[p.size() - 2] != 0xFF || p.back() != 0xD9)
    throw CodecError("pack: artifact payload does not end with EOI");
  std::vector<uint8_t> out;
  out.reserve(p.size() + kContainerOverheadBytes);
  out.push_back(0xFF);
  out.push_back(0xD8);
  out.push_back(0xFF);
  out.push_back(kApp11);
  put_u16be(out, kPayloadLen + 2);  // segment length includes the length field
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(meta.version);
  out.push_back(meta.scale_code);
  out.push_back(meta.qf);
  put_u16be(out, meta.orig_width);
  put_u16be(out, meta.orig_height);
  out.insert(out.end(), meta.model_id.begin(), meta.model_id.end());
  out.insert(out.end(), p.begin() + 2, p.end());
  return out;
}

std::pair<EncodedArtifact, std::optional<ContainerMetadata>> unpack(
    const std::vector<uint8_t>& file_bytes) {
  if (file_bytes.size() < 4 || file_bytes[0] != 0xFF || file_bytes[1] != 0xD8)
    throw CodecError("unpack: input is not a JPEG stream");

  EncodedArtifact artifact;
  std::optional<ContainerMetadata> meta;

  // Scan marker segments between SOI and SOS for our APP11.
  size_t pos = 2;
  size_t strip_begin = 0, strip_end = 0;
  while (pos + 4 <= file_bytes.size()) {
    if (file_bytes[pos] != 0xFF) break;  // not a marker: stop scanning
    uint8_t marker = file_bytes[pos + 1];
    if (marker == 0xD8 || marker == 0xD9 || (marker >= 0xD0 && marker <= 0xD7)) break;
    if (marker == 0xDA) break;  // SOS: entropy-coded data follows
    uint16_t seg_len = get_u16be(&file_bytes[pos + 2]);
    if (seg_len < 2 || pos + 2 + seg_len > file_bytes.size())
      throw CodecError("unpack: truncated marker segment");
    if (marker == kApp11 && seg_len >= 2 + 4 &&
        std::memcmp(&file_bytes[pos + 4], kMagic, 4) == 0) {
      if (seg_len != kPayloadLen + 2)
        throw CodecError("unpack: ACNF segment has wrong length " + std::to_string(seg_len));
      const uint8_t* q = &file_bytes[pos + 4];
      ContainerMetadata m;
      m.version = q[4];
      if (m.version != 1)
        throw CodecError("unpack: unsupported ACNF version " + std::to_string(m.version));
      m.scale_code = q[5];
      scale_from_code(m.scale_code);  // validates
      m.qf = q[6];
      if (m.qf < 1 || m.qf > 100) throw CodecError("unpack: metadata qf out of range");
      m.orig_width = get_u16be(q + 7);
      m.orig_height = get_u16be(q + 9);
      std::memcpy(m.model_id.data(), q + 11, 8);
      meta = m;
      strip_begin = pos;
      strip_end = pos + 2 + seg_len;
      break;
    }
    pos += 2 + seg_len;
  }

  if (meta) {
    artifact.payload.reserve(file_bytes.size() - (strip_end - strip_begin));
    artifact.payload.insert(artifact.payload.end(), file_bytes.begin(),
                            file_bytes.begin() + static_cast<long>(strip_begin));
    artifact.payload.insert(artifact.payload.end(),
                            file_bytes.begin() + static_cast<long>(strip_end), file_bytes.end());
    artifact.qf = meta->qf;
  } else {
    artifact.payload = file_bytes;
  }
  artifact.bit_count = static_cast<int64_t>(artifact.payload.size()) * 8;
  return {std::move(artifact), meta};
}

}  // namespace acnf
